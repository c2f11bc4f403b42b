//! Probabilistic data association by loopy sum-product message passing, plus
//! an exhaustive reference for small problems.
//!
//! Objects `i = 1..=O` pick a measurement `alpha_i` in `0..=M` (0 is a miss);
//! measurements `m = 1..=M` pick an object `beta_m` in `0..=O` (0 is clutter
//! or a new object). The two views must agree.

use thiserror::Error;

/// Largest event count `exact_associate` will enumerate.
pub const EXACT_EVENT_LIMIT: u128 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssociationError {
    #[error("object row {0} has no positive entry")]
    EmptyObjectRow(usize),
    #[error("measurement row {0} has no positive entry")]
    EmptyMeasurementRow(usize),
    #[error("table shape mismatch: {0}")]
    Shape(String),
    #[error("negative or non-finite entry in {table}[{row}][{col}]")]
    BadEntry { table: &'static str, row: usize, col: usize },
    #[error("message normalization vanished in row {0}")]
    VanishingMass(usize),
    #[error("{0} association events exceed the enumeration limit")]
    TooLarge(u128),
}

/// `xi[i][m]` for `m = 0..=M` and `sigma[m][i]` for `i = 0..=O`, both with
/// zero-based outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationProblem {
    pub xi: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
}

/// Association marginals and the messages leaving the association variables.
///
/// `object_messages[i][m]` is the message from `alpha_i` back to its object
/// factor and `measurement_messages[m][i]` the message from `beta_m` to the
/// measurement factor; both are scaled so that entry 0 equals one.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMarginals {
    pub eta_alpha: Vec<Vec<f64>>,
    pub eta_beta: Vec<Vec<f64>>,
    pub object_messages: Vec<Vec<f64>>,
    pub measurement_messages: Vec<Vec<f64>>,
}

impl AssociationProblem {
    pub fn num_objects(&self) -> usize {
        self.xi.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.sigma.len()
    }

    pub fn validate(&self) -> Result<(), AssociationError> {
        let o = self.xi.len();
        let m = self.sigma.len();
        for (i, row) in self.xi.iter().enumerate() {
            if row.len() != m + 1 {
                return Err(AssociationError::Shape(format!("xi row {i} has {} entries, expected {}", row.len(), m + 1)));
            }
            for (c, v) in row.iter().enumerate() {
                if !(*v >= 0.0 && v.is_finite()) {
                    return Err(AssociationError::BadEntry { table: "xi", row: i, col: c });
                }
            }
            if !row.iter().any(|v| *v > 0.0) {
                return Err(AssociationError::EmptyObjectRow(i));
            }
        }
        for (j, row) in self.sigma.iter().enumerate() {
            if row.len() != o + 1 {
                return Err(AssociationError::Shape(format!(
                    "sigma row {j} has {} entries, expected {}",
                    row.len(),
                    o + 1
                )));
            }
            for (c, v) in row.iter().enumerate() {
                if !(*v >= 0.0 && v.is_finite()) {
                    return Err(AssociationError::BadEntry { table: "sigma", row: j, col: c });
                }
            }
            if !row.iter().any(|v| *v > 0.0) {
                return Err(AssociationError::EmptyMeasurementRow(j));
            }
        }
        Ok(())
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// `out[k] = weights[k] / (base + sum of terms except k)`, with the
/// leave-one-out sums taken from prefix and suffix sums so no cancellation
/// occurs.
fn leave_one_out(base: f64, terms: &[f64], weights: &[f64], out: &mut [f64], row: usize) -> Result<(), AssociationError> {
    let n = terms.len();
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + terms[k];
    }
    let mut prefix = base;
    for k in 0..n {
        let den = prefix + suffix[k + 1];
        out[k] = if den > 0.0 {
            weights[k] / den
        } else if weights[k] > 0.0 {
            return Err(AssociationError::VanishingMass(row));
        } else {
            0.0
        };
        prefix += terms[k];
    }
    Ok(())
}

/// Marginals from `iterations` rounds of the simplified sum-product
/// association messages, starting from `nu = 1`.
pub fn bp_associate(problem: &AssociationProblem, iterations: usize) -> Result<AssociationMarginals, AssociationError> {
    problem.validate()?;
    let o = problem.num_objects();
    let m = problem.num_measurements();
    let xi = &problem.xi;
    let sigma = &problem.sigma;
    // phi[i][j]: object i -> measurement j; nu[j][i]: measurement j -> object i
    let mut phi = vec![vec![0.0; m]; o];
    let mut nu = vec![vec![1.0; o]; m];
    if o > 0 && m > 0 {
        let mut terms = vec![0.0; m.max(o)];
        for _ in 0..iterations.max(1) {
            for i in 0..o {
                for j in 0..m {
                    terms[j] = xi[i][j + 1] * nu[j][i];
                }
                leave_one_out(xi[i][0], &terms[..m], &xi[i][1..], &mut phi[i], i)?;
            }
            let mut out = vec![0.0; o];
            for j in 0..m {
                for i in 0..o {
                    terms[i] = sigma[j][i + 1] * phi[i][j];
                }
                leave_one_out(sigma[j][0], &terms[..o], &sigma[j][1..], &mut out, j)?;
                nu[j][..o].copy_from_slice(&out[..o]);
            }
        }
    }
    let object_messages: Vec<Vec<f64>> = (0..o)
        .map(|i| std::iter::once(1.0).chain((0..m).map(|j| nu[j][i])).collect())
        .collect();
    let measurement_messages: Vec<Vec<f64>> = (0..m)
        .map(|j| std::iter::once(1.0).chain((0..o).map(|i| phi[i][j])).collect())
        .collect();
    let eta_alpha = (0..o)
        .map(|i| normalized(xi[i].iter().zip(&object_messages[i]).map(|(a, b)| a * b).collect()))
        .collect();
    let eta_beta = (0..m)
        .map(|j| normalized(sigma[j].iter().zip(&measurement_messages[j]).map(|(a, b)| a * b).collect()))
        .collect();
    Ok(AssociationMarginals {
        eta_alpha,
        eta_beta,
        object_messages,
        measurement_messages,
    })
}

/// Number of consistent association events: partial injections from the
/// objects into the measurements.
pub fn event_count(objects: usize, measurements: usize) -> u128 {
    let (o, m) = (objects as u128, measurements as u128);
    let mut total = 0u128;
    let mut term = 1u128; // C(o,k) C(m,k) k!
    for k in 0..=o.min(m) {
        total = total.saturating_add(term);
        term = term.saturating_mul((o - k) * (m - k)) / (k + 1);
    }
    total
}

fn enumerate(
    problem: &AssociationProblem,
    i: usize,
    used: &mut Vec<Option<usize>>,
    weight: f64,
    alpha: &mut Vec<usize>,
    acc_alpha: &mut [Vec<f64>],
    acc_beta: &mut [Vec<f64>],
) {
    let o = problem.num_objects();
    if i == o {
        let w = weight * used.iter().enumerate().map(|(j, b)| problem.sigma[j][b.map_or(0, |x| x + 1)]).product::<f64>();
        if w == 0.0 {
            return;
        }
        for (k, a) in alpha.iter().enumerate() {
            acc_alpha[k][*a] += w;
        }
        for (j, b) in used.iter().enumerate() {
            acc_beta[j][b.map_or(0, |x| x + 1)] += w;
        }
        return;
    }
    for a in 0..=problem.num_measurements() {
        if a > 0 && used[a - 1].is_some() {
            continue;
        }
        let f = problem.xi[i][a];
        if f == 0.0 {
            continue;
        }
        if a > 0 {
            used[a - 1] = Some(i);
        }
        alpha.push(a);
        enumerate(problem, i + 1, used, weight * f, alpha, acc_alpha, acc_beta);
        alpha.pop();
        if a > 0 {
            used[a - 1] = None;
        }
    }
}

fn extrinsic(marginal: &[f64], local: &[f64]) -> Vec<f64> {
    let ratio: Vec<f64> = marginal
        .iter()
        .zip(local)
        .map(|(p, f)| if *f > 0.0 { p / f } else { 0.0 })
        .collect();
    let base = ratio[0];
    if base > 0.0 {
        ratio.iter().map(|r| r / base).collect()
    } else {
        ratio
    }
}

/// Exact marginals by enumerating every consistent association event.
pub fn exact_associate(problem: &AssociationProblem) -> Result<AssociationMarginals, AssociationError> {
    problem.validate()?;
    let o = problem.num_objects();
    let m = problem.num_measurements();
    let count = event_count(o, m);
    if count > EXACT_EVENT_LIMIT {
        return Err(AssociationError::TooLarge(count));
    }
    let mut acc_alpha = vec![vec![0.0; m + 1]; o];
    let mut acc_beta = vec![vec![0.0; o + 1]; m];
    enumerate(
        problem,
        0,
        &mut vec![None; m],
        1.0,
        &mut Vec::with_capacity(o),
        &mut acc_alpha,
        &mut acc_beta,
    );
    let total: f64 = if o > 0 {
        acc_alpha[0].iter().sum()
    } else {
        acc_beta.first().map_or(1.0, |r| r.iter().sum())
    };
    if !(total > 0.0) {
        return Err(AssociationError::VanishingMass(0));
    }
    let eta_alpha: Vec<Vec<f64>> = acc_alpha.into_iter().map(normalized).collect();
    let eta_beta: Vec<Vec<f64>> = acc_beta.into_iter().map(normalized).collect();
    let object_messages = (0..o).map(|i| extrinsic(&eta_alpha[i], &problem.xi[i])).collect();
    let measurement_messages = (0..m).map(|j| extrinsic(&eta_beta[j], &problem.sigma[j])).collect();
    Ok(AssociationMarginals {
        eta_alpha,
        eta_beta,
        object_messages,
        measurement_messages,
    })
}

/// Largest total-variation distance between corresponding rows.
pub fn max_total_variation(a: &AssociationMarginals, b: &AssociationMarginals) -> f64 {
    let rows = a.eta_alpha.iter().zip(&b.eta_alpha).chain(a.eta_beta.iter().zip(&b.eta_beta));
    rows.map(|(x, y)| 0.5 * x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_object_single_measurement() {
        let p = AssociationProblem {
            xi: vec![vec![1.0, 3.0]],
            sigma: vec![vec![1.0, 1.0]],
        };
        let bp = bp_associate(&p, 50).unwrap();
        assert_relative_eq!(bp.eta_alpha[0][1], 0.75, epsilon = 1e-12);
        assert_relative_eq!(bp.eta_beta[0][1], 0.75, epsilon = 1e-12);
        let ex = exact_associate(&p).unwrap();
        assert!(max_total_variation(&bp, &ex) < 1e-12);
    }

    #[test]
    fn no_measurements_keeps_prior_row() {
        let p = AssociationProblem {
            xi: vec![vec![0.4], vec![2.0]],
            sigma: vec![],
        };
        let bp = bp_associate(&p, 10).unwrap();
        assert_eq!(bp.eta_alpha, vec![vec![1.0], vec![1.0]]);
        assert_eq!(bp.object_messages, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn event_counts() {
        assert_eq!(event_count(0, 5), 1);
        assert_eq!(event_count(1, 3), 4);
        assert_eq!(event_count(2, 2), 7);
        assert_eq!(event_count(3, 3), 34);
        assert!(event_count(12, 12) > EXACT_EVENT_LIMIT);
    }

    #[test]
    fn malformed_problems_are_rejected() {
        let zero_row = AssociationProblem {
            xi: vec![vec![0.0, 0.0]],
            sigma: vec![vec![1.0, 1.0]],
        };
        assert_eq!(bp_associate(&zero_row, 5), Err(AssociationError::EmptyObjectRow(0)));
        let shape = AssociationProblem {
            xi: vec![vec![1.0]],
            sigma: vec![vec![1.0, 1.0]],
        };
        assert!(matches!(bp_associate(&shape, 5), Err(AssociationError::Shape(_))));
        let big = AssociationProblem {
            xi: vec![vec![1.0; 13]; 12],
            sigma: vec![vec![1.0; 13]; 12],
        };
        assert!(matches!(exact_associate(&big), Err(AssociationError::TooLarge(_))));
    }

    #[test]
    fn exact_messages_recover_bp_messages_on_trees() {
        let p = AssociationProblem {
            xi: vec![vec![0.5, 2.0, 0.1, 7.0]],
            sigma: vec![vec![1.2, 1.0], vec![3.0, 1.0], vec![0.2, 1.0]],
        };
        let bp = bp_associate(&p, 50).unwrap();
        let ex = exact_associate(&p).unwrap();
        for (a, b) in bp.object_messages[0].iter().zip(&ex.object_messages[0]) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }
}
