//! Convergence detection and the strongly convex convergence envelope.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::data::DataSet;
use crate::model::{ModelLayout, ModelParams};

/// Largest round-to-round accuracy change still counted as stable.
pub const CONVERGENCE_TOLERANCE: f64 = 0.005;
/// Number of consecutive stable steps required.
pub const CONVERGENCE_WINDOW: usize = 5;

/// First 1-based round `r` such that the accuracy changed by at most
/// [`CONVERGENCE_TOLERANCE`] at each of the steps ending in rounds
/// `r - 4 ..= r`.
pub fn check_convergence(accuracy: &[f64]) -> Option<usize> {
    let mut run = 0;
    for i in 1..accuracy.len() {
        if (accuracy[i] - accuracy[i - 1]).abs() <= CONVERGENCE_TOLERANCE + 1e-12 {
            run += 1;
            if run == CONVERGENCE_WINDOW {
                return Some(i + 1);
            }
        } else {
            run = 0;
        }
    }
    None
}

fn gamma(mu: f64, lipschitz: f64, epochs: usize) -> f64 {
    (8.0 * lipschitz / mu).max(epochs as f64)
}

/// Step size `2 / (mu (gamma + r))` with `gamma = max(8 L / mu, E)`.
pub fn decayed_eta(mu: f64, lipschitz: f64, epochs: usize, round: u64) -> f64 {
    2.0 / (mu * (gamma(mu, lipschitz, epochs) + round as f64))
}

fn augmented_matvec(data: &DataSet, indices: &[usize], v: &[f64]) -> Vec<f64> {
    let d = data.dim();
    let mut out = vec![0.0; d + 1];
    for &i in indices {
        let x = data.features(i);
        let s = x.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + v[d];
        for (o, xv) in out.iter_mut().zip(x) {
            *o += s * xv;
        }
        out[d] += s;
    }
    let n = indices.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Smoothness bound `mu + lambda_max((1/N) sum x~ x~^T)` with `x~ = (x, 1)`,
/// the top eigenvalue found by power iteration.
pub fn lipschitz_estimate(data: &DataSet, indices: &[usize], mu: f64) -> f64 {
    if indices.is_empty() {
        return mu;
    }
    let d = data.dim() + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = augmented_matvec(data, indices, &v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let next = norm;
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    mu + lambda
}

/// Minimises the regularised full-batch loss with Nesterov's accelerated
/// gradient method and returns the minimiser and its loss.
pub fn reference_optimum(
    layout: ModelLayout,
    data: &DataSet,
    indices: &[usize],
    lipschitz: f64,
) -> Result<(ModelParams, f64), SimError> {
    if !layout.is_convex() || layout.l2 <= 0.0 {
        return Err(SimError::UnsupportedForConvergenceCheck(format!(
            "{:?} with l2 = {}",
            layout.arch, layout.l2
        )));
    }
    let mu = layout.l2;
    let step = 1.0 / lipschitz;
    let sk = (lipschitz / mu).sqrt();
    let momentum = (sk - 1.0) / (sk + 1.0);
    let mut x = ModelParams::zeros(layout);
    let mut y = x.clone();
    let mut grad = vec![0.0; x.len()];
    for _ in 0..100_000 {
        y.loss_and_grad(data, indices, &mut grad);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-10 {
            break;
        }
        let next: Vec<f64> = y.values().iter().zip(&grad).map(|(v, g)| v - step * g).collect();
        let ahead: Vec<f64> = next
            .iter()
            .zip(x.values())
            .map(|(n, o)| n + momentum * (n - o))
            .collect();
        x = ModelParams::new(layout, next)?;
        y = ModelParams::new(layout, ahead)?;
    }
    let f = y.loss(data, indices);
    Ok((y, f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub gamma: f64,
    /// Smallest `c` with `F_r - F* <= c / (gamma + r)` over the fit window.
    pub c: f64,
    /// Rounds after the fit window whose gap exceeds the envelope.
    pub violations: usize,
    pub fit_rounds: (usize, usize),
    pub checked_rounds: (usize, usize),
}

/// Fits the `c / (gamma + r)` envelope to the optimality gap of rounds
/// `r0 ..= fit_until` and counts violations over the remaining rounds.
/// `losses[i]` is the loss after round `i + 1`. Without `fit_until` the
/// window ends halfway between `r0` and the last round.
pub fn theorem1_envelope(
    losses: &[f64],
    f_star: f64,
    layout: &ModelLayout,
    lipschitz: f64,
    epochs: usize,
    r0: usize,
    fit_until: Option<usize>,
) -> Result<Envelope, SimError> {
    if !layout.is_convex() || layout.l2 <= 0.0 {
        return Err(SimError::UnsupportedForConvergenceCheck(format!(
            "{:?} with l2 = {}",
            layout.arch, layout.l2
        )));
    }
    let last = losses.len();
    let r0 = r0.max(1);
    if last < r0 {
        return Err(SimError::UnsupportedForConvergenceCheck(format!(
            "history of {last} rounds is shorter than r0 = {r0}"
        )));
    }
    let fit_end = fit_until.unwrap_or((r0 + last) / 2).clamp(r0, last);
    let g = gamma(layout.l2, lipschitz, epochs);
    let gap = |r: usize| (losses[r - 1] - f_star).max(0.0);
    let c = (r0..=fit_end).map(|r| gap(r) * (g + r as f64)).fold(0.0, f64::max);
    // relative slack absorbs rounding in gap * (gamma + r)
    let violations = (fit_end + 1..=last)
        .filter(|&r| gap(r) * (g + r as f64) > c * (1.0 + 1e-9))
        .count();
    Ok(Envelope {
        gamma: g,
        c,
        violations,
        fit_rounds: (r0, fit_end),
        checked_rounds: (fit_end + 1, last),
    })
}
