//! Elementary numeric types and transforms: logits, probabilities,
//! temperature softmax, z-score normalization, and a central
//! finite-difference gradient oracle.

use crate::{Error, Result};

/// Default denominator floor for [`zscore_normalize`].
///
/// Guards against division blowup on near-constant logits, e.g. freshly
/// initialized students whose outputs have almost no spread.
pub const DEFAULT_ZSCORE_EPS: f64 = 1e-6;

/// Raw pre-softmax scores for `C` classes.
///
/// Entries are guaranteed finite and `C >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "channels",
                message: format!("need at least 2 channels, got {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "logits" });
        }
        Ok(Self { values })
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// A temperature-softmaxed distribution on the `C`-simplex.
///
/// Entries lie strictly inside `(0, 1)` and sum to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    values: Vec<f64>,
}

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "channels",
                message: format!("need at least 2 channels, got {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "probabilities",
            });
        }
        if values.iter().any(|&v| v <= 0.0 || v >= 1.0) {
            return Err(Error::InvalidParameter {
                name: "probabilities",
                message: "entries must lie strictly inside (0, 1)".to_string(),
            });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "probabilities",
                message: format!("entries sum to {sum}, expected 1"),
            });
        }
        Ok(Self { values })
    }

    pub fn channels(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Z-scored logits: zero mean, unit population standard deviation
/// (for non-constant input).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLogits {
    values: Vec<f64>,
}

impl NormalizedLogits {
    pub fn channels(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Temperature softmax: `q_i = exp(z_i / T) / sum_j exp(z_j / T)`.
///
/// Computed with max-subtraction so large logits cannot overflow. Outputs are
/// clamped into the open interval `(0, 1)` so the [`ProbVector`] invariants
/// hold even when an exponent underflows to zero.
pub fn softmax_with_temperature(z: &LogitVector, temperature: f64) -> Result<ProbVector> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidParameter {
            name: "temperature",
            message: format!("must be a positive real, got {temperature}"),
        });
    }
    let zs = z.as_slice();
    let max = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = zs.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let values: Vec<f64> = exps
        .iter()
        .map(|&e| (e / sum).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
        .collect();
    ProbVector::new(values)
}

/// Z-score normalization `(z - mean) / max(std, eps)` with population std.
///
/// The `eps` floor on the denominator keeps near-constant inputs bounded
/// while leaving any input with spread above `eps` scaled by its exact
/// standard deviation, so the transform is invariant under `z -> a*z + b`
/// (a > 0) up to floating-point rounding. Constant input maps to all zeros.
pub fn zscore_normalize(z: &LogitVector, eps: f64) -> Result<NormalizedLogits> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter {
            name: "eps",
            message: format!("must be a positive real, got {eps}"),
        });
    }
    let (mean, std) = mean_and_population_std(z.as_slice());
    let denom = std.max(eps);
    let values = z.as_slice().iter().map(|&v| (v - mean) / denom).collect();
    Ok(NormalizedLogits { values })
}

/// Mean and population standard deviation (no Bessel correction).
pub(crate) fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pulls a gradient w.r.t. z-scored values back to the raw values.
///
/// Exact Jacobian-transpose product for `(z - mean) / max(std, eps)`. When
/// the population std exceeds `eps` both the mean and the std depend on `z`;
/// below the floor the denominator is constant and only the mean term
/// remains.
pub(crate) fn zscore_backward(raw: &[f64], grad_normalized: &[f64], eps: f64) -> Vec<f64> {
    let n = raw.len() as f64;
    let (mean, std) = mean_and_population_std(raw);
    let grad_mean = grad_normalized.iter().sum::<f64>() / n;
    if std > eps {
        let zhat: Vec<f64> = raw.iter().map(|&v| (v - mean) / std).collect();
        let grad_dot_zhat = grad_normalized
            .iter()
            .zip(&zhat)
            .map(|(&g, &h)| g * h)
            .sum::<f64>()
            / n;
        grad_normalized
            .iter()
            .zip(&zhat)
            .map(|(&g, &h)| (g - grad_mean - h * grad_dot_zhat) / std)
            .collect()
    } else {
        grad_normalized.iter().map(|&g| (g - grad_mean) / eps).collect()
    }
}

/// Central finite differences `(f(z + h*e_i) - f(z - h*e_i)) / (2h)`.
///
/// The verification oracle for every hand-derived gradient in this crate.
/// `f` is evaluated 2C times; any non-finite evaluation is an error.
pub fn finite_difference_gradient<F>(f: F, z: &LogitVector, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&LogitVector) -> Result<f64>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter {
            name: "h",
            message: format!("must be a positive real, got {h}"),
        });
    }
    let mut grad = Vec::with_capacity(z.channels());
    let mut probe = z.as_slice().to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&LogitVector::new(probe.clone())?)?;
        probe[i] = orig - h;
        let minus = f(&LogitVector::new(probe.clone())?)?;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle(format!(
                "non-finite evaluation at channel {i}: f+ = {plus}, f- = {minus}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
