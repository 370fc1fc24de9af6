//! Loss forward values and hand-derived analytic gradients: KL distillation
//! loss, cross-entropy, exact and differentiable Kendall's tau, the ranking
//! loss in its four forms (with channel subsets and input normalization),
//! and the combined distillation objective.
//!
//! Every gradient here is a closed form taken with respect to the *student*
//! logits; the teacher never receives gradients. All of them are checked
//! against [`crate::numeric::finite_difference_gradient`] in the tests.

use crate::numeric::{
    softmax_with_temperature, zscore_backward, zscore_normalize, LogitVector, ProbVector,
    DEFAULT_ZSCORE_EPS,
};
use crate::{Error, Result};

/// Floor applied to student probabilities before taking logs.
const PROB_LOG_FLOOR: f64 = 1e-12;

/// Weights of the combined objective `alpha*KL + beta*CE + gamma*RK`
/// plus the softmax temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub temperature: f64,
}

impl Default for LossWeights {
    /// `alpha:beta = 0.9:0.1`, `gamma = alpha`, `T = 4`.
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 0.1,
            gamma: 0.9,
            temperature: 4.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    message: format!("must be a nonnegative real, got {v}"),
                });
            }
        }
        if self.alpha + self.beta + self.gamma <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "alpha+beta+gamma",
                message: "at least one loss weight must be positive".to_string(),
            });
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "temperature",
                message: format!("must be a positive real, got {}", self.temperature),
            });
        }
        Ok(())
    }
}

/// The algebraic form of the ranking loss.
///
/// `Symmetric` is the tanh-product similarity of the differentiable tau;
/// `Form1` is the same expression with the teacher factor detached, `Form2`
/// moves the detached teacher difference inside the tanh, and `Form3`
/// replaces the teacher factor with its sign. Since gradients are only ever
/// taken with respect to the student, `Symmetric` and `Form1` coincide in
/// both value and gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankingForm {
    Symmetric,
    Form1,
    Form2,
    Form3,
}

/// Which channels participate in ranking pairs.
///
/// Percentages select `ceil(p * C / 100)` channels ranked by the *raw*
/// teacher logits of the sample (ties broken by lower channel index);
/// pairs are formed only within the selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSubset {
    All,
    TopPercent(f64),
    MinPercent(f64),
}

/// Configuration of the ranking loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingConfig {
    /// Steepness `k` of the tanh sign-relaxation.
    pub steepness: f64,
    pub form: RankingForm,
    pub subset: ChannelSubset,
    /// Z-score both inputs (within the selected subset) before pairing.
    pub normalize_inputs: bool,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            steepness: 1.0,
            form: RankingForm::Symmetric,
            subset: ChannelSubset::All,
            normalize_inputs: true,
        }
    }
}

impl RankingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.steepness.is_finite() || self.steepness <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "steepness",
                message: format!("must be a positive real, got {}", self.steepness),
            });
        }
        match self.subset {
            ChannelSubset::All => {}
            ChannelSubset::TopPercent(p) | ChannelSubset::MinPercent(p) => {
                if !p.is_finite() || p <= 0.0 || p > 100.0 {
                    return Err(Error::InvalidParameter {
                        name: "subset percent",
                        message: format!("must lie in (0, 100], got {p}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Exact Kendall's tau together with its pair counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallBreakdown {
    pub tau: f64,
    pub concordant: usize,
    pub discordant: usize,
    pub ties: usize,
}

/// Component values of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub kl: f64,
    pub ce: f64,
    pub rk: f64,
}

/// One channel of the gradient-magnitude profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub channel: usize,
    pub teacher_prob: f64,
    pub kl_grad_abs: f64,
    pub rk_grad_abs: f64,
}

fn check_same_channels(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// KL divergence `sum_i q_t_i * ln(q_t_i / q_s_i)`, optionally scaled by
/// `T^2` (the convention whose student-logit gradient is `-T * (q_t - q_s)`).
///
/// Student probabilities are floored at 1e-12 before the log.
pub fn kl_loss(q_t: &ProbVector, q_s: &ProbVector, temperature: f64, scale_t2: bool) -> Result<f64> {
    check_same_channels(q_t.channels(), q_s.channels())?;
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "temperature",
            message: format!("must be a positive real, got {temperature}"),
        });
    }
    let kl: f64 = q_t
        .as_slice()
        .iter()
        .zip(q_s.as_slice())
        .map(|(&t, &s)| t * (t / s.max(PROB_LOG_FLOOR)).ln())
        .sum();
    Ok(if scale_t2 { temperature * temperature * kl } else { kl })
}

/// Gradient of the `T^2`-scaled KL loss with respect to the student logits:
/// `-T * (q_t_i - q_s_i)` with both probabilities at temperature `T`.
pub fn kl_gradient(z_t: &LogitVector, z_s: &LogitVector, temperature: f64) -> Result<Vec<f64>> {
    check_same_channels(z_t.channels(), z_s.channels())?;
    let q_t = softmax_with_temperature(z_t, temperature)?;
    let q_s = softmax_with_temperature(z_s, temperature)?;
    Ok(q_t
        .as_slice()
        .iter()
        .zip(q_s.as_slice())
        .map(|(&t, &s)| -temperature * (t - s))
        .collect())
}

/// Cross-entropy of the student logits against a hard label, at `T = 1`.
///
/// Computed through log-sum-exp so saturated correct predictions stay
/// accurate near zero loss.
pub fn cross_entropy_loss(z_s: &LogitVector, label: usize) -> Result<f64> {
    let z = z_s.as_slice();
    if label >= z.len() {
        return Err(Error::LabelOutOfRange {
            label,
            channels: z.len(),
        });
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - z[label])
}

/// Gradient of [`cross_entropy_loss`]: `softmax(z_s) - onehot(label)`.
pub fn ce_gradient(z_s: &LogitVector, label: usize) -> Result<Vec<f64>> {
    if label >= z_s.channels() {
        return Err(Error::LabelOutOfRange {
            label,
            channels: z_s.channels(),
        });
    }
    let q = softmax_with_temperature(z_s, 1.0)?;
    let mut grad: Vec<f64> = q.as_slice().to_vec();
    grad[label] -= 1.0;
    Ok(grad)
}

/// Exact Kendall's tau over all `C(C-1)/2` channel pairs.
///
/// A pair is concordant when teacher and student order it the same way,
/// discordant when they order it oppositely, and a tie (counted in neither)
/// when either difference is exactly zero. The denominator is always the
/// full pair count.
pub fn kendall_tau_exact(z_t: &LogitVector, z_s: &LogitVector) -> Result<KendallBreakdown> {
    check_same_channels(z_t.channels(), z_s.channels())?;
    let t = z_t.as_slice();
    let s = z_s.as_slice();
    let mut concordant = 0usize;
    let mut discordant = 0usize;
    let mut ties = 0usize;
    for i in 0..t.len() {
        for j in 0..i {
            let dt = t[i] - t[j];
            let ds = s[i] - s[j];
            if dt == 0.0 || ds == 0.0 {
                ties += 1;
            } else if (dt > 0.0) == (ds > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let total = t.len() * (t.len() - 1) / 2;
    Ok(KendallBreakdown {
        tau: (concordant as f64 - discordant as f64) / total as f64,
        concordant,
        discordant,
        ties,
    })
}

fn pair_mean<F>(n: usize, mut per_pair: F) -> f64
where
    F: FnMut(usize, usize) -> f64,
{
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..i {
            sum += per_pair(i, j);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Differentiable Kendall's tau: the sign function replaced by
/// `tanh(k * diff)`, averaged over all channel pairs. Lies in `(-1, 1)`.
pub fn diff_kendall_tau(z_t: &LogitVector, z_s: &LogitVector, steepness: f64) -> Result<f64> {
    check_same_channels(z_t.channels(), z_s.channels())?;
    if !steepness.is_finite() || steepness <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "steepness",
            message: format!("must be a positive real, got {steepness}"),
        });
    }
    let t = z_t.as_slice();
    let s = z_s.as_slice();
    Ok(pair_mean(t.len(), |i, j| {
        (steepness * (t[i] - t[j])).tanh() * (steepness * (s[i] - s[j])).tanh()
    }))
}

/// The expanded form of the differentiable tau, written through
/// `tanh(x) = 1 - 2 / (e^{2x} + 1)` instead of `tanh` itself.
///
/// Algebraically identical to [`diff_kendall_tau`]; kept as an independent
/// route for verifying the expansion identity.
pub fn diff_kendall_tau_expanded(
    z_t: &LogitVector,
    z_s: &LogitVector,
    steepness: f64,
) -> Result<f64> {
    check_same_channels(z_t.channels(), z_s.channels())?;
    if !steepness.is_finite() || steepness <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "steepness",
            message: format!("must be a positive real, got {steepness}"),
        });
    }
    let t = z_t.as_slice();
    let s = z_s.as_slice();
    let expand = |d: f64| 1.0 - 2.0 / ((2.0 * steepness * d).exp() + 1.0);
    Ok(pair_mean(t.len(), |i, j| {
        expand(t[i] - t[j]) * expand(s[i] - s[j])
    }))
}

/// Channel indices selected by the subset rule, in ascending channel order.
fn select_channels(teacher_raw: &[f64], subset: ChannelSubset) -> Vec<usize> {
    let c = teacher_raw.len();
    match subset {
        ChannelSubset::All => (0..c).collect(),
        ChannelSubset::TopPercent(p) | ChannelSubset::MinPercent(p) => {
            let keep = ((p * c as f64) / 100.0).ceil() as usize;
            let keep = keep.clamp(1, c);
            let mut order: Vec<usize> = (0..c).collect();
            match subset {
                ChannelSubset::TopPercent(_) => order.sort_by(|&a, &b| {
                    teacher_raw[b]
                        .partial_cmp(&teacher_raw[a])
                        .unwrap()
                        .then(a.cmp(&b))
                }),
                _ => order.sort_by(|&a, &b| {
                    teacher_raw[a]
                        .partial_cmp(&teacher_raw[b])
                        .unwrap()
                        .then(a.cmp(&b))
                }),
            }
            let mut selected = order[..keep].to_vec();
            selected.sort_unstable();
            selected
        }
    }
}

/// The teacher/student pair the ranking loss actually operates on: the
/// selected channels, z-scored when requested, plus what is needed to
/// push gradients back to the raw student logits.
struct RankingInputs {
    indices: Vec<usize>,
    teacher: Vec<f64>,
    student: Vec<f64>,
    student_raw: Vec<f64>,
    normalized: bool,
}

fn prepare_ranking_inputs(
    z_t: &LogitVector,
    z_s: &LogitVector,
    cfg: &RankingConfig,
) -> Result<RankingInputs> {
    check_same_channels(z_t.channels(), z_s.channels())?;
    cfg.validate()?;
    let indices = select_channels(z_t.as_slice(), cfg.subset);
    if indices.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "channel subset keeps {} of {} channels; ranking needs at least 2",
            indices.len(),
            z_t.channels()
        )));
    }
    let teacher_raw: Vec<f64> = indices.iter().map(|&i| z_t.as_slice()[i]).collect();
    let student_raw: Vec<f64> = indices.iter().map(|&i| z_s.as_slice()[i]).collect();
    let (teacher, student) = if cfg.normalize_inputs {
        let t = zscore_normalize(&LogitVector::new(teacher_raw)?, DEFAULT_ZSCORE_EPS)?;
        let s = zscore_normalize(&LogitVector::new(student_raw.clone())?, DEFAULT_ZSCORE_EPS)?;
        (t.as_slice().to_vec(), s.as_slice().to_vec())
    } else {
        (teacher_raw, student_raw.clone())
    };
    Ok(RankingInputs {
        indices,
        teacher,
        student,
        student_raw,
        normalized: cfg.normalize_inputs,
    })
}

fn form_pair_similarity(form: RankingForm, k: f64, dt: f64, ds: f64) -> f64 {
    match form {
        // Detaching the teacher factor changes no forward value.
        RankingForm::Symmetric | RankingForm::Form1 => (k * dt).tanh() * (k * ds).tanh(),
        RankingForm::Form2 => (k * k * dt * ds).tanh(),
        RankingForm::Form3 => sign(dt) * (k * ds).tanh(),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Ranking loss: the negated pair-similarity mean of the configured form.
///
/// Channels are selected by the subset rule on raw teacher logits, both
/// subvectors are z-scored when `normalize_inputs` is set, and pairs are
/// formed only within the selection. The value lies in `[-1, 1]`.
pub fn ranking_loss(z_t: &LogitVector, z_s: &LogitVector, cfg: &RankingConfig) -> Result<f64> {
    let inputs = prepare_ranking_inputs(z_t, z_s, cfg)?;
    let t = &inputs.teacher;
    let s = &inputs.student;
    let k = cfg.steepness;
    Ok(-pair_mean(t.len(), |i, j| {
        form_pair_similarity(cfg.form, k, t[i] - t[j], s[i] - s[j])
    }))
}

/// Analytic gradient of [`ranking_loss`] with respect to the student logits.
///
/// For the tanh-product forms the per-channel derivative is
/// `-(2k / (m(m-1))) * sum_{j != i} sech^2(k(s_i - s_j)) * tanh(k(t_i - t_j))`
/// over the `m` selected channels; Form2 and Form3 follow the same pattern
/// from their forward expressions. With normalization enabled the gradient
/// is chained exactly through the z-score transform. Channels outside the
/// subset receive zero gradient.
pub fn ranking_gradient(
    z_t: &LogitVector,
    z_s: &LogitVector,
    cfg: &RankingConfig,
) -> Result<Vec<f64>> {
    let inputs = prepare_ranking_inputs(z_t, z_s, cfg)?;
    let t = &inputs.teacher;
    let s = &inputs.student;
    let k = cfg.steepness;
    let m = t.len();
    let scale = 2.0 / (m * (m - 1)) as f64;

    let mut grad = vec![0.0; m];
    for i in 0..m {
        for j in 0..i {
            let dt = t[i] - t[j];
            let ds = s[i] - s[j];
            // d/ds_i of the pair similarity; the j-side contribution is its
            // exact negation because the pair term is symmetric under swap.
            let dpair = match cfg.form {
                RankingForm::Symmetric | RankingForm::Form1 => {
                    let th = (k * ds).tanh();
                    k * (1.0 - th * th) * (k * dt).tanh()
                }
                RankingForm::Form2 => {
                    let th = (k * k * dt * ds).tanh();
                    k * k * (1.0 - th * th) * dt
                }
                RankingForm::Form3 => {
                    let th = (k * ds).tanh();
                    sign(dt) * k * (1.0 - th * th)
                }
            };
            grad[i] -= scale * dpair;
            grad[j] += scale * dpair;
        }
    }

    let grad_raw = if inputs.normalized {
        zscore_backward(&inputs.student_raw, &grad, DEFAULT_ZSCORE_EPS)
    } else {
        grad
    };

    let mut full = vec![0.0; z_s.channels()];
    for (&idx, &g) in inputs.indices.iter().zip(&grad_raw) {
        full[idx] = g;
    }
    Ok(full)
}

/// The combined objective `alpha*KL + beta*CE + gamma*RK`.
///
/// The KL path runs raw logits through the temperature softmax (T^2-scaled
/// convention); the ranking path sees z-scored logits when the config says
/// so. Returns the total plus the unweighted component values for logging.
pub fn combined_loss(
    z_t: &LogitVector,
    z_s: &LogitVector,
    label: usize,
    weights: &LossWeights,
    cfg: &RankingConfig,
) -> Result<(f64, LossParts)> {
    weights.validate()?;
    let q_t = softmax_with_temperature(z_t, weights.temperature)?;
    let q_s = softmax_with_temperature(z_s, weights.temperature)?;
    let kl = kl_loss(&q_t, &q_s, weights.temperature, true)?;
    let ce = cross_entropy_loss(z_s, label)?;
    let rk = ranking_loss(z_t, z_s, cfg)?;
    let total = weights.alpha * kl + weights.beta * ce + weights.gamma * rk;
    Ok((total, LossParts { kl, ce, rk }))
}

/// Gradient of [`combined_loss`] with respect to the student logits:
/// the weighted sum of the three analytic gradients.
pub fn combined_gradient(
    z_t: &LogitVector,
    z_s: &LogitVector,
    label: usize,
    weights: &LossWeights,
    cfg: &RankingConfig,
) -> Result<Vec<f64>> {
    weights.validate()?;
    let mut grad = vec![0.0; z_s.channels()];
    if weights.alpha > 0.0 {
        for (g, kg) in grad.iter_mut().zip(kl_gradient(z_t, z_s, weights.temperature)?) {
            *g += weights.alpha * kg;
        }
    }
    if weights.beta > 0.0 {
        for (g, cg) in grad.iter_mut().zip(ce_gradient(z_s, label)?) {
            *g += weights.beta * cg;
        }
    }
    if weights.gamma > 0.0 {
        for (g, rg) in grad.iter_mut().zip(ranking_gradient(z_t, z_s, cfg)?) {
            *g += weights.gamma * rg;
        }
    }
    Ok(grad)
}

/// Per-channel teacher probability and absolute KL/ranking gradient
/// magnitudes, sorted by teacher probability descending.
///
/// This is the data behind the gradient-imbalance comparison: KL gradient
/// magnitudes track the teacher's channel scale while ranking gradients
/// stay comparatively flat.
pub fn gradient_profile(
    z_t: &LogitVector,
    z_s: &LogitVector,
    weights: &LossWeights,
    cfg: &RankingConfig,
) -> Result<Vec<ProfileRow>> {
    weights.validate()?;
    let q_t = softmax_with_temperature(z_t, weights.temperature)?;
    let kl_grad = kl_gradient(z_t, z_s, weights.temperature)?;
    let rk_grad = ranking_gradient(z_t, z_s, cfg)?;
    let mut rows: Vec<ProfileRow> = (0..z_t.channels())
        .map(|c| ProfileRow {
            channel: c,
            teacher_prob: q_t.as_slice()[c],
            kl_grad_abs: kl_grad[c].abs(),
            rk_grad_abs: rk_grad[c].abs(),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.teacher_prob
            .partial_cmp(&a.teacher_prob)
            .unwrap()
            .then(a.channel.cmp(&b.channel))
    });
    Ok(rows)
}
