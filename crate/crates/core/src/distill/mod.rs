//! The experiment harness: teacher training, student distillation,
//! evaluation, and ablation sweeps over the synthetic dataset.
//!
//! Teacher training and distillation share one deterministic loop; the only
//! difference is where the reference logits come from. A teacher trains
//! against its own outputs with cross-entropy-only weights, a student
//! trains against precomputed logits of a frozen teacher.

pub mod data;
pub mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::losses::{
    combined_gradient, combined_loss, kendall_tau_exact, LossWeights, RankingConfig,
};
use crate::nn::{
    backward, forward, forward_logits, init_mlp, sgd_step, LayerSpec, MlpParams, ParamGrads,
    SgdConfig, SgdState,
};
use crate::numeric::LogitVector;
use crate::{Error, Result};

pub use data::{generate_dataset, load_samples, save_samples, Dataset, DatasetSpec, Sample};
pub use metrics::{
    format_float9, metrics_to_csv, write_metrics, MetricsRow, Split, METRICS_HEADER,
};

/// Everything one experiment needs: data, architectures, optimizers,
/// loss weights, and ranking configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub teacher_arch: Vec<LayerSpec>,
    pub student_arch: Vec<LayerSpec>,
    pub teacher_sgd: SgdConfig,
    pub student_sgd: SgdConfig,
    pub weights: LossWeights,
    pub ranking: RankingConfig,
    pub eval_every: usize,
}

impl Default for RunConfig {
    /// The desk-scale default: 20 classes, input dim 32, teacher
    /// 32-256-256-20, student 32-32-20. Trains in seconds on one core while
    /// leaving a measurable teacher-student gap.
    fn default() -> Self {
        let dataset = DatasetSpec::default();
        Self {
            teacher_arch: crate::nn::mlp_specs(dataset.input_dim, &[256, 256], dataset.num_classes),
            student_arch: crate::nn::mlp_specs(dataset.input_dim, &[32], dataset.num_classes),
            dataset,
            // The teacher trains longer and without weight decay so its
            // logits end up confident; a peaked teacher distribution is what
            // separates the ranking signal from plain KL matching.
            teacher_sgd: SgdConfig {
                learning_rate: 0.08,
                momentum: 0.9,
                weight_decay: 0.0,
                epochs: 50,
                batch_size: 64,
                seed: 11,
            },
            student_sgd: SgdConfig {
                learning_rate: 0.05,
                momentum: 0.9,
                weight_decay: 0.0,
                epochs: 40,
                batch_size: 64,
                seed: 13,
            },
            weights: LossWeights::default(),
            ranking: RankingConfig::default(),
            eval_every: 5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.teacher_sgd.validate()?;
        self.student_sgd.validate()?;
        self.weights.validate()?;
        self.ranking.validate()?;
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be at least 1".into()));
        }
        for (name, arch) in [("teacher", &self.teacher_arch), ("student", &self.student_arch)] {
            let first = arch.first().ok_or_else(|| {
                Error::InvalidConfig(format!("{name} architecture has no layers"))
            })?;
            let last = arch.last().unwrap();
            if first.input_dim != self.dataset.input_dim {
                return Err(Error::InvalidConfig(format!(
                    "{name} input dim {} does not match dataset input dim {}",
                    first.input_dim, self.dataset.input_dim
                )));
            }
            if last.output_dim != self.dataset.num_classes {
                return Err(Error::InvalidConfig(format!(
                    "{name} output dim {} does not match {} classes",
                    last.output_dim, self.dataset.num_classes
                )));
            }
        }
        Ok(())
    }
}

/// Where the reference (teacher) logits of a run come from.
enum Target<'a> {
    /// The model's own logits; used for CE-only teacher training.
    SelfLogits,
    /// Frozen teacher logits precomputed for both splits.
    Precomputed {
        train: &'a [LogitVector],
        test: &'a [LogitVector],
    },
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Default)]
struct RunningSums {
    total: f64,
    kl: f64,
    ce: f64,
    rk: f64,
    correct: usize,
    tau: f64,
    count: usize,
}

impl RunningSums {
    fn add(&mut self, total: f64, parts: crate::losses::LossParts, correct: bool, tau: f64) {
        self.total += total;
        self.kl += parts.kl;
        self.ce += parts.ce;
        self.rk += parts.rk;
        self.correct += correct as usize;
        self.tau += tau;
        self.count += 1;
    }

    fn into_row(self, epoch: usize, split: Split) -> MetricsRow {
        let n = self.count as f64;
        MetricsRow {
            epoch,
            split,
            total_loss: self.total / n,
            kl_loss: self.kl / n,
            ce_loss: self.ce / n,
            rk_loss: self.rk / n,
            accuracy: self.correct as f64 / n,
            mean_exact_tau: self.tau / n,
        }
    }
}

fn measure_sample(
    reference: &LogitVector,
    logits: &LogitVector,
    label: usize,
    weights: &LossWeights,
    ranking: &RankingConfig,
    sums: &mut RunningSums,
) -> Result<()> {
    let (total, parts) = combined_loss(reference, logits, label, weights, ranking)?;
    let tau = kendall_tau_exact(reference, logits)?.tau;
    sums.add(total, parts, argmax(logits.as_slice()) == label, tau);
    Ok(())
}

fn eval_split(
    params: &MlpParams,
    samples: &[Sample],
    target: Option<&[LogitVector]>,
    weights: &LossWeights,
    ranking: &RankingConfig,
    epoch: usize,
    split: Split,
) -> Result<MetricsRow> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "cannot evaluate an empty {split} split"
        )));
    }
    let mut sums = RunningSums::default();
    for (idx, sample) in samples.iter().enumerate() {
        let logits = forward_logits(params, &sample.features)?;
        let reference = match target {
            Some(t) => &t[idx],
            None => &logits,
        };
        measure_sample(reference, &logits, sample.label, weights, ranking, &mut sums)?;
    }
    let row = sums.into_row(epoch, split);
    row.validate()?;
    Ok(row)
}

/// Evaluates a model on a sample set: accuracy, loss components, and the
/// mean exact tau against the teacher's logits. Without a teacher the model
/// is measured against its own logits (so tau is 1 for distinct outputs).
pub fn evaluate(
    params: &MlpParams,
    samples: &[Sample],
    teacher: Option<&MlpParams>,
    weights: &LossWeights,
    ranking: &RankingConfig,
    epoch: usize,
    split: Split,
) -> Result<MetricsRow> {
    let target = match teacher {
        Some(t) => Some(precompute_logits(t, samples)?),
        None => None,
    };
    eval_split(params, samples, target.as_deref(), weights, ranking, epoch, split)
}

fn precompute_logits(params: &MlpParams, samples: &[Sample]) -> Result<Vec<LogitVector>> {
    samples
        .iter()
        .map(|s| forward_logits(params, &s.features))
        .collect()
}

const SHUFFLE_SALT: u64 = 0x7368_7566_666c_6531;

fn run_training(
    dataset: &Dataset,
    target: Target<'_>,
    arch: &[LayerSpec],
    sgd: &SgdConfig,
    weights: &LossWeights,
    ranking: &RankingConfig,
    eval_every: usize,
    initial: Option<MlpParams>,
) -> Result<(MlpParams, Vec<MetricsRow>)> {
    sgd.validate()?;
    weights.validate()?;
    ranking.validate()?;
    let mut params = match initial {
        Some(p) => p,
        None => init_mlp(arch, sgd.seed)?,
    };
    let mut state = SgdState::new(&params);
    let mut rows = Vec::new();

    let test_target = match &target {
        Target::SelfLogits => None,
        Target::Precomputed { test, .. } => Some(*test),
    };
    rows.push(eval_split(&params, &dataset.test, test_target, weights, ranking, 0, Split::Test)?);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(sgd.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();

    for epoch in 1..=sgd.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = RunningSums::default();
        for batch in order.chunks(sgd.batch_size) {
            let mut batch_grads = ParamGrads::zeros_like(&params);
            for &idx in batch {
                let sample = &dataset.train[idx];
                let (logits, cache) = forward(&params, &sample.features)?;
                let reference = match &target {
                    Target::SelfLogits => &logits,
                    Target::Precomputed { train, .. } => &train[idx],
                };
                measure_sample(reference, &logits, sample.label, weights, ranking, &mut sums)?;
                let grad_logits =
                    combined_gradient(reference, &logits, sample.label, weights, ranking)?;
                let sample_grads = backward(&params, &cache, &grad_logits)?;
                batch_grads.accumulate(&sample_grads);
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            sgd_step(&mut params, &batch_grads, sgd, &mut state)?;
        }
        if !sums.total.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                message: "training loss became non-finite".into(),
            });
        }
        let train_row = sums.into_row(epoch, Split::Train);
        train_row.validate().map_err(|e| Error::TrainingDiverged {
            epoch,
            message: e.to_string(),
        })?;
        rows.push(train_row);
        if epoch % eval_every == 0 || epoch == sgd.epochs {
            rows.push(eval_split(
                &params,
                &dataset.test,
                test_target,
                weights,
                ranking,
                epoch,
                Split::Test,
            )?);
        }
    }
    Ok((params, rows))
}

/// CE-only weights used for teacher training, at the run's temperature.
fn teacher_weights(run_temperature: f64) -> LossWeights {
    LossWeights {
        alpha: 0.0,
        beta: 1.0,
        gamma: 0.0,
        temperature: run_temperature,
    }
}

/// Trains the teacher with cross-entropy only. The logged KL and ranking
/// columns measure the model against its own logits (KL is 0; tau is 1).
pub fn train_teacher(cfg: &RunConfig) -> Result<(MlpParams, Vec<MetricsRow>)> {
    cfg.validate()?;
    let dataset = generate_dataset(&cfg.dataset)?;
    run_training(
        &dataset,
        Target::SelfLogits,
        &cfg.teacher_arch,
        &cfg.teacher_sgd,
        &teacher_weights(cfg.weights.temperature),
        &cfg.ranking,
        cfg.eval_every,
        None,
    )
}

/// Distills a student against a frozen teacher, starting from the seeded
/// student initialization.
pub fn distill_student(cfg: &RunConfig, teacher: &MlpParams) -> Result<(MlpParams, Vec<MetricsRow>)> {
    distill_student_from(cfg, teacher, None)
}

/// Distillation with an explicit starting point for the student; used for
/// self-distillation experiments where the student begins as a copy of the
/// teacher.
pub fn distill_student_from(
    cfg: &RunConfig,
    teacher: &MlpParams,
    initial_student: Option<MlpParams>,
) -> Result<(MlpParams, Vec<MetricsRow>)> {
    cfg.validate()?;
    if teacher.input_dim() != cfg.dataset.input_dim
        || teacher.output_dim() != cfg.dataset.num_classes
    {
        return Err(Error::CheckpointMismatch(format!(
            "teacher is {}->{} but dataset needs {}->{}",
            teacher.input_dim(),
            teacher.output_dim(),
            cfg.dataset.input_dim,
            cfg.dataset.num_classes
        )));
    }
    let dataset = generate_dataset(&cfg.dataset)?;
    // The teacher is frozen: its logits are fixed for the whole run.
    let train_logits = precompute_logits(teacher, &dataset.train)?;
    let test_logits = precompute_logits(teacher, &dataset.test)?;
    run_training(
        &dataset,
        Target::Precomputed {
            train: &train_logits,
            test: &test_logits,
        },
        &cfg.student_arch,
        &cfg.student_sgd,
        &cfg.weights,
        &cfg.ranking,
        cfg.eval_every,
        initial_student,
    )
}

/// The swept hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    Steepness,
    Temperature,
    Subset,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::Steepness => "k",
            SweepAxis::Temperature => "temperature",
            SweepAxis::Subset => "subset",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gamma" => Ok(SweepAxis::Gamma),
            "k" => Ok(SweepAxis::Steepness),
            "temperature" => Ok(SweepAxis::Temperature),
            "subset" => Ok(SweepAxis::Subset),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis {other:?}; expected gamma, k, temperature, or subset"
            ))),
        }
    }

    /// Derives the per-value config. Subset values encode the channel rule:
    /// positive p selects the top p% teacher channels, negative p the
    /// smallest |p|%, and 0 disables the ranking term entirely (the plain
    /// KD baseline).
    pub fn apply(&self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Gamma => cfg.weights.gamma = value,
            SweepAxis::Steepness => cfg.ranking.steepness = value,
            SweepAxis::Temperature => cfg.weights.temperature = value,
            SweepAxis::Subset => {
                if value == 0.0 {
                    cfg.weights.gamma = 0.0;
                    cfg.ranking.subset = crate::losses::ChannelSubset::All;
                } else if value > 0.0 {
                    cfg.ranking.subset = crate::losses::ChannelSubset::TopPercent(value);
                } else {
                    cfg.ranking.subset = crate::losses::ChannelSubset::MinPercent(-value);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Metrics of one sweep value.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub rows: Vec<MetricsRow>,
}

impl SweepPoint {
    /// The last test-split row of the run.
    pub fn final_test_row(&self) -> &MetricsRow {
        self.rows
            .iter()
            .rev()
            .find(|r| r.split == Split::Test)
            .expect("every run logs at least the epoch-0 test row")
    }
}

/// Runs one distillation per axis value against the same frozen teacher.
/// A failing sub-run aborts the sweep naming the offending value.
pub fn sweep(
    base: &RunConfig,
    teacher: &MlpParams,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let run = axis
            .apply(base, value)
            .and_then(|cfg| distill_student(&cfg, teacher));
        match run {
            Ok((_, rows)) => points.push(SweepPoint { value, rows }),
            Err(e) => {
                return Err(Error::SweepFailed {
                    axis: axis.name().to_string(),
                    value,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(points)
}
