//! Command-line front end for the distillation harness.
//!
//! Exit codes: 0 success, 2 input/parse error, 3 training divergence,
//! 4 checkpoint mismatch, 5 sweep sub-run failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rankdistill::distill::{
    distill_student, format_float9, generate_dataset, save_samples, sweep, train_teacher,
    write_metrics, MetricsRow, RunConfig, Split, SweepAxis,
};
use rankdistill::losses::{
    diff_kendall_tau, gradient_profile, kendall_tau_exact, LossWeights, RankingConfig,
};
use rankdistill::nn::{load_checkpoint, save_checkpoint};
use rankdistill::numeric::LogitVector;
use rankdistill::Error;

#[derive(Parser)]
#[command(
    name = "rankdistill",
    about = "Kendall's-tau ranking loss for logit distillation: data generation, training, and loss diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration file (INI sections; missing keys use defaults)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override every seed in the config (dataset: N, teacher: N+1000, student: N+2000)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset files (train.csv and test.csv)
    GenData {
        /// Configuration file supplying the [dataset] section
        #[arg(long = "spec")]
        spec: Option<PathBuf>,
        /// Output directory for train.csv/test.csv
        #[arg(long)]
        out: PathBuf,
        /// Override the dataset seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the teacher with cross-entropy and save its checkpoint
    TrainTeacher {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint output path; metrics go to <out>.metrics.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill a student against a trained teacher checkpoint
    Distill {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Teacher checkpoint path
        #[arg(long)]
        teacher: PathBuf,
        /// Student checkpoint output path; metrics go to <out>.metrics.csv
        #[arg(long)]
        out: PathBuf,
        /// Disable the ranking term (gamma = 0): the plain KD baseline
        #[arg(long = "no-rank")]
        no_rank: bool,
        /// Disable z-score normalization inside the ranking loss
        #[arg(long = "no-norm")]
        no_norm: bool,
    },
    /// Print the per-channel KL/ranking gradient magnitude profile as CSV
    GradProfile {
        /// File holding one comma-separated teacher logit vector
        #[arg(long = "teacher-logits")]
        teacher_logits: PathBuf,
        /// File holding one comma-separated student logit vector
        #[arg(long = "student-logits")]
        student_logits: PathBuf,
        /// Steepness of the ranking loss
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        /// Softmax temperature
        #[arg(long = "T", default_value_t = 4.0)]
        temperature: f64,
        /// Disable z-score normalization inside the ranking loss
        #[arg(long = "no-norm")]
        no_norm: bool,
    },
    /// Exact Kendall's tau between two logit vectors (and tau_d with --k)
    Tau {
        /// File holding the first comma-separated vector
        #[arg(long)]
        a: PathBuf,
        /// File holding the second comma-separated vector
        #[arg(long)]
        b: PathBuf,
        /// Also print the differentiable tau at this steepness
        #[arg(long)]
        k: Option<f64>,
    },
    /// Distill once per axis value and write per-value metrics plus a summary
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Swept hyperparameter: gamma, k, temperature, or subset
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values (subset: positive = top %, negative = min %, 0 = no ranking)
        #[arg(long)]
        values: String,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse the configuration and print its canonical resolved form
    PrintConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::TrainingDiverged { .. } => 3,
        Error::CheckpointMismatch(_) => 4,
        Error::SweepFailed { .. } => 5,
        _ => 2,
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = match path {
        Some(p) => config::parse_config(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config::override_seed(&mut cfg, s);
    }
    Ok(cfg)
}

fn load_logit_file(path: &Path) -> Result<LogitVector, Error> {
    let text = fs::read_to_string(path)?;
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!("bad logit value {t:?} in {}", path.display()))
            })
        })
        .collect::<Result<Vec<f64>, Error>>()?;
    LogitVector::new(values)
}

fn metrics_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".metrics.csv");
    checkpoint.with_file_name(name)
}

fn final_test_row(rows: &[MetricsRow]) -> &MetricsRow {
    rows.iter()
        .rev()
        .find(|r| r.split == Split::Test)
        .expect("every run logs at least the epoch-0 test row")
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { spec, out, seed } => {
            let mut cfg = load_config(spec.as_deref(), None)?;
            if let Some(s) = seed {
                cfg.dataset.seed = s;
            }
            let dataset = generate_dataset(&cfg.dataset)?;
            fs::create_dir_all(&out)?;
            save_samples(&dataset.train, &out.join("train.csv"))?;
            save_samples(&dataset.test, &out.join("test.csv"))?;
            println!(
                "wrote {} train and {} test samples to {}",
                dataset.train.len(),
                dataset.test.len(),
                out.display()
            );
        }
        Command::TrainTeacher { cfg, out } => {
            let cfg = load_config(cfg.config.as_deref(), cfg.seed)?;
            let (teacher, rows) = train_teacher(&cfg)?;
            save_checkpoint(&teacher, &out)?;
            write_metrics(&rows, &metrics_path(&out))?;
            let last = final_test_row(&rows);
            println!(
                "teacher saved to {}; final test accuracy {}",
                out.display(),
                format_float9(last.accuracy)
            );
        }
        Command::Distill { cfg, teacher, out, no_rank, no_norm } => {
            let mut cfg = load_config(cfg.config.as_deref(), cfg.seed)?;
            if no_rank {
                cfg.weights.gamma = 0.0;
            }
            if no_norm {
                cfg.ranking.normalize_inputs = false;
            }
            let teacher = load_checkpoint(&teacher)?;
            let (student, rows) = distill_student(&cfg, &teacher)?;
            save_checkpoint(&student, &out)?;
            write_metrics(&rows, &metrics_path(&out))?;
            let last = final_test_row(&rows);
            println!(
                "student saved to {}; final test accuracy {} mean tau {}",
                out.display(),
                format_float9(last.accuracy),
                format_float9(last.mean_exact_tau)
            );
        }
        Command::GradProfile { teacher_logits, student_logits, k, temperature, no_norm } => {
            let z_t = load_logit_file(&teacher_logits)?;
            let z_s = load_logit_file(&student_logits)?;
            let weights = LossWeights { temperature, ..LossWeights::default() };
            let ranking = RankingConfig {
                steepness: k,
                normalize_inputs: !no_norm,
                ..RankingConfig::default()
            };
            let rows = gradient_profile(&z_t, &z_s, &weights, &ranking)?;
            println!("channel,q_t,abs_kl_grad,abs_rk_grad");
            for row in rows {
                println!(
                    "{},{},{},{}",
                    row.channel,
                    format_float9(row.teacher_prob),
                    format_float9(row.kl_grad_abs),
                    format_float9(row.rk_grad_abs)
                );
            }
        }
        Command::Tau { a, b, k } => {
            let z_a = load_logit_file(&a)?;
            let z_b = load_logit_file(&b)?;
            let breakdown = kendall_tau_exact(&z_a, &z_b)?;
            println!(
                "tau = {}\nconcordant = {}\ndiscordant = {}\nties = {}",
                format_float9(breakdown.tau),
                breakdown.concordant,
                breakdown.discordant,
                breakdown.ties
            );
            if let Some(k) = k {
                let smooth = diff_kendall_tau(&z_a, &z_b, k)?;
                println!("tau_d = {}", format_float9(smooth));
            }
        }
        Command::Sweep { cfg, axis, values, out } => {
            let cfg = load_config(cfg.config.as_deref(), cfg.seed)?;
            let axis = SweepAxis::parse(&axis)?;
            let values = values
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::InvalidConfig(format!("bad sweep value {t:?}")))
                })
                .collect::<Result<Vec<f64>, Error>>()?;
            let (teacher, _) = train_teacher(&cfg)?;
            let points = sweep(&cfg, &teacher, axis, &values)?;
            fs::create_dir_all(&out)?;
            let mut summary = String::from("value,final_accuracy,final_mean_tau\n");
            for point in &points {
                write_metrics(
                    &point.rows,
                    &out.join(format!("{}_{}.metrics.csv", axis.name(), point.value)),
                )?;
                let last = point.final_test_row();
                summary.push_str(&format!(
                    "{},{},{}\n",
                    point.value,
                    format_float9(last.accuracy),
                    format_float9(last.mean_exact_tau)
                ));
            }
            fs::write(out.join("summary.csv"), summary)?;
            println!(
                "swept {} over {} values; summary in {}",
                axis.name(),
                points.len(),
                out.display()
            );
        }
        Command::PrintConfig { cfg } => {
            let cfg = load_config(cfg.config.as_deref(), cfg.seed)?;
            print!("{}", config::render_config(&cfg));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
