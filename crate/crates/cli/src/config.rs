//! INI-style experiment configuration.
//!
//! Plain `key = value` lines under `[dataset]`, `[teacher]`, `[student]`,
//! `[weights]`, `[ranking]`, and `[optimizer]` sections. Every key is
//! optional and falls back to the desk-scale defaults; unknown sections or
//! keys are rejected by name. `[optimizer]` supplies shared SGD settings,
//! which `[teacher]` / `[student]` may override per model.

use std::collections::BTreeMap;

use rankdistill::distill::RunConfig;
use rankdistill::losses::{ChannelSubset, RankingForm};
use rankdistill::nn::mlp_specs;
use rankdistill::{Error, Result};

fn parse_err(message: String) -> Error {
    Error::InvalidConfig(message)
}

struct RawConfig {
    /// section -> key -> (value, line number)
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

const SECTIONS: [&str; 6] = ["dataset", "teacher", "student", "weights", "ranking", "optimizer"];

fn parse_raw(text: &str) -> Result<RawConfig> {
    let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(format!("line {lineno}: unterminated section header")))?
                .trim()
                .to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(parse_err(format!(
                    "line {lineno}: unknown section [{name}]"
                )));
            }
            current = Some(name.clone());
            sections.entry(name).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("line {lineno}: expected `key = value`")))?;
        let section = current
            .clone()
            .ok_or_else(|| parse_err(format!("line {lineno}: key before any [section]")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if let Some((_, first)) = sections.get(&section).and_then(|s| s.get(&key)) {
            return Err(parse_err(format!(
                "line {lineno}: duplicate key {key:?} in [{section}] (first at line {first})"
            )));
        }
        sections.get_mut(&section).unwrap().insert(key, (value, lineno));
    }
    Ok(RawConfig { sections })
}

struct SectionReader<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, (String, usize)>>,
    consumed: Vec<String>,
}

impl<'a> SectionReader<'a> {
    fn new(raw: &'a RawConfig, name: &'a str) -> Self {
        Self {
            name,
            entries: raw.sections.get(name),
            consumed: Vec::new(),
        }
    }

    fn take<T: std::str::FromStr>(&mut self, key: &str, into: &mut T) -> Result<()> {
        if let Some(v) = self.take_opt(key)? {
            *into = v;
        }
        Ok(())
    }

    fn take_opt<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.consumed.push(key.to_string());
        match self.entries.and_then(|e| e.get(key)) {
            Some((value, lineno)) => value.parse().map(Some).map_err(|_| {
                parse_err(format!(
                    "line {lineno}: bad value {value:?} for {key} in [{}]",
                    self.name
                ))
            }),
            None => Ok(None),
        }
    }

    fn take_with<T>(
        &mut self,
        key: &str,
        into: &mut T,
        parse: impl Fn(&str) -> Result<T>,
    ) -> Result<()> {
        self.consumed.push(key.to_string());
        if let Some((value, lineno)) = self.entries.and_then(|e| e.get(key)) {
            *into = parse(value).map_err(|e| {
                parse_err(format!("line {lineno}: {key} in [{}]: {e}", self.name))
            })?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(entries) = self.entries {
            for (key, (_, lineno)) in entries {
                if !self.consumed.contains(key) {
                    return Err(parse_err(format!(
                        "line {lineno}: unknown key {key:?} in [{}]",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn parse_hidden(value: &str) -> Result<Vec<usize>> {
    let trimmed = value.trim();
    if trimmed.is_empty() || trimmed == "none" {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(format!("bad hidden layer size {part:?}")))
        })
        .collect()
}

fn parse_form(value: &str) -> Result<RankingForm> {
    match value {
        "symmetric" => Ok(RankingForm::Symmetric),
        "form1" => Ok(RankingForm::Form1),
        "form2" => Ok(RankingForm::Form2),
        "form3" => Ok(RankingForm::Form3),
        other => Err(parse_err(format!(
            "unknown form {other:?}; expected symmetric, form1, form2, or form3"
        ))),
    }
}

fn parse_subset(value: &str) -> Result<ChannelSubset> {
    if value == "all" {
        return Ok(ChannelSubset::All);
    }
    let (kind, pct) = value
        .split_once(':')
        .ok_or_else(|| parse_err(format!("bad subset {value:?}; expected all, top:P, or min:P")))?;
    let p: f64 = pct
        .trim()
        .parse()
        .map_err(|_| parse_err(format!("bad subset percentage {pct:?}")))?;
    match kind.trim() {
        "top" => Ok(ChannelSubset::TopPercent(p)),
        "min" => Ok(ChannelSubset::MinPercent(p)),
        other => Err(parse_err(format!("unknown subset rule {other:?}"))),
    }
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(parse_err(format!("expected true or false, got {other:?}"))),
    }
}

/// The hidden layer sizes implied by an architecture (everything between
/// the input and the final layer).
fn hidden_of(specs: &[rankdistill::nn::LayerSpec]) -> Vec<usize> {
    specs[..specs.len() - 1].iter().map(|s| s.output_dim).collect()
}

/// Parses a configuration file into a fully resolved [`RunConfig`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw = parse_raw(text)?;
    let mut cfg = RunConfig::default();
    let mut teacher_hidden = hidden_of(&cfg.teacher_arch);
    let mut student_hidden = hidden_of(&cfg.student_arch);

    let mut section = SectionReader::new(&raw, "dataset");
    section.take("num_classes", &mut cfg.dataset.num_classes)?;
    section.take("input_dim", &mut cfg.dataset.input_dim)?;
    section.take("samples_per_class", &mut cfg.dataset.samples_per_class)?;
    section.take("cluster_spread", &mut cfg.dataset.cluster_spread)?;
    section.take("inter_class_correlation", &mut cfg.dataset.inter_class_correlation)?;
    section.take("seed", &mut cfg.dataset.seed)?;
    section.finish()?;

    // Shared optimizer settings: only keys actually present override the
    // per-model defaults, and per-model sections still win afterwards.
    let mut section = SectionReader::new(&raw, "optimizer");
    let learning_rate: Option<f64> = section.take_opt("learning_rate")?;
    let momentum: Option<f64> = section.take_opt("momentum")?;
    let weight_decay: Option<f64> = section.take_opt("weight_decay")?;
    let batch_size: Option<usize> = section.take_opt("batch_size")?;
    let epochs: Option<usize> = section.take_opt("epochs")?;
    section.take("eval_every", &mut cfg.eval_every)?;
    section.finish()?;
    for sgd in [&mut cfg.teacher_sgd, &mut cfg.student_sgd] {
        if let Some(v) = learning_rate {
            sgd.learning_rate = v;
        }
        if let Some(v) = momentum {
            sgd.momentum = v;
        }
        if let Some(v) = weight_decay {
            sgd.weight_decay = v;
        }
        if let Some(v) = batch_size {
            sgd.batch_size = v;
        }
        if let Some(v) = epochs {
            sgd.epochs = v;
        }
    }

    for (name, sgd, hidden) in [
        ("teacher", &mut cfg.teacher_sgd, &mut teacher_hidden),
        ("student", &mut cfg.student_sgd, &mut student_hidden),
    ] {
        let mut section = SectionReader::new(&raw, name);
        section.take_with("hidden", hidden, parse_hidden)?;
        section.take("seed", &mut sgd.seed)?;
        section.take("learning_rate", &mut sgd.learning_rate)?;
        section.take("momentum", &mut sgd.momentum)?;
        section.take("weight_decay", &mut sgd.weight_decay)?;
        section.take("batch_size", &mut sgd.batch_size)?;
        section.take("epochs", &mut sgd.epochs)?;
        section.finish()?;
    }

    let mut section = SectionReader::new(&raw, "weights");
    section.take("alpha", &mut cfg.weights.alpha)?;
    section.take("beta", &mut cfg.weights.beta)?;
    section.take("gamma", &mut cfg.weights.gamma)?;
    section.take("temperature", &mut cfg.weights.temperature)?;
    section.finish()?;

    let mut section = SectionReader::new(&raw, "ranking");
    section.take("steepness", &mut cfg.ranking.steepness)?;
    section.take_with("form", &mut cfg.ranking.form, parse_form)?;
    section.take_with("subset", &mut cfg.ranking.subset, parse_subset)?;
    section.take_with("normalize", &mut cfg.ranking.normalize_inputs, parse_bool)?;
    section.finish()?;

    cfg.teacher_arch = mlp_specs(cfg.dataset.input_dim, &teacher_hidden, cfg.dataset.num_classes);
    cfg.student_arch = mlp_specs(cfg.dataset.input_dim, &student_hidden, cfg.dataset.num_classes);
    cfg.validate()?;
    Ok(cfg)
}

fn form_name(form: RankingForm) -> &'static str {
    match form {
        RankingForm::Symmetric => "symmetric",
        RankingForm::Form1 => "form1",
        RankingForm::Form2 => "form2",
        RankingForm::Form3 => "form3",
    }
}

fn subset_name(subset: ChannelSubset) -> String {
    match subset {
        ChannelSubset::All => "all".to_string(),
        ChannelSubset::TopPercent(p) => format!("top:{p}"),
        ChannelSubset::MinPercent(p) => format!("min:{p}"),
    }
}

fn hidden_name(hidden: &[usize]) -> String {
    if hidden.is_empty() {
        "none".to_string()
    } else {
        hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Renders a resolved config in canonical form. Parsing the output yields
/// an identical [`RunConfig`]; floats use the shortest exact representation.
pub fn render_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    out.push_str("[dataset]\n");
    out.push_str(&format!("num_classes = {}\n", cfg.dataset.num_classes));
    out.push_str(&format!("input_dim = {}\n", cfg.dataset.input_dim));
    out.push_str(&format!("samples_per_class = {}\n", cfg.dataset.samples_per_class));
    out.push_str(&format!("cluster_spread = {}\n", cfg.dataset.cluster_spread));
    out.push_str(&format!(
        "inter_class_correlation = {}\n",
        cfg.dataset.inter_class_correlation
    ));
    out.push_str(&format!("seed = {}\n", cfg.dataset.seed));
    for (name, sgd, arch) in [
        ("teacher", &cfg.teacher_sgd, &cfg.teacher_arch),
        ("student", &cfg.student_sgd, &cfg.student_arch),
    ] {
        out.push_str(&format!("\n[{name}]\n"));
        out.push_str(&format!("hidden = {}\n", hidden_name(&hidden_of(arch))));
        out.push_str(&format!("seed = {}\n", sgd.seed));
        out.push_str(&format!("learning_rate = {}\n", sgd.learning_rate));
        out.push_str(&format!("momentum = {}\n", sgd.momentum));
        out.push_str(&format!("weight_decay = {}\n", sgd.weight_decay));
        out.push_str(&format!("batch_size = {}\n", sgd.batch_size));
        out.push_str(&format!("epochs = {}\n", sgd.epochs));
    }
    out.push_str("\n[weights]\n");
    out.push_str(&format!("alpha = {}\n", cfg.weights.alpha));
    out.push_str(&format!("beta = {}\n", cfg.weights.beta));
    out.push_str(&format!("gamma = {}\n", cfg.weights.gamma));
    out.push_str(&format!("temperature = {}\n", cfg.weights.temperature));
    out.push_str("\n[ranking]\n");
    out.push_str(&format!("steepness = {}\n", cfg.ranking.steepness));
    out.push_str(&format!("form = {}\n", form_name(cfg.ranking.form)));
    out.push_str(&format!("subset = {}\n", subset_name(cfg.ranking.subset)));
    out.push_str(&format!("normalize = {}\n", cfg.ranking.normalize_inputs));
    out.push_str("\n[optimizer]\n");
    out.push_str(&format!("eval_every = {}\n", cfg.eval_every));
    out
}

/// Applies `--seed N`: the dataset uses N directly, teacher and student
/// initialization/shuffling use fixed offsets so the three RNG streams
/// stay distinct.
pub fn override_seed(cfg: &mut RunConfig, seed: u64) {
    cfg.dataset.seed = seed;
    cfg.teacher_sgd.seed = seed.wrapping_add(1000);
    cfg.student_sgd.seed = seed.wrapping_add(2000);
}
