//! Experiment configuration in a flat sectioned `key = value` format.
//!
//! ```text
//! [workload]
//! distribution = lognormal
//! mu = 7.6
//! global_batch = 512
//!
//! [pipeline]
//! modes = dynamic_stream, fully_async
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Every key not
//! listed in this module is rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use streamsim_core::cost_model::parse_profile_csv;
use streamsim_core::pipeline::PipelineMode;
use streamsim_core::workload::load_trace;
use streamsim_core::{fit_profile, HardwareSpec, LengthDistribution, LinkSpec, ModelShape, PtlProfile, Workload};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Key { section: String, key: String, msg: String },
    #[error("unknown key `{key}` in [{section}] (line {line})")]
    UnknownKey { section: String, key: String, line: usize },
    #[error("unknown section [{section}] (line {line})")]
    UnknownSection { section: String, line: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Distribution(LengthDistribution),
    Trace { path: PathBuf, workload: Workload },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub source: WorkloadSource,
    pub prompt: LengthDistribution,
    pub global_batch: usize,
    /// Multiplier applied to every output length.
    pub scale: f64,
    /// Length multiplier reached at the last iteration (linear ramp from 1).
    pub ramp_to: f64,
    /// Log-space spread of i.i.d. per-sample length noise per iteration.
    pub jitter: f64,
    /// Draw a fresh batch every iteration; otherwise reuse the first one.
    pub resample: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareConfig {
    pub gen: HardwareSpec,
    pub train: HardwareSpec,
    /// Weight-sync link inside one datacenter.
    pub link: LinkSpec,
    /// Weight-sync link between datacenters.
    pub cross_link: LinkSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub profile: PtlProfile,
    /// Hardware the profile was measured on.
    pub profile_hardware: HardwareSpec,
    /// Model the profile was measured with.
    pub profile_model: ModelShape,
    pub tp_overhead: f64,
    pub activation_reserve: f64,
    pub max_bs: Option<u32>,
    pub prefill_ms_per_token: f64,
    pub train_mfu: f64,
    pub train_flops_per_param_token: f64,
    pub train_step_ms: f64,
    pub train_max_gpus: u32,
    /// Overrides the link-derived weight transfer time.
    pub weight_ms: Option<f64>,
    pub switch_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankerKind {
    Oracle,
    Noisy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankerConfig {
    pub mode: RankerKind,
    pub alpha: f64,
    pub sigma: f64,
    /// When set, sigma is calibrated to this recall at `alpha`.
    pub target_recall: Option<f64>,
    /// `(alpha, recall)` pairs for `calibrate-ranker`.
    pub targets: Vec<(f64, f64)>,
    pub calibration_samples: usize,
    pub calibration_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchKind {
    Random,
    Skewness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub modes: Vec<PipelineMode>,
    pub dispatch: DispatchKind,
    pub iterations: usize,
    pub warmup: usize,
    pub seeds: usize,
    pub seed: u64,
    pub min_train_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationConfig {
    /// GPU budget of a single datacenter.
    pub gpus: u32,
    pub cross_dc: bool,
    /// Budgets of the generation and training datacenters.
    pub gen_gpus: u32,
    pub train_gpus: u32,
    pub tp_choices: Vec<u32>,
    pub elastic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub workload: WorkloadConfig,
    pub hardware: HardwareConfig,
    pub model: ModelShape,
    pub cost: CostConfig,
    pub ranker: RankerConfig,
    pub pipeline: PipelineConfig,
    pub allocation: AllocationConfig,
}

const SECTIONS: [&str; 7] = [
    "workload",
    "hardware",
    "model",
    "cost",
    "ranker",
    "pipeline",
    "allocation",
];

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Raw parsed file with consumption tracking.
struct Ini {
    entries: BTreeMap<(String, String), Entry>,
    base: PathBuf,
}

impl Ini {
    fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(name) = s.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    msg: format!("unterminated section header `{s}`"),
                })?;
                let name = name.trim().to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(ConfigError::UnknownSection { section: name, line });
                }
                section = Some(name);
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{s}`"),
            })?;
            let sec = section.clone().ok_or_else(|| ConfigError::Syntax {
                line,
                msg: "key outside of any section".into(),
            })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    msg: "empty key".into(),
                });
            }
            let prev = entries.insert(
                (sec.clone(), key.clone()),
                Entry {
                    value: v.trim().to_string(),
                    line,
                    used: false,
                },
            );
            if prev.is_some() {
                return Err(ConfigError::Key {
                    section: sec,
                    key,
                    msg: format!("duplicate key (line {line})"),
                });
            }
        }
        Ok(Self {
            entries,
            base: base.to_path_buf(),
        })
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<String> {
        self.entries.get_mut(&(section.to_string(), key.to_string())).map(|e| {
            e.used = true;
            e.value.clone()
        })
    }

    fn get<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::Key {
                section: section.into(),
                key: key.into(),
                msg: format!("cannot parse `{v}` as {}", short_type::<T>()),
            }),
        }
    }

    fn or<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn path(&mut self, section: &str, key: &str) -> Option<PathBuf> {
        self.raw(section, key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().find(|(_, e)| !e.used) {
            Some(((section, key), e)) => Err(ConfigError::UnknownKey {
                section,
                key,
                line: e.line,
            }),
            None => Ok(()),
        }
    }
}

fn short_type<T>() -> &'static str {
    let full = std::any::type_name::<T>();
    full.rsplit("::").next().unwrap_or(full)
}

fn key_err(section: &str, key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        section: section.into(),
        key: key.into(),
        msg: msg.into(),
    }
}

fn check(ok: bool, section: &str, key: &str, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(key_err(section, key, msg))
    }
}

fn hardware_preset(section: &str, key: &str, name: &str) -> Result<HardwareSpec, ConfigError> {
    match name.to_ascii_lowercase().as_str() {
        "h20" => Ok(HardwareSpec::h20()),
        "h800" => Ok(HardwareSpec::h800()),
        _ => Err(key_err(section, key, format!("unknown hardware `{name}` (h20, h800)"))),
    }
}

fn parse_list<T: FromStr>(section: &str, key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| key_err(section, key, format!("cannot parse list item `{s}`")))
        })
        .collect()
}

/// Reads and validates a config file. Relative paths inside it resolve
/// against the file's directory.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; `base` anchors relative file references.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut ini = Ini::parse(text, base)?;
    let workload = workload_section(&mut ini)?;
    let hardware = hardware_section(&mut ini)?;
    let model = model_section(&mut ini)?;
    let cost = cost_section(&mut ini)?;
    let ranker = ranker_section(&mut ini)?;
    let pipeline = pipeline_section(&mut ini, workload.global_batch)?;
    let allocation = allocation_section(&mut ini)?;
    ini.finish()?;
    Ok(ExperimentConfig {
        workload,
        hardware,
        model,
        cost,
        ranker,
        pipeline,
        allocation,
    })
}

fn workload_section(ini: &mut Ini) -> Result<WorkloadConfig, ConfigError> {
    const S: &str = "workload";
    let kind: String = ini.or(S, "distribution", "lognormal".to_string())?;
    let max_len: u32 = ini.or(S, "max_len", 20_000)?;
    check(max_len >= 1, S, "max_len", "must be >= 1")?;
    let mu: f64 = ini.or(S, "mu", 7.6)?;
    let sigma: f64 = ini.or(S, "sigma", 1.0)?;
    let xm: f64 = ini.or(S, "pareto_scale", 500.0)?;
    let shape: f64 = ini.or(S, "pareto_shape", 1.5)?;
    let trace = ini.path(S, "trace");
    let source = match kind.as_str() {
        "lognormal" => {
            check(sigma >= 0.0, S, "sigma", "must be >= 0")?;
            WorkloadSource::Distribution(LengthDistribution::lognormal(mu, sigma, max_len))
        }
        "pareto" => {
            check(xm > 0.0, S, "pareto_scale", "must be > 0")?;
            check(shape > 0.0, S, "pareto_shape", "must be > 0")?;
            WorkloadSource::Distribution(LengthDistribution::ParetoTail {
                scale: xm,
                shape,
                max_len,
            })
        }
        "trace" => {
            let path = trace.ok_or_else(|| key_err(S, "trace", "required when distribution = trace"))?;
            let workload = load_trace(&path).map_err(|e| key_err(S, "trace", e.to_string()))?;
            if workload.is_empty() {
                return Err(key_err(S, "trace", "trace has no samples"));
            }
            WorkloadSource::Trace { path, workload }
        }
        other => {
            return Err(key_err(
                S,
                "distribution",
                format!("unknown distribution `{other}` (lognormal, pareto, trace)"),
            ))
        }
    };
    let prompt_mu: f64 = ini.or(S, "prompt_mu", 6.0)?;
    let prompt_sigma: f64 = ini.or(S, "prompt_sigma", 0.4)?;
    let prompt_max: u32 = ini.or(S, "prompt_max", 4_096)?;
    check(prompt_sigma > 0.0, S, "prompt_sigma", "must be > 0")?;
    check(prompt_max >= 1, S, "prompt_max", "must be >= 1")?;
    let global_batch: usize = ini.or(S, "global_batch", 512)?;
    check(global_batch >= 1, S, "global_batch", "must be >= 1")?;
    let scale: f64 = ini.or(S, "scale", 1.0)?;
    check(scale > 0.0, S, "scale", "must be > 0")?;
    let ramp_to: f64 = ini.or(S, "ramp_to", 1.0)?;
    check(ramp_to > 0.0, S, "ramp_to", "must be > 0")?;
    let jitter: f64 = ini.or(S, "jitter", 0.0)?;
    check((0.0..=2.0).contains(&jitter), S, "jitter", "must be in [0, 2]")?;
    let resample: bool = ini.or(S, "resample", true)?;
    Ok(WorkloadConfig {
        source,
        prompt: LengthDistribution::lognormal(prompt_mu, prompt_sigma, prompt_max),
        global_batch,
        scale,
        ramp_to,
        jitter,
        resample,
    })
}

fn hardware_section(ini: &mut Ini) -> Result<HardwareConfig, ConfigError> {
    const S: &str = "hardware";
    let gen_name: String = ini.or(S, "gen", "h800".to_string())?;
    let train_name: String = ini.or(S, "train", "h800".to_string())?;
    let mut gen = hardware_preset(S, "gen", &gen_name)?;
    let mut train = hardware_preset(S, "train", &train_name)?;
    if let Some(c) = ini.get::<f64>(S, "gen_cost")? {
        check(c > 0.0, S, "gen_cost", "must be > 0")?;
        gen.cost_per_machine = c;
    }
    if let Some(c) = ini.get::<f64>(S, "train_cost")? {
        check(c > 0.0, S, "train_cost", "must be > 0")?;
        train.cost_per_machine = c;
    }
    let link_gbps: f64 = ini.or(S, "link_gbps", 400.0)?;
    let link_bytes: u32 = ini.or(S, "bytes_per_param", 2)?;
    let cross_gbps: f64 = ini.or(S, "cross_link_gbps", 80.0)?;
    let cross_bytes: u32 = ini.or(S, "cross_bytes_per_param", 1)?;
    let link = LinkSpec::new(link_gbps, link_bytes).map_err(|e| key_err(S, "link_gbps", e.to_string()))?;
    let cross_link =
        LinkSpec::new(cross_gbps, cross_bytes).map_err(|e| key_err(S, "cross_link_gbps", e.to_string()))?;
    Ok(HardwareConfig {
        gen,
        train,
        link,
        cross_link,
    })
}

fn model_section(ini: &mut Ini) -> Result<ModelShape, ConfigError> {
    let name: String = ini.or("model", "name", "qwen2.5-7b".to_string())?;
    model_preset("model", "name", &name)
}

fn model_preset(section: &str, key: &str, name: &str) -> Result<ModelShape, ConfigError> {
    match name.to_ascii_lowercase().as_str() {
        "qwen2.5-7b" => Ok(ModelShape::qwen2_5_7b()),
        "qwen2.5-72b" => Ok(ModelShape::qwen2_5_72b()),
        _ => Err(key_err(
            section,
            key,
            format!("unknown model `{name}` (qwen2.5-7b, qwen2.5-72b)"),
        )),
    }
}

fn cost_section(ini: &mut Ini) -> Result<CostConfig, ConfigError> {
    const S: &str = "cost";
    let d = PtlProfile::default();
    let t0: Option<f64> = ini.get(S, "t0")?;
    let k0: Option<f64> = ini.get(S, "k0")?;
    let b_star: Option<f64> = ini.get(S, "b_star")?;
    let k1: Option<f64> = ini.get(S, "k1")?;
    let profile = match ini.path(S, "profile_csv") {
        Some(path) => {
            if t0.or(k0).or(b_star).or(k1).is_some() {
                return Err(key_err(S, "profile_csv", "give either profile_csv or t0/k0/b_star/k1"));
            }
            let text =
                fs::read_to_string(&path).map_err(|e| key_err(S, "profile_csv", format!("{}: {e}", path.display())))?;
            let pts = parse_profile_csv(&text).map_err(|e| key_err(S, "profile_csv", e.to_string()))?;
            fit_profile(&pts).map_err(|e| key_err(S, "profile_csv", e.to_string()))?
        }
        None => PtlProfile::new(
            t0.unwrap_or(d.t0()),
            k0.unwrap_or(d.k0()),
            b_star.unwrap_or(d.b_star()),
            k1.unwrap_or(d.k1()),
        )
        .map_err(|e| key_err(S, "t0", e.to_string()))?,
    };
    let ref_name: String = ini.or(S, "profile_hardware", "h800".to_string())?;
    let profile_hardware = hardware_preset(S, "profile_hardware", &ref_name)?;
    let ref_model: String = ini.or(S, "profile_model", "qwen2.5-7b".to_string())?;
    let profile_model = model_preset(S, "profile_model", &ref_model)?;
    let tp_overhead: f64 = ini.or(S, "tp_overhead", 0.15)?;
    check((0.0..1.0).contains(&tp_overhead), S, "tp_overhead", "must be in [0, 1)")?;
    let activation_reserve: f64 = ini.or(S, "activation_reserve", 0.10)?;
    check(
        (0.0..1.0).contains(&activation_reserve),
        S,
        "activation_reserve",
        "must be in [0, 1)",
    )?;
    let max_bs: Option<u32> = ini.get(S, "max_bs")?;
    check(max_bs != Some(0), S, "max_bs", "must be >= 1")?;
    let prefill_ms_per_token: f64 = ini.or(S, "prefill_ms_per_token", 0.0)?;
    check(prefill_ms_per_token >= 0.0, S, "prefill_ms_per_token", "must be >= 0")?;
    let train_mfu: f64 = ini.or(S, "train_mfu", 0.35)?;
    check(train_mfu > 0.0 && train_mfu <= 1.0, S, "train_mfu", "must be in (0, 1]")?;
    let train_flops_per_param_token: f64 = ini.or(S, "train_flops_per_param_token", 16.0)?;
    check(
        train_flops_per_param_token > 0.0,
        S,
        "train_flops_per_param_token",
        "must be > 0",
    )?;
    let train_step_ms: f64 = ini.or(S, "train_step_ms", 1_000.0)?;
    check(train_step_ms >= 0.0, S, "train_step_ms", "must be >= 0")?;
    let train_max_gpus: u32 = ini.or(S, "train_max_gpus", 1_024)?;
    check(train_max_gpus >= 1, S, "train_max_gpus", "must be >= 1")?;
    let weight_ms: Option<f64> = ini.get(S, "weight_ms")?;
    check(weight_ms.is_none_or(|w| w >= 0.0), S, "weight_ms", "must be >= 0")?;
    let switch_ms: f64 = ini.or(S, "switch_ms", 5_000.0)?;
    check(switch_ms >= 0.0, S, "switch_ms", "must be >= 0")?;
    Ok(CostConfig {
        profile,
        profile_hardware,
        profile_model,
        tp_overhead,
        activation_reserve,
        max_bs,
        prefill_ms_per_token,
        train_mfu,
        train_flops_per_param_token,
        train_step_ms,
        train_max_gpus,
        weight_ms,
        switch_ms,
    })
}

fn ranker_section(ini: &mut Ini) -> Result<RankerConfig, ConfigError> {
    const S: &str = "ranker";
    let mode: String = ini.or(S, "mode", "oracle".to_string())?;
    let mode = match mode.as_str() {
        "oracle" => RankerKind::Oracle,
        "noisy" => RankerKind::Noisy,
        other => {
            return Err(key_err(
                S,
                "mode",
                format!("unknown ranker mode `{other}` (oracle, noisy)"),
            ))
        }
    };
    let alpha: f64 = ini.or(S, "alpha", 0.2)?;
    check(alpha > 0.0 && alpha < 1.0, S, "alpha", "must be in (0, 1)")?;
    let sigma: f64 = ini.or(S, "sigma", 0.0)?;
    check(sigma >= 0.0, S, "sigma", "must be >= 0")?;
    let target_recall: Option<f64> = ini.get(S, "target_recall")?;
    check(
        target_recall.is_none_or(|r| r > 0.0 && r <= 1.0),
        S,
        "target_recall",
        "must be in (0, 1]",
    )?;
    let targets = match ini.raw(S, "targets") {
        None => vec![(0.2, 0.87), (0.1, 0.82), (0.05, 0.76)],
        Some(v) => {
            let mut out = Vec::new();
            for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let pair = item
                    .split_once(':')
                    .and_then(|(a, r)| Some((a.trim().parse::<f64>().ok()?, r.trim().parse::<f64>().ok()?)));
                match pair {
                    Some((a, r)) if a > 0.0 && a < 1.0 && r > 0.0 && r <= 1.0 => out.push((a, r)),
                    _ => return Err(key_err(S, "targets", format!("expected `alpha:recall`, got `{item}`"))),
                }
            }
            out
        }
    };
    let calibration_samples: usize = ini.or(S, "calibration_samples", 10_000)?;
    check(calibration_samples >= 10, S, "calibration_samples", "must be >= 10")?;
    let calibration_trials: usize = ini.or(S, "calibration_trials", 4)?;
    check(calibration_trials >= 1, S, "calibration_trials", "must be >= 1")?;
    Ok(RankerConfig {
        mode,
        alpha,
        sigma,
        target_recall,
        targets,
        calibration_samples,
        calibration_trials,
    })
}

fn pipeline_section(ini: &mut Ini, global_batch: usize) -> Result<PipelineConfig, ConfigError> {
    const S: &str = "pipeline";
    let modes = match ini.raw(S, "modes") {
        None => vec![PipelineMode::FullyAsync],
        Some(v) => {
            let mut modes = Vec::new();
            for m in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                modes.push(PipelineMode::parse(m).map_err(|e| key_err(S, "modes", e.to_string()))?);
            }
            if modes.is_empty() {
                return Err(key_err(S, "modes", "at least one mode required"));
            }
            modes
        }
    };
    let dispatch: String = ini.or(S, "dispatch", "skewness".to_string())?;
    let dispatch = match dispatch.as_str() {
        "skewness" => DispatchKind::Skewness,
        "random" => DispatchKind::Random,
        other => {
            return Err(key_err(
                S,
                "dispatch",
                format!("unknown dispatch `{other}` (skewness, random)"),
            ))
        }
    };
    let iterations: usize = ini.or(S, "iterations", 25)?;
    let warmup: usize = ini.or(S, "warmup", 5)?;
    check(iterations >= 1, S, "iterations", "must be >= 1")?;
    check(warmup < iterations, S, "warmup", "must be < iterations")?;
    let seeds: usize = ini.or(S, "seeds", 1)?;
    check(seeds >= 1, S, "seeds", "must be >= 1")?;
    let seed: u64 = ini.or(S, "seed", 0)?;
    let min_train_tokens: u64 = ini.or(S, "min_train_tokens", (global_batch as u64 / 8).max(1) * 1_000)?;
    Ok(PipelineConfig {
        modes,
        dispatch,
        iterations,
        warmup,
        seeds,
        seed,
        min_train_tokens,
    })
}

fn allocation_section(ini: &mut Ini) -> Result<AllocationConfig, ConfigError> {
    const S: &str = "allocation";
    let gpus: u32 = ini.or(S, "gpus", 16)?;
    check(gpus >= 2, S, "gpus", "must be >= 2")?;
    let cross_dc: bool = ini.or(S, "cross_dc", false)?;
    let gen_gpus: u32 = ini.or(S, "gen_gpus", 8)?;
    let train_gpus: u32 = ini.or(S, "train_gpus", 8)?;
    check(gen_gpus >= 1, S, "gen_gpus", "must be >= 1")?;
    check(train_gpus >= 1, S, "train_gpus", "must be >= 1")?;
    let tp_choices = match ini.raw(S, "tp_choices") {
        None => vec![1],
        Some(v) => parse_list::<u32>(S, "tp_choices", &v)?,
    };
    check(
        !tp_choices.is_empty() && tp_choices.iter().all(|&t| t >= 1),
        S,
        "tp_choices",
        "need at least one TP size >= 1",
    )?;
    let elastic: bool = ini.or(S, "elastic", false)?;
    Ok(AllocationConfig {
        gpus,
        cross_dc,
        gen_gpus,
        train_gpus,
        tp_choices,
        elastic,
    })
}
