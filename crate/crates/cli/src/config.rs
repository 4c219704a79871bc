//! The run configuration: `[section]` headers, `key = value` lines and
//! `#` comments. Every key is optional and falls back to the defaults
//! below; an unknown section or key is an error.
//!
//! | section | key | default |
//! |---|---|---|
//! | model | preset | crowd-aversion |
//! | model | beta, kappa, sigma, gamma1, gamma2, theta, horizon, start | preset values |
//! | model | initial | preset law, `gaussian(mean, std)` or `uniform(a, b)` |
//! | grid | x_min, x_max | preset domain (−5, 5) |
//! | grid | nx | 201 |
//! | grid | nt | auto (smallest stable for the solver) |
//! | solver | damping, tol, max_iter | 0.5, 1e-4, 100 |
//! | solver | init | default (`uniform` also accepted) |
//! | experiment | thetas | 1, 2, 4, 8, 16, 32 |
//! | experiment | probes | −1, 0, 0.5, 1, 2 (at the start time) |
//! | experiment | n_values | 64, 128, 256, 512, 1024, 2048, 4096 |
//! | experiment | replications, seed, substeps | 200, 20240607, 2 |
//! | experiment | deviations | shift(±0.1), shift(±0.2), zero, full_up, full_down |
//! | experiment | fv_nx, fv_n_values, fv_replications, fv_substeps | 101; 64, 256, 1024; 100; 1 |
//! | experiment | gap_constant | auto (fitted by a sweep-n run) |
//! | experiment | assumption_samples | 2000 |

use std::collections::BTreeMap;
use std::fmt;

use bvmfg::mfg::SolverSettings;
use bvmfg::model::{build_preset, InitialLaw, ModelSpec, Preset, PresetParams};
use bvmfg::nplayer::DeviationLibrary;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "key `{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        key: key.map(str::to_string),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Default,
    Uniform,
}

#[derive(Debug, Clone)]
pub struct ExperimentBlock {
    pub thetas: Vec<f64>,
    pub probes: Vec<f64>,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub substeps: usize,
    pub deviations: DeviationLibrary,
    pub fv_nx: usize,
    pub fv_n_values: Vec<usize>,
    pub fv_replications: usize,
    pub fv_substeps: usize,
    pub gap_constant: Option<f64>,
    pub assumption_samples: usize,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            thetas: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            probes: vec![-1.0, 0.0, 0.5, 1.0, 2.0],
            n_values: vec![64, 128, 256, 512, 1024, 2048, 4096],
            replications: 200,
            seed: 20240607,
            substeps: 2,
            deviations: DeviationLibrary::standard(),
            fv_nx: 101,
            fv_n_values: vec![64, 256, 1024],
            fv_replications: 100,
            fv_substeps: 1,
            gap_constant: None,
            assumption_samples: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    pub params: PresetParams,
    pub nx: usize,
    pub nt: Option<usize>,
    pub solver: SolverSettings,
    pub init: InitKind,
    pub experiment: ExperimentBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_preset(Preset::CrowdAversion)
    }
}

const SECTIONS: [&str; 4] = ["model", "grid", "solver", "experiment"];

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| err(Some(line), Some(key), format!("expected a number, got `{v}`")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse::<usize>()
        .map_err(|_| err(Some(line), Some(key), format!("expected a nonnegative integer, got `{v}`")))
}

fn parse_list<T>(line: usize, key: &str, v: &str, one: fn(usize, &str, &str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| one(line, key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(err(Some(line), Some(key), "empty list"));
    }
    Ok(items)
}

/// `name(a, b)` with two numeric arguments.
fn parse_call(line: usize, key: &str, v: &str) -> Result<(String, f64, f64), ConfigError> {
    let bad = || err(Some(line), Some(key), format!("expected gaussian(mean, std) or uniform(a, b), got `{v}`"));
    let (name, rest) = v.split_once('(').ok_or_else(bad)?;
    let args = rest.strip_suffix(')').ok_or_else(bad)?;
    let (a, b) = args.split_once(',').ok_or_else(bad)?;
    let a = a.trim().parse::<f64>().map_err(|_| bad())?;
    let b = b.trim().parse::<f64>().map_err(|_| bad())?;
    Ok((name.trim().to_string(), a, b))
}

fn fmt_list<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        Self {
            preset,
            params: PresetParams::defaults(preset),
            nx: 201,
            nt: None,
            solver: SolverSettings::default(),
            init: InitKind::Default,
            experiment: ExperimentBlock::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String, String, String)> = Vec::new();
        let mut section: Option<String> = None;
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(Some(line), None, format!("malformed section header `{content}`")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(Some(line), None, format!("unknown section `[{name}]`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(Some(line), None, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .clone()
                .ok_or_else(|| err(Some(line), Some(key), "key outside of any section"))?;
            if let Some(prev) = seen.insert((sec.clone(), key.to_string()), line) {
                return Err(err(Some(line), Some(key), format!("duplicate key (first set on line {prev})")));
            }
            entries.push((line, sec, key.to_string(), value.to_string()));
        }

        // The preset decides the defaults every other key overrides.
        let preset = match entries.iter().find(|e| e.1 == "model" && e.2 == "preset") {
            Some((line, _, key, v)) => v
                .parse::<Preset>()
                .map_err(|e| err(Some(*line), Some(key), e.to_string()))?,
            None => Preset::CrowdAversion,
        };
        let mut cfg = Self::for_preset(preset);
        let mut x_min = None;
        let mut x_max = None;
        for (line, sec, key, v) in &entries {
            let (line, key, v) = (*line, key.as_str(), v.as_str());
            let p = &mut cfg.params;
            let e = &mut cfg.experiment;
            match (sec.as_str(), key) {
                ("model", "preset") => {}
                ("model", "beta") => p.beta = parse_f64(line, key, v)?,
                ("model", "kappa") => p.kappa = parse_f64(line, key, v)?,
                ("model", "sigma") => p.sigma = parse_f64(line, key, v)?,
                ("model", "gamma1") => p.gamma1 = parse_f64(line, key, v)?,
                ("model", "gamma2") => p.gamma2 = parse_f64(line, key, v)?,
                ("model", "theta") => p.theta = Some(parse_f64(line, key, v)?),
                ("model", "horizon") => p.horizon = parse_f64(line, key, v)?,
                ("model", "start") => p.start = parse_f64(line, key, v)?,
                ("model", "initial") => {
                    let (name, a, b) = parse_call(line, key, v)?;
                    p.initial_law = match name.as_str() {
                        "gaussian" => InitialLaw::Gaussian { mean: a, std: b },
                        "uniform" => InitialLaw::Uniform { a, b },
                        _ => return Err(err(Some(line), Some(key), format!("unknown law `{name}`"))),
                    };
                }
                ("grid", "x_min") => x_min = Some(parse_f64(line, key, v)?),
                ("grid", "x_max") => x_max = Some(parse_f64(line, key, v)?),
                ("grid", "nx") => cfg.nx = parse_usize(line, key, v)?,
                ("grid", "nt") => {
                    cfg.nt = if v == "auto" { None } else { Some(parse_usize(line, key, v)?) }
                }
                ("solver", "damping") => cfg.solver.damping = parse_f64(line, key, v)?,
                ("solver", "tol") => cfg.solver.tol = parse_f64(line, key, v)?,
                ("solver", "max_iter") => cfg.solver.max_iter = parse_usize(line, key, v)?,
                ("solver", "init") => {
                    cfg.init = match v {
                        "default" => InitKind::Default,
                        "uniform" => InitKind::Uniform,
                        _ => return Err(err(Some(line), Some(key), format!("expected default or uniform, got `{v}`"))),
                    }
                }
                ("experiment", "thetas") => e.thetas = parse_list(line, key, v, parse_f64)?,
                ("experiment", "probes") => e.probes = parse_list(line, key, v, parse_f64)?,
                ("experiment", "n_values") => e.n_values = parse_list(line, key, v, parse_usize)?,
                ("experiment", "replications") => e.replications = parse_usize(line, key, v)?,
                ("experiment", "seed") => {
                    e.seed = v
                        .parse()
                        .map_err(|_| err(Some(line), Some(key), format!("expected an unsigned integer, got `{v}`")))?
                }
                ("experiment", "substeps") => e.substeps = parse_usize(line, key, v)?,
                ("experiment", "deviations") => {
                    e.deviations = DeviationLibrary::parse(v).map_err(|x| err(Some(line), Some(key), x.to_string()))?
                }
                ("experiment", "fv_nx") => e.fv_nx = parse_usize(line, key, v)?,
                ("experiment", "fv_n_values") => e.fv_n_values = parse_list(line, key, v, parse_usize)?,
                ("experiment", "fv_replications") => e.fv_replications = parse_usize(line, key, v)?,
                ("experiment", "fv_substeps") => e.fv_substeps = parse_usize(line, key, v)?,
                ("experiment", "gap_constant") => {
                    e.gap_constant = if v == "auto" { None } else { Some(parse_f64(line, key, v)?) }
                }
                ("experiment", "assumption_samples") => e.assumption_samples = parse_usize(line, key, v)?,
                (sec, _) => return Err(err(Some(line), Some(key), format!("unknown key in [{sec}]"))),
            }
        }
        let (lo, hi) = cfg.params.domain;
        cfg.params.domain = (x_min.unwrap_or(lo), x_max.unwrap_or(hi));
        cfg.model().map_err(|e| err(None, None, e.to_string()))?;
        cfg.solver.validate().map_err(|e| err(None, None, e.to_string()))?;
        if cfg.nx < 3 {
            return Err(err(None, Some("nx"), "need at least 3 grid nodes"));
        }
        Ok(cfg)
    }

    pub fn model(&self) -> bvmfg::Result<ModelSpec> {
        build_preset(self.preset, &self.params)
    }

    /// Effective configuration after defaults, one string per key.
    pub fn echo(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        let p = &self.params;
        let e = &self.experiment;
        let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut put = |sec: &str, key: &str, v: String| {
            out.entry(sec.to_string()).or_default().insert(key.to_string(), v);
        };
        put("model", "preset", self.preset.to_string());
        put("model", "beta", p.beta.to_string());
        put("model", "kappa", p.kappa.to_string());
        put("model", "sigma", p.sigma.to_string());
        put("model", "gamma1", p.gamma1.to_string());
        put("model", "gamma2", p.gamma2.to_string());
        put("model", "theta", p.theta.map_or("none".into(), |t| t.to_string()));
        put("model", "horizon", p.horizon.to_string());
        put("model", "start", p.start.to_string());
        put("model", "initial", match p.initial_law {
            InitialLaw::Gaussian { mean, std } => format!("gaussian({mean}, {std})"),
            InitialLaw::Uniform { a, b } => format!("uniform({a}, {b})"),
            ref other => other.label(),
        });
        put("grid", "x_min", p.domain.0.to_string());
        put("grid", "x_max", p.domain.1.to_string());
        put("grid", "nx", self.nx.to_string());
        put("grid", "nt", self.nt.map_or("auto".into(), |n| n.to_string()));
        put("solver", "damping", self.solver.damping.to_string());
        put("solver", "tol", self.solver.tol.to_string());
        put("solver", "max_iter", self.solver.max_iter.to_string());
        put("solver", "init", match self.init {
            InitKind::Default => "default".into(),
            InitKind::Uniform => "uniform".into(),
        });
        put("experiment", "thetas", fmt_list(&e.thetas));
        put("experiment", "probes", fmt_list(&e.probes));
        put("experiment", "n_values", fmt_list(&e.n_values));
        put("experiment", "replications", e.replications.to_string());
        put("experiment", "seed", e.seed.to_string());
        put("experiment", "substeps", e.substeps.to_string());
        put("experiment", "deviations", e.deviations.to_string());
        put("experiment", "fv_nx", e.fv_nx.to_string());
        put("experiment", "fv_n_values", fmt_list(&e.fv_n_values));
        put("experiment", "fv_replications", e.fv_replications.to_string());
        put("experiment", "fv_substeps", e.fv_substeps.to_string());
        put("experiment", "gap_constant", e.gap_constant.map_or("auto".into(), |c| c.to_string()));
        put("experiment", "assumption_samples", e.assumption_samples.to_string());
        out
    }

    /// The effective configuration in the input format; parsing it back
    /// gives the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for sec in SECTIONS {
            s.push_str(&format!("[{sec}]\n"));
            if let Some(keys) = self.echo().get(sec) {
                for (k, v) in keys {
                    s.push_str(&format!("{k} = {v}\n"));
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.preset, Preset::CrowdAversion);
        assert_eq!(c.nx, 201);
        assert_eq!(c.experiment.n_values.len(), 7);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let e = RunConfig::parse("[model]\npreset = decoupled\n\ngamm1 = 0.3\n").unwrap_err();
        assert_eq!(e.line, Some(4));
        assert_eq!(e.key.as_deref(), Some("gamm1"));
        assert!(e.to_string().contains("gamm1"));
    }

    #[test]
    fn preset_defaults_apply_before_overrides() {
        let c = RunConfig::parse("[model]\ngamma1 = 0.7\npreset = decoupled # late on purpose\n").unwrap();
        assert_eq!(c.preset, Preset::Decoupled);
        assert_eq!(c.params.gamma1, 0.7);
        assert_eq!(c.params.theta, Some(2.0));
    }

    #[test]
    fn echo_round_trips() {
        let text = "[model]\npreset = mean-reversion\ninitial = uniform(-1, 2)\n[grid]\nnt = 77\n\
                    [experiment]\nn_values = 8, 16\ndeviations = zero, burst(theta_max)\ngap_constant = 0.25\n";
        let c = RunConfig::parse(text).unwrap();
        let again = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again.echo(), c.echo());
        assert_eq!(again.nt, Some(77));
    }

    #[test]
    fn malformed_input_is_rejected() {
        for (text, line) in [
            ("[model\n", Some(1)),
            ("[nope]\n", Some(1)),
            ("sigma = 1\n", Some(1)),
            ("[model]\nsigma\n", Some(2)),
            ("[model]\nsigma = abc\n", Some(2)),
            ("[model]\nsigma = 1\nsigma = 2\n", Some(3)),
            ("[model]\npreset = nothing\n", Some(2)),
            ("[model]\nsigma = -1\n", None),
            ("[solver]\ndamping = 2\n", None),
        ] {
            let e = RunConfig::parse(text).unwrap_err();
            assert_eq!(e.line, line, "{text:?}: {e}");
        }
    }
}
