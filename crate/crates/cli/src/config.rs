//! Flat `key = value` run configuration with command-line overrides.

use crate::projection::PlaneSpec;
use msopt::{BoundsStyle, RunConfig};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Every key the file format and `--key value` flags accept.
pub const KEYS: &[&str] = &[
    "dim",
    "function",
    "bounds_style",
    "bounds",
    "external_cmd",
    "worker_timeout",
    "temperatures",
    "trials",
    "evals_per_trial",
    "stack_capacity",
    "seed",
    "tol",
    "linmin_cap",
    "threads",
    "out_dir",
    "emit_stack",
    "emit_diagnostics",
    "emit_projections",
    "projection_planes",
    "linmin_on_improvement",
    "mutation_prob",
    "notch_exponent",
    "fatTail3.c1",
    "fatTail3.c2",
    "fatTail3.c3",
    "fatTail3.k1",
    "fatTail3.k2",
    "fatTail3.scale_divisor",
    "r_eq.base",
    "r_eq.slope",
    "recombine.rate_cold",
    "recombine.rate_hot",
];

/// Where a setting came from, for diagnostics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: expected `key = value`, got `{text}`")]
    Syntax { origin: Origin, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: bad value for `{key}`: {reason}")]
    BadValue {
        origin: Origin,
        key: String,
        reason: String,
    },
    #[error("flag `{0}` needs a value")]
    MissingValue(String),
    #[error("expected a `--key` flag, got `{0}`")]
    StrayArgument(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// What to optimize.
#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveSpec {
    Benchmark { name: String, style: BoundsStyle },
    External {
        command: String,
        bounds: Vec<(f64, f64)>,
        timeout: Duration,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub run: RunConfig,
    pub objective: ObjectiveSpec,
    pub out_dir: PathBuf,
    pub emit_stack: bool,
    pub emit_diagnostics: bool,
    pub emit_projections: bool,
    pub planes: Vec<PlaneSpec>,
}

/// Raw settings before cross-key resolution.
#[derive(Default)]
struct Draft {
    function: Option<String>,
    bounds_style: Option<BoundsStyle>,
    bounds: Option<Vec<(f64, f64)>>,
    external_cmd: Option<String>,
    worker_timeout: Option<Duration>,
    out_dir: Option<PathBuf>,
    emit_stack: Option<bool>,
    emit_diagnostics: Option<bool>,
    emit_projections: Option<bool>,
    planes: Option<Vec<PlaneSpec>>,
}

/// Parses `--key value` / `--key=value` pairs.
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(ConfigError::StrayArgument(arg.clone()));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = iter.next().ok_or_else(|| ConfigError::MissingValue(arg.clone()))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((canonical_key(&key), value));
    }
    Ok(out)
}

/// Accepts dashes for underscores in flag spellings.
fn canonical_key(key: &str) -> String {
    if KEYS.contains(&key) {
        key.to_string()
    } else {
        key.replace('-', "_")
    }
}

/// Reads the file at `path` (if any), then applies `overrides` in order.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<CliConfig, ConfigError> {
    let mut settings = Vec::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        settings.extend(parse_lines(&text, path)?);
    }
    settings.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone(), Origin::Flag)));
    build(settings)
}

/// Parses config text; `source` names it in diagnostics.
pub fn parse_str(text: &str, source: &Path, overrides: &[(String, String)]) -> Result<CliConfig, ConfigError> {
    let mut settings = parse_lines(text, source)?;
    settings.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone(), Origin::Flag)));
    build(settings)
}

fn parse_lines(text: &str, path: &Path) -> Result<Vec<(String, String, Origin)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let origin = Origin::File {
            path: path.to_path_buf(),
            line: i + 1,
        };
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                origin,
                text: line.to_string(),
            });
        };
        out.push((key.trim().to_string(), value.trim().to_string(), origin));
    }
    Ok(out)
}

fn build(settings: Vec<(String, String, Origin)>) -> Result<CliConfig, ConfigError> {
    // `dim` sizes the defaults, so it is resolved first.
    let mut dim = 2;
    for (key, value, origin) in &settings {
        if key == "dim" {
            dim = parse_value(key, value, origin)?;
        }
    }
    let mut run = RunConfig::new(dim);
    let mut draft = Draft::default();
    for (key, value, origin) in &settings {
        apply(&mut run, &mut draft, key, value, origin)?;
    }
    finish(run, draft)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, origin: &Origin) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        origin: origin.clone(),
        key: key.to_string(),
        reason: format!("`{value}`: {e}"),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, origin: &Origin) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s, origin))
        .collect()
}

fn parse_bounds(key: &str, value: &str, origin: &Origin) -> Result<Vec<(f64, f64)>, ConfigError> {
    value
        .split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (lo, hi) = pair.split_once(':').ok_or_else(|| ConfigError::BadValue {
                origin: origin.clone(),
                key: key.to_string(),
                reason: format!("`{pair}` is not `lo:hi`"),
            })?;
            Ok((parse_value(key, lo, origin)?, parse_value(key, hi, origin)?))
        })
        .collect()
}

fn apply(run: &mut RunConfig, draft: &mut Draft, key: &str, value: &str, origin: &Origin) -> Result<(), ConfigError> {
    let st = &mut run.stages;
    match key {
        "dim" => {}
        "function" => draft.function = Some(value.to_string()),
        "bounds_style" => draft.bounds_style = Some(parse_value(key, value, origin)?),
        "bounds" => draft.bounds = Some(parse_bounds(key, value, origin)?),
        "external_cmd" => draft.external_cmd = Some(value.to_string()),
        "worker_timeout" => {
            let secs: f64 = parse_value(key, value, origin)?;
            let timeout = Duration::try_from_secs_f64(secs).map_err(|e| ConfigError::BadValue {
                origin: origin.clone(),
                key: key.to_string(),
                reason: e.to_string(),
            })?;
            draft.worker_timeout = Some(timeout);
        }
        "temperatures" => run.temperatures = parse_list(key, value, origin)?,
        "trials" => run.trials_per_temperature = parse_value(key, value, origin)?,
        "evals_per_trial" => run.evals_per_trial = parse_value(key, value, origin)?,
        "stack_capacity" => run.stack_capacity = parse_value(key, value, origin)?,
        "seed" => run.master_seed = parse_value(key, value, origin)?,
        "tol" => st.linmin.tol = parse_value(key, value, origin)?,
        "linmin_cap" => st.linmin.eval_cap = parse_value(key, value, origin)?,
        "threads" => run.threads = parse_value(key, value, origin)?,
        "out_dir" => draft.out_dir = Some(PathBuf::from(value)),
        "emit_stack" => draft.emit_stack = Some(parse_value(key, value, origin)?),
        "emit_diagnostics" => draft.emit_diagnostics = Some(parse_value(key, value, origin)?),
        "emit_projections" => draft.emit_projections = Some(parse_value(key, value, origin)?),
        "projection_planes" => {
            let planes = value
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<PlaneSpec>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|reason| ConfigError::BadValue {
                    origin: origin.clone(),
                    key: key.to_string(),
                    reason,
                })?;
            draft.planes = Some(planes);
        }
        "linmin_on_improvement" => st.linmin_on_improvement = parse_value(key, value, origin)?,
        "mutation_prob" => st.mutation_prob = parse_value(key, value, origin)?,
        "notch_exponent" => st.notch_exponent = parse_value(key, value, origin)?,
        "fatTail3.c1" => st.mutation_shape.c1 = parse_value(key, value, origin)?,
        "fatTail3.c2" => st.mutation_shape.c2 = parse_value(key, value, origin)?,
        "fatTail3.c3" => st.mutation_shape.c3 = parse_value(key, value, origin)?,
        "fatTail3.k1" => st.mutation_shape.k1 = parse_value(key, value, origin)?,
        "fatTail3.k2" => st.mutation_shape.k2 = parse_value(key, value, origin)?,
        "fatTail3.scale_divisor" => st.mutation_scale_divisor = parse_value(key, value, origin)?,
        "r_eq.base" => run.radius.base = parse_value(key, value, origin)?,
        "r_eq.slope" => run.radius.slope = parse_value(key, value, origin)?,
        "recombine.rate_cold" => st.recombine_rate_cold = parse_value(key, value, origin)?,
        "recombine.rate_hot" => st.recombine_rate_hot = parse_value(key, value, origin)?,
        _ => {
            return Err(ConfigError::UnknownKey {
                origin: origin.clone(),
                key: key.to_string(),
            })
        }
    }
    Ok(())
}

fn finish(mut run: RunConfig, draft: Draft) -> Result<CliConfig, ConfigError> {
    let invalid = |m: String| ConfigError::Invalid(m);
    let objective = match (draft.external_cmd, draft.function) {
        (Some(_), Some(_)) => return Err(invalid("set either `function` or `external_cmd`, not both".into())),
        (Some(command), None) => {
            if draft.bounds_style.is_some() {
                return Err(invalid("`bounds_style` applies to benchmark functions only".into()));
            }
            let bounds = match draft.bounds {
                None => vec![(0.0, 1.0); run.dim],
                Some(b) if b.len() == 1 => vec![b[0]; run.dim],
                Some(b) if b.len() == run.dim => b,
                Some(b) => return Err(invalid(format!("{} bounds given for dim {}", b.len(), run.dim))),
            };
            msopt::Bounds::new(bounds.clone()).map_err(|e| invalid(e.to_string()))?;
            ObjectiveSpec::External {
                command,
                bounds,
                timeout: draft.worker_timeout.unwrap_or(msopt::objective::DEFAULT_WORKER_TIMEOUT),
            }
        }
        (None, function) => {
            if draft.bounds.is_some() || draft.worker_timeout.is_some() {
                return Err(invalid("`bounds` and `worker_timeout` apply to `external_cmd` only".into()));
            }
            let name = function.unwrap_or_else(|| "sphere".into());
            name.parse::<msopt::BenchmarkKind>().map_err(|e| invalid(e.to_string()))?;
            ObjectiveSpec::Benchmark {
                name,
                style: draft.bounds_style.unwrap_or_default(),
            }
        }
    };
    let emit_projections = draft.emit_projections.unwrap_or(false);
    let planes = draft.planes.unwrap_or_else(|| {
        if run.dim >= 2 {
            vec![PlaneSpec::Coordinates(0, 1)]
        } else {
            Vec::new()
        }
    });
    if emit_projections {
        if planes.is_empty() {
            return Err(invalid("`emit_projections` needs at least one plane".into()));
        }
        for plane in &planes {
            plane.resolve(run.dim).map_err(invalid)?;
        }
        run.record_history = true;
    }
    run.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(CliConfig {
        run,
        objective,
        out_dir: draft.out_dir.unwrap_or_else(|| PathBuf::from("msopt-out")),
        emit_stack: draft.emit_stack.unwrap_or(true),
        emit_diagnostics: draft.emit_diagnostics.unwrap_or(true),
        emit_projections,
        planes,
    })
}
