use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::bounds::{Regime, Theorem1Inputs, Theorem2Inputs};
use crate::error::{DmlError, Result};
use crate::inference::check_level;
use crate::model::CsvSchema;
use crate::montecarlo::{DgpSpec, ExperimentSpec, NuisanceSpec, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Estimate,
    Bands,
    CdfBands,
    Bound,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Bands => "bands",
            Command::CdfBands => "cdf-bands",
            Command::Bound => "bound",
            Command::Simulate => "simulate",
        }
    }

    fn uses_data(self) -> bool {
        matches!(self, Command::Estimate | Command::Bands | Command::CdfBands)
    }
}

/// Observed data read from a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub schema: CsvSchema,
}

/// A sample drawn from a catalog DGP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSource {
    pub model: DgpSpec,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Theorem {
    One,
    Two,
}

impl TryFrom<u8> for Theorem {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Theorem::One),
            2 => Ok(Theorem::Two),
            _ => Err(format!("theorem must be 1 or 2, got {v}")),
        }
    }
}

impl From<Theorem> for u8 {
    fn from(t: Theorem) -> u8 {
        match t {
            Theorem::One => 1,
            Theorem::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub theorem: Theorem,
    #[serde(default)]
    pub regime: Regime,
    #[serde(default)]
    pub theorem1: Theorem1Inputs,
    #[serde(default)]
    pub theorem2: Theorem2Inputs,
}

/// Everything a run needs. Defaults are filled on parsing and echoed in
/// the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub data: Option<CsvSource>,
    #[serde(default)]
    pub dgp: Option<DgpSource>,
    #[serde(default = "default_targets")]
    pub targets: TargetSpec,
    #[serde(default)]
    pub nuisance: NuisanceSpec,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Cross-fitting folds; 1 fits and evaluates on the full sample.
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bound: Option<BoundConfig>,
    #[serde(default)]
    pub simulate: Option<ExperimentSpec>,
    /// Single-column CSV of the replicated sup-t values (`simulate`, ks mode).
    #[serde(default)]
    pub dump_sup_t: Option<PathBuf>,
    /// Thread count for replications; does not affect results.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_targets() -> TargetSpec {
    TargetSpec::Contrasts {
        treated: crate::model::Label(1),
        control: crate::model::Label(0),
    }
}

fn default_level() -> f64 {
    0.95
}

fn default_draws() -> usize {
    100_000
}

fn default_folds() -> usize {
    5
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let cmd = self.command.name();
        check_level(self.level)?;
        if self.draws == 0 {
            return Err(invalid("draws", "a positive integer"));
        }
        if self.folds == 0 {
            return Err(invalid(
                "folds",
                "a positive integer (1 disables cross-fitting)",
            ));
        }
        let unused = |key: &str| DmlError::Config {
            key: key.into(),
            message: format!("not used by `{cmd}`"),
        };
        if self.command.uses_data() {
            match (&self.data, &self.dgp) {
                (Some(_), Some(_)) => {
                    return Err(DmlError::Config {
                        key: "data".into(),
                        message: "give either `data` or `dgp`, not both".into(),
                    })
                }
                (None, None) => {
                    return Err(DmlError::Config {
                        key: "data".into(),
                        message: format!("`{cmd}` needs a `data` or `dgp` source"),
                    })
                }
                _ => {}
            }
            if let Some(d) = &self.dgp {
                if d.n < 2 {
                    return Err(invalid("dgp.n", "at least 2"));
                }
            }
            if self.data.is_some() && !matches!(self.nuisance, NuisanceSpec::CrossFit { .. }) {
                return Err(DmlError::Config {
                    key: "nuisance.kind".into(),
                    message: "oracle and perturbed nuisances need a `dgp` source".into(),
                });
            }
            match (self.command, self.targets.is_cdf()) {
                (Command::CdfBands, false) => {
                    return Err(DmlError::Config {
                        key: "targets.kind".into(),
                        message: "`cdf-bands` needs kind = \"cdf\"".into(),
                    })
                }
                (Command::Bands, true) => {
                    return Err(DmlError::Config {
                        key: "targets.kind".into(),
                        message: "use `cdf-bands` for CDF targets".into(),
                    })
                }
                _ => {}
            }
        } else {
            if self.data.is_some() {
                return Err(unused("data"));
            }
            if self.dgp.is_some() {
                return Err(unused("dgp"));
            }
        }
        match self.command {
            Command::Bound => {
                if self.bound.is_none() {
                    return Err(DmlError::Config {
                        key: "bound".into(),
                        message: "`bound` needs a [bound] table".into(),
                    });
                }
            }
            Command::Simulate => {
                let spec = self.simulate.as_ref().ok_or_else(|| DmlError::Config {
                    key: "simulate".into(),
                    message: "`simulate` needs a [simulate] table".into(),
                })?;
                spec.validate()?;
                let ks = spec.mode == crate::montecarlo::Mode::Ks;
                if self.bound.is_some() && !ks {
                    return Err(DmlError::Config {
                        key: "bound".into(),
                        message: "a bound is compared only in ks mode".into(),
                    });
                }
                if self.dump_sup_t.is_some() && !ks {
                    return Err(DmlError::Config {
                        key: "dump_sup_t".into(),
                        message: "sup-t samples exist only in ks mode".into(),
                    });
                }
            }
            _ => {
                if self.bound.is_some() {
                    return Err(unused("bound"));
                }
            }
        }
        if self.command != Command::Simulate {
            if self.simulate.is_some() {
                return Err(unused("simulate"));
            }
            if self.dump_sup_t.is_some() {
                return Err(unused("dump_sup_t"));
            }
        }
        if let Some(b) = &self.bound {
            match b.theorem {
                Theorem::One => b.theorem1.validate()?,
                Theorem::Two => b.theorem2.validate()?,
            }
        }
        Ok(())
    }

    /// SHA-256 of the echo with the result-neutral keys (`out`, `workers`)
    /// cleared.
    pub fn hash(&self) -> String {
        let neutral = RunConfig {
            out: None,
            workers: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&neutral).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn invalid(key: &str, expected: &str) -> DmlError {
    DmlError::Config {
        key: key.into(),
        message: format!("expected {expected}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Apply {
    Set,
    IfAbsent,
    /// Relative to the inputs table of the selected theorem.
    BoundInput,
}

/// A dotted key path and the value a flag assigns to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
    apply: Apply,
}

impl Override {
    pub fn new(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
            apply: Apply::Set,
        }
    }

    /// Sets the key only if neither the file nor an earlier flag did.
    pub fn if_absent(key: impl Into<String>, value: impl Into<Value>) -> Self {
        Self {
            apply: Apply::IfAbsent,
            ..Self::new(key, value)
        }
    }

    /// `key=value` under `bound.theorem{1,2}`, resolved once the theorem
    /// is known.
    pub fn bound_input(prefix: &str, assignment: &str) -> Result<Self> {
        Ok(Self {
            apply: Apply::BoundInput,
            ..Self::parse(prefix, assignment)?
        })
    }

    /// Parses `key=value`; the value is read as JSON when possible and as a
    /// string otherwise.
    pub fn parse(prefix: &str, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| DmlError::Config {
            key: assignment.into(),
            message: "expected key=value".into(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(DmlError::Config {
                key: assignment.into(),
                message: "empty key".into(),
            });
        }
        let value = serde_json::from_str(raw.trim())
            .unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        let full = if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        };
        Ok(Self::new(full, value))
    }

    fn apply_to(&self, root: &mut Value) -> Result<()> {
        match self.apply {
            Apply::Set => set_path(root, &self.key, self.value.clone()),
            Apply::IfAbsent => {
                if lookup(root, &self.key).is_none_or(Value::is_null) {
                    set_path(root, &self.key, self.value.clone())?;
                }
                Ok(())
            }
            Apply::BoundInput => {
                let theorem = lookup(root, "bound.theorem")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| DmlError::Config {
                        key: "bound.theorem".into(),
                        message: format!("needed to place `{}`; expected 1 or 2", self.key),
                    })?;
                set_path(
                    root,
                    &format!("bound.theorem{theorem}.{}", self.key),
                    self.value.clone(),
                )
            }
        }
    }
}

fn lookup<'a>(root: &'a Value, key: &str) -> Option<&'a Value> {
    key.split('.').try_fold(root, |node, part| node.get(part))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Map::new());
            } else {
                return Err(DmlError::Config {
                    key: parts[..depth].join("."),
                    message: format!("cannot set `{key}` inside a non-table value"),
                });
            }
        }
        let map = node.as_object_mut().expect("object");
        if depth + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        node = map.entry((*part).to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// Reads a TOML file, or JSON when the extension is `.json`.
pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    let json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse_document(&text, json, &path.display().to_string())
}

fn parse_document(text: &str, json: bool, origin: &str) -> Result<Value> {
    if json {
        serde_json::from_str(text).map_err(|e| DmlError::Config {
            key: origin.into(),
            message: format!("malformed JSON: {e}"),
        })
    } else {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| DmlError::Config {
                key: origin.into(),
                message: format!("malformed TOML: {}", e.message()),
            })?;
        serde_json::to_value(table).map_err(|e| DmlError::Config {
            key: origin.into(),
            message: e.to_string(),
        })
    }
}

/// Parses and validates a configuration held in memory.
pub fn parse_config_text(text: &str, json: bool) -> Result<RunConfig> {
    let config = config_from_value(parse_document(text, json, "<config>")?)?;
    config.validate()?;
    Ok(config)
}

/// Layers `overrides` over the file (if any), fills defaults and validates.
pub fn parse_config(file: Option<&Path>, overrides: &[Override]) -> Result<RunConfig> {
    let mut root = match file {
        Some(p) => {
            let mut v = read_config_file(p)?;
            anchor_data_path(&mut v, p);
            v
        }
        None => Value::Object(Map::new()),
    };
    if !root.is_object() {
        return Err(DmlError::Config {
            key: String::new(),
            message: "the top level must be a table".into(),
        });
    }
    for o in overrides {
        o.apply_to(&mut root)?;
    }
    let config = config_from_value(root)?;
    config.validate()?;
    Ok(config)
}

/// A relative CSV path in a file is read relative to that file.
fn anchor_data_path(root: &mut Value, file: &Path) {
    let Some(dir) = file.parent() else { return };
    if let Some(Value::String(p)) = root.pointer_mut("/data/path") {
        if Path::new(p.as_str()).is_relative() {
            *p = dir.join(p.as_str()).display().to_string();
        }
    }
}

/// Deserializes with the failing key path named in the error.
pub fn config_from_value(value: Value) -> Result<RunConfig> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let key = match unknown_field(&inner) {
            Some(field) if path == "." => field,
            _ if path == "." => String::new(),
            _ => path,
        };
        DmlError::Config {
            key,
            message: inner,
        }
    })
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    rest.split('`').next().map(str::to_string)
}
