//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Every experiment declares
//! its keys with defaults, unknown keys are rejected, and the fully resolved
//! map is echoed into the report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentId {
    GdFlatline,
    GdSanity,
    TelgarskySeparation,
    SqParityLowerBound,
    SqWeakLearn,
    KernelHardness,
    FFamily,
    LipschitzApprox,
    XavierAudit,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 9] = [
        ExperimentId::GdFlatline,
        ExperimentId::GdSanity,
        ExperimentId::TelgarskySeparation,
        ExperimentId::SqParityLowerBound,
        ExperimentId::SqWeakLearn,
        ExperimentId::KernelHardness,
        ExperimentId::FFamily,
        ExperimentId::LipschitzApprox,
        ExperimentId::XavierAudit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::GdFlatline => "gd-flatline",
            ExperimentId::GdSanity => "gd-sanity",
            ExperimentId::TelgarskySeparation => "telgarsky-separation",
            ExperimentId::SqParityLowerBound => "sq-parity-lower-bound",
            ExperimentId::SqWeakLearn => "sq-weak-learn",
            ExperimentId::KernelHardness => "kernel-hardness",
            ExperimentId::FFamily => "f-family",
            ExperimentId::LipschitzApprox => "lipschitz-approx",
            ExperimentId::XavierAudit => "xavier-audit",
        }
    }

    /// The claim each experiment tests.
    pub fn theorem(self) -> &'static str {
        match self {
            ExperimentId::GdFlatline => {
                "gradient descent from an L-standard initialization cannot weakly learn a target \
                 that no shallow network approximates: the loss stays near its initial value and \
                 gradients shrink with n"
            }
            ExperimentId::GdSanity => {
                "contrast: the same deep pipeline does learn the low-frequency target f_2"
            }
            ExperimentId::TelgarskySeparation => {
                "depth separation for the square wave f_n: a depth-(n+2) width-2 net realizes it \
                 exactly, shallow nets have few linear pieces and so loss >= (2^(n-1) - K)/2^(n-1)"
            }
            ExperimentId::SqParityLowerBound => {
                "statistical-query lower bound: with tolerance >= d^(-1/3) and fewer than \
                 d^(1/3)/8 queries no learner reaches loss below 1 - 2/sqrt(d) on an \
                 almost-orthogonal family"
            }
            ExperimentId::SqWeakLearn => {
                "a class of polynomial statistical-query dimension is weakly learnable by \
                 correlation queries; an almost-orthogonal family has at most 2/(tau^2 - 1/d) \
                 members correlated above tau with any bounded h"
            }
            ExperimentId::KernelHardness => {
                "bounded-norm linear predictors over N features have average hinge loss >= \
                 1 - sqrt(2 sqrt5 N) B / d^(1/12) over an almost-orthogonal family of size d"
            }
            ExperimentId::FFamily => {
                "the OR-parity family F_z' is realized exactly by depth-3 nets yet is \
                 almost orthogonal (inner products (1/2)^|symmetric difference|), and depth-2 \
                 nets on (x, z) reduce to a fixed feature map after rounding"
            }
            ExperimentId::LipschitzApprox => {
                "an L-Lipschitz h bounded by C is approximated in L1 by a 3-layer net within \
                 (2C + L sqrt(d)) / n^d"
            }
            ExperimentId::XavierAudit => {
                "Xavier initialization of depth k and width m > k^2 is a 1.1 d-standard \
                 initialization with radius 1/k, with high probability"
            }
        }
    }

    /// Declared keys and their defaults, given the user-supplied values
    /// (some defaults depend on `n` or `depth`).
    fn defaults(self, user: &BTreeMap<String, String>) -> Vec<(&'static str, String)> {
        let get = |k: &str, d: &str| user.get(k).cloned().unwrap_or_else(|| d.to_string());
        let mut v: Vec<(&'static str, String)> = vec![("seed", "1".into())];
        match self {
            ExperimentId::GdFlatline => {
                let n = get("n", "12");
                let ni: u32 = n.parse().unwrap_or(12);
                v.extend([
                    ("n", n.clone()),
                    ("depth", get("depth", &n)),
                    ("width", "32".into()),
                    ("eta", "0.1".into()),
                    ("iterations", "500".into()),
                    ("grid", format!("{}", 1u64 << (ni + 4).min(40))),
                    ("threshold", "1e-3".into()),
                ]);
            }
            ExperimentId::GdSanity => {
                let ni: u32 = get("n", "2").parse().unwrap_or(2);
                v.extend([
                    ("n", ni.to_string()),
                    ("depth", "12".into()),
                    ("width", "32".into()),
                    ("eta", "0.1".into()),
                    ("iterations", "2000".into()),
                    ("grid", format!("{}", 1u64 << (ni + 4).min(40))),
                    ("threshold", "0.5".into()),
                ]);
            }
            ExperimentId::TelgarskySeparation => {
                let ni: u32 = get("n", "14").parse().unwrap_or(14);
                v.extend([
                    ("n", ni.to_string()),
                    ("depth", ((ni as f64).sqrt().ceil() as u32).to_string()),
                    ("width", "32".into()),
                    ("nets", "100".into()),
                    ("weight_std", "1".into()),
                ]);
            }
            ExperimentId::SqParityLowerBound => v.extend([
                ("n", "12".into()),
                ("tau", "0.0625".into()),
                ("budget", "2".into()),
                ("seeds", "20".into()),
            ]),
            ExperimentId::SqWeakLearn => v.extend([
                ("n", "12".into()),
                ("tau", "0.001".into()),
                ("targets", "50".into()),
                ("count_n", "10".into()),
                ("count_h", "100".into()),
                ("count_taus", "0.2;0.5".into()),
            ]),
            ExperimentId::KernelHardness => v.extend([
                ("n", "10".into()),
                ("features", "64".into()),
                ("b", "10".into()),
                ("solver", "barrier".into()),
                ("gap_tol", "1e-4".into()),
                ("iterations", "100000".into()),
                ("window", "1000".into()),
                ("threshold", "0.9".into()),
                ("xval_n", "6".into()),
                ("xval_resolution", "0.05".into()),
                ("xval_tol", "2e-2".into()),
                ("fd_pairs", "20".into()),
                ("side_targets", "64".into()),
            ]),
            ExperimentId::FFamily => v.extend([
                ("n", "6".into()),
                ("closed_form_max_n", "6".into()),
                ("zset_n", "48".into()),
                ("zset_d", "16".into()),
                ("kernel_n", "8".into()),
                ("kernel_k", "4".into()),
                ("delta", "0.25".into()),
                ("probes", "1000".into()),
            ]),
            ExperimentId::LipschitzApprox => v.extend([("samples", "100000".into())]),
            ExperimentId::XavierAudit => {
                let depth: u32 = get("depth", "4").parse().unwrap_or(4);
                v.extend([
                    ("depth", depth.to_string()),
                    ("width", "64".into()),
                    ("d", "2".into()),
                    ("trials", "100".into()),
                    ("rho", format!("{}", 1.0 / depth.max(1) as f64)),
                    ("probes", "8".into()),
                    ("slack", "1.05".into()),
                    ("scale", "width".into()),
                    ("threshold", "0.95".into()),
                ]);
            }
        }
        v.push(("out", format!("out/{}", self.as_str())));
        v
    }
}

impl FromStr for ExperimentId {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| ConfigError(format!("unknown experiment id '{s}'")))
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parses `key = value` lines.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = parse_pair(line).map_err(|e| ConfigError(format!("line {}: {}", lineno + 1, e.0)))?;
        if map.insert(k.clone(), v).is_some() {
            return Err(ConfigError(format!("line {}: duplicate key '{k}'", lineno + 1)));
        }
    }
    Ok(map)
}

/// Parses one `key=value` pair.
pub fn parse_pair(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError(format!("expected key = value, got '{s}'")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(ConfigError(format!("empty key in '{s}'")));
    }
    Ok((k.to_string(), v.to_string()))
}

/// A validated experiment configuration with every key resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn from_map(mut user: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let id: ExperimentId = user
            .remove("experiment")
            .ok_or_else(|| ConfigError("missing 'experiment' key".into()))?
            .parse()?;
        let defaults = id.defaults(&user);
        for k in user.keys() {
            if !defaults.iter().any(|(d, _)| d == k) {
                return Err(ConfigError(format!("unknown key '{k}' for experiment {id}")));
            }
        }
        let mut values = BTreeMap::new();
        for (k, d) in defaults {
            values.insert(k.to_string(), user.remove(k).unwrap_or(d));
        }
        Ok(ExperimentConfig { id, values })
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut map = parse_text(text)?;
        for o in overrides {
            let (k, v) = parse_pair(o)?;
            map.insert(k, v);
        }
        Self::from_map(map)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> Result<&str, ConfigError> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ConfigError(format!("key '{key}' is not defined for {}", self.id)))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| ConfigError(format!("cannot parse {key} = '{raw}'")))
    }

    /// `;`-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError> {
        self.raw(key)?
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| ConfigError(format!("cannot parse list item '{s}' of {key}"))))
            .collect()
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.get("seed")
    }

    pub fn out_dir(&self) -> &str {
        self.values.get("out").map(String::as_str).unwrap_or(".")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("experiment = {}\n", self.id);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}
