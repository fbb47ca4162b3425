//! Key-value experiment configuration.
//!
//! Configs are plain text, one `key = value` pair per line, `#` comments.
//! Schema (defaults in parentheses):
//!
//! ```text
//! dict            orthonormal | onb_pair | spherical | file:<path>  (orthonormal)
//! dict.m          signal dimension (32)
//! dict.p          atom count, spherical only (2 * m)
//! model.k         sparsity (2)
//! model.dist      signed_uniform | fixed_profile (signed_uniform)
//! model.alpha_min smallest magnitude, signed_uniform (1.0)
//! model.alpha_max largest magnitude, signed_uniform (2.0)
//! model.profile   comma list of k amplitudes, fixed_profile
//! noise           none | truncated_gaussian (none)
//! noise.sigma     Gaussian deviation
//! noise.m_eps     almost-sure noise norm bound
//! lambda          penalty; exactly one of lambda / lambda_bar
//! lambda_bar      reduced penalty lambda / E|alpha|
//! radii           comma list of sphere radii (0.02,0.05,0.1)
//! n               inlier signals per batch (4096)
//! n_dirs          sphere samples per radius (50)
//! seeds           seed replicates seed, seed+1, ... (1)
//! seed            base seed (0)
//! x               confidence parameter (5.0)
//! outliers.count          isotropic outlier count (32)
//! outliers.style          sphere | atom_aligned | adversarial (sphere)
//! outliers.multipliers    multiples of the empirical energy threshold (0.5,20)
//! r_init          initial radius for the local search (0.05)
//! max_iters       alternating-minimization cap (500)
//! n_grid          comma list of sample sizes for the samplen sweep
//! report.r        optional radius for the finite-sample report section
//! report.n_in     optional inlier count for the outlier-threshold section
//! max_failure_fraction    solver-failure fraction before exit code 3 (0.01)
//! ```

use sha2::{Digest, Sha256};
use sparsid::{CoefficientLaw, CoefficientModel, Dictionary, NoiseSpec};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug)]
pub enum ConfigError {
    Parse(String),
    Invalid(String),
    Io(std::io::Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
            ConfigError::Io(e) => write!(f, "config io error: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e)
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq)]
pub enum DictionarySpec {
    Orthonormal { m: usize },
    OnbPair { m: usize },
    Spherical { m: usize, p: usize },
    File(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltySpec {
    Lambda(f64),
    LambdaBar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutlierStyle {
    /// Uniform on the sphere of the chosen energy.
    Sphere,
    /// Aligned with randomly chosen atoms of the reference dictionary.
    AtomAligned,
    /// Tilted single-atom-plane outliers targeting one sampled direction.
    Adversarial,
}

impl OutlierStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            OutlierStyle::Sphere => "sphere",
            OutlierStyle::AtomAligned => "atom_aligned",
            OutlierStyle::Adversarial => "adversarial",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dict: DictionarySpec,
    pub k: usize,
    pub law: CoefficientLaw,
    pub noise: NoiseSpec,
    pub penalty: PenaltySpec,
    pub radii: Vec<f64>,
    pub n: usize,
    pub n_dirs: usize,
    pub seeds: usize,
    pub seed: u64,
    pub x: f64,
    pub outlier_count: usize,
    pub outlier_style: OutlierStyle,
    pub outlier_multipliers: Vec<f64>,
    pub r_init: f64,
    pub max_iters: usize,
    pub n_grid: Vec<usize>,
    pub report_r: Option<f64>,
    pub report_n_in: Option<usize>,
    pub max_failure_fraction: f64,
    /// Short hash of the canonicalized key-value map; stamped on every row.
    pub hash: String,
}

fn parse_f64(map: &BTreeMap<String, String>, key: &str, default: f64) -> ConfigResult<f64> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<f64>()
            .map_err(|e| ConfigError::Parse(format!("{key}: {e}"))),
    }
}

fn parse_usize(map: &BTreeMap<String, String>, key: &str, default: usize) -> ConfigResult<usize> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse::<usize>()
            .map_err(|e| ConfigError::Parse(format!("{key}: {e}"))),
    }
}

fn parse_list_f64(map: &BTreeMap<String, String>, key: &str, default: &[f64]) -> ConfigResult<Vec<f64>> {
    match map.get(key) {
        None => Ok(default.to_vec()),
        Some(v) => v
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| ConfigError::Parse(format!("{key}: {e}"))),
    }
}

fn parse_list_usize(
    map: &BTreeMap<String, String>,
    key: &str,
    default: &[usize],
) -> ConfigResult<Vec<usize>> {
    match map.get(key) {
        None => Ok(default.to_vec()),
        Some(v) => v
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<usize>, _>>()
            .map_err(|e| ConfigError::Parse(format!("{key}: {e}"))),
    }
}

impl ExperimentConfig {
    pub fn from_file<P: AsRef<Path>>(path: P) -> ConfigResult<Self> {
        Self::from_str_content(&std::fs::read_to_string(path)?)
    }

    pub fn from_str_content(text: &str) -> ConfigResult<Self> {
        let mut map = BTreeMap::new();
        for (line_no, line) in text.lines().enumerate() {
            let stripped = match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| {
                ConfigError::Parse(format!("line {}: expected key = value", line_no + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> ConfigResult<Self> {
        let m = parse_usize(&map, "dict.m", 32)?;
        let dict = match map.get("dict").map(|s| s.as_str()).unwrap_or("orthonormal") {
            "orthonormal" => DictionarySpec::Orthonormal { m },
            "onb_pair" => DictionarySpec::OnbPair { m },
            "spherical" => DictionarySpec::Spherical {
                m,
                p: parse_usize(&map, "dict.p", 2 * m)?,
            },
            other => {
                if let Some(path) = other.strip_prefix("file:") {
                    DictionarySpec::File(path.to_string())
                } else {
                    return Err(ConfigError::Parse(format!("unknown dict spec '{other}'")));
                }
            }
        };

        let k = parse_usize(&map, "model.k", 2)?;
        let law = match map
            .get("model.dist")
            .map(|s| s.as_str())
            .unwrap_or("signed_uniform")
        {
            "signed_uniform" => CoefficientLaw::SignedUniform {
                alpha_min: parse_f64(&map, "model.alpha_min", 1.0)?,
                alpha_max: parse_f64(&map, "model.alpha_max", 2.0)?,
            },
            "fixed_profile" => {
                let amplitudes = parse_list_f64(&map, "model.profile", &vec![1.0; k])?;
                CoefficientLaw::FixedProfile { amplitudes }
            }
            other => return Err(ConfigError::Parse(format!("unknown model.dist '{other}'"))),
        };

        let noise = match map.get("noise").map(|s| s.as_str()).unwrap_or("none") {
            "none" => NoiseSpec::None,
            "truncated_gaussian" => NoiseSpec::TruncatedGaussian {
                sigma: parse_f64(&map, "noise.sigma", 0.01)?,
                m_eps: parse_f64(&map, "noise.m_eps", 0.1)?,
            },
            other => return Err(ConfigError::Parse(format!("unknown noise spec '{other}'"))),
        };

        let penalty = match (map.get("lambda"), map.get("lambda_bar")) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "give exactly one of lambda / lambda_bar".into(),
                ))
            }
            (Some(_), None) => PenaltySpec::Lambda(parse_f64(&map, "lambda", 0.1)?),
            (None, _) => PenaltySpec::LambdaBar(parse_f64(&map, "lambda_bar", 0.05)?),
        };

        let style = match map
            .get("outliers.style")
            .map(|s| s.as_str())
            .unwrap_or("sphere")
        {
            "sphere" => OutlierStyle::Sphere,
            "atom_aligned" => OutlierStyle::AtomAligned,
            "adversarial" => OutlierStyle::Adversarial,
            other => {
                return Err(ConfigError::Parse(format!("unknown outliers.style '{other}'")))
            }
        };

        let canonical: String = map
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect::<Vec<_>>()
            .join("");
        let hash = hex_prefix(&Sha256::digest(canonical.as_bytes()), 12);

        let cfg = Self {
            dict,
            k,
            law,
            noise,
            penalty,
            radii: parse_list_f64(&map, "radii", &[0.02, 0.05, 0.1])?,
            n: parse_usize(&map, "n", 4096)?,
            n_dirs: parse_usize(&map, "n_dirs", 50)?,
            seeds: parse_usize(&map, "seeds", 1)?,
            seed: parse_usize(&map, "seed", 0)? as u64,
            x: parse_f64(&map, "x", 5.0)?,
            outlier_count: parse_usize(&map, "outliers.count", 32)?,
            outlier_style: style,
            outlier_multipliers: parse_list_f64(&map, "outliers.multipliers", &[0.5, 20.0])?,
            r_init: parse_f64(&map, "r_init", 0.05)?,
            max_iters: parse_usize(&map, "max_iters", 500)?,
            n_grid: parse_list_usize(&map, "n_grid", &[])?,
            report_r: map
                .get("report.r")
                .map(|v| v.parse::<f64>())
                .transpose()
                .map_err(|e| ConfigError::Parse(format!("report.r: {e}")))?,
            report_n_in: map
                .get("report.n_in")
                .map(|v| v.parse::<usize>())
                .transpose()
                .map_err(|e| ConfigError::Parse(format!("report.n_in: {e}")))?,
            max_failure_fraction: parse_f64(&map, "max_failure_fraction", 0.01)?,
            hash,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> ConfigResult<()> {
        if self.radii.is_empty() {
            return Err(ConfigError::Invalid("radii grid must be nonempty".into()));
        }
        if self.radii.iter().any(|&r| !(r > 0.0)) {
            return Err(ConfigError::Invalid("radii must be positive".into()));
        }
        if self.n == 0 || self.n_dirs == 0 || self.seeds == 0 {
            return Err(ConfigError::Invalid(
                "n, n_dirs, and seeds must be positive".into(),
            ));
        }
        if self.outlier_multipliers.iter().any(|&v| v < 0.0) {
            return Err(ConfigError::Invalid("multipliers must be nonnegative".into()));
        }
        if !(self.r_init > 0.0) {
            return Err(ConfigError::Invalid("r_init must be positive".into()));
        }
        if !(self.max_failure_fraction >= 0.0) {
            return Err(ConfigError::Invalid(
                "max_failure_fraction must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn build_dictionary(&self) -> ConfigResult<Dictionary> {
        let dict = match &self.dict {
            DictionarySpec::Orthonormal { m } => Dictionary::identity(*m),
            DictionarySpec::OnbPair { m } => Dictionary::onb_pair(*m),
            DictionarySpec::Spherical { m, p } => {
                let mut rng = sparsid::rng::substream(self.seed, u64::MAX - 1);
                Dictionary::spherical(*m, *p, &mut rng)
            }
            DictionarySpec::File(path) => Dictionary::read_csv(path)
                .map_err(|e| ConfigError::Invalid(format!("dictionary file: {e}")))?,
        };
        Ok(dict)
    }

    pub fn build_model(&self, p: usize) -> ConfigResult<CoefficientModel> {
        CoefficientModel::new(p, self.k, self.law.clone(), self.noise.clone())
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn lambda(&self, model: &CoefficientModel) -> f64 {
        match self.penalty {
            PenaltySpec::Lambda(l) => l,
            PenaltySpec::LambdaBar(lb) => lb * model.e_abs_alpha(),
        }
    }

    pub fn lambda_bar(&self, model: &CoefficientModel) -> f64 {
        match self.penalty {
            PenaltySpec::Lambda(l) => l / model.e_abs_alpha(),
            PenaltySpec::LambdaBar(lb) => lb,
        }
    }
}

fn hex_prefix(digest: &[u8], chars: usize) -> String {
    let mut out = String::new();
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
        if out.len() >= chars {
            break;
        }
    }
    out.truncate(chars);
    out
}

/// Artifact version stamped on every output row.
pub fn artifact_version() -> String {
    format!("sparsid-{}", env!("CARGO_PKG_VERSION"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "
# comment
dict = onb_pair
dict.m = 16
model.k = 2
model.dist = fixed_profile
model.profile = 1.0, 1.5
noise = truncated_gaussian
noise.sigma = 0.01
noise.m_eps = 0.08
lambda_bar = 0.05
radii = 0.02, 0.05
n = 128
n_dirs = 7
seeds = 3
seed = 11
outliers.style = adversarial
";
        let cfg = ExperimentConfig::from_str_content(text).unwrap();
        assert_eq!(cfg.dict, DictionarySpec::OnbPair { m: 16 });
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.radii, vec![0.02, 0.05]);
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.outlier_style, OutlierStyle::Adversarial);
        assert_eq!(cfg.hash.len(), 12);
        let d = cfg.build_dictionary().unwrap();
        assert_eq!((d.nrows(), d.ncols()), (16, 32));
        let model = cfg.build_model(32).unwrap();
        assert!((cfg.lambda(&model) - 0.05 * model.e_abs_alpha()).abs() < 1e-15);
    }

    #[test]
    fn hash_is_content_stable() {
        let a = ExperimentConfig::from_str_content("dict.m = 8\nn = 4\n").unwrap();
        let b = ExperimentConfig::from_str_content("n = 4\ndict.m = 8  # same\n").unwrap();
        let c = ExperimentConfig::from_str_content("n = 5\ndict.m = 8\n").unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_str_content("radii = \n").is_err());
        assert!(ExperimentConfig::from_str_content("lambda = 0.1\nlambda_bar = 0.2\n").is_err());
        assert!(ExperimentConfig::from_str_content("dict = nonsense\n").is_err());
        assert!(ExperimentConfig::from_str_content("n = 0\n").is_err());
        assert!(ExperimentConfig::from_str_content("just nonsense\n").is_err());
    }
}
