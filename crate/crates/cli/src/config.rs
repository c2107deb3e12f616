//! Flat key-value experiment configuration. Keys come from an INI file and
//! from `--set key=value` and the dedicated flags, flags winning.

use std::collections::BTreeMap;
use std::path::Path;

use ini::Ini;
use num_rational::Ratio;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every accepted key with its default, if any.
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("generators", Some("standard")),
    ("closure", Some("true")),
    ("q", Some("5")),
    ("measure", Some("uniform")),
    ("seed", Some("0")),
    ("max_order", Some("4194304")),
    ("max_states", Some("67108864")),
    ("max_iterations", Some("200000")),
    ("max_restarts", Some("400")),
    ("max_basis", Some("64")),
    ("tol", Some("1e-10")),
    ("method", Some("auto")),
    ("out", None),
    ("format", Some("json")),
    // flatten
    ("q_prime", None),
    ("n_max", Some("10")),
    ("tau", Some("0.5")),
    // dioph
    ("dioph_n", Some("0")),
    ("node_cap", Some("1000000")),
    // fourier
    ("vector", None),
    ("steps", Some("10")),
    ("parseval_tol", Some("1e-9")),
    // exp
    ("primes", Some("2,3,5,7,11")),
    ("m_max", Some("10")),
    ("dims", Some("2,3")),
    ("samples", Some("100")),
    ("word_primes", Some("3,5,7")),
    ("word_valuations", Some("1,2")),
    ("word_s_max", Some("3")),
    ("word_k_max", Some("3")),
    ("word_trials", Some("200")),
    ("word_dim", Some("2")),
    // qr
    ("degree_cap", Some("20000")),
    ("cover_trials", Some("100")),
    ("cover_max_order", Some("400")),
    ("index_trials", Some("2000")),
    ("nonsplit_trials", Some("1000")),
    // profile
    ("g", None),
    ("profile_tau", Some("0.1")),
    ("delta", Some("1/2")),
    ("c_const", Some("1")),
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let ini = Ini::load_from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            for (section, props) in ini.iter() {
                if let Some(name) = section {
                    if !props.is_empty() {
                        return Err(CliError::Config(format!("sections are not supported: [{name}]")));
                    }
                }
                for (k, v) in props.iter() {
                    values.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
        }
        for (k, v) in overrides {
            values.insert(k.clone(), v.clone());
        }
        if let Some(k) = values.keys().find(|k| !KEYS.iter().any(|(name, _)| name == k)) {
            return Err(CliError::Config(format!("unknown key `{k}`")));
        }
        Ok(Config { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).or_else(|| {
            KEYS.iter()
                .find(|(name, _)| *name == key)
                .and_then(|(_, default)| *default)
        })
    }

    fn required(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.required(key)?;
        raw.parse()
            .map_err(|_| CliError::Config(format!("bad value for `{key}`: {raw}")))
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.parse(key)
    }

    /// A positive count or cap.
    pub fn positive(&self, key: &str) -> Result<usize, CliError> {
        let v: usize = self.parse(key)?;
        if v == 0 {
            return Err(CliError::Config(format!("`{key}` must be positive")));
        }
        Ok(v)
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        self.parse(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key)?;
        if !v.is_finite() {
            return Err(CliError::Config(format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        self.parse(key)
    }

    pub fn ratio(&self, key: &str) -> Result<Ratio<u64>, CliError> {
        let raw = self.required(key)?;
        let bad = || CliError::Config(format!("bad rational for `{key}`: {raw}"));
        let (n, d) = match raw.split_once('/') {
            Some((n, d)) => (
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => (raw.parse().map_err(|_| bad())?, 1),
        };
        if d == 0 {
            return Err(bad());
        }
        Ok(Ratio::new(n, d))
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }

    pub fn i64_list(&self, key: &str) -> Result<Option<Vec<i64>>, CliError> {
        let Some(raw) = self.raw(key) else { return Ok(None) };
        raw.split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad entry in `{key}`: {x}")))
            })
            .collect::<Result<_, _>>()
            .map(Some)
    }

    /// Comma list of numbers, inclusive ranges `a..b`, or `primes:a..b`.
    pub fn u64_list(&self, key: &str) -> Result<Vec<u64>, CliError> {
        parse_list(self.required(key)?).map_err(|msg| CliError::Config(format!("`{key}`: {msg}")))
    }

    pub fn q_list(&self) -> Result<Vec<u64>, CliError> {
        let qs = self.u64_list("q")?;
        if qs.is_empty() || qs.contains(&0) {
            return Err(CliError::Config("`q` must list positive moduli".into()));
        }
        Ok(qs)
    }

    /// First 16 hex digits of SHA-256 over the explicit `key=value` lines.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

fn parse_list(raw: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (primes_only, body) = match part.strip_prefix("primes:") {
            Some(rest) => (true, rest),
            None => (false, part),
        };
        let range = match body.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| format!("bad range start in {part}"))?;
                let b: u64 = b.trim().parse().map_err(|_| format!("bad range end in {part}"))?;
                if b < a {
                    return Err(format!("empty range {part}"));
                }
                a..=b
            }
            None if !primes_only => {
                let v: u64 = body.parse().map_err(|_| format!("bad number {part}"))?;
                v..=v
            }
            None => return Err(format!("`primes:` needs a range, got {part}")),
        };
        out.extend(range.filter(|&x| !primes_only || expander_core::modq::is_prime(x)));
    }
    Ok(out)
}

/// Per-command seed derived from the base seed and a domain tag.
pub fn derive_seed(seed: u64, domain: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{domain}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}
