//! Settings shared by every subcommand, from flags and an optional
//! `key = value` file. Flags win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bsnf_core::parse::parse_signature;
use bsnf_core::Signature;
use clap::{Args, ValueEnum};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Plain `key = value` file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Signature such as "E/2 L/1", or @path to read it from a file.
    #[arg(long, global = true)]
    pub signature: Option<String>,
    /// Degree bound, or "unbounded".
    #[arg(long, global = true)]
    pub degree: Option<String>,
    /// Largest n·ν_d(r) for which types are enumerated.
    #[arg(long = "budget-type-size", global = true)]
    pub budget_type_size: Option<usize>,
    /// Ceiling on (structure, assignment) evaluations.
    #[arg(long = "budget-pool", global = true)]
    pub budget_pool: Option<u64>,
    /// Seed of the random pool.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Largest structure in the pool.
    #[arg(long = "pool-size", global = true)]
    pub pool_size: Option<usize>,
    /// Output file (normalize, check) or directory (generate).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for pool checks.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

/// Resolved settings.
#[derive(Clone, Debug)]
pub struct Settings {
    pub signature: Option<Signature>,
    pub degree: Option<usize>,
    pub type_size: usize,
    pub pool_ceiling: u64,
    pub seed: Option<u64>,
    pub pool_size: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub jobs: usize,
    /// Command-specific keys left over from the config file.
    pub extra: BTreeMap<String, String>,
}

const COMMON_KEYS: &[&str] = &[
    "signature",
    "degree",
    "budget-type-size",
    "budget-pool",
    "seed",
    "pool-size",
    "out",
    "format",
    "jobs",
];

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Usage(format!("{key}: expected a number, found {v:?}")))
}

fn positive<T: PartialOrd + Default + Copy>(key: &str, v: T) -> Result<T, CliError> {
    if v <= T::default() {
        return Err(CliError::Usage(format!("{key} must be positive")));
    }
    Ok(v)
}

impl Settings {
    pub fn resolve(c: &Common, allowed_extra: &[&str]) -> Result<Settings, CliError> {
        let mut file = match &c.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        let mut extra = BTreeMap::new();
        for (k, v) in std::mem::take(&mut file) {
            if COMMON_KEYS.contains(&k.as_str()) {
                file.insert(k, v);
            } else if allowed_extra.contains(&k.as_str()) {
                extra.insert(k, v);
            } else {
                return Err(CliError::Usage(format!("unknown config key {k:?}")));
            }
        }
        let get = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());
        let signature = match get(&c.signature, "signature") {
            None => None,
            Some(s) => {
                let text = match s.strip_prefix('@') {
                    Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{p}: {e}")))?,
                    None => s,
                };
                Some(parse_signature(&text)?)
            }
        };
        let degree = match get(&c.degree, "degree").as_deref() {
            None => Some(2),
            Some("unbounded") | Some("none") => None,
            Some(v) => Some(num::<usize>("degree", v)?),
        };
        let type_size = match c.budget_type_size.map(|v| v.to_string()).or_else(|| file.get("budget-type-size").cloned()) {
            None => 9,
            Some(v) => positive("budget-type-size", num("budget-type-size", &v)?)?,
        };
        let pool_ceiling = match c.budget_pool.map(|v| v.to_string()).or_else(|| file.get("budget-pool").cloned()) {
            None => bsnf_core::oracle::DEFAULT_MAX_EVALUATIONS,
            Some(v) => positive("budget-pool", num("budget-pool", &v)?)?,
        };
        let seed = match c.seed.map(|v| v.to_string()).or_else(|| file.get("seed").cloned()) {
            None => None,
            Some(v) => Some(num("seed", &v)?),
        };
        let pool_size = match c.pool_size.map(|v| v.to_string()).or_else(|| file.get("pool-size").cloned()) {
            None => None,
            Some(v) => Some(positive("pool-size", num("pool-size", &v)?)?),
        };
        let out = c.out.clone().or_else(|| file.get("out").map(PathBuf::from));
        let format = match (c.format, file.get("format")) {
            (Some(f), _) => f,
            (None, None) => Format::Text,
            (None, Some(v)) => Format::from_str(v, true).map_err(|_| CliError::Usage(format!("format: unknown value {v:?}")))?,
        };
        let jobs = match c.jobs.map(|v| v.to_string()).or_else(|| file.get("jobs").cloned()) {
            None => 1,
            Some(v) => positive("jobs", num("jobs", &v)?)?,
        };
        Ok(Settings {
            signature,
            degree,
            type_size,
            pool_ceiling,
            seed,
            pool_size,
            out,
            format,
            jobs,
            extra,
        })
    }

    /// A command-specific value: the flag if given, else the config file.
    pub fn pick<T: Clone + ValueEnum>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => match self.extra.get(key) {
                None => Ok(None),
                Some(v) => T::from_str(v, true)
                    .map(Some)
                    .map_err(|_| CliError::Usage(format!("{key}: unknown value {v:?}"))),
            },
        }
    }

    pub fn pick_num<T: std::str::FromStr + Copy>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.extra.get(key).map(|v| num(key, v)).transpose(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_flags() {
        let m = parse_config("# defaults\ndegree = 3\npool_size=4\n\nstage = hnf # trailing\n").unwrap();
        assert_eq!(m["degree"], "3");
        assert_eq!(m["pool-size"], "4");
        assert_eq!(m["stage"], "hnf");
        assert!(parse_config("degree 3").is_err());
    }

    #[test]
    fn defaults_and_overrides() {
        let s = Settings::resolve(&Common::default(), &[]).unwrap();
        assert_eq!(s.degree, Some(2));
        assert_eq!(s.type_size, 9);
        assert_eq!(s.jobs, 1);
        let c = Common {
            degree: Some("unbounded".into()),
            signature: Some("E/2".into()),
            ..Common::default()
        };
        let s = Settings::resolve(&c, &[]).unwrap();
        assert_eq!(s.degree, None);
        assert_eq!(s.signature.unwrap().to_string(), "E/2");
        let bad = Common {
            jobs: Some(0),
            ..Common::default()
        };
        assert!(Settings::resolve(&bad, &[]).is_err());
    }
}
