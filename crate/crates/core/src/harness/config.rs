//! Flat `key = value` experiment files.
//!
//! ```text
//! # Figure 1: vary p1 around the estimate
//! x = 50,2,103
//! n = 3300,401,122
//! method = delta,pb,bca
//! reps = 10000
//! sweep = p1
//! ```
//!
//! Lines starting with `#` and blank lines are ignored; a later key replaces an
//! earlier one. Keys are case-insensitive.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::classic::Method;
use crate::error::{Error, Result};
use crate::inversion::ScanStrategy;
use crate::model::SurveyCounts;
use crate::statistics::StatisticKind;

use super::{default_reps, ExperimentConfig, MethodSpec, Sweep, SweepAxis};

const KEYS: &[&str] = &[
    "x", "n", "p", "method", "stat", "alpha", "gamma", "grid", "b", "recenter_b", "eps", "reps", "seed", "sweep",
    "sweep_values", "threads", "scan", "step", "tol", "out", "format",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigEntries(BTreeMap<String, String>);

pub fn parse_config(text: &str) -> Result<ConfigEntries> {
    let mut entries = ConfigEntries::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("line {}: expected key = value, got '{line}'", lineno + 1)))?;
        entries.set(k, v.trim())?;
    }
    Ok(entries)
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::invalid(format!("{key}: cannot parse '{s}'"))))
        .collect()
}

fn triple<T: FromStr + Copy>(key: &str, v: &str) -> Result<[T; 3]> {
    let items: Vec<T> = list(key, v)?;
    match items.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::invalid(format!("{key}: expected three comma-separated values, got '{v}'"))),
    }
}

impl ConfigEntries {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::invalid(format!("unknown configuration key '{}'", key.trim())));
        }
        self.0.insert(k, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.trim().parse::<T>().map_err(|_| Error::invalid(format!("{key}: cannot parse '{v}'"))))
            .transpose()
    }

    /// Methods crossed with statistics: inversion methods get one entry per
    /// statistic (default `r`), the others ignore the statistic list.
    pub fn methods(&self) -> Result<Vec<MethodSpec>> {
        let methods: Vec<Method> = match self.get("method") {
            Some(v) => v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Method::from_str).collect::<Result<_>>()?,
            None => vec![Method::Delta],
        };
        let stats: Vec<StatisticKind> = match self.get("stat") {
            Some(v) => v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(StatisticKind::from_str).collect::<Result<_>>()?,
            None => vec![StatisticKind::R],
        };
        let mut out = Vec::new();
        for m in methods {
            if m.uses_statistic() {
                out.extend(stats.iter().map(|&s| MethodSpec::inversion(m, s)));
            } else {
                out.push(MethodSpec::new(m));
            }
        }
        Ok(out)
    }

    /// The observed counts, validated against the sizes.
    pub fn counts(&self) -> Result<SurveyCounts> {
        let x = self.get("x").ok_or_else(|| Error::invalid("missing x"))?;
        let n = self.get("n").ok_or_else(|| Error::invalid("missing n"))?;
        SurveyCounts::from_arrays(triple("x", x)?, triple("n", n)?)
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig> {
        let x = self.counts()?;
        let methods = self.methods()?;
        let mut cfg = ExperimentConfig::at_observed(&x, methods);
        if let Some(p) = self.get("p") {
            cfg.p = triple("p", p)?;
        }
        let s = &mut cfg.settings;
        if let Some(v) = self.parsed("alpha")? {
            s.alpha = v;
        }
        if let Some(v) = self.parsed("gamma")? {
            s.gamma = v;
        }
        if let Some(v) = self.parsed("grid")? {
            s.g = v;
        }
        if let Some(v) = self.parsed("b")? {
            s.b = v;
        }
        if let Some(v) = self.parsed("recenter_b")? {
            s.recenter_b = v;
        }
        if let Some(v) = self.parsed("eps")? {
            s.eps = v;
        }
        if let Some(v) = self.parsed("step")? {
            s.scan.step = v;
        }
        if let Some(v) = self.parsed("tol")? {
            s.scan.tol = v;
        }
        if let Some(v) = self.get("scan") {
            s.scan.strategy = match v.trim().to_ascii_lowercase().as_str() {
                "full" => ScanStrategy::Full,
                "local" => ScanStrategy::Local,
                _ => return Err(Error::invalid(format!("scan: expected full or local, got '{v}'"))),
            };
        }
        cfg.reps = self.parsed("reps")?.unwrap_or_else(|| default_reps(&cfg.methods));
        if let Some(v) = self.parsed("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = self.parsed("threads")? {
            cfg.threads = Some(v);
        }
        if let Some(v) = self.get("out") {
            cfg.out = Some(PathBuf::from(v.trim()));
        }
        cfg.sweep = match (self.get("sweep"), self.get("sweep_values")) {
            (None, None) => None,
            (None, Some(_)) => return Err(Error::invalid("sweep_values given without a sweep axis")),
            (Some(axis), values) => {
                let axis: SweepAxis = axis.parse()?;
                match values {
                    Some(v) => Some(Sweep { axis, values: list("sweep_values", v)? }),
                    None => Some(Sweep::default_for(axis, cfg.p, cfg.sizes)),
                }
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILE: &str = "# paper design\nx = 50,2,103\nn = 3300, 401, 122\n\nmethod = delta,inv-boot\nstat = r,w\nB = 500\nreps=20\nseed = 7\n";

    #[test]
    fn parses_file() {
        let e = parse_config(FILE).unwrap();
        let cfg = e.to_experiment().unwrap();
        assert_eq!(cfg.sizes.as_array(), [3300, 401, 122]);
        assert_eq!(cfg.methods.len(), 3);
        assert_eq!(cfg.methods[1], MethodSpec::inversion(Method::InversionBootstrap, StatisticKind::R));
        assert_eq!(cfg.settings.b, 500);
        assert_eq!(cfg.reps, 20);
        assert_eq!(cfg.seed, 7);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn later_values_override() {
        let mut e = parse_config(FILE).unwrap();
        e.set("reps", "3").unwrap();
        assert_eq!(e.to_experiment().unwrap().reps, 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("x 50,2,103").is_err());
        assert!(parse_config("colour = blue").is_err());
        let e = parse_config("x = 5,2,3\nn = 4,10,10").unwrap();
        let err = e.to_experiment().unwrap_err();
        assert!(err.to_string().contains("x1 exceeds n1"), "{err}");
        let e = parse_config("x = 5,2\nn = 40,10,10").unwrap();
        assert!(e.to_experiment().is_err());
    }

    #[test]
    fn sweep_defaults_and_values() {
        let e = parse_config(&format!("{FILE}sweep = p1\n")).unwrap();
        assert_eq!(e.to_experiment().unwrap().sweep.unwrap().values.len(), 20);
        let e = parse_config(&format!("{FILE}sweep = n1\nsweep_values = 100,200\n")).unwrap();
        assert_eq!(e.to_experiment().unwrap().sweep.unwrap().values, vec![100.0, 200.0]);
    }
}
