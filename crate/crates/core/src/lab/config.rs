use crate::error::{LabError, Result};
use serde::Serialize;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
    E9,
    E10,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 10] = [
        ExperimentId::E1,
        ExperimentId::E2,
        ExperimentId::E3,
        ExperimentId::E4,
        ExperimentId::E5,
        ExperimentId::E6,
        ExperimentId::E7,
        ExperimentId::E8,
        ExperimentId::E9,
        ExperimentId::E10,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ExperimentId::E1 => "E1",
            ExperimentId::E2 => "E2",
            ExperimentId::E3 => "E3",
            ExperimentId::E4 => "E4",
            ExperimentId::E5 => "E5",
            ExperimentId::E6 => "E6",
            ExperimentId::E7 => "E7",
            ExperimentId::E8 => "E8",
            ExperimentId::E9 => "E9",
            ExperimentId::E10 => "E10",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ExperimentId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LabError::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

impl FromStr for OutputFormat {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "both" => Ok(OutputFormat::Both),
            other => Err(LabError::Config(format!(
                "unknown format '{other}' (expected csv, json or both)"
            ))),
        }
    }
}

/// Full description of a run. Every field is echoed into the artifact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub n_paths: usize,
    pub dt: f64,
    /// Simulation budget of open-ended scenarios (extended 4x once).
    pub horizon_cap: f64,
    pub master_seed: u64,
    pub format: OutputFormat,
    /// Stretch simulated on the plain grid before heavy-tail acceleration.
    pub window: f64,
    /// Profile function for the density families that take one.
    pub f: String,
    /// `g` of the invariance construction (`x_minus_c` or `zero`).
    pub g: String,
    pub t_grid: Vec<f64>,
    /// Refinement factor of the coupled fine ensemble in E1.
    pub refine: usize,
    pub ks_threshold: f64,
    pub nested_states: usize,
    pub nested_inner: usize,
    pub nested_dt: f64,
    /// Record wall time; off keeps artifacts byte-identical across reruns.
    pub timing: bool,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn new(experiment: ExperimentId) -> Self {
        let t_grid = match experiment {
            ExperimentId::E4 => (1..=10).map(|i| i as f64 / 10.0).collect(),
            ExperimentId::E5 => vec![0.25, 0.5],
            _ => vec![0.5],
        };
        let f = match experiment {
            ExperimentId::E3 | ExperimentId::E4 | ExperimentId::E1 => "two_x",
            _ => "one",
        };
        ExperimentConfig {
            experiment,
            n_paths: 200_000,
            dt: 1e-4,
            horizon_cap: 50.0,
            master_seed: 20_240_601,
            format: OutputFormat::Both,
            window: 1.0,
            f: f.into(),
            g: "x_minus_c".into(),
            t_grid,
            refine: 4,
            ks_threshold: crate::stat_tests::KS_THRESHOLD,
            nested_states: 50,
            nested_inner: 2000,
            nested_dt: 1e-3,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(LabError::Config(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        pos("dt", self.dt)?;
        pos("horizon_cap", self.horizon_cap)?;
        pos("window", self.window)?;
        pos("ks_threshold", self.ks_threshold)?;
        pos("nested_dt", self.nested_dt)?;
        if self.n_paths < 200 {
            return Err(LabError::Config(format!(
                "n_paths must be at least 200, got {}",
                self.n_paths
            )));
        }
        if self.refine < 2 {
            return Err(LabError::Config("refine must be at least 2".into()));
        }
        if self.nested_states == 0 || self.nested_inner < 2 {
            return Err(LabError::Config(
                "nested_states and nested_inner must be positive".into(),
            ));
        }
        if self.window < 1.0 {
            return Err(LabError::Config("window must cover [0, 1]".into()));
        }
        if self.horizon_cap < self.window {
            return Err(LabError::Config(
                "horizon_cap must be at least the window".into(),
            ));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(LabError::Config("t_grid values must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| LabError::Config(format!("invalid value '{v}' for {key}")))
        }
        match key.trim() {
            "experiment" => self.experiment = value.parse()?,
            "n_paths" | "paths" => self.n_paths = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "horizon_cap" => self.horizon_cap = num(key, value)?,
            "master_seed" | "seed" => self.master_seed = num(key, value)?,
            "format" => self.format = value.parse()?,
            "window" => self.window = num(key, value)?,
            "f" => {
                value.parse::<crate::measure_change::NamedFn>()?;
                self.f = value.trim().into()
            }
            "g" => {
                match value.trim() {
                    "x_minus_c" | "zero" => {}
                    other => return Err(LabError::Config(format!("unknown g '{other}'"))),
                }
                self.g = value.trim().into()
            }
            "t_grid" => {
                self.t_grid = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| num::<f64>(key, s))
                    .collect::<Result<_>>()?
            }
            "refine" => self.refine = num(key, value)?,
            "ks_threshold" => self.ks_threshold = num(key, value)?,
            "nested_states" => self.nested_states = num(key, value)?,
            "nested_inner" => self.nested_inner = num(key, value)?,
            "nested_dt" => self.nested_dt = num(key, value)?,
            "timing" => self.timing = num(key, value)?,
            other => return Err(LabError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file (`#` starts a comment). The
    /// `experiment` key, if present, picks the defaults the other keys modify.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                LabError::Config(format!("line {}: expected key = value", no + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let experiment = match pairs.iter().find(|(k, _)| k == "experiment") {
            Some((_, v)) => v.parse()?,
            None => {
                return Err(LabError::Config(
                    "config file lacks an experiment key".into(),
                ))
            }
        };
        let mut cfg = ExperimentConfig::new(experiment);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file_with_comments() {
        let cfg = ExperimentConfig::parse(
            "# quick run\nexperiment = E4\nn_paths = 5000\ndt=1e-3 # coarse\nt_grid = 0.2, 0.4\nseed = 7\nformat = csv\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentId::E4);
        assert_eq!(cfg.n_paths, 5000);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.t_grid, vec![0.2, 0.4]);
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.format, OutputFormat::Csv);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(ExperimentConfig::parse("experiment = E11").is_err());
        assert!(ExperimentConfig::parse("n_paths = 10").is_err());
        assert!(ExperimentConfig::parse("experiment = E1\nbogus = 1").is_err());
        assert!(ExperimentConfig::parse("experiment = E1\ndt = abc").is_err());
        let mut cfg = ExperimentConfig::new(ExperimentId::E2);
        cfg.dt = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(ExperimentId::E2);
        assert!(cfg.set("f", "cubic").is_err());
        cfg.t_grid = vec![1.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn experiment_ids_round_trip() {
        for e in ExperimentId::ALL {
            assert_eq!(e.code().parse::<ExperimentId>().unwrap(), e);
        }
        assert_eq!("e10".parse::<ExperimentId>().unwrap(), ExperimentId::E10);
    }
}
