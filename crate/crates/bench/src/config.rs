//! Experiment configuration and its `key = value` file format.

use cdukf::model::SamplingSchedule;
use cdukf::FilterVariant;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How measurement instants are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    /// `count` instants spaced `dt` apart, starting at `dt`.
    Regular { count: usize, dt: f64 },
    /// Explicit instants (strictly increasing, positive).
    Instants(Vec<f64>),
}

impl ScheduleSpec {
    /// Parses `regular:K,dt`, or reads whitespace/comma separated instants from a file.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        if let Some(rest) = s.strip_prefix("regular:") {
            let (k, dt) = rest
                .split_once(',')
                .ok_or_else(|| ConfigError::Invalid(format!("expected regular:K,dt, got {s:?}")))?;
            let count = k
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("bad measurement count {k:?}")))?;
            let dt = parse_f64(dt)?;
            return Ok(ScheduleSpec::Regular { count, dt });
        }
        let text = std::fs::read_to_string(s).map_err(|source| ConfigError::Io {
            path: s.to_string(),
            source,
        })?;
        let instants = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(parse_f64)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScheduleSpec::Instants(instants))
    }

    pub fn build(&self) -> Result<SamplingSchedule, ConfigError> {
        let schedule = match self {
            ScheduleSpec::Regular { count, dt } => SamplingSchedule::regular(*count, *dt),
            ScheduleSpec::Instants(t) => SamplingSchedule::new(t.clone()),
        };
        schedule.map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Monte-Carlo sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub variants: Vec<FilterVariant>,
    /// Measurement-noise levels, strictly decreasing.
    pub deltas: Vec<f64>,
    pub runs: usize,
    /// ODE local-error tolerance, used for both absolute and relative control.
    pub tolerance: f64,
    pub max_step: f64,
    pub seed: u64,
    pub schedule: ScheduleSpec,
    /// Euler–Maruyama step for the truth.
    pub sim_step: f64,
    /// Start every truth trajectory at the prior mean instead of sampling it.
    pub pin_truth: bool,
    /// Interpret the turn rate and its noise intensity as degree-valued.
    pub omega_degrees: bool,
    /// Position error (m) beyond which a completed run counts as diverged.
    pub divergence_threshold: f64,
    /// Record wall-clock time per cell; when off, timings are written as zero.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variants: FilterVariant::all(),
            deltas: (1..=12).map(|e| 10f64.powi(-e)).collect(),
            runs: 100,
            tolerance: 1e-4,
            max_step: 0.1,
            seed: 1,
            schedule: ScheduleSpec::Regular { count: 150, dt: 1.0 },
            sim_step: 5e-4,
            pin_truth: false,
            omega_degrees: false,
            divergence_threshold: 1e6,
            record_timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.variants.is_empty() {
            return bad("no filter variants selected".into());
        }
        if self.deltas.is_empty() {
            return bad("no delta values given".into());
        }
        if self.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad(format!("deltas must be positive and finite: {:?}", self.deltas));
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("deltas must be strictly decreasing: {:?}", self.deltas));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1.0) {
            return bad(format!("tolerance must lie in (0, 1], got {}", self.tolerance));
        }
        if !(self.max_step > 0.0) {
            return bad(format!("max step must be positive, got {}", self.max_step));
        }
        if !(self.sim_step > 0.0) {
            return bad(format!("simulation step must be positive, got {}", self.sim_step));
        }
        if !(self.divergence_threshold > 0.0) {
            return bad("divergence threshold must be positive".into());
        }
        self.schedule.build()?;
        Ok(())
    }

    /// Applies one `key = value` setting. Keys match the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "variants" => self.variants = parse_variants(value)?,
            "deltas" => self.deltas = parse_list(value)?,
            "runs" => self.runs = parse_usize(value)?,
            "tol" | "tolerance" => self.tolerance = parse_f64(value)?,
            "max-step" | "max_step" => self.max_step = parse_f64(value)?,
            "seed" => {
                self.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| ConfigError::Invalid(format!("bad seed {value:?}")))?
            }
            "schedule" => self.schedule = ScheduleSpec::parse(value.trim())?,
            "sim-step" | "sim_step" => self.sim_step = parse_f64(value)?,
            "pin-truth" | "pin_truth" => self.pin_truth = parse_bool(value)?,
            "omega-degrees" | "omega_degrees" => self.omega_degrees = parse_bool(value)?,
            "divergence-threshold" | "divergence_threshold" => self.divergence_threshold = parse_f64(value)?,
            "timing" => self.record_timing = parse_bool(value)?,
            _ => return Err(ConfigError::Invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Reads a `key = value` file; blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: shown.clone(),
            source,
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                path: shown.clone(),
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| ConfigError::Parse {
                path: shown.clone(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }
}

fn parse_f64(s: &str) -> Result<f64, ConfigError> {
    s.trim()
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("not a number: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize, ConfigError> {
    s.trim()
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("not a count: {s:?}")))
}

fn parse_bool(s: &str) -> Result<bool, ConfigError> {
    match s.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(ConfigError::Invalid(format!("not a boolean: {other:?}"))),
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_f64).collect()
}

/// `all`, or a comma-separated list of labels such as `1,1a,2c-SR`.
pub fn parse_variants(s: &str) -> Result<Vec<FilterVariant>, ConfigError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(FilterVariant::all());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| FilterVariant::from_label(t).ok_or_else(|| ConfigError::Invalid(format!("unknown variant {:?}", t.trim()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.deltas.len(), 12);
        assert_eq!(c.deltas[0], 0.1);
        assert_eq!(c.deltas[11], 1e-12);
        assert_eq!(c.variants.len(), 14);
        assert_eq!(c.schedule.build().unwrap().len(), 150);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ExperimentConfig::default();
        c.runs = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.deltas = vec![1e-2, 1e-1];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.deltas = vec![0.1, 0.1];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.deltas = vec![0.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn schedule_specs() {
        assert_eq!(
            ScheduleSpec::parse("regular:10,0.5").unwrap(),
            ScheduleSpec::Regular { count: 10, dt: 0.5 }
        );
        assert!(ScheduleSpec::parse("regular:10").is_err());
        assert!(ScheduleSpec::parse("/nonexistent/schedule.txt").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, "1 2.5\n4,7\n").unwrap();
        let spec = ScheduleSpec::parse(path.to_str().unwrap()).unwrap();
        assert_eq!(spec, ScheduleSpec::Instants(vec![1.0, 2.5, 4.0, 7.0]));
    }

    #[test]
    fn variant_lists() {
        assert_eq!(parse_variants("all").unwrap().len(), 14);
        let v = parse_variants("1, 2c-SR").unwrap();
        assert_eq!(v.iter().map(|v| v.label()).collect::<Vec<_>>(), ["1", "2c-SR"]);
        assert!(parse_variants("1,9z").is_err());
    }

    #[test]
    fn config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.cfg");
        std::fs::write(&path, "# sweep\nruns = 3\ndeltas = 1e-1, 1e-3\nvariants = 1b\npin-truth = yes\n").unwrap();
        let mut c = ExperimentConfig::default();
        c.apply_file(&path).unwrap();
        assert_eq!(c.runs, 3);
        assert_eq!(c.deltas, [0.1, 1e-3]);
        assert_eq!(c.variants.len(), 1);
        assert!(c.pin_truth);

        std::fs::write(&path, "runs 3\n").unwrap();
        let err = c.apply_file(&path).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
        std::fs::write(&path, "colour = red\n").unwrap();
        assert!(c.apply_file(&path).is_err());
    }
}
