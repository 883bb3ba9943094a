use super::config::{ExperimentConfig, OutputFormat};
use crate::error::{LabError, Result};
use crate::stat_tests::TestReport;
use serde::Serialize;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

/// Result of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub reports: Vec<TestReport>,
    /// All mandatory reports pass and all diagnostics fail.
    pub verdict: bool,
    pub censored_fraction: f64,
    /// Zero unless timing was requested.
    pub runtime_seconds: f64,
}

impl RunArtifact {
    pub fn new(
        config: ExperimentConfig,
        reports: Vec<TestReport>,
        censored_fraction: f64,
        runtime_seconds: f64,
    ) -> Self {
        let verdict = reports.iter().all(TestReport::satisfied);
        RunArtifact {
            config,
            reports,
            verdict,
            censored_fraction,
            runtime_seconds,
        }
    }

    pub fn report(&self, name: &str) -> Option<&TestReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits::default());
        self.serialize(&mut ser)
            .map_err(|e| LabError::Io(e.to_string()))?;
        buf.push(b'\n');
        String::from_utf8(buf).map_err(|e| LabError::Io(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io_err = |e: csv::Error| LabError::Io(e.to_string());
        w.write_record([
            "experiment",
            "test",
            "scenario",
            "spec",
            "t",
            "statistic",
            "se",
            "threshold",
            "pass",
        ])
        .map_err(io_err)?;
        for r in &self.reports {
            let t = r.meta.t.map(format_real).unwrap_or_default();
            w.write_record([
                r.meta.experiment.as_str(),
                r.name.as_str(),
                r.meta.scenario.as_str(),
                r.meta.spec.as_str(),
                t.as_str(),
                format_real(r.statistic).as_str(),
                format_real(r.se).as_str(),
                format_real(r.threshold).as_str(),
                if r.pass { "true" } else { "false" },
            ])
            .map_err(io_err)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| LabError::Io(e.to_string()))
    }

    /// Writes `<stem>.json` and/or `<stem>.csv` into `dir`, each through a
    /// temporary file renamed into place. Returns the written paths.
    pub fn write(&self, dir: &Path, stem: &str, format: OutputFormat) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        if matches!(format, OutputFormat::Json | OutputFormat::Both) {
            let p = dir.join(format!("{stem}.json"));
            write_atomic(&p, self.to_json()?.as_bytes())?;
            out.push(p);
        }
        if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
            let p = dir.join(format!("{stem}.csv"));
            write_atomic(&p, self.to_csv()?.as_bytes())?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Reals as decimal with 17 significant digits; non-finite values as strings
/// understood by most JSON readers.
pub fn format_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "Infinity".into()
    } else {
        "-Infinity".into()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| LabError::Io(e.to_string()))?;
    Ok(())
}

/// Pretty JSON formatter that prints every float with 17 significant digits.
#[derive(Default)]
struct FixedDigits {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{}", format_real(value))
        } else {
            write!(w, "\"{}\"", format_real(value))
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::config::ExperimentId;

    fn artifact() -> RunArtifact {
        let reports = vec![
            TestReport::new("a", 0.01, 0.003, 0.02, 1000.0)
                .experiment("E1")
                .scenario("S2")
                .at(0.5),
            TestReport::new("b", 5.0, 1.0, 4.0, 1000.0)
                .diagnostic()
                .experiment("E1"),
        ];
        RunArtifact::new(ExperimentConfig::new(ExperimentId::E1), reports, 0.001, 0.0)
    }

    #[test]
    fn verdict_inverts_diagnostics() {
        assert!(artifact().verdict);
        let mut a = artifact();
        a.reports[1].pass = true;
        assert!(!RunArtifact::new(a.config, a.reports, 0.0, 0.0).verdict);
    }

    #[test]
    fn json_and_csv_share_number_formatting() {
        let a = artifact();
        let json = a.to_json().unwrap();
        let csv = a.to_csv().unwrap();
        assert!(json.contains("1.0000000000000000e-2"));
        assert!(csv.contains("1.0000000000000000e-2"));
        assert!(csv.starts_with("experiment,test,scenario,spec,t,statistic,se,threshold,pass"));
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in [
            "config",
            "reports",
            "verdict",
            "censored_fraction",
            "runtime_seconds",
        ] {
            assert!(parsed.get(key).is_some(), "missing {key}");
        }
        assert_eq!(parsed["reports"][0]["statistic"].as_f64(), Some(0.01));
    }

    #[test]
    fn format_real_round_trips() {
        for x in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300] {
            assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn writes_atomically_into_directory() {
        let dir = tempfile::tempdir().unwrap();
        let paths = artifact()
            .write(dir.path(), "run", OutputFormat::Both)
            .unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.exists()));
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 2);
    }
}
