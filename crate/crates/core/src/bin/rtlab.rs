use clap::{Parser, Subcommand};
use rtlab::lab::{list_experiments, run, ExperimentConfig, ExperimentId};
use rtlab::stat_tests::TestKind;
use rtlab::LabError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Default output directory when `--out` is not given.
const OUT_DIR_ENV: &str = "RTLAB_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "rtlab",
    version,
    about = "Monte Carlo checks for random times and measure changes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifact.
    Run {
        /// Flat key = value config file; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $RTLAB_OUT_DIR, else ./results).
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv, json or both.
        #[arg(long)]
        format: Option<String>,
        /// Extra `key=value` overrides, as in the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Print every report, including exploratory ones.
        #[arg(long)]
        verbose: bool,
    },
    /// List the experiment catalog.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn build_config(
    config: Option<PathBuf>,
    experiment: Option<String>,
    overrides: Vec<(&str, String)>,
    set: Vec<String>,
) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match (config, experiment.as_deref()) {
        (Some(p), e) => {
            let mut c = ExperimentConfig::load(&p)?;
            if let Some(e) = e {
                let id: ExperimentId = e.parse()?;
                if id != c.experiment {
                    c.set("experiment", e)?;
                }
            }
            c
        }
        (None, Some(e)) => ExperimentConfig::new(e.parse()?),
        (None, None) => {
            return Err(LabError::Config(
                "either --config or --experiment is required".into(),
            ))
        }
    };
    for (k, v) in overrides {
        cfg.set(k, &v)?;
    }
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("--set expects key=value, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_for(e: &LabError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        LabError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List { json } => {
            let entries = list_experiments();
            if json {
                match serde_json::to_string_pretty(&entries) {
                    Ok(s) => println!("{s}"),
                    Err(e) => return exit_for(&LabError::Io(e.to_string())),
                }
            } else {
                for e in entries {
                    println!(
                        "{}\t{}\t[{}]\t{}",
                        e.id,
                        e.title,
                        e.scenarios.join(","),
                        e.anchor
                    );
                    for d in e.diagnostics {
                        println!("\tdiagnostic: {d}");
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            experiment,
            paths,
            dt,
            seed,
            out,
            format,
            set,
            verbose,
        } => {
            let overrides: Vec<(&str, String)> = [
                ("n_paths", paths.map(|v| v.to_string())),
                ("dt", dt.map(|v| v.to_string())),
                ("master_seed", seed.map(|v| v.to_string())),
                ("format", format),
            ]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect();
            let cfg = match build_config(config, experiment, overrides, set) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            let artifact = match run(&cfg) {
                Ok(a) => a,
                Err(e) => return exit_for(&e),
            };
            let dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results"));
            let written = match artifact.write(&dir, cfg.experiment.code(), cfg.format) {
                Ok(w) => w,
                Err(e) => return exit_for(&e),
            };
            for r in &artifact.reports {
                if r.kind == TestKind::Exploratory && !verbose {
                    continue;
                }
                let tag = match (r.kind, r.satisfied()) {
                    (TestKind::Exploratory, _) => "INFO",
                    (_, true) => "ok",
                    (_, false) => "FAIL",
                };
                let t = r.meta.t.map(|t| format!(" t={t}")).unwrap_or_default();
                println!(
                    "{tag:>4}  {:<40} {:<3}{t} stat={:.4e} thr={:.4e}{}",
                    r.name,
                    r.meta.scenario,
                    r.statistic,
                    r.threshold,
                    if r.kind == TestKind::Diagnostic {
                        " (diagnostic, expected to fail)"
                    } else {
                        ""
                    }
                );
            }
            println!("censored fraction {:.3e}", artifact.censored_fraction);
            for p in written {
                println!("wrote {}", p.display());
            }
            if artifact.verdict {
                println!("verdict: PASS");
                ExitCode::SUCCESS
            } else {
                println!("verdict: FAIL");
                ExitCode::from(1)
            }
        }
    }
}
