//! Acceptance gate: one line per criterion, non-zero exit if any fails.
//!
//! The default profile runs every experiment at 20 000 paths so the gate fits
//! in a routine `cargo test`. `RTLAB_ACCEPTANCE_PROFILE=full` uses the
//! configured defaults (200 000 paths).

use rand::Rng;
use rand_distr::StandardNormal;
use rtlab::azema::push_to_infinity_check;
use rtlab::lab::{run, ExperimentConfig, ExperimentId, RunArtifact};
use rtlab::path_engine::{sample_bm, RngStream, TimeGrid};
use rtlab::random_times::{avoidance_check, ScenarioId};
use rtlab::stat_tests::{
    martingale_orthogonality, mean_test, tolerance_test, weighted_ks, weighted_mean,
    DriftAccumulator, Reference, TestKind, TestReport, KS_THRESHOLD,
};
use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

const PROFILE_ENV: &str = "RTLAB_ACCEPTANCE_PROFILE";
const QUICK_PATHS: usize = 20_000;

struct Gate {
    full: bool,
    artifacts: BTreeMap<ExperimentId, RunArtifact>,
}

impl Gate {
    fn config(&self, id: ExperimentId) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(id);
        if !self.full {
            cfg.n_paths = QUICK_PATHS;
        }
        cfg
    }

    fn artifact(&mut self, id: ExperimentId) -> Result<&RunArtifact, String> {
        if !self.artifacts.contains_key(&id) {
            let start = Instant::now();
            let a = run(&self.config(id)).map_err(|e| format!("{id} failed to run: {e}"))?;
            eprintln!("    ({id} ran in {:.1}s)", start.elapsed().as_secs_f64());
            self.artifacts.insert(id, a);
        }
        Ok(&self.artifacts[&id])
    }
}

/// Outcome of one criterion: the checks it is made of, each with a verdict.
#[derive(Default)]
struct Outcome {
    checks: Vec<(String, bool)>,
}

impl Outcome {
    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.checks.push((label.into(), ok));
    }

    /// A mandatory report must pass.
    fn passes(&mut self, r: &TestReport) {
        let t = r.meta.t.map(|t| format!("@t={t}")).unwrap_or_default();
        let label = format!(
            "{}[{}{}]{t} {:.3e}<={:.3e}",
            r.name,
            r.meta.scenario,
            spec_suffix(r),
            r.statistic,
            r.threshold
        );
        self.check(label, r.pass);
    }

    /// A diagnostic or negative control must fail its own test.
    fn fails(&mut self, r: &TestReport) {
        let label = format!(
            "{}[{}] must fail: {:.3e}>{:.3e}",
            r.name, r.meta.scenario, r.statistic, r.threshold
        );
        self.check(label, !r.pass);
    }

    fn ok(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.1)
    }
}

fn spec_suffix(r: &TestReport) -> String {
    if r.meta.spec.is_empty() {
        String::new()
    } else {
        format!(",{}", r.meta.spec)
    }
}

fn named<'a>(a: &'a RunArtifact, name: &str) -> Vec<&'a TestReport> {
    a.reports.iter().filter(|r| r.name == name).collect()
}

fn require(out: &mut Outcome, a: &RunArtifact, name: &str, scenario: Option<&str>) {
    let found: Vec<_> = named(a, name)
        .into_iter()
        .filter(|r| scenario.is_none_or(|s| r.meta.scenario == s))
        .collect();
    if found.is_empty() {
        out.check(format!("{name} missing"), false);
    }
    for r in found {
        out.passes(r);
    }
}

fn pseudo_uniformity(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E1)?;
    let mut out = Outcome::default();
    require(&mut out, a, "ks_uniform_A_sigma", None);
    require(&mut out, a, "ks_refinement_decrease", None);
    Ok(out)
}

fn optional_stopping(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E1)?;
    let mut out = Outcome::default();
    require(&mut out, a, "optional_stopping_exit_pm2", None);
    Ok(out)
}

fn honest_laws(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E2)?;
    let mut out = Outcome::default();
    require(&mut out, a, "ks_exp_log_Nbar", None);
    let doob: Vec<_> = a
        .reports
        .iter()
        .filter(|r| r.name.starts_with("doob_maximal_identity"))
        .collect();
    if doob.is_empty() {
        out.check("doob_maximal_identity missing", false);
    }
    for r in doob {
        out.passes(r);
    }
    Ok(out)
}

fn deflator_value(g: &mut Gate) -> Result<Outcome, String> {
    let mut out = Outcome::default();
    for id in [ExperimentId::E2, ExperimentId::E10] {
        let a = g.artifact(id)?;
        require(&mut out, a, "mean_inverse_Nbar", None);
    }
    Ok(out)
}

fn deflator_identity(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E10)?;
    let mut out = Outcome::default();
    require(&mut out, a, "deflator_identity", None);
    Ok(out)
}

fn dual_projection(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E4)?;
    let mut out = Outcome::default();
    let each = named(a, "dual_projection");
    out.check(
        format!("dual_projection at {} times", each.len()),
        each.len() == 10,
    );
    require(&mut out, a, "dual_projection_quota", None);
    Ok(out)
}

fn drift_formulas(g: &mut Gate) -> Result<Outcome, String> {
    let mut out = Outcome::default();
    let a = g.artifact(ExperimentId::E3)?;
    let pre = named(a, "drift_pre_sigma");
    out.check(format!("S1 pre-sigma specs {}", pre.len()), pre.len() == 2);
    for r in pre {
        out.passes(r);
    }
    require(&mut out, a, "drift_post_sigma_plus_inv_B", None);
    for r in named(a, "drift_post_sigma_minus_inv_B") {
        out.fails(r);
    }
    let a = g.artifact(ExperimentId::E8)?;
    require(&mut out, a, "drift_pre_sigma", None);
    require(&mut out, a, "drift_post_sigma_plus_inv_B", None);
    for r in named(a, "drift_post_sigma_minus_inv_B") {
        out.fails(r);
    }
    Ok(out)
}

fn two_z_counterexample(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E5)?;
    let mut out = Outcome::default();
    for name in [
        "weighted_survival_one",
        "weighted_survival_x",
        "weighted_survival_x2",
    ] {
        let rs = named(a, name);
        out.check(format!("{name} at {} times", rs.len()), rs.len() == 2);
        for r in rs {
            out.passes(r);
        }
    }
    require(&mut out, a, "ks_density_2x_Z_sigma", None);
    Ok(out)
}

fn log_max_counterexample(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E5)?;
    let mut out = Outcome::default();
    require(&mut out, a, "decreasing_factor_ratio", None);
    let states = named(a, "nested_Z_Q").len();
    out.check(format!("nested_Z_Q states {states}"), states == 50);
    require(&mut out, a, "nested_Z_Q_quota", None);
    Ok(out)
}

fn invariance(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E6)?;
    let mut out = Outcome::default();
    for name in [
        "x_minus_c_root_residual",
        "mean_rho_at_cap",
        "ks_uniform_weighted_h_statistic",
        "ks_uniform_A_sigma",
    ] {
        require(&mut out, a, name, None);
    }
    Ok(out)
}

fn scale_function(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E6)?;
    let mut out = Outcome::default();
    require(&mut out, a, "ks_uniform_scale_statistic", None);
    Ok(out)
}

fn bridge_time(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E7)?;
    let mut out = Outcome::default();
    let states = named(a, "nested_Z").len();
    out.check(format!("nested_Z states {states}"), states == 50);
    for name in ["nested_Z_quota", "median_D_near_one", "median_D_decreasing"] {
        require(&mut out, a, name, None);
    }
    Ok(out)
}

fn push_to_infinity(g: &mut Gate) -> Result<Outcome, String> {
    let a = g.artifact(ExperimentId::E9)?;
    let mut out = Outcome::default();
    for name in [
        "push_to_infinity_one",
        "push_to_infinity_B_t",
        "push_to_infinity_Bbar_t",
    ] {
        for s in ["S1", "S2"] {
            require(&mut out, a, name, Some(s));
        }
    }
    Ok(out)
}

/// Crossing-count local time at 0 on `[0, 1]`: `E[L_1] = sqrt(2/π)`.
fn local_time_mean(n: usize) -> TestReport {
    let grid = TimeGrid::covering(1e-4, 1.0).expect("grid");
    let seed = 0x10ca1;
    let l: Vec<f64> = (0..n)
        .map(|i| {
            let p = sample_bm(grid, &RngStream::new(seed, i as u64), 0.0, 0.0, false);
            *p.local_time_at_zero().values().last().expect("non-empty")
        })
        .collect();
    let m = weighted_mean(&l, None).expect("mean");
    let target = (2.0 / std::f64::consts::PI).sqrt();
    tolerance_test(m.mean, target, 0.02, m.se, m.n_effective).named("local_time_mean")
}

/// Fixtures that violate the identity of each test family.
fn negative_controls() -> Vec<TestReport> {
    let n = 20_000;
    let mut rng = RngStream::new(0xbad, 0).rng();
    let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let normal: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let squared: Vec<f64> = u.iter().map(|x| x * x).collect();
    let mut out = vec![
        weighted_ks(&squared, None, Reference::Uniform01, KS_THRESHOLD)
            .expect("ks")
            .named("ks_uniform_on_squares"),
        weighted_ks(&u, None, Reference::Exp1, KS_THRESHOLD)
            .expect("ks")
            .named("ks_exp_on_uniforms"),
        weighted_ks(&u, None, Reference::Density2x, KS_THRESHOLD)
            .expect("ks")
            .named("ks_2x_on_uniforms"),
    ];
    let shifted: Vec<f64> = normal.iter().map(|z| z + 0.1).collect();
    out.push(
        mean_test(&shifted, None, 0.0, 3.0)
            .expect("mean")
            .named("mean_of_shifted_normals"),
    );
    let correlated: Vec<f64> = normal.iter().zip(&u).map(|(z, g)| z + g).collect();
    out.push(
        martingale_orthogonality(&correlated, &u, None, 3.0)
            .expect("orth")
            .named("orthogonality_of_correlated"),
    );

    // unit drift regressed against a predicted drift of 0
    let mut drift = DriftAccumulator::standard(0.0, 1.0);
    let dt: f64 = 0.1;
    for (x, z) in u.iter().zip(&normal) {
        drift.add(*x, dt + dt.sqrt() * z, dt, 0.0, 1.0);
    }
    out.push(drift.finish().to_report("drift_of_drifted_bm"));

    out.push(
        avoidance_check(ScenarioId::S7LastZeroUnit, &vec![0.5; n])
            .expect("avoidance")
            .named("deterministic_time"),
    );
    let after: Vec<bool> = u.iter().map(|&x| x < 0.2).collect();
    let z = vec![0.5; n];
    out.push(
        push_to_infinity_check(&after, &z, &vec![1.0; n], 3.0)
            .expect("push")
            .named("push_with_wrong_z"),
    );
    out.push(tolerance_test(0.53, 0.5, 0.01, 0.0, 1.0).named("tolerance_off_target"));
    out
}

fn infrastructure(g: &mut Gate) -> Result<Outcome, String> {
    let mut out = Outcome::default();
    out.passes(&local_time_mean(if g.full { 200_000 } else { QUICK_PATHS }));

    let mut small = ExperimentConfig::new(ExperimentId::E8);
    small.n_paths = 2_000;
    let first = run(&small)
        .map_err(|e| e.to_string())?
        .to_json()
        .map_err(|e| e.to_string())?;
    let second = run(&small)
        .map_err(|e| e.to_string())?
        .to_json()
        .map_err(|e| e.to_string())?;
    out.check("E8 rerun byte-identical", first == second);
    let cached = g
        .artifact(ExperimentId::E2)?
        .to_json()
        .map_err(|e| e.to_string())?;
    let again = run(&g.config(ExperimentId::E2))
        .map_err(|e| e.to_string())?
        .to_json()
        .map_err(|e| e.to_string())?;
    out.check("E2 rerun byte-identical", cached == again);

    for r in negative_controls() {
        out.fails(&r);
    }
    for a in g.artifacts.values() {
        for r in a.reports.iter().filter(|r| r.kind == TestKind::Diagnostic) {
            out.fails(r);
        }
    }
    Ok(out)
}

type Criterion = (&'static str, fn(&mut Gate) -> Result<Outcome, String>);

const CRITERIA: [Criterion; 14] = [
    (
        "pseudo-stopping value is uniform and converges under refinement",
        pseudo_uniformity,
    ),
    (
        "optional stopping at the pseudo-stopping time",
        optional_stopping,
    ),
    ("laws of the honest maximum", honest_laws),
    ("mean of the deflator limit", deflator_value),
    ("deflator identity at horizon 1", deflator_identity),
    ("dual projection under f(A)", dual_projection),
    (
        "drift formulas before and after the random time",
        drift_formulas,
    ),
    ("weighted survival under 2 Z_sigma", two_z_counterexample),
    (
        "log-maximum density: factor ratio and nested Z^Q",
        log_max_counterexample,
    ),
    ("invariance construction", invariance),
    ("scale-function statistic with drift", scale_function),
    ("last sign change of 2W - W_1", bridge_time),
    ("push to infinity", push_to_infinity),
    (
        "local time, reproducibility, negative controls",
        infrastructure,
    ),
];

fn main() -> ExitCode {
    let full = std::env::var(PROFILE_ENV).is_ok_and(|v| v.eq_ignore_ascii_case("full"));
    let mut gate = Gate {
        full,
        artifacts: BTreeMap::new(),
    };
    println!(
        "acceptance profile: {}",
        if full { "full" } else { "quick (20000 paths)" }
    );
    let mut failed = 0;
    for (i, (title, f)) in CRITERIA.iter().enumerate() {
        let n = i + 1;
        match f(&mut gate) {
            Ok(out) => {
                let ok = out.ok();
                failed += usize::from(!ok);
                println!("[AC {n:>2}] {}  {title}", if ok { "PASS" } else { "FAIL" });
                for (label, pass) in &out.checks {
                    println!("          {} {label}", if *pass { "ok  " } else { "FAIL" });
                }
            }
            Err(e) => {
                failed += 1;
                println!("[AC {n:>2}] FAIL  {title}: {e}");
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        CRITERIA.len() - failed,
        CRITERIA.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
