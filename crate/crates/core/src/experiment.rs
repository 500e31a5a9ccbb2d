//! Scenario runner: wires a configuration into a run, writes CSV and
//! summary artifacts, and collects PASS/FAIL verdicts.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConvergenceConfig, ExperimentConfig, InitialData, ScenarioName};
use crate::energy::{energy, RayProfile};
use crate::error::{Error, Result};
use crate::evolution::{
    blowup_inequality_audit, exterior_invariance_check, run, BlowupAudit, Scheme, StepControl, Termination,
    TrajectoryRecord,
};
use crate::exponent::validate_assumptions;
use crate::grid::GridFunction;
use crate::operator::OperatorContext;
use crate::well::{well_depth, WellClass, WellGeometry};

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }

    /// `name: PASS (detail)`
    pub fn line(&self) -> String {
        format!("{}: {} ({})", self.name, if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: ScenarioName,
    pub verdicts: Vec<Verdict>,
    pub artifacts: Vec<PathBuf>,
    /// Key quantities, one `key = value` per line.
    pub values: Vec<(String, String)>,
}

impl ScenarioOutcome {
    fn new(scenario: ScenarioName) -> Self {
        Self { scenario, verdicts: Vec::new(), artifacts: Vec::new(), values: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    fn verdict(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict::new(name, pass, detail));
    }

    fn value(&mut self, key: &str, value: impl ToString) {
        self.values.push((key.into(), value.to_string()));
    }

    pub fn find(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

/// Run the configured scenario, writing artifacts under `out`.
pub fn run_scenario(cfg: &ExperimentConfig, out: &Path) -> Result<ScenarioOutcome> {
    std::fs::create_dir_all(out)?;
    let field = cfg.field()?;
    let domain = cfg.domain()?;
    validate_assumptions(&field, &domain, 256)?;
    let mut outcome = match cfg.scenario {
        ScenarioName::Validate => validate_scenario(cfg)?,
        ScenarioName::Geometry => geometry_scenario(cfg, out)?,
        ScenarioName::Well => well_scenario(cfg, out)?,
        ScenarioName::Blowup => blowup_scenario(cfg, out)?,
        ScenarioName::NehariSweep => sweep_scenario(cfg, out)?,
        ScenarioName::Convergence => convergence_scenario(cfg, out)?,
    };
    let summary = out.join("summary.txt");
    emit_summary(cfg, &outcome, &summary)?;
    outcome.artifacts.push(summary);
    Ok(outcome)
}

/// Summary text: verdict lines, key values, then the configuration echoed.
pub fn emit_summary(cfg: &ExperimentConfig, outcome: &ScenarioOutcome, path: &Path) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", outcome.scenario.as_str());
    for v in &outcome.verdicts {
        let _ = writeln!(text, "{}", v.line());
    }
    let _ = writeln!(text, "overall: {}", if outcome.passed() { "PASS" } else { "FAIL" });
    let _ = writeln!(text);
    for (k, v) in &outcome.values {
        let _ = writeln!(text, "{k} = {v}");
    }
    let _ = writeln!(text, "\n# configuration\n{}", cfg.to_toml()?);
    std::fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_record(record: &TrajectoryRecord, path: &Path, outcome: &mut ScenarioOutcome) -> Result<()> {
    record.write_csv(create(path)?)?;
    outcome.artifacts.push(path.to_path_buf());
    Ok(())
}

/// Initial state for a recipe; `geometry` is needed for the minimizer recipe.
pub fn initial_state(cfg: &ExperimentConfig, ctx: &OperatorContext, geometry: Option<&WellGeometry>) -> Result<GridFunction> {
    let grid = ctx.grid().clone();
    let d = *grid.domain();
    let (mid, half) = ((d.a + d.b) / 2.0, (d.b - d.a) / 2.0);
    match &cfg.initial {
        InitialData::Bump { amplitude } => {
            Ok(GridFunction::from_fn(grid, |x| amplitude * (1.0 - ((x - mid) / half).powi(2)).max(0.0)))
        }
        InitialData::Sine { amplitude } => {
            Ok(GridFunction::from_fn(grid, |x| amplitude * (PI * (x - d.a) / (d.b - d.a)).sin()))
        }
        InitialData::NehariMinimizer { factor } => {
            let geo = geometry.ok_or_else(|| Error::Config("minimizer recipe needs the well geometry".into()))?;
            Ok(geo.minimizer.scaled(*factor))
        }
        InitialData::File { path } => {
            let u = GridFunction::read_csv(grid, File::open(path)?)?;
            u.require_w0()?;
            Ok(u)
        }
    }
}

fn validate_scenario(cfg: &ExperimentConfig) -> Result<ScenarioOutcome> {
    let summary = validate_assumptions(&cfg.field()?, &cfg.domain()?, 256)?;
    let mut o = ScenarioOutcome::new(ScenarioName::Validate);
    o.value("p_minus", summary.p_minus);
    o.value("p_plus", summary.p_plus);
    o.value("q_minus", summary.q_minus);
    o.value("q_plus", summary.q_plus);
    o.value("critical_exponent_min", summary.min_critical_exponent);
    o.value("q_upper_bound", summary.min_critical_bound);
    o.verdict(
        "assumptions",
        true,
        format!(
            "p in [{}, {}], q in [{}, {}], p*_s >= {}",
            summary.p_minus, summary.p_plus, summary.q_minus, summary.q_plus, summary.min_critical_exponent
        ),
    );
    Ok(o)
}

fn geometry_values(o: &mut ScenarioOutcome, geo: &WellGeometry) {
    o.value("lambda_hat", geo.lambda_hat);
    o.value("r_hat", geo.r_hat);
    o.value("depth_hat", geo.depth_hat);
    o.value("lower_bound", geo.lower_bound);
}

fn geometry_scenario(cfg: &ExperimentConfig, out: &Path) -> Result<ScenarioOutcome> {
    let ctx = cfg.context()?;
    let geo = well_depth(&ctx, &cfg.geometry_options())?;
    let mut o = ScenarioOutcome::new(ScenarioName::Geometry);
    geometry_values(&mut o, &geo);
    let rep = energy(&geo.minimizer, &ctx)?;
    o.value("minimizer_nehari", rep.nehari);
    o.value("minimizer_q_modular", rep.q_modular);

    o.verdict("depth-positive", geo.depth_hat > 0.0, format!("d = {}", geo.depth_hat));
    o.verdict(
        "depth-bound",
        geo.depth_hat >= geo.lower_bound - 1e-9,
        format!("d = {} vs (1/p+ - 1/q-) R = {}", geo.depth_hat, geo.lower_bound),
    );
    o.verdict(
        "nehari",
        rep.nehari.abs() <= geo.nehari_tol * rep.scale(),
        format!("|I(w)| = {:e}, scale = {:e}", rep.nehari.abs(), rep.scale()),
    );
    o.verdict(
        "rho-q-bound",
        rep.q_modular >= geo.lower_bound,
        format!("rho_q(w) = {} vs {}", rep.q_modular, geo.lower_bound),
    );
    o.verdict("descent", !geo.descent_stalled, "projected descent made progress");
    if cfg.geometry.refine_check {
        let fine = well_depth(&cfg.context_with(2 * cfg.domain.n)?, &cfg.geometry_options())?;
        let rel = (fine.depth_hat - geo.depth_hat).abs() / geo.depth_hat;
        o.value("depth_hat_refined", fine.depth_hat);
        o.verdict(
            "refinement",
            rel <= cfg.geometry.refine_rel_tol,
            format!("n = {}: {}, n = {}: {}, relative change {rel:e}", cfg.domain.n, geo.depth_hat, 2 * cfg.domain.n, fine.depth_hat),
        );
    }

    let path = out.join("geometry.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["quantity", "value"])?;
    for (k, v) in &o.values {
        w.write_record([k, v])?;
    }
    w.flush()?;
    o.artifacts.push(path);
    let path = out.join("minimizer.csv");
    geo.minimizer.write_csv(create(&path)?)?;
    o.artifacts.push(path);
    Ok(o)
}

fn well_scenario(cfg: &ExperimentConfig, out: &Path) -> Result<ScenarioOutcome> {
    let ctx = cfg.context()?;
    let geo = well_depth(&ctx, &cfg.geometry_options())?;
    let u0 = initial_state(cfg, &ctx, Some(&geo))?;
    let record = run(&u0, &cfg.control, &ctx, &geo, &cfg.probe.build())?;
    let mut o = ScenarioOutcome::new(ScenarioName::Well);
    geometry_values(&mut o, &geo);
    write_record(&record, &out.join("trajectory.csv"), &mut o)?;
    let path = out.join("final_state.csv");
    record.final_state.write_csv(create(&path)?)?;
    o.artifacts.push(path);

    let first = record.samples[0];
    let last = *record.samples.last().expect("record starts with u0");
    o.value("termination", record.termination);
    o.value("accepted_steps", record.accepted_steps());
    o.value("rejected_steps", record.rejected_steps);
    o.value("final_time", last.t);
    o.value("final_l2", last.l2);
    o.value("final_residual", last.residual);

    let outside = record.samples.iter().find(|s| s.well_class != WellClass::InWell);
    o.verdict(
        "invariance",
        outside.is_none(),
        match outside {
            Some(s) => format!("{} at t = {}", s.well_class, s.t),
            None => format!("{} samples InWell", record.samples.len()),
        },
    );
    o.verdict(
        "decay",
        record.termination == Termination::ReachedFinalTime && last.l2 <= cfg.well.decay_ratio * first.l2,
        format!("||u(T)|| / ||u0|| = {:e} at T = {}", last.l2 / first.l2, last.t),
    );
    o.verdict("dissipation", dissipative(&record, cfg.control.energy_increase_tol), "E non-increasing on accepted steps");
    o.verdict(
        "equilibrium",
        last.grad_norm < 0.01 * first.grad_norm,
        format!("||grad E|| {:e} -> {:e}", first.grad_norm, last.grad_norm),
    );
    Ok(o)
}

fn dissipative(record: &TrajectoryRecord, tol: f64) -> bool {
    record.samples.windows(2).all(|w| w[1].energy <= w[0].energy + tol)
}

fn write_audit(audit: &BlowupAudit, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["step", "t", "phi", "phi_rate", "identity_rhs", "lower_rhs", "tol"])?;
    for r in &audit.rows {
        w.write_record([
            r.step.to_string(),
            r.t.to_string(),
            r.phi.to_string(),
            r.phi_rate.to_string(),
            r.identity_rhs.to_string(),
            r.lower_rhs.to_string(),
            r.tol.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn blowup_scenario(cfg: &ExperimentConfig, out: &Path) -> Result<ScenarioOutcome> {
    let ctx = cfg.context()?;
    let geo = well_depth(&ctx, &cfg.geometry_options())?;
    let probe = cfg.probe.build();
    let u0 = initial_state(cfg, &ctx, Some(&geo))?;
    let mut o = ScenarioOutcome::new(ScenarioName::Blowup);
    geometry_values(&mut o, &geo);
    let e0 = energy(&u0, &ctx)?.energy;
    o.value("initial_energy", e0);
    o.verdict("negative-energy", e0 < 0.0, format!("E(u0) = {e0}"));

    let record = run(&u0, &cfg.control, &ctx, &geo, &probe)?;
    write_record(&record, &out.join("trajectory.csv"), &mut o)?;
    o.value("termination", record.termination);
    o.value("accepted_steps", record.accepted_steps());
    o.value("rejected_steps", record.rejected_steps);
    o.value("t_max_estimate", record.t_max_estimate.map_or("none".into(), |t| t.to_string()));
    o.verdict(
        "blowup-cap",
        record.termination == Termination::BlowUpCapHit,
        format!("{} after {} steps", record.termination, record.accepted_steps()),
    );
    o.verdict(
        "phi-monotone",
        record.samples.windows(2).all(|w| w[1].phi > w[0].phi),
        "phi strictly increasing on accepted steps",
    );
    o.verdict("dissipation", dissipative(&record, cfg.control.energy_increase_tol), "E non-increasing on accepted steps");
    if e0 < 0.0 {
        match blowup_inequality_audit(&record, &ctx, e0) {
            Ok(audit) => {
                let path = out.join("audit.csv");
                write_audit(&audit, &path)?;
                o.artifacts.push(path);
                let c = audit.c_tilde.unwrap_or(f64::NAN);
                o.value("c_tilde", c);
                o.value("t_max_extrapolated", audit.t_max_extrapolated.map_or("none".into(), |t| t.to_string()));
                o.verdict("audit", true, format!("{} steps, C = {c}", audit.rows.len()));
            }
            Err(Error::AuditFailed { step, reason }) => o.verdict("audit", false, format!("step {step}: {reason}")),
            Err(e) => return Err(e),
        }
    }

    let factor = cfg.blowup.exterior_factor;
    let ext = run(&geo.minimizer.scaled(factor), &cfg.control, &ctx, &geo, &probe)?;
    write_record(&ext, &out.join("exterior_trajectory.csv"), &mut o)?;
    o.verdict(
        "exterior-invariance",
        exterior_invariance_check(&ext),
        format!("u0 = {factor} w, {} samples, {}", ext.samples.len(), ext.termination),
    );
    Ok(o)
}

/// Number of sign changes of `I(t u)` over `t` on a geometric grid.
pub fn sign_changes(ray: &RayProfile, ts: &[f64]) -> usize {
    let signs: Vec<bool> = ts.iter().map(|&t| ray.nehari(t) > 0.0).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// `points` values geometrically spaced over `[center / spread, center * spread]`.
pub fn log_grid(center: f64, spread: f64, points: usize) -> Vec<f64> {
    let (lo, hi) = ((center / spread).ln(), (center * spread).ln());
    (0..points).map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp()).collect()
}

fn sweep_scenario(cfg: &ExperimentConfig, out: &Path) -> Result<ScenarioOutcome> {
    let ctx = cfg.context()?;
    let grid = ctx.grid().clone();
    let field = ctx.field();
    let closed_form = match (&field.p, &field.q) {
        (crate::exponent::PairExponent::Constant(p), crate::exponent::PointExponent::Constant(q)) => Some((*p, *q)),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut states = vec![
        ("bump".to_string(), GridFunction::from_fn(grid.clone(), |x| 1.0 - x * x)),
        ("sine".to_string(), GridFunction::from_fn(grid.clone(), |x| (PI * (x + 1.0) / 2.0).sin())),
    ];
    for k in 0..cfg.sweep.samples {
        let vals: Vec<f64> = (0..grid.n_interior()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        states.push((format!("random-{k}"), GridFunction::from_interior(grid.clone(), &vals)?));
    }

    let path = out.join("nehari_sweep.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["sample", "lambda", "closed_form", "abs_error", "sign_changes", "lambda_projected", "ray_max_ok"])?;
    let (mut worst_closed, mut worst_proj) = (0.0_f64, 0.0_f64);
    let (mut unique, mut ray_max) = (true, true);
    for (name, u) in &states {
        let ray = RayProfile::new(u, &ctx)?;
        let lambda = ray.nehari_root()?;
        let closed = closed_form.map(|(p, q)| {
            let r = energy(u, &ctx).expect("checked above");
            (r.gagliardo_modular / r.q_modular).powf(1.0 / (q - p))
        });
        let err = closed.map(|c| (lambda - c).abs());
        if let Some(e) = err {
            worst_closed = worst_closed.max(e);
        }
        let ts = log_grid(lambda, 1e3, cfg.sweep.grid_points);
        let changes = sign_changes(&ray, &ts);
        unique &= changes == 1;
        let peak = ray.energy(lambda);
        let ok = ts.iter().all(|&t| ray.energy(t) <= peak + 1e-12 * ray.scale(lambda));
        ray_max &= ok;
        let projected = RayProfile::new(&u.scaled(lambda), &ctx)?.nehari_root()?;
        worst_proj = worst_proj.max((projected - 1.0).abs());
        w.write_record([
            name.clone(),
            lambda.to_string(),
            closed.map_or(String::new(), |c| c.to_string()),
            err.map_or(String::new(), |e| e.to_string()),
            changes.to_string(),
            projected.to_string(),
            ok.to_string(),
        ])?;
    }
    w.flush()?;

    let mut o = ScenarioOutcome::new(ScenarioName::NehariSweep);
    o.artifacts.push(path);
    o.value("samples", states.len());
    if closed_form.is_some() {
        o.value("max_closed_form_error", worst_closed);
        o.verdict("closed-form", worst_closed <= 1e-8, format!("max |lambda - closed form| = {worst_closed:e}"));
    }
    o.value("max_projection_error", worst_proj);
    o.verdict("projection", worst_proj <= 1e-8, format!("max |lambda(w) - 1| = {worst_proj:e}"));
    o.verdict("uniqueness", unique, "one sign change of I(t u) per sample");
    o.verdict("max-along-ray", ray_max, "E(lambda u) >= E(t u) on the grid");
    Ok(o)
}

/// One row of the residual-order table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub rejected: usize,
    pub residual: f64,
    /// `log2(R(2 dt) / R(dt))`, absent for the coarsest step.
    pub order: Option<f64>,
}

pub(crate) fn fixed_step_control(base: &StepControl, conv: &ConvergenceConfig, scheme: Scheme, dt: f64) -> StepControl {
    StepControl {
        dt_init: dt,
        dt_max: dt,
        dt_min: base.dt_min.min(dt),
        dt_growth: 1.0,
        max_relative_change: f64::INFINITY,
        final_time: conv.final_time,
        scheme,
        ..*base
    }
}

/// Energy-equality residual at the final time for `dt`, `dt/2`, `dt/4`.
pub fn residual_study(cfg: &ExperimentConfig, ctx: &OperatorContext, scheme: Scheme) -> Result<Vec<ConvergenceRow>> {
    let geo = well_depth(ctx, &cfg.geometry_options())?;
    let u0 = initial_state(cfg, ctx, Some(&geo))?;
    let probe = cfg.probe.build();
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for k in 0..3 {
        let dt = cfg.convergence.dt / f64::from(1 << k);
        let control = fixed_step_control(&cfg.control, &cfg.convergence, scheme, dt);
        let rec = run(&u0, &control, ctx, &geo, &probe)?;
        let residual = rec.samples.last().expect("record starts with u0").residual;
        let order = rows.last().map(|prev| (prev.residual / residual).log2());
        rows.push(ConvergenceRow {
            n: ctx.grid().n_interior(),
            dt,
            steps: rec.accepted_steps(),
            rejected: rec.rejected_steps,
            residual,
            order,
        });
    }
    Ok(rows)
}

fn convergence_scenario(cfg: &ExperimentConfig, out: &Path) -> Result<ScenarioOutcome> {
    let mut o = ScenarioOutcome::new(ScenarioName::Convergence);
    let path = out.join("convergence.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["n", "dt", "steps", "rejected", "residual", "order"])?;
    for n in [cfg.domain.n, 2 * cfg.domain.n] {
        let ctx = cfg.context_with(n)?;
        let rows = residual_study(cfg, &ctx, Scheme::ImexProximal)?;
        for r in &rows {
            w.write_record([
                r.n.to_string(),
                r.dt.to_string(),
                r.steps.to_string(),
                r.rejected.to_string(),
                r.residual.to_string(),
                r.order.map_or(String::new(), |x| x.to_string()),
            ])?;
        }
        let min_order = rows.iter().filter_map(|r| r.order).fold(f64::INFINITY, f64::min);
        let fixed = rows.iter().all(|r| r.rejected == 0);
        o.value(&format!("min_order_n{n}"), min_order);
        o.verdict(
            &format!("residual-order-n{n}"),
            min_order >= cfg.convergence.min_order && fixed,
            format!("min order {min_order:.4} (need {}), rejected steps: {}", cfg.convergence.min_order, !fixed),
        );
    }
    w.flush()?;
    o.artifacts.push(path);
    Ok(o)
}
