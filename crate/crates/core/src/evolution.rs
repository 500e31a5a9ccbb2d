//! Time integration of `u_t = -Lu + |u|^(q-2) u` with energy-based step
//! control, the discrete energy equality, and the blow-up audit.

use std::io::Write;

use crate::energy::{energy_raw, gradient_raw, reaction_raw, EnergyReport};
use crate::error::{Error, Result};
use crate::exponent::PointExponent;
use crate::grid::{inner_product_raw, l2_norm_raw, GridFunction};
use crate::modular::{luxemburg_from_terms, pow_abs, PowerSum, DEFAULT_TOL};
use crate::operator::OperatorContext;
use crate::well::{classify_report, WellClass, WellGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Explicit,
    ImexProximal,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub final_time: f64,
    /// Allowed energy increase per accepted step.
    pub energy_increase_tol: f64,
    /// Threshold on `||u||_2`.
    pub blowup_cap: f64,
    pub max_steps: usize,
    pub scheme: Scheme,
    /// Factor applied to `dt` after each accepted step.
    pub dt_growth: f64,
    /// Steps with `||u+ - u||_2 > max_relative_change * ||u||_2` are rejected.
    pub max_relative_change: f64,
    pub inner_tol: f64,
    pub inner_max: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            dt_min: 1e-13,
            dt_max: 0.05,
            final_time: 2.0,
            energy_increase_tol: 1e-10,
            blowup_cap: 1e6,
            max_steps: 200_000,
            scheme: Scheme::Explicit,
            dt_growth: 1.1,
            max_relative_change: 0.1,
            inner_tol: 1e-10,
            inner_max: 500,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_init
            && self.dt_init <= self.dt_max
            && self.blowup_cap > 0.0
            && self.final_time > 0.0
            && self.dt_growth >= 1.0
            && self.max_relative_change > 0.0
            && self.inner_tol > 0.0
            && self.inner_max > 0
            && self.energy_increase_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid step control {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: GridFunction,
    pub report: EnergyReport,
    /// `||u||_2^2 / 2`
    pub phi: f64,
}

impl SimState {
    pub fn new(t: f64, u: GridFunction, ctx: &OperatorContext) -> Result<Self> {
        ctx.check(&u)?;
        let report = energy_raw(ctx, u.interior());
        Ok(Self { t, phi: 0.5 * report.l2 * report.l2, u, report })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedFinalTime,
    BlowUpCapHit,
    StepUnderflow,
    MaxSteps,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ReachedFinalTime => "ReachedFinalTime",
            Termination::BlowUpCapHit => "BlowUpCapHit",
            Termination::StepUnderflow => "StepUnderflow",
            Termination::MaxSteps => "MaxSteps",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One recorded state. `dt` and `rate` describe the step that produced it
/// and are zero at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    pub nehari: f64,
    pub phi: f64,
    pub l2: f64,
    pub lux_r: f64,
    pub modular_sp: f64,
    pub modular_q: f64,
    pub well_class: WellClass,
    /// Energy-equality residual `R_n`.
    pub residual: f64,
    /// `||Lu - |u|^(q-2) u||_2`
    pub grad_norm: f64,
    /// `||u_n - u_(n-1)||_2 / dt`
    pub rate: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 11] =
    ["t", "dt", "E", "I", "phi", "l2", "lux_r", "modular_sp", "modular_q", "well_class", "residual"];

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    /// Last time reached when the cap was hit.
    pub t_max_estimate: Option<f64>,
    pub final_state: GridFunction,
    pub rejected_steps: usize,
}

impl TrajectoryRecord {
    pub fn energy_residuals(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.residual).collect()
    }

    pub fn accepted_steps(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }

    /// CSV with one row per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trajectory_csv(&self.samples, out)
    }
}

pub fn write_trajectory_csv<W: Write>(samples: &[Sample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    for s in samples {
        w.write_record([
            s.t.to_string(),
            s.dt.to_string(),
            s.energy.to_string(),
            s.nehari.to_string(),
            s.phi.to_string(),
            s.l2.to_string(),
            s.lux_r.to_string(),
            s.modular_sp.to_string(),
            s.modular_q.to_string(),
            s.well_class.to_string(),
            s.residual.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn advance(state: &SimState, next: Vec<f64>, dt: f64, ctx: &OperatorContext) -> Result<SimState> {
    if let Some(bad) = next.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(*bad));
    }
    let u = GridFunction::from_interior(ctx.grid().clone(), &next)?;
    SimState::new(state.t + dt, u, ctx)
}

/// `u+ = u - dt (Lu - |u|^(q-2) u)`
pub fn step_explicit(state: &SimState, dt: f64, ctx: &OperatorContext) -> Result<SimState> {
    check_dt(dt)?;
    ctx.check(&state.u)?;
    let u = state.u.interior();
    let g = gradient_raw(ctx, u);
    let next = u.iter().zip(&g).map(|(v, gi)| v - dt * gi).collect();
    advance(state, next, dt, ctx)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time step {dt}")))
    }
}

/// `||v - u||^2 / (2 dt) + I1(v) - <f, v>`
fn proximal_objective(ctx: &OperatorContext, v: &[f64], u: &[f64], f: &[f64], dt: f64) -> f64 {
    let ws = ctx.grid().interior_widths();
    let diff: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - b).collect();
    let d2 = inner_product_raw(&diff, &diff, ws);
    d2 / (2.0 * dt) + ctx.nonlocal_parts_raw(v).0 - inner_product_raw(f, v, ws)
}

fn proximal_gradient(ctx: &OperatorContext, v: &[f64], u: &[f64], f: &[f64], dt: f64) -> Vec<f64> {
    let lv = ctx.apply_raw(v);
    v.iter()
        .zip(u)
        .zip(lv.iter().zip(f))
        .map(|((a, b), (l, fi))| (a - b) / dt + l - fi)
        .collect()
}

/// Proximal step, implicit in `L` and explicit in the reaction. The
/// objective is minimized by gradient iteration with Barzilai-Borwein steps
/// and monotone backtracking.
pub fn step_imex(state: &SimState, dt: f64, ctx: &OperatorContext, inner_tol: f64, inner_max: usize) -> Result<SimState> {
    check_dt(dt)?;
    ctx.check(&state.u)?;
    let ws = ctx.grid().interior_widths();
    let u = state.u.interior();
    let f = reaction_raw(ctx, u);
    let scale = l2_norm_raw(u, ws) / dt + l2_norm_raw(&f, ws) + f64::MIN_POSITIVE;

    let mut v = u.to_vec();
    let mut obj = proximal_objective(ctx, &v, u, &f, dt);
    let predictor: Vec<f64> = {
        let g = gradient_raw(ctx, u);
        u.iter().zip(&g).map(|(a, gi)| a - dt * gi).collect()
    };
    if predictor.iter().all(|x| x.is_finite()) {
        let po = proximal_objective(ctx, &predictor, u, &f, dt);
        if po <= obj {
            v = predictor;
            obj = po;
        }
    }
    let mut grad = proximal_gradient(ctx, &v, u, &f, dt);
    let mut alpha = dt;
    let mut iterations = 0;
    loop {
        let gnorm = l2_norm_raw(&grad, ws);
        if gnorm <= inner_tol * scale {
            break;
        }
        if !obj.is_finite() {
            return Err(Error::NonFinite(obj));
        }
        iterations += 1;
        if iterations > inner_max {
            return Err(Error::InnerSolveStalled { iterations: inner_max, residual: gnorm / scale });
        }
        let g2 = gnorm * gnorm;
        let mut trial_alpha = alpha;
        let (trial, trial_obj, new_grad) = loop {
            let trial: Vec<f64> = v.iter().zip(&grad).map(|(a, g)| a - trial_alpha * g).collect();
            let to = proximal_objective(ctx, &trial, u, &f, dt);
            if to <= obj - 1e-4 * trial_alpha * g2 {
                let ng = proximal_gradient(ctx, &trial, u, &f, dt);
                break (trial, to, ng);
            }
            // below the rounding level of the objective, progress is judged by the gradient
            if to <= obj + 1e-12 * (1.0 + obj.abs()) {
                let ng = proximal_gradient(ctx, &trial, u, &f, dt);
                if l2_norm_raw(&ng, ws) < gnorm {
                    break (trial, to.min(obj), ng);
                }
            }
            trial_alpha *= 0.5;
            if trial_alpha * gnorm < 1e-18 * (1.0 + l2_norm_raw(&v, ws)) {
                return Err(Error::InnerSolveStalled { iterations, residual: gnorm / scale });
            }
        };
        let s: Vec<f64> = trial.iter().zip(&v).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = inner_product_raw(&s, &y, ws);
        // the objective's Hessian is at least 1/dt, so useful steps are at most dt
        alpha = if sy > 0.0 { inner_product_raw(&s, &s, ws) / sy } else { dt };
        alpha = alpha.clamp(1e-6 * dt, dt);
        v = trial;
        obj = trial_obj;
        grad = new_grad;
    }
    advance(state, v, dt, ctx)
}

fn lux_probe(ctx: &OperatorContext, u: &[f64], r: &[f64]) -> f64 {
    let ws = ctx.grid().interior_widths();
    let terms = PowerSum::new(u.iter().zip(r).zip(ws).map(|((&v, &e), &w)| (pow_abs(v, e) * w, e)));
    luxemburg_from_terms(&terms, terms.total().max(1.0), DEFAULT_TOL).luxemburg_norm
}

/// Integrate from `u0` until the final time, the blow-up cap, the step
/// budget, or step underflow. A step is rejected and `dt` halved when `E`
/// rises by more than the tolerance, the relative change exceeds its bound,
/// or the inner solve stalls.
pub fn run(
    u0: &GridFunction,
    control: &StepControl,
    ctx: &OperatorContext,
    geometry: &WellGeometry,
    r_probe: &PointExponent,
) -> Result<TrajectoryRecord> {
    control.validate()?;
    ctx.check(u0)?;
    let ws = ctx.grid().interior_widths();
    let r: Vec<f64> = ctx.grid().interior_centers().iter().map(|&x| r_probe.eval(x)).collect();
    if let Some((x, value)) = ctx.grid().interior_centers().iter().zip(&r).find(|(_, v)| **v <= 1.0) {
        return Err(Error::ExponentOutOfRange { x: *x, value: *value });
    }
    let depth = geometry.depth_hat;
    let tol = geometry.nehari_tol;
    let sample = |state: &SimState, dt: f64, rate: f64, residual: f64| {
        let u = state.u.interior();
        let rep = &state.report;
        Sample {
            t: state.t,
            dt,
            energy: rep.energy,
            nehari: rep.nehari,
            phi: state.phi,
            l2: rep.l2,
            lux_r: lux_probe(ctx, u, &r),
            modular_sp: rep.gagliardo_modular,
            modular_q: rep.q_modular,
            well_class: classify_report(rep, u.iter().all(|&v| v == 0.0), depth, tol),
            residual,
            grad_norm: l2_norm_raw(&gradient_raw(ctx, u), ws),
            rate,
        }
    };

    let mut state = SimState::new(0.0, u0.clone(), ctx)?;
    let e0 = state.report.energy;
    let mut samples = vec![sample(&state, 0.0, 0.0, 0.0)];
    let mut dissipation = 0.0;
    let mut dt = control.dt_init;
    let mut rejected = 0;
    let t_end = control.final_time;
    let termination = loop {
        if state.report.l2 >= control.blowup_cap {
            break Termination::BlowUpCapHit;
        }
        let remaining = t_end - state.t;
        if remaining <= 1e-12 * t_end {
            break Termination::ReachedFinalTime;
        }
        if samples.len() > control.max_steps {
            break Termination::MaxSteps;
        }
        if dt < control.dt_min {
            break Termination::StepUnderflow;
        }
        let h = dt.min(control.dt_max).min(remaining);
        let attempt = match control.scheme {
            Scheme::Explicit => step_explicit(&state, h, ctx),
            Scheme::ImexProximal => step_imex(&state, h, ctx, control.inner_tol, control.inner_max),
        };
        let next = match attempt {
            Ok(next) => next,
            Err(Error::NonFinite(_)) | Err(Error::InnerSolveStalled { .. }) => {
                rejected += 1;
                dt = 0.5 * h;
                continue;
            }
            Err(e) => return Err(e),
        };
        let change = l2_norm_raw(
            &next.u.interior().iter().zip(state.u.interior()).map(|(a, b)| a - b).collect::<Vec<_>>(),
            ws,
        );
        let rises = next.report.energy > state.report.energy + control.energy_increase_tol;
        if rises || change > control.max_relative_change * state.report.l2 {
            rejected += 1;
            dt = 0.5 * h;
            continue;
        }
        dissipation += change * change / h;
        let residual = (dissipation + next.report.energy - e0).abs();
        samples.push(sample(&next, h, change / h, residual));
        state = next;
        dt = h * control.dt_growth;
    };
    let t_max_estimate = (termination == Termination::BlowUpCapHit).then_some(state.t);
    Ok(TrajectoryRecord { samples, termination, t_max_estimate, final_state: state.u, rejected_steps: rejected })
}

/// Per-step outcome of the blow-up audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub step: usize,
    pub t: f64,
    pub phi: f64,
    /// Forward difference `(phi_(n+1) - phi_n) / dt`.
    pub phi_rate: f64,
    /// `rho_q(u_n) - rho_{s,p}(u_n)`
    pub identity_rhs: f64,
    /// `-p+ E0 + (1 - p+/q-) rho_q(u_n)`
    pub lower_rhs: f64,
    pub tol: f64,
    pub identity_ok: bool,
    pub lower_ok: bool,
}

#[derive(Debug, Clone)]
pub struct BlowupAudit {
    pub rows: Vec<AuditRow>,
    /// Infimum of `phi' / phi^(q+/2)` over audited steps with `phi > 1`.
    pub c_tilde: Option<f64>,
    /// Last time plus the blow-up time of `phi' = c_tilde phi^(q+/2)`.
    pub t_max_extrapolated: Option<f64>,
}

/// Check, for every accepted step, the identity `phi' = -rho_{s,p} + rho_q`
/// and the lower bound `phi' >= -p+ E0 + (1 - p+/q-) rho_q`, each with
/// tolerance `5 dt max(||grad E||^2, ||du/dt||^2)`, and that `phi` exceeds one
/// with a positive growth constant thereafter.
pub fn blowup_inequality_audit(record: &TrajectoryRecord, ctx: &OperatorContext, e0: f64) -> Result<BlowupAudit> {
    if !(e0 < 0.0) {
        return Err(Error::InvalidParameter(format!("audit needs E(u0) < 0, got {e0}")));
    }
    let field = ctx.field();
    let (p_plus, q_minus, q_plus) = {
        let domain = ctx.grid().domain();
        let (_, p_plus) = field.p.declared_bounds(domain);
        let (q_minus, q_plus) = field.q.declared_bounds(domain.a, domain.b);
        (p_plus, q_minus, q_plus)
    };
    let c1 = 1.0 - p_plus / q_minus;
    let mut rows = Vec::with_capacity(record.samples.len());
    let mut c_tilde: Option<f64> = None;
    for (n, pair) in record.samples.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let phi_rate = (b.phi - a.phi) / b.dt;
        let tol = 5.0 * b.dt * a.grad_norm.powi(2).max(b.rate.powi(2));
        let identity_rhs = a.modular_q - a.modular_sp;
        let lower_rhs = -p_plus * e0 + c1 * a.modular_q;
        let row = AuditRow {
            step: n,
            t: a.t,
            phi: a.phi,
            phi_rate,
            identity_rhs,
            lower_rhs,
            tol,
            identity_ok: (phi_rate - identity_rhs).abs() <= tol,
            lower_ok: phi_rate >= lower_rhs - tol,
        };
        if !row.identity_ok {
            return Err(Error::AuditFailed {
                step: n,
                reason: format!("phi' = {phi_rate} differs from rho_q - rho_sp = {identity_rhs} by more than {tol}"),
            });
        }
        if !row.lower_ok {
            return Err(Error::AuditFailed {
                step: n,
                reason: format!("phi' = {phi_rate} below -p+ E0 + c1 rho_q = {lower_rhs} (tol {tol})"),
            });
        }
        if a.phi > 1.0 {
            let ratio = phi_rate / a.phi.powf(q_plus / 2.0);
            c_tilde = Some(c_tilde.map_or(ratio, |c| c.min(ratio)));
        }
        rows.push(row);
    }
    let c = match c_tilde {
        Some(c) if c > 0.0 => c,
        Some(c) => {
            return Err(Error::AuditFailed { step: rows.len(), reason: format!("growth constant {c} is not positive") })
        }
        None => return Err(Error::AuditFailed { step: rows.len(), reason: "phi never exceeds 1".into() }),
    };
    let last = record.samples.last().expect("audited record is non-empty");
    let a = q_plus / 2.0;
    let t_max_extrapolated = Some(last.t + last.phi.powf(1.0 - a) / (c * (a - 1.0)));
    Ok(BlowupAudit { rows, c_tilde: Some(c), t_max_extrapolated })
}

/// True iff every sample is classified `InExterior`. An empty record is
/// vacuously true; a record that does not start in the exterior is false.
pub fn exterior_invariance_check(record: &TrajectoryRecord) -> bool {
    let Some(first) = record.samples.first() else {
        log::warn!("exterior invariance check on an empty record");
        return true;
    };
    if first.well_class != WellClass::InExterior {
        log::warn!("exterior invariance check: initial state is {}, not InExterior", first.well_class);
        return false;
    }
    record.samples.iter().all(|s| s.well_class == WellClass::InExterior)
}
