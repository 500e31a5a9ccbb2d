//! Potential-well geometry: the embedding constant `Lambda`, the depth
//! `d = inf_N E`, the lower-bound constant `R`, and the classification of
//! states against the well, its exterior and the Nehari manifold.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{energy_raw, gradient_raw, RayProfile};
use crate::error::Result;
use crate::exponent::{validate_assumptions, ExponentSummary};
use crate::grid::{l2_norm_raw, GridFunction};
use crate::modular::{luxemburg_from_terms, pow_abs, PowerSum};

// Tight enough for finite differences of the quotient.
const QUOTIENT_TOL: f64 = 1e-15;
use crate::operator::{signed_pow, OperatorContext};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryOptions {
    pub n_starts: usize,
    pub iters: usize,
    /// Relative Nehari tolerance.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self { n_starts: 8, iters: 500, tol: 1e-9, seed: 7 }
    }
}

#[derive(Debug, Clone)]
pub struct WellGeometry {
    /// Estimated embedding constant (an overestimate: infimum over a subset).
    pub lambda_hat: f64,
    pub r_hat: f64,
    pub depth_hat: f64,
    pub minimizer: GridFunction,
    /// `(1/p+ - 1/q-) R_hat`
    pub lower_bound: f64,
    pub summary: ExponentSummary,
    pub nehari_tol: f64,
    /// Set when no start made any descent progress.
    pub descent_stalled: bool,
    /// Minimizer of the embedding quotient.
    pub quotient_minimizer: GridFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WellClass {
    InWell,
    InExterior,
    OnNehari,
    AboveWell,
}

impl WellClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            WellClass::InWell => "InWell",
            WellClass::InExterior => "InExterior",
            WellClass::OnNehari => "OnNehari",
            WellClass::AboveWell => "AboveWell",
        }
    }
}

impl std::fmt::Display for WellClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Seminorm and `q`-norm of a state, with their gradients.
struct QuotientEval {
    value: f64,
    seminorm: f64,
    qnorm: f64,
}

fn q_terms(ctx: &OperatorContext, u: &[f64]) -> PowerSum {
    let ws = ctx.grid().interior_widths();
    PowerSum::new(u.iter().zip(ctx.q_interior()).zip(ws).map(|((&v, &q), &w)| (pow_abs(v, q) * w, q)))
}

/// `sum c e lambda^(-e)`
fn weighted_exponent_sum(terms: &PowerSum, lambda: f64) -> f64 {
    terms.terms().iter().map(|(c, e)| c * e * lambda.powf(-e)).sum()
}

fn quotient_value(ctx: &OperatorContext, u: &[f64]) -> QuotientEval {
    let sp = ctx.gagliardo_power_sum_raw(u);
    let qs = q_terms(ctx, u);
    let seminorm = luxemburg_from_terms(&sp, sp.total().max(1.0), QUOTIENT_TOL).luxemburg_norm;
    let qnorm = luxemburg_from_terms(&qs, qs.total().max(1.0), QUOTIENT_TOL).luxemburg_norm;
    QuotientEval { value: seminorm / qnorm, seminorm, qnorm }
}

/// Gradient of `[u]_{s,p} / ||u||_q` in the measure-weighted inner product,
/// by implicit differentiation of `rho(u / lambda) = 1`.
fn quotient_gradient(ctx: &OperatorContext, u: &[f64], at: &QuotientEval) -> Vec<f64> {
    let sp = ctx.gagliardo_power_sum_raw(u);
    let qs = q_terms(ctx, u);
    let (ls, lq) = (at.seminorm, at.qnorm);
    let ds = weighted_exponent_sum(&sp, ls);
    let dq = weighted_exponent_sum(&qs, lq);
    // weighted gradient of rho_{s,p}(u / ls) w.r.t. u, divided by the cell width
    let semi = ctx.apply_weighted_raw(u, |p| p * ls.powf(-p));
    u.iter()
        .zip(ctx.q_interior())
        .zip(semi)
        .map(|((&v, &q), a)| {
            let grad_s = ls * a / ds;
            let grad_q = lq * q * signed_pow(v, q) * lq.powf(-q) / dq;
            (grad_s - at.value * grad_q) / lq
        })
        .collect()
}

fn normalize(ctx: &OperatorContext, u: &mut [f64]) {
    let norm = l2_norm_raw(u, ctx.grid().interior_widths());
    if norm > 0.0 {
        u.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Embedding quotient `[u]_{s,p} / ||u||_{q}`.
pub fn embedding_quotient(u: &GridFunction, ctx: &OperatorContext) -> Result<f64> {
    ctx.check(u)?;
    Ok(quotient_value(ctx, u.interior()).value)
}

/// Bump `(1 - x^2)_+` rescaled to the domain, the first sine mode, then
/// uniform random cell values in `[-1, 1]`.
pub fn structured_starts(ctx: &OperatorContext, n_starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let grid = ctx.grid();
    let d = grid.domain();
    let (mid, half) = ((d.a + d.b) / 2.0, (d.b - d.a) / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(n_starts);
    for k in 0..n_starts.max(1) {
        let u: Vec<f64> = match k {
            0 => grid.interior_centers().iter().map(|&x| (1.0 - ((x - mid) / half).powi(2)).max(0.0)).collect(),
            1 => grid.interior_centers().iter().map(|&x| (PI * (x - d.a) / (d.b - d.a)).sin()).collect(),
            _ => (0..grid.n_interior()).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        };
        starts.push(u);
    }
    starts
}

/// Normalized gradient descent on the quotient from one start.
fn minimize_quotient(ctx: &OperatorContext, start: Vec<f64>, iters: usize) -> (f64, Vec<f64>) {
    let mut u = start;
    normalize(ctx, &mut u);
    let mut cur = quotient_value(ctx, &u);
    let mut step = 0.1;
    for _ in 0..iters {
        let g = quotient_gradient(ctx, &u, &cur);
        let gnorm = l2_norm_raw(&g, ctx.grid().interior_widths());
        if !(gnorm > 0.0) {
            break;
        }
        let mut accepted = false;
        while step > 1e-14 {
            let mut trial: Vec<f64> = u.iter().zip(&g).map(|(v, gi)| v - step * gi / gnorm).collect();
            normalize(ctx, &mut trial);
            let val = quotient_value(ctx, &trial);
            if val.value < cur.value {
                u = trial;
                cur = val;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (cur.value, u)
}

/// Minimum of the embedding quotient over `n_starts` descents. The result
/// is an upper estimate of the discrete embedding constant.
pub fn estimate_embedding_constant(ctx: &OperatorContext, n_starts: usize, iters: usize, seed: u64) -> (f64, GridFunction) {
    let starts = structured_starts(ctx, n_starts, seed);
    let runs: Vec<(f64, Vec<f64>)> = starts
        .into_par_iter()
        .map(|s| minimize_quotient(ctx, s, iters))
        .collect();
    let (value, u) = runs
        .into_iter()
        .fold((f64::INFINITY, Vec::new()), |best, r| if r.0 < best.0 { r } else { best });
    (value, GridFunction::from_interior(ctx.grid().clone(), &u).expect("sized from grid"))
}

/// `R = max(Lambda^(q(q/p - 1)))` over `q in {q+, q-}`, `p in {p-, p+}`.
pub fn bound_constant(lambda: f64, s: &ExponentSummary) -> f64 {
    let mut r = f64::NEG_INFINITY;
    for q in [s.q_plus, s.q_minus] {
        for p in [s.p_minus, s.p_plus] {
            r = r.max(lambda.powf(q * (q / p - 1.0)));
        }
    }
    r
}

struct DescentRun {
    energy: f64,
    state: Vec<f64>,
    accepted: usize,
}

fn project(ray_src: &OperatorContext, u: &[f64]) -> Option<Vec<f64>> {
    let ray = RayProfile::from_raw(ray_src, u);
    let lambda = ray.nehari_root().ok()?;
    Some(u.iter().map(|v| v * lambda).collect())
}

/// Projected gradient descent of `E` on the Nehari manifold.
fn descend_on_nehari(ctx: &OperatorContext, start: &[f64], iters: usize) -> Option<DescentRun> {
    let mut w = project(ctx, start)?;
    let mut e = energy_raw(ctx, &w).energy;
    let widths = ctx.grid().interior_widths();
    let mut step = f64::NAN;
    let mut accepted = 0;
    for _ in 0..iters {
        let g = gradient_raw(ctx, &w);
        let gnorm = l2_norm_raw(&g, widths);
        if !(gnorm > 0.0) {
            break;
        }
        if step.is_nan() {
            step = 0.1 * l2_norm_raw(&w, widths) / gnorm;
        }
        let mut moved = false;
        while step * gnorm > 1e-15 * l2_norm_raw(&w, widths) {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(v, gi)| v - step * gi).collect();
            if let Some(proj) = project(ctx, &trial) {
                let pe = energy_raw(ctx, &proj).energy;
                if pe < e {
                    w = proj;
                    e = pe;
                    step *= 1.5;
                    moved = true;
                    accepted += 1;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Some(DescentRun { energy: e, state: w, accepted })
}

/// Depth of the potential well by multi-start projected descent, together
/// with `Lambda_hat`, `R_hat` and the lower bound `(1/p+ - 1/q-) R_hat`.
///
/// Starts are the bump, the sine mode, random states, and the minimizer of
/// the embedding quotient.
pub fn well_depth(ctx: &OperatorContext, opts: &GeometryOptions) -> Result<WellGeometry> {
    let summary = validate_assumptions(ctx.field(), ctx.grid().domain(), 256)?;
    let (lambda_hat, quotient_minimizer) = estimate_embedding_constant(ctx, opts.n_starts, opts.iters, opts.seed);
    let mut starts = structured_starts(ctx, opts.n_starts, opts.seed);
    starts.push(quotient_minimizer.interior().to_vec());
    let runs: Vec<DescentRun> = starts
        .par_iter()
        .filter_map(|s| descend_on_nehari(ctx, s, opts.iters))
        .collect();
    let descent_stalled = runs.iter().all(|r| r.accepted == 0);
    if descent_stalled {
        log::warn!("no descent progress on the Nehari manifold from any start");
    }
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.energy < a.energy { b } else { a })
        .ok_or(crate::error::Error::ZeroFunction)?;
    let r_hat = bound_constant(lambda_hat, &summary);
    let lower_bound = (1.0 / summary.p_plus - 1.0 / summary.q_minus) * r_hat;
    Ok(WellGeometry {
        lambda_hat,
        r_hat,
        depth_hat: best.energy,
        minimizer: GridFunction::from_interior(ctx.grid().clone(), &best.state)?,
        lower_bound,
        summary,
        nehari_tol: opts.tol,
        descent_stalled,
        quotient_minimizer,
    })
}

/// Classify `u` against the well `{E < d, I > 0} U {0}`, its exterior
/// `{E < d, I < 0}` and the Nehari manifold `{I = 0, u != 0}`.
pub fn classify(u: &GridFunction, geometry: &WellGeometry, ctx: &OperatorContext) -> Result<WellClass> {
    ctx.check(u)?;
    Ok(classify_raw(ctx, u.interior(), geometry.depth_hat, geometry.nehari_tol))
}

pub(crate) fn classify_report(r: &crate::energy::EnergyReport, is_zero: bool, depth: f64, tol: f64) -> WellClass {
    if is_zero {
        WellClass::InWell
    } else if r.nehari.abs() <= tol * r.scale() {
        WellClass::OnNehari
    } else if r.energy >= depth {
        WellClass::AboveWell
    } else if r.nehari > 0.0 {
        WellClass::InWell
    } else {
        WellClass::InExterior
    }
}

pub(crate) fn classify_raw(ctx: &OperatorContext, u: &[f64], depth: f64, tol: f64) -> WellClass {
    let r = energy_raw(ctx, u);
    classify_report(&r, u.iter().all(|&v| v == 0.0), depth, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::ExponentField;
    use crate::grid::{build_grid, Domain};
    use std::sync::Arc;

    fn ctx(n: usize) -> OperatorContext {
        let g = Arc::new(build_grid(Domain::new(-1.0, 1.0, 8.0).unwrap(), n, 32).unwrap());
        OperatorContext::new(g, ExponentField::constant(2.0, 3.0, 0.4).unwrap())
    }

    #[test]
    fn quotient_is_scale_invariant() {
        let c = ctx(16);
        let u = GridFunction::from_fn(c.grid().clone(), |x| (1.0 - x * x) * (1.0 + 0.5 * x));
        let a = embedding_quotient(&u, &c).unwrap();
        for k in [1e-3, 0.5, 7.0, 300.0] {
            let b = embedding_quotient(&u.scaled(k), &c).unwrap();
            assert!((a - b).abs() < 1e-8 * a);
        }
    }

    #[test]
    fn quotient_gradient_matches_finite_differences() {
        let c = ctx(8);
        let u: Vec<f64> = vec![0.2, 0.5, 0.9, 1.0, 0.8, 0.7, 0.3, 0.1];
        let at = quotient_value(&c, &u);
        let g = quotient_gradient(&c, &u, &at);
        let w = c.grid().interior_width();
        for i in 0..u.len() {
            let h = 1e-5;
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (quotient_value(&c, &up).value - quotient_value(&c, &dn).value) / (2.0 * h);
            assert!((fd - w * g[i]).abs() < 1e-5 * fd.abs().max(1e-3), "i={i}: {fd} vs {}", w * g[i]);
        }
    }

    #[test]
    fn estimate_does_not_exceed_the_bump_quotient() {
        let c = ctx(16);
        let (lambda, _) = estimate_embedding_constant(&c, 3, 100, 1);
        let bump = GridFunction::from_fn(c.grid().clone(), |x| 1.0 - x * x);
        assert!(lambda <= embedding_quotient(&bump, &c).unwrap());
    }

    #[test]
    fn classification_along_the_minimizer_ray() {
        let c = ctx(16);
        let geo = well_depth(&c, &GeometryOptions { n_starts: 3, iters: 200, tol: 1e-9, seed: 3 }).unwrap();
        assert!(geo.depth_hat > 0.0);
        let z = GridFunction::zeros(c.grid().clone());
        assert_eq!(classify(&z, &geo, &c).unwrap(), WellClass::InWell);
        assert_eq!(classify(&geo.minimizer, &geo, &c).unwrap(), WellClass::OnNehari);
        assert_eq!(classify(&geo.minimizer.scaled(0.5), &geo, &c).unwrap(), WellClass::InWell);
        assert_eq!(classify(&geo.minimizer.scaled(2.0), &geo, &c).unwrap(), WellClass::InExterior);
    }

    #[test]
    fn bound_constant_takes_the_largest_branch() {
        let s = ExponentSummary {
            p_minus: 2.0,
            p_plus: 2.0,
            q_minus: 3.0,
            q_plus: 3.0,
            min_critical_bound: 6.0,
            min_critical_exponent: 10.0,
        };
        assert!((bound_constant(4.0, &s) - 8.0).abs() < 1e-12);
    }
}
