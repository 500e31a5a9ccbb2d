//! Energy `E`, Nehari functional `I`, the full gradient of `E`, and the
//! scaling of a state onto the Nehari manifold along its ray.

use crate::error::{Error, Result};
use crate::grid::{l2_norm_raw, GridFunction};
use crate::modular::{pow_abs, PowerSum};
use crate::operator::{signed_pow, OperatorContext};

pub const DEFAULT_NEHARI_TOL: f64 = 1e-9;

/// Energy quantities of one state, all from the same pair table and
/// quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// `E(u) = I1(u) - int |u|^q / q`
    pub energy: f64,
    /// `I(u) = rho_{s,p}(u) - rho_q(u)`
    pub nehari: f64,
    pub gagliardo_modular: f64,
    pub q_modular: f64,
    pub l2: f64,
}

impl EnergyReport {
    /// Magnitude used to make Nehari tolerances relative.
    pub fn scale(&self) -> f64 {
        self.gagliardo_modular + self.q_modular
    }
}

/// `(rho_q(u), int |u|^q / q)`
fn reaction_parts(ctx: &OperatorContext, u: &[f64]) -> (f64, f64) {
    let ws = ctx.grid().interior_widths();
    u.iter()
        .zip(ctx.q_interior())
        .zip(ws)
        .fold((0.0, 0.0), |(rho, pot), ((&v, &q), &w)| {
            let t = pow_abs(v, q) * w;
            (rho + t, pot + t / q)
        })
}

pub(crate) fn energy_raw(ctx: &OperatorContext, u: &[f64]) -> EnergyReport {
    let (i1, rho_sp) = ctx.nonlocal_parts_raw(u);
    let (rho_q, potential) = reaction_parts(ctx, u);
    EnergyReport {
        energy: i1 - potential,
        nehari: rho_sp - rho_q,
        gagliardo_modular: rho_sp,
        q_modular: rho_q,
        l2: l2_norm_raw(u, ctx.grid().interior_widths()),
    }
}

pub fn energy(u: &GridFunction, ctx: &OperatorContext) -> Result<EnergyReport> {
    ctx.check(u)?;
    Ok(energy_raw(ctx, u.interior()))
}

/// `|u|^(q-2) u` on interior cells.
pub(crate) fn reaction_raw(ctx: &OperatorContext, u: &[f64]) -> Vec<f64> {
    u.iter().zip(ctx.q_interior()).map(|(&v, &q)| signed_pow(v, q)).collect()
}

pub(crate) fn gradient_raw(ctx: &OperatorContext, u: &[f64]) -> Vec<f64> {
    let mut g = ctx.apply_raw(u);
    for (gi, fi) in g.iter_mut().zip(reaction_raw(ctx, u)) {
        *gi -= fi;
    }
    g
}

/// `Lu - |u|^(q-2) u`, the gradient of `E` in the measure-weighted inner
/// product.
pub fn energy_gradient(u: &GridFunction, ctx: &OperatorContext) -> Result<GridFunction> {
    ctx.check(u)?;
    GridFunction::from_interior(ctx.grid().clone(), &gradient_raw(ctx, u.interior()))
}

/// `E` and `I` along the ray `t -> t u` as sums of powers of `t`.
#[derive(Debug, Clone)]
pub struct RayProfile {
    nonlocal: PowerSum,
    reaction: PowerSum,
}

impl RayProfile {
    pub fn new(u: &GridFunction, ctx: &OperatorContext) -> Result<Self> {
        ctx.check(u)?;
        Ok(Self::from_raw(ctx, u.interior()))
    }

    pub(crate) fn from_raw(ctx: &OperatorContext, u: &[f64]) -> Self {
        let ws = ctx.grid().interior_widths();
        let reaction = PowerSum::new(
            u.iter().zip(ctx.q_interior()).zip(ws).map(|((&v, &q), &w)| (pow_abs(v, q) * w, q)),
        );
        Self { nonlocal: ctx.gagliardo_power_sum_raw(u), reaction }
    }

    pub fn is_zero(&self) -> bool {
        self.nonlocal.is_empty() && self.reaction.is_empty()
    }

    /// `I(t u)`
    pub fn nehari(&self, t: f64) -> f64 {
        self.nonlocal.eval(t) - self.reaction.eval(t)
    }

    /// `E(t u)`
    pub fn energy(&self, t: f64) -> f64 {
        let part = |s: &PowerSum| s.terms().iter().map(|(c, e)| c / e * t.powf(*e)).sum::<f64>();
        part(&self.nonlocal) - part(&self.reaction)
    }

    /// `rho_{s,p}(t u) + rho_q(t u)`
    pub fn scale(&self, t: f64) -> f64 {
        self.nonlocal.eval(t) + self.reaction.eval(t)
    }

    /// The unique `t > 0` with `I(t u) = 0`, bisected in `log t` down to a
    /// bracket of a few ulps.
    pub fn nehari_root(&self) -> Result<f64> {
        if self.nonlocal.is_empty() || self.reaction.is_empty() {
            return Err(Error::ZeroFunction);
        }
        // sign of I(t u) / t^p-, which avoids overflow for large t
        let p_lo = self.nonlocal.min_exponent().unwrap_or(2.0);
        let sign = |t: f64| {
            let f = |s: &PowerSum| s.terms().iter().map(|(c, e)| c * t.powf(e - p_lo)).sum::<f64>();
            f(&self.nonlocal) - f(&self.reaction)
        };
        let (mut lo, mut hi) = (1.0, 1.0);
        while sign(lo) <= 0.0 {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::ZeroFunction);
            }
        }
        while sign(hi) >= 0.0 {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::ZeroFunction);
            }
        }
        for _ in 0..2000 {
            let mid = if hi > 2.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if mid <= lo || mid >= hi {
                break;
            }
            if sign(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // pick the bracket end with the smaller residual
        Ok(if sign(lo).abs() <= sign(hi).abs() { lo } else { hi })
    }
}

/// Scaling `lambda > 0` with `I(lambda u) = 0`; the root is resolved to a few
/// ulps and `tol` bounds the relative Nehari residual.
pub fn nehari_lambda(u: &GridFunction, ctx: &OperatorContext, tol: f64) -> Result<f64> {
    let ray = RayProfile::new(u, ctx)?;
    let lambda = ray.nehari_root()?;
    let residual = ray.nehari(lambda).abs();
    if residual > tol * ray.scale(lambda) {
        log::warn!("Nehari residual {residual:e} exceeds tolerance at lambda={lambda}");
    }
    Ok(lambda)
}

/// `lambda u` with `lambda` from [`nehari_lambda`].
pub fn project_to_nehari(u: &GridFunction, ctx: &OperatorContext, tol: f64) -> Result<GridFunction> {
    Ok(u.scaled(nehari_lambda(u, ctx, tol)?))
}
