//! Variable-exponent modulars and their Luxemburg norms.
//!
//! Both the Lebesgue modular `rho_h(u) = int |u|^h(x) dx` and the Gagliardo
//! modular over the pair set `Q` are finite sums of power terms once the grid
//! is fixed, so `lambda -> rho(u / lambda)` is a sum `sum_k c_k lambda^(-e_k)`
//! with `c_k >= 0, e_k > 1`. It is strictly decreasing in `lambda` for
//! `u != 0`, which is what makes bisection for the norm sound.

use crate::error::{Error, Result};
use crate::exponent::{ExponentField, PointExponent};
use crate::grid::GridFunction;

pub const DEFAULT_TOL: f64 = 1e-10;

/// `|t|^p`, exact for the common `p = 2`.
#[inline]
pub(crate) fn pow_abs(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else if t == 0.0 {
        0.0
    } else {
        t.abs().powf(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModularReport {
    /// Modular of the function itself.
    pub modular_value: f64,
    pub luxemburg_norm: f64,
    pub bisection_iterations: usize,
    /// Final bracket `[lo, hi]` on the norm.
    pub bracket: (f64, f64),
}

impl ModularReport {
    fn zero() -> Self {
        Self { modular_value: 0.0, luxemburg_norm: 0.0, bisection_iterations: 0, bracket: (0.0, 0.0) }
    }
}

/// `sum_k c_k lambda^e_k`, with terms of equal exponent merged.
#[derive(Debug, Clone, Default)]
pub struct PowerSum {
    terms: Vec<(f64, f64)>,
}

impl PowerSum {
    /// Build from `(coefficient, exponent)` pairs; zero coefficients are dropped.
    pub fn new(raw: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut terms: Vec<(f64, f64)> = raw.into_iter().filter(|(c, _)| *c != 0.0).collect();
        terms.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(terms.len());
        for (c, e) in terms {
            match merged.last_mut() {
                Some(last) if last.1 == e => last.0 += c,
                _ => merged.push((c, e)),
            }
        }
        Self { terms: merged }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    /// `sum c lambda^e`
    pub fn eval(&self, lambda: f64) -> f64 {
        self.terms.iter().map(|(c, e)| c * lambda.powf(*e)).sum()
    }

    /// `sum c e lambda^(e-1)`
    pub fn derivative(&self, lambda: f64) -> f64 {
        self.terms.iter().map(|(c, e)| c * e * lambda.powf(e - 1.0)).sum()
    }

    /// `sum c` (value at `lambda = 1`).
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c).sum()
    }

    pub fn min_exponent(&self) -> Option<f64> {
        self.terms.first().map(|t| t.1)
    }

    pub fn max_exponent(&self) -> Option<f64> {
        self.terms.last().map(|t| t.1)
    }
}

/// Luxemburg norm of a modular given as a power sum `rho(u) = sum c_k`,
/// where `rho(u / lambda) = sum c_k lambda^(-e_k)`.
pub fn luxemburg_from_terms(terms: &PowerSum, upper_guess: f64, tol: f64) -> ModularReport {
    if terms.is_empty() {
        return ModularReport::zero();
    }
    let modular_value = terms.total();
    let at = |lambda: f64| terms.eval(1.0 / lambda);
    let (lambda, iterations, bracket) = bisect_unit_level(at, upper_guess, tol);
    ModularReport { modular_value, luxemburg_norm: lambda, bisection_iterations: iterations, bracket }
}

/// Solve `g(lambda) = 1` for strictly decreasing `g`. The bracket starts at
/// `[tiny, upper]`, doubling `upper` until `g(upper) <= 1`. Midpoints are
/// geometric while the bracket spans more than a factor of four.
fn bisect_unit_level(g: impl Fn(f64) -> f64, upper_guess: f64, tol: f64) -> (f64, usize, (f64, f64)) {
    let mut hi = upper_guess.max(f64::MIN_POSITIVE);
    while g(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = 1e-300_f64;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        let value = g(mid);
        if (value - 1.0).abs() <= tol && hi <= 4.0 * lo {
            return (mid, iterations, (lo, hi));
        }
        if value > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi || iterations >= 4000 {
            return (0.5 * (lo + hi), iterations, (lo, hi));
        }
    }
}

fn interior_exponents(u: &GridFunction, h: &PointExponent) -> Result<Vec<f64>> {
    u.grid()
        .interior_centers()
        .iter()
        .map(|&x| {
            let value = h.eval(x);
            if value > 1.0 {
                Ok(value)
            } else {
                Err(Error::ExponentOutOfRange { x, value })
            }
        })
        .collect()
}

fn lebesgue_terms(u: &GridFunction, h: &PointExponent) -> Result<(PowerSum, f64)> {
    let hs = interior_exponents(u, h)?;
    let widths = u.grid().interior_widths();
    let terms = PowerSum::new(
        u.interior()
            .iter()
            .zip(&hs)
            .zip(widths)
            .map(|((&v, &e), &w)| (pow_abs(v, e) * w, e)),
    );
    let h_minus = hs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((terms, h_minus))
}

/// Midpoint quadrature of `int_Omega |u|^h(x) dx`.
pub fn lebesgue_modular(u: &GridFunction, h: &PointExponent) -> Result<f64> {
    let hs = interior_exponents(u, h)?;
    let widths = u.grid().interior_widths();
    Ok(u.interior().iter().zip(&hs).zip(widths).map(|((&v, &e), &w)| pow_abs(v, e) * w).sum())
}

/// `inf { lambda > 0 : rho_h(u / lambda) <= 1 }` by bisection.
pub fn luxemburg_norm(u: &GridFunction, h: &PointExponent, tol: f64) -> Result<ModularReport> {
    check_tol(tol)?;
    let (terms, h_minus) = lebesgue_terms(u, h)?;
    if terms.is_empty() {
        return Ok(ModularReport::zero());
    }
    let measure = u.grid().domain().length();
    let upper = 1.0 + u.max_abs() * measure.powf(1.0 / h_minus);
    Ok(luxemburg_from_terms(&terms, upper, tol))
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")))
    }
}

/// Terms `(|u_i - u_j| / d^s)^p w_i w_j / d^N` over ordered pairs of
/// distinct cells that are not both exterior.
fn gagliardo_terms(u: &GridFunction, field: &ExponentField) -> Result<Vec<(f64, f64)>> {
    u.require_w0()?;
    let grid = u.grid();
    let (xs, ws, vals) = (grid.centers(), grid.widths(), u.values());
    let n_dim = field.dim();
    let mut out = Vec::new();
    for i in 0..grid.n_total() {
        for j in 0..grid.n_total() {
            if i == j || (!grid.is_interior(i) && !grid.is_interior(j)) {
                continue;
            }
            let d = (xs[i] - xs[j]).abs();
            let p = field.p.eval(xs[i], xs[j]);
            let quotient = (vals[i] - vals[j]).abs() / d.powf(field.s);
            out.push((pow_abs(quotient, p) * ws[i] * ws[j] / d.powf(n_dim), p));
        }
    }
    Ok(out)
}

/// Gagliardo modular `rho_{s,p}(u)` by direct double summation.
pub fn gagliardo_modular(u: &GridFunction, field: &ExponentField) -> Result<f64> {
    Ok(gagliardo_terms(u, field)?.iter().map(|t| t.0).sum())
}

/// Gagliardo seminorm `[u]_{s,p}` by bisection on the modular.
pub fn gagliardo_seminorm(u: &GridFunction, field: &ExponentField, tol: f64) -> Result<ModularReport> {
    check_tol(tol)?;
    let terms = PowerSum::new(gagliardo_terms(u, field)?);
    let upper = terms.total().max(1.0);
    Ok(luxemburg_from_terms(&terms, upper, tol))
}

/// `(sigma-(tau), sigma+(tau)) = (min, max)(tau^lo, tau^hi)`.
pub fn sigma_bounds(tau: f64, lo_exp: f64, hi_exp: f64) -> (f64, f64) {
    let (a, b) = (tau.powf(lo_exp), tau.powf(hi_exp));
    (a.min(b), a.max(b))
}

/// Relative slack used when checking modular/norm inequalities against a
/// norm computed to bisection tolerance `tol`.
pub fn norm_relation_holds(modular: f64, norm: f64, lo_exp: f64, hi_exp: f64, tol: f64) -> bool {
    let (lower, upper) = sigma_bounds(norm, lo_exp, hi_exp);
    let slack = 10.0 * tol * hi_exp;
    modular >= lower * (1.0 - slack) - 1e-300 && modular <= upper * (1.0 + slack) + 1e-300
}
