//! Variable exponents `p(x,y)` and `q(x)` and the checks that make a pair of
//! them admissible for the flow.
//!
//! Extrema are taken over the truncated computational region: `q` over the
//! closed domain, `p` over pairs in which at least one point lies in the
//! closed domain and both lie inside the exterior collar.

use std::fmt;
use std::sync::Arc;

use crate::error::{Assumption, Error, Result, Witness};
use crate::grid::Domain;

/// Symmetric two-point exponent.
#[derive(Clone)]
pub enum PairExponent {
    Constant(f64),
    /// `a + b (x^2 + y^2) / 2`
    AffineRadial { a: f64, b: f64 },
    /// User-supplied closed form with declared analytic bounds. Tabulated
    /// fields get a `1e-12` tolerance on the symmetry check.
    Custom {
        f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        lower: f64,
        upper: f64,
        tabulated: bool,
    },
}

/// One-point exponent, used for the reaction `q` and for Lebesgue probes.
#[derive(Clone)]
pub enum PointExponent {
    Constant(f64),
    /// `a + b x^2`
    Bump { a: f64, b: f64 },
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lower: f64,
        upper: f64,
    },
}

impl fmt::Debug for PairExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairExponent::Constant(c) => write!(f, "Constant({c})"),
            PairExponent::AffineRadial { a, b } => write!(f, "AffineRadial {{ a: {a}, b: {b} }}"),
            PairExponent::Custom { lower, upper, tabulated, .. } => {
                write!(f, "Custom {{ lower: {lower}, upper: {upper}, tabulated: {tabulated} }}")
            }
        }
    }
}

impl fmt::Debug for PointExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointExponent::Constant(c) => write!(f, "Constant({c})"),
            PointExponent::Bump { a, b } => write!(f, "Bump {{ a: {a}, b: {b} }}"),
            PointExponent::Custom { lower, upper, .. } => {
                write!(f, "Custom {{ lower: {lower}, upper: {upper} }}")
            }
        }
    }
}

/// Range of `t^2` for `t` in `[lo, hi]`.
fn square_range(lo: f64, hi: f64) -> (f64, f64) {
    let max = (lo * lo).max(hi * hi);
    let min = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { (lo * lo).min(hi * hi) };
    (min, max)
}

fn affine_range(a: f64, b: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (v0, v1) = (a + b * lo, a + b * hi);
    (v0.min(v1), v0.max(v1))
}

impl PairExponent {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            PairExponent::Constant(c) => *c,
            PairExponent::AffineRadial { a, b } => a + b * (x * x + y * y) / 2.0,
            PairExponent::Custom { f, .. } => f(x, y),
        }
    }

    /// `pbar(x) = p(x, x)`
    pub fn diagonal(&self, x: f64) -> f64 {
        self.eval(x, x)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, PairExponent::Constant(_))
    }

    fn symmetry_tolerance(&self) -> f64 {
        match self {
            PairExponent::Custom { tabulated: true, .. } => 1e-12,
            _ => 0.0,
        }
    }

    /// Declared bounds over the truncated pair region of `domain`.
    pub fn declared_bounds(&self, domain: &Domain) -> (f64, f64) {
        match self {
            PairExponent::Constant(c) => (*c, *c),
            PairExponent::AffineRadial { a, b } => {
                let (in_min, in_max) = square_range(domain.a, domain.b);
                let (out_min, out_max) = square_range(domain.outer_left(), domain.outer_right());
                affine_range(*a, *b, (in_min + out_min) / 2.0, (in_max + out_max) / 2.0)
            }
            PairExponent::Custom { lower, upper, .. } => (*lower, *upper),
        }
    }
}

impl PointExponent {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PointExponent::Constant(c) => *c,
            PointExponent::Bump { a, b } => a + b * x * x,
            PointExponent::Custom { f, .. } => f(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, PointExponent::Constant(_))
    }

    /// Declared bounds over the closed interval `[lo, hi]`.
    pub fn declared_bounds(&self, lo: f64, hi: f64) -> (f64, f64) {
        match self {
            PointExponent::Constant(c) => (*c, *c),
            PointExponent::Bump { a, b } => {
                let (m, mm) = square_range(lo, hi);
                affine_range(*a, *b, m, mm)
            }
            PointExponent::Custom { lower, upper, .. } => (*lower, *upper),
        }
    }
}

/// The exponent data of the problem: `p`, `q`, the fractional order `s` and
/// the spatial dimension `N`.
#[derive(Debug, Clone)]
pub struct ExponentField {
    pub p: PairExponent,
    pub q: PointExponent,
    pub s: f64,
    pub spatial_dim: usize,
}

impl ExponentField {
    pub fn new(p: PairExponent, q: PointExponent, s: f64, spatial_dim: usize) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!("fractional order s={s} not in (0,1)")));
        }
        if spatial_dim == 0 {
            return Err(Error::InvalidParameter("spatial dimension must be positive".into()));
        }
        Ok(Self { p, q, s, spatial_dim })
    }

    /// Constant exponents in one dimension.
    pub fn constant(p: f64, q: f64, s: f64) -> Result<Self> {
        Self::new(PairExponent::Constant(p), PointExponent::Constant(q), s, 1)
    }

    pub fn dim(&self) -> f64 {
        self.spatial_dim as f64
    }
}

/// Extrema of the exponents over the sampled region.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentSummary {
    pub p_minus: f64,
    pub p_plus: f64,
    pub q_minus: f64,
    pub q_plus: f64,
    /// Pointwise minimum of `p*_s(x)/2 + 1` over the sampled domain.
    pub min_critical_bound: f64,
    /// Pointwise minimum of `p*_s(x)` over the sampled domain.
    pub min_critical_exponent: f64,
}

/// Fractional Sobolev critical exponent `N pbar(x) / (N - s pbar(x))`.
pub fn critical_exponent(field: &ExponentField, x: f64) -> Result<f64> {
    let pbar = field.p.diagonal(x);
    critical_exponent_raw(field.dim(), field.s, pbar)
}

pub(crate) fn critical_exponent_raw(n: f64, s: f64, pbar: f64) -> Result<f64> {
    let denom = n - s * pbar;
    if denom <= 0.0 {
        return Err(Error::DegenerateDenominator(denom));
    }
    Ok(n * pbar / denom)
}

fn linspace(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (k - 1) as f64;
    (0..k).map(move |i| if i + 1 == k { hi } else { lo + step * i as f64 })
}

/// Sample points of the closed domain, including the origin when it lies
/// inside so that radial extrema are attained exactly.
fn domain_samples(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = linspace(lo, hi, k).collect();
    if lo < 0.0 && hi > 0.0 {
        xs.push(0.0);
    }
    xs
}

/// Check every [`Assumption`] by dense sampling and cross-check the
/// declared bounds of the exponents.
///
/// Failures are reported in the order A2, A1, A4, A3.
pub fn validate_assumptions(
    field: &ExponentField,
    domain: &Domain,
    sample_resolution: usize,
) -> Result<ExponentSummary> {
    if sample_resolution < 2 {
        return Err(Error::InvalidResolution(format!(
            "sample_resolution={sample_resolution} must be >= 2"
        )));
    }
    let inner = domain_samples(domain.a, domain.b, sample_resolution);
    let span_ratio = (domain.outer_right() - domain.outer_left()) / (domain.b - domain.a);
    let outer_k = ((sample_resolution as f64) * span_ratio).ceil() as usize;
    let mut outer = domain_samples(domain.outer_left(), domain.outer_right(), outer_k.max(2));
    outer.extend(inner.iter().copied());

    let sym_tol = field.p.symmetry_tolerance();
    let mut p_min = (f64::INFINITY, Witness { x: 0.0, y: Some(0.0), value: 0.0 });
    let mut p_max = (f64::NEG_INFINITY, p_min.1.clone());
    for &x in &inner {
        for &y in &outer {
            let pxy = field.p.eval(x, y);
            let pyx = field.p.eval(y, x);
            if (pxy - pyx).abs() > sym_tol || !pxy.is_finite() {
                return Err(Error::AssumptionViolated {
                    assumption: Assumption::A2,
                    witness: Witness { x, y: Some(y), value: pxy - pyx },
                    detail: format!("p(x,y)={pxy} but p(y,x)={pyx}"),
                });
            }
            if pxy < p_min.0 {
                p_min = (pxy, Witness { x, y: Some(y), value: pxy });
            }
            if pxy > p_max.0 {
                p_max = (pxy, Witness { x, y: Some(y), value: pxy });
            }
        }
    }

    let (p_decl_lo, p_decl_hi) = field.p.declared_bounds(domain);
    check_declared(p_decl_lo, p_decl_hi, p_min.0, p_max.0)?;

    if p_min.0 < 2.0 {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::A1,
            witness: p_min.1,
            detail: format!("p- = {} < 2", p_min.0),
        });
    }
    if !p_max.0.is_finite() {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::A1,
            witness: p_max.1,
            detail: "p+ is not finite".into(),
        });
    }

    let n = field.dim();
    if field.s * p_max.0 >= n {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::A4,
            witness: p_max.1,
            detail: format!("s p+ = {} >= N = {}", field.s * p_max.0, n),
        });
    }

    let mut q_min = (f64::INFINITY, Witness { x: 0.0, y: None, value: 0.0 });
    let mut q_max = (f64::NEG_INFINITY, q_min.1.clone());
    let mut crit = (f64::INFINITY, q_min.1.clone());
    for &x in &inner {
        let qx = field.q.eval(x);
        if qx < q_min.0 {
            q_min = (qx, Witness { x, y: None, value: qx });
        }
        if qx > q_max.0 {
            q_max = (qx, Witness { x, y: None, value: qx });
        }
        let ps = critical_exponent(field, x)?;
        if ps < crit.0 {
            crit = (ps, Witness { x, y: None, value: ps });
        }
    }
    let (q_decl_lo, q_decl_hi) = field.q.declared_bounds(domain.a, domain.b);
    check_declared(q_decl_lo, q_decl_hi, q_min.0, q_max.0)?;

    if q_min.0 <= p_max.0 {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::A3,
            witness: q_min.1,
            detail: format!("q- = {} <= p+ = {}", q_min.0, p_max.0),
        });
    }
    let bound = crit.0 / 2.0 + 1.0;
    if q_max.0 >= bound {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::A3,
            witness: crit.1,
            detail: format!("q+ = {} >= p*_s(x)/2 + 1 = {}", q_max.0, bound),
        });
    }

    Ok(ExponentSummary {
        p_minus: p_min.0,
        p_plus: p_max.0,
        q_minus: q_min.0,
        q_plus: q_max.0,
        min_critical_bound: bound,
        min_critical_exponent: crit.0,
    })
}

fn check_declared(lo: f64, hi: f64, sampled_lo: f64, sampled_hi: f64) -> Result<()> {
    let slack = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
    if sampled_lo < lo - slack || sampled_hi > hi + slack {
        return Err(Error::DeclaredBoundsMismatch {
            declared_lo: lo,
            declared_hi: hi,
            sampled_lo,
            sampled_hi,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_domain() -> Domain {
        Domain::new(-1.0, 1.0, 8.0).unwrap()
    }

    #[test]
    fn constant_exponents_are_admissible() {
        let field = ExponentField::constant(2.0, 3.0, 0.4).unwrap();
        let summary = validate_assumptions(&field, &unit_domain(), 16).unwrap();
        assert_eq!(summary.p_minus, 2.0);
        assert_eq!(summary.p_plus, 2.0);
        assert_eq!(summary.q_minus, 3.0);
        assert_eq!(summary.q_plus, 3.0);
        assert!((summary.min_critical_exponent - 10.0).abs() < 1e-12);
        assert!((summary.min_critical_bound - 6.0).abs() < 1e-12);
    }

    #[test]
    fn large_order_violates_a4() {
        let field = ExponentField::constant(2.0, 3.0, 0.6).unwrap();
        match validate_assumptions(&field, &unit_domain(), 16) {
            Err(Error::AssumptionViolated { assumption, .. }) => assert_eq!(assumption, Assumption::A4),
            other => panic!("expected a4 violation, got {other:?}"),
        }
    }

    #[test]
    fn reaction_below_diffusion_violates_a3() {
        let field = ExponentField::constant(2.0, 2.0, 0.4).unwrap();
        match validate_assumptions(&field, &unit_domain(), 16) {
            Err(Error::AssumptionViolated { assumption, .. }) => assert_eq!(assumption, Assumption::A3),
            other => panic!("expected a3 violation, got {other:?}"),
        }
        let field = ExponentField::constant(2.0, 6.5, 0.4).unwrap();
        assert!(matches!(
            validate_assumptions(&field, &unit_domain(), 16),
            Err(Error::AssumptionViolated { assumption: Assumption::A3, .. })
        ));
    }

    #[test]
    fn small_p_violates_a1() {
        let field = ExponentField::constant(1.5, 3.0, 0.4).unwrap();
        assert!(matches!(
            validate_assumptions(&field, &unit_domain(), 16),
            Err(Error::AssumptionViolated { assumption: Assumption::A1, .. })
        ));
    }

    #[test]
    fn asymmetric_custom_violates_a2() {
        let p = PairExponent::Custom {
            f: Arc::new(|x, y| 2.0 + 0.01 * (x - y).max(0.0)),
            lower: 2.0,
            upper: 3.0,
            tabulated: false,
        };
        let field = ExponentField::new(p, PointExponent::Constant(3.0), 0.4, 1).unwrap();
        assert!(matches!(
            validate_assumptions(&field, &unit_domain(), 16),
            Err(Error::AssumptionViolated { assumption: Assumption::A2, .. })
        ));
    }

    #[test]
    fn symmetric_closed_forms_agree() {
        let d = unit_domain();
        let mk = |flip: bool| {
            let f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = if flip {
                Arc::new(|x: f64, y: f64| 2.0 + 0.02 * (y - x).abs())
            } else {
                Arc::new(|x: f64, y: f64| 2.0 + 0.02 * (x - y).abs())
            };
            let p = PairExponent::Custom { f, lower: 2.0, upper: 2.4, tabulated: false };
            ExponentField::new(p, PointExponent::Constant(3.0), 0.4, 1).unwrap()
        };
        let a = validate_assumptions(&mk(false), &d, 32).unwrap();
        let b = validate_assumptions(&mk(true), &d, 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn affine_radial_bounds_are_attained() {
        let d = Domain::new(-1.0, 1.0, 2.0).unwrap();
        let p = PairExponent::AffineRadial { a: 2.0, b: 0.02 };
        let q = PointExponent::Bump { a: 3.0, b: 0.4 };
        let field = ExponentField::new(p, q, 0.3, 1).unwrap();
        let s = validate_assumptions(&field, &d, 41).unwrap();
        let (lo, hi) = field.p.declared_bounds(&d);
        assert_eq!(s.p_minus, lo);
        assert!((s.p_plus - hi).abs() < 1e-12);
        assert_eq!(s.q_minus, 3.0);
        assert!((s.q_plus - 3.4).abs() < 1e-12);
    }

    #[test]
    fn understated_declared_bounds_are_rejected() {
        let p = PairExponent::Custom {
            f: Arc::new(|x, y| 2.0 + 0.01 * (x * x + y * y)),
            lower: 2.0,
            upper: 2.001,
            tabulated: false,
        };
        let field = ExponentField::new(p, PointExponent::Constant(3.0), 0.3, 1).unwrap();
        assert!(matches!(
            validate_assumptions(&field, &unit_domain(), 16),
            Err(Error::DeclaredBoundsMismatch { .. })
        ));
    }

    #[test]
    fn critical_exponent_examples() {
        let f = ExponentField::constant(2.0, 3.0, 0.4).unwrap();
        assert!((critical_exponent(&f, 0.0).unwrap() - 10.0).abs() < 1e-12);
        let f = ExponentField::constant(2.0, 3.0, 1e-9).unwrap();
        assert!((critical_exponent(&f, 0.0).unwrap() - 2.0).abs() < 1e-8);
        let f = ExponentField::constant(2.0, 3.0, 0.5).unwrap();
        assert!(matches!(critical_exponent(&f, 0.0), Err(Error::DegenerateDenominator(_))));
    }

    #[test]
    fn critical_exponent_increases_with_order() {
        for pbar in [2.0, 2.2, 2.4] {
            let mut prev = critical_exponent_raw(1.0, 0.01, pbar).unwrap();
            let mut s = 0.01;
            while s * pbar < 0.99 {
                s += 0.005;
                if s * pbar >= 1.0 {
                    break;
                }
                let next = critical_exponent_raw(1.0, s, pbar).unwrap();
                assert!(next > prev);
                prev = next;
            }
        }
    }

    #[test]
    fn order_outside_unit_interval_is_rejected() {
        assert!(ExponentField::constant(2.0, 3.0, 1.0).is_err());
        assert!(ExponentField::constant(2.0, 3.0, 0.0).is_err());
    }
}
