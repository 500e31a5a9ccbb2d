#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use fracflow_core::{build_grid, energy, energy_gradient, Domain, ExponentField, Grid, GridFunction, OperatorContext, PairExponent, PointExponent};
use rand::Rng;

pub fn grid(n: usize, m: usize) -> Arc<Grid> {
    Arc::new(build_grid(Domain::new(-1.0, 1.0, 8.0).unwrap(), n, m).unwrap())
}

pub fn constant_field() -> ExponentField {
    ExponentField::constant(2.0, 3.0, 0.4).unwrap()
}

/// `p = 2.2 + 0.005 (x^2 + y^2) / 2`, `q = 3 + 0.3 x^2`, `s = 0.4`; admissible
/// with the default collar (`p+ ~ 2.405`).
pub fn variable_field() -> ExponentField {
    ExponentField::new(
        PairExponent::AffineRadial { a: 2.2, b: 0.005 },
        PointExponent::Bump { a: 3.0, b: 0.3 },
        0.4,
        1,
    )
    .unwrap()
}

pub fn constant_ctx(n: usize, m: usize) -> OperatorContext {
    OperatorContext::new(grid(n, m), constant_field())
}

pub fn variable_ctx(n: usize, m: usize) -> OperatorContext {
    OperatorContext::new(grid(n, m), variable_field())
}

/// Uniform cell values in `[-amplitude, amplitude]`, zero-extended.
pub fn random_state(grid: &Arc<Grid>, rng: &mut impl Rng, amplitude: f64) -> GridFunction {
    let vals: Vec<f64> = (0..grid.n_interior()).map(|_| rng.gen_range(-amplitude..=amplitude)).collect();
    GridFunction::from_interior(grid.clone(), &vals).unwrap()
}

pub fn bump(grid: &Arc<Grid>, amplitude: f64) -> GridFunction {
    GridFunction::from_fn(grid.clone(), |x| amplitude * (1.0 - x * x))
}

/// Worst component error of the weighted gradient against central
/// differences of `E`, relative to the component or, for components far
/// below the largest, to a thousandth of the largest.
pub fn gradient_error(ctx: &OperatorContext, u: &GridFunction) -> f64 {
    let g = energy_gradient(u, ctx).unwrap();
    let w = ctx.grid().interior_width();
    let weighted: Vec<f64> = g.interior().iter().map(|x| x * w).collect();
    let big = weighted.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let h = 1e-5 * (1.0 + u.max_abs());
    let mut worst = 0.0_f64;
    for i in 0..u.interior().len() {
        let mut up = u.clone();
        up.interior_mut()[i] += h;
        let mut dn = u.clone();
        dn.interior_mut()[i] -= h;
        let fd = (energy(&up, ctx).unwrap().energy - energy(&dn, ctx).unwrap().energy) / (2.0 * h);
        let denom = weighted[i].abs().max(1e-3 * big);
        worst = worst.max((fd - weighted[i]).abs() / denom);
    }
    worst
}
