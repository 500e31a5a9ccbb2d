//! Discrete fractional p(x)-Laplacian.
//!
//! With cellwise-constant data the pair sum over `Q` is
//!
//! ```text
//! I1(u) = sum_{(i,j) in Q, i != j} |u_i - u_j|^p_ij / p_ij * k_ij w_i w_j,
//! k_ij  = |x_i - x_j|^-(N + s p_ij)
//! ```
//!
//! and the operator is its gradient in the measure-weighted inner product,
//! `(Lu)_i = 2 sum_{j != i} |u_i - u_j|^(p_ij - 2) (u_i - u_j) k_ij w_j`.
//! Ordered pairs carry the factor 2 of the principal-value definition.
//! Pairs with both cells in the collar are not in `Q` and never appear.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::grid::{same_grid, Grid, GridFunction};
use crate::modular::{pow_abs, PowerSum};

/// Largest `n_total` for which the pair table is stored.
pub const PRECOMPUTE_LIMIT: usize = 4096;

/// Row work (pairs) above which rows are evaluated in parallel.
const PARALLEL_PAIRS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq)]
struct PairEntry {
    p: f64,
    kernel: f64,
}

#[derive(Debug, Clone)]
enum PairStorage {
    /// Row-major `n_interior x n_total`; the diagonal entry is unused.
    Table(Vec<PairEntry>),
    MatrixFree,
}

/// Grid, exponents and the (optional) precomputed pair table.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    grid: Arc<Grid>,
    field: ExponentField,
    storage: PairStorage,
    q_interior: Vec<f64>,
}

/// `|t|^(p-2) t`
#[inline]
pub(crate) fn signed_pow(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t
    } else if t == 0.0 {
        0.0
    } else {
        t.abs().powf(p - 2.0) * t
    }
}

impl OperatorContext {
    pub fn new(grid: Arc<Grid>, field: ExponentField) -> Self {
        let matrix_free = grid.n_total() > PRECOMPUTE_LIMIT;
        Self::build(grid, field, matrix_free)
    }

    /// Context that recomputes kernels on the fly regardless of size.
    pub fn matrix_free(grid: Arc<Grid>, field: ExponentField) -> Self {
        Self::build(grid, field, true)
    }

    fn build(grid: Arc<Grid>, field: ExponentField, matrix_free: bool) -> Self {
        let q_interior = grid.interior_centers().iter().map(|&x| field.q.eval(x)).collect();
        let mut ctx = Self { grid, field, storage: PairStorage::MatrixFree, q_interior };
        if !matrix_free {
            let total = ctx.grid.n_total();
            let mut table = Vec::with_capacity(ctx.grid.n_interior() * total);
            for i in ctx.grid.interior_range() {
                for j in 0..total {
                    table.push(if i == j {
                        PairEntry { p: 0.0, kernel: 0.0 }
                    } else {
                        ctx.compute_pair(i, j)
                    });
                }
            }
            ctx.storage = PairStorage::Table(table);
        }
        ctx
    }

    fn compute_pair(&self, i: usize, j: usize) -> PairEntry {
        let xs = self.grid.centers();
        let p = self.field.p.eval(xs[i], xs[j]);
        let d = (xs[i] - xs[j]).abs();
        PairEntry { p, kernel: d.powf(-(self.field.dim() + self.field.s * p)) }
    }

    #[inline]
    fn pair(&self, row: usize, j: usize) -> PairEntry {
        match &self.storage {
            PairStorage::Table(t) => t[row * self.grid.n_total() + j],
            PairStorage::MatrixFree => self.compute_pair(row + self.grid.interior_range().start, j),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn field(&self) -> &ExponentField {
        &self.field
    }

    pub fn is_matrix_free(&self) -> bool {
        matches!(self.storage, PairStorage::MatrixFree)
    }

    /// `q` at interior cell centers.
    pub fn q_interior(&self) -> &[f64] {
        &self.q_interior
    }

    /// Exponent and kernel of the pair (interior cell `row`, cell `j`).
    pub fn pair_entry(&self, row: usize, j: usize) -> (f64, f64) {
        let e = self.pair(row, j);
        (e.p, e.kernel)
    }

    pub(crate) fn check(&self, u: &GridFunction) -> Result<()> {
        if !same_grid(&self.grid, u.grid()) {
            return Err(Error::ContextMismatch);
        }
        u.require_w0()
    }

    fn rows<T: Send>(&self, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        let n = self.grid.n_interior();
        if n * self.grid.n_total() >= PARALLEL_PAIRS && rayon::current_num_threads() > 1 {
            (0..n).into_par_iter().map(f).collect()
        } else {
            (0..n).map(f).collect()
        }
    }

    /// Value of cell `j` for a function given by its interior values.
    #[inline]
    fn cell_value(&self, interior: &[f64], j: usize) -> f64 {
        let start = self.grid.interior_range().start;
        if j >= start && j < start + interior.len() {
            interior[j - start]
        } else {
            0.0
        }
    }

    /// Visit every ordered pair of `Q` once per interior row: `f(row, j,
    /// entry, multiplicity)`, where collar pairs count twice to stand for
    /// both orders.
    fn row_sum(&self, row: usize, mut f: impl FnMut(usize, PairEntry) -> f64) -> f64 {
        let i = row + self.grid.interior_range().start;
        let mut acc = 0.0;
        for j in 0..self.grid.n_total() {
            if j == i {
                continue;
            }
            let mult = if self.grid.is_interior(j) { 1.0 } else { 2.0 };
            acc += mult * f(j, self.pair(row, j));
        }
        acc
    }

    /// `(I1(u), rho_{s,p}(u))` from interior values.
    pub fn nonlocal_parts_raw(&self, u: &[f64]) -> (f64, f64) {
        let ws = self.grid.widths();
        let start = self.grid.interior_range().start;
        let rows = self.rows(|row| {
            let ui = u[row];
            let wi = ws[row + start];
            let mut i1 = 0.0;
            let rho = self.row_sum(row, |j, e| {
                let t = pow_abs(ui - self.cell_value(u, j), e.p) * e.kernel * wi * ws[j];
                let mult = if self.grid.is_interior(j) { 1.0 } else { 2.0 };
                i1 += mult * t / e.p;
                t
            });
            (i1, rho)
        });
        rows.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
    }

    /// `rho_{s,p}(u)` through the pair table.
    pub fn gagliardo_modular(&self, u: &GridFunction) -> Result<f64> {
        self.check(u)?;
        Ok(self.nonlocal_parts_raw(u.interior()).1)
    }

    /// `I1(u)`, the nonlocal part of the energy.
    pub fn nonlocal_energy(&self, u: &GridFunction) -> Result<f64> {
        self.check(u)?;
        Ok(self.nonlocal_parts_raw(u.interior()).0)
    }

    /// `rho_{s,p}(t u) = sum_k c_k t^(p_k)` as a power sum in `t`.
    pub fn gagliardo_power_sum_raw(&self, u: &[f64]) -> PowerSum {
        let ws = self.grid.widths();
        let start = self.grid.interior_range().start;
        let mut terms = Vec::with_capacity(u.len() * self.grid.n_total());
        for (row, &ui) in u.iter().enumerate() {
            let wi = ws[row + start];
            for j in 0..self.grid.n_total() {
                if j == row + start {
                    continue;
                }
                let e = self.pair(row, j);
                let mult = if self.grid.is_interior(j) { 1.0 } else { 2.0 };
                terms.push((mult * pow_abs(ui - self.cell_value(u, j), e.p) * e.kernel * wi * ws[j], e.p));
            }
        }
        PowerSum::new(terms)
    }

    /// `2 sum_j factor(p_ij) |u_i - u_j|^(p_ij-2)(u_i - u_j) k_ij w_j` per interior row.
    pub(crate) fn apply_weighted_raw(&self, u: &[f64], factor: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
        let ws = self.grid.widths();
        self.rows(|row| {
            let ui = u[row];
            let i = row + self.grid.interior_range().start;
            let mut acc = 0.0;
            for j in 0..self.grid.n_total() {
                if j == i {
                    continue;
                }
                let e = self.pair(row, j);
                acc += factor(e.p) * signed_pow(ui - self.cell_value(u, j), e.p) * e.kernel * ws[j];
            }
            2.0 * acc
        })
    }

    /// `Lu` on interior cells.
    pub fn apply_raw(&self, u: &[f64]) -> Vec<f64> {
        self.apply_weighted_raw(u, |_| 1.0)
    }

    /// `<Lu, v>` as a direct pair sum.
    pub fn weak_form_raw(&self, u: &[f64], v: &[f64]) -> f64 {
        let ws = self.grid.widths();
        let start = self.grid.interior_range().start;
        let rows = self.rows(|row| {
            let (ui, vi, wi) = (u[row], v[row], ws[row + start]);
            self.row_sum(row, |j, e| {
                signed_pow(ui - self.cell_value(u, j), e.p) * (vi - self.cell_value(v, j)) * e.kernel * wi * ws[j]
            })
        });
        rows.iter().sum()
    }
}

/// `Lu`, zero-extended. Only interior entries are produced by the operator;
/// the collar entries of the returned function are zero.
pub fn apply_operator(u: &GridFunction, ctx: &OperatorContext) -> Result<GridFunction> {
    ctx.check(u)?;
    GridFunction::from_interior(ctx.grid.clone(), &ctx.apply_raw(u.interior()))
}

/// `<Lu, v> = sum_Q |u_i - u_j|^(p-2)(u_i - u_j)(v_i - v_j) k_ij w_i w_j`.
pub fn weak_form(u: &GridFunction, v: &GridFunction, ctx: &OperatorContext) -> Result<f64> {
    u.check_same_grid(v)?;
    ctx.check(u)?;
    ctx.check(v)?;
    Ok(ctx.weak_form_raw(u.interior(), v.interior()))
}

/// `<Lu - Lv, u - v>`
pub fn monotonicity_gap(u: &GridFunction, v: &GridFunction, ctx: &OperatorContext) -> Result<f64> {
    let diff = u.sub(v)?;
    Ok(weak_form(u, &diff, ctx)? - weak_form(v, &diff, ctx)?)
}

/// `pbar |r|^(pbar-2) r (s - r) <= |s|^pbar - |r|^pbar`, with a `1e-12`
/// relative allowance for rounding.
pub fn convexity_inequality_check(r: f64, s_val: f64, pbar: f64) -> bool {
    let lhs = pbar * signed_pow(r, pbar) * (s_val - r);
    let (sp, rp) = (pow_abs(s_val, pbar), pow_abs(r, pbar));
    let scale = lhs.abs().max(sp).max(rp).max(1.0);
    lhs <= sp - rp + 1e-12 * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::{PairExponent, PointExponent};
    use crate::grid::{build_grid, Domain};
    use crate::modular::gagliardo_modular;

    fn small_ctx() -> OperatorContext {
        let g = Arc::new(build_grid(Domain::new(-1.0, 1.0, 1.0).unwrap(), 4, 2).unwrap());
        OperatorContext::new(g, ExponentField::constant(2.0, 3.0, 0.4).unwrap())
    }

    #[test]
    fn spike_matches_hand_pair_sums() {
        let ctx = small_ctx();
        let mut u = GridFunction::zeros(ctx.grid().clone());
        u.interior_mut()[1] = 1.0; // cell at -0.25
        let lu = apply_operator(&u, &ctx).unwrap();
        let centers = [-1.75, -1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 1.75];
        let k = |a: f64, b: f64| (a - b).abs().powf(-1.8);
        // interior cells are indices 2..6 in the full ordering
        for (row, &x) in centers[2..6].iter().enumerate() {
            let expected = if row == 1 {
                centers.iter().filter(|&&y| y != x).map(|&y| 2.0 * k(x, y) * 0.5).sum::<f64>()
            } else {
                -2.0 * k(x, -0.25) * 0.5
            };
            assert!((lu.interior()[row] - expected).abs() < 1e-13 * expected.abs());
        }
        assert!(lu.values()[..2].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_and_oddness() {
        let ctx = small_ctx();
        let z = GridFunction::zeros(ctx.grid().clone());
        assert!(apply_operator(&z, &ctx).unwrap().is_zero());
        let u = GridFunction::from_interior(ctx.grid().clone(), &[0.3, -1.2, 0.7, 2.0]).unwrap();
        let a = apply_operator(&u, &ctx).unwrap();
        let b = apply_operator(&u.scaled(-1.0), &ctx).unwrap();
        for (x, y) in a.interior().iter().zip(b.interior()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn weak_form_self_pairing_is_the_modular() {
        let g = Arc::new(build_grid(Domain::new(-1.0, 1.0, 2.0).unwrap(), 10, 5).unwrap());
        let p = PairExponent::AffineRadial { a: 2.0, b: 0.05 };
        let field = ExponentField::new(p, PointExponent::Constant(3.0), 0.3, 1).unwrap();
        let ctx = OperatorContext::new(g.clone(), field.clone());
        let u = GridFunction::from_fn(g.clone(), |x| (1.0 - x * x) * (2.0 + x.sin()));
        let wf = weak_form(&u, &u, &ctx).unwrap();
        let rho = gagliardo_modular(&u, &field).unwrap();
        assert!((wf - rho).abs() <= 1e-12 * (1.0 + rho));
        assert_eq!(weak_form(&GridFunction::zeros(g), &u, &ctx).unwrap(), 0.0);
    }

    #[test]
    fn matrix_free_agrees_with_table() {
        let g = Arc::new(build_grid(Domain::new(-1.0, 1.0, 2.0).unwrap(), 9, 3).unwrap());
        let p = PairExponent::AffineRadial { a: 2.0, b: 0.05 };
        let field = ExponentField::new(p, PointExponent::Bump { a: 3.0, b: 0.2 }, 0.3, 1).unwrap();
        let a = OperatorContext::new(g.clone(), field.clone());
        let b = OperatorContext::matrix_free(g.clone(), field);
        assert!(!a.is_matrix_free() && b.is_matrix_free());
        let u = GridFunction::from_fn(g, |x| x.cos() - 0.3 * x);
        assert_eq!(apply_operator(&u, &a).unwrap(), apply_operator(&u, &b).unwrap());
        assert_eq!(a.gagliardo_modular(&u).unwrap(), b.gagliardo_modular(&u).unwrap());
    }

    #[test]
    fn linear_case_gap_is_the_quadratic_form() {
        let ctx = small_ctx();
        let g = ctx.grid().clone();
        let u = GridFunction::from_interior(g.clone(), &[0.3, -1.2, 0.7, 2.0]).unwrap();
        let v = GridFunction::from_interior(g, &[1.0, 0.5, -0.5, 0.1]).unwrap();
        let gap = monotonicity_gap(&u, &v, &ctx).unwrap();
        let d = u.sub(&v).unwrap();
        let quad = weak_form(&d, &d, &ctx).unwrap();
        assert!((gap - quad).abs() < 1e-12 * quad);
        assert_eq!(monotonicity_gap(&u, &u, &ctx).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_context_is_rejected() {
        let ctx = small_ctx();
        let other = Arc::new(build_grid(Domain::new(-1.0, 1.0, 1.0).unwrap(), 6, 2).unwrap());
        let u = GridFunction::zeros(other);
        assert!(matches!(apply_operator(&u, &ctx), Err(Error::ContextMismatch)));
        let mut w = GridFunction::zeros(ctx.grid().clone());
        w.set_cell(0, 1.0);
        assert!(matches!(apply_operator(&w, &ctx), Err(Error::NotW0)));
    }

    #[test]
    fn convexity_examples() {
        assert!(convexity_inequality_check(1.3, 1.3, 2.5));
        assert!(convexity_inequality_check(1.0, 2.0, 2.0));
        // equality case r = s has both sides exactly zero
        assert_eq!(2.0 * signed_pow(1.0, 2.0) * (2.0 - 1.0), 2.0);
        assert_eq!(pow_abs(2.0, 2.0) - pow_abs(1.0, 2.0), 3.0);
    }
}
