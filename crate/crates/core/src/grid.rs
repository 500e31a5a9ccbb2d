//! One-dimensional cell grid of `(a, b)` plus a truncated exterior collar on
//! each side, and grid functions that vanish on the collar.

use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub a: f64,
    pub b: f64,
    /// Width of the collar approximating the complement of the domain.
    pub exterior_radius: f64,
}

impl Domain {
    pub fn new(a: f64, b: f64, exterior_radius: f64) -> Result<Self> {
        if !(b - a > 0.0) {
            return Err(Error::InvalidDomain(format!("need a < b, got ({a}, {b})")));
        }
        if !(exterior_radius > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "exterior radius must be positive, got {exterior_radius}"
            )));
        }
        Ok(Self { a, b, exterior_radius })
    }

    /// Domain with the default collar `4 (b - a)`.
    pub fn with_default_collar(a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, 4.0 * (b - a))
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn outer_left(&self) -> f64 {
        self.a - self.exterior_radius
    }

    pub fn outer_right(&self) -> f64 {
        self.b + self.exterior_radius
    }
}

/// Cells ordered left collar, interior, right collar.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    n: usize,
    m: usize,
    centers: Vec<f64>,
    widths: Vec<f64>,
}

/// Uniform interior cells of width `(b-a)/n`, uniform collar cells of width
/// `exterior_radius/m`.
pub fn build_grid(domain: Domain, n: usize, m: usize) -> Result<Grid> {
    if n < 4 {
        return Err(Error::InvalidResolution(format!("n={n} must be >= 4")));
    }
    if m < 1 {
        return Err(Error::InvalidResolution(format!("m={m} must be >= 1")));
    }
    let h_in = domain.length() / n as f64;
    let h_out = domain.exterior_radius / m as f64;
    let total = n + 2 * m;
    let mut centers = Vec::with_capacity(total);
    let mut widths = Vec::with_capacity(total);
    let left = domain.outer_left();
    for k in 0..m {
        centers.push(left + (k as f64 + 0.5) * h_out);
        widths.push(h_out);
    }
    for k in 0..n {
        centers.push(domain.a + (k as f64 + 0.5) * h_in);
        widths.push(h_in);
    }
    for k in 0..m {
        centers.push(domain.b + (k as f64 + 0.5) * h_out);
        widths.push(h_out);
    }
    Ok(Grid { domain, n, m, centers, widths })
}

impl Grid {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n_interior(&self) -> usize {
        self.n
    }

    pub fn n_exterior_per_side(&self) -> usize {
        self.m
    }

    pub fn n_total(&self) -> usize {
        self.centers.len()
    }

    pub fn interior_range(&self) -> Range<usize> {
        self.m..self.m + self.n
    }

    pub fn is_interior(&self, cell: usize) -> bool {
        self.interior_range().contains(&cell)
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn interior_centers(&self) -> &[f64] {
        &self.centers[self.interior_range()]
    }

    pub fn interior_widths(&self) -> &[f64] {
        &self.widths[self.interior_range()]
    }

    pub fn interior_width(&self) -> f64 {
        self.domain.length() / self.n as f64
    }

    pub fn exterior_width(&self) -> f64 {
        self.domain.exterior_radius / self.m as f64
    }

    /// Midpoint quadrature of cellwise values over the interior only.
    pub fn integrate(&self, interior_values: &[f64]) -> Result<f64> {
        if interior_values.len() != self.n {
            return Err(Error::GridMismatch);
        }
        Ok(weighted_sum(interior_values, self.interior_widths()))
    }
}

pub(crate) fn weighted_sum(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

/// Cell data on a grid. The W0 flag certifies that every collar value is
/// exactly zero; mutation through the interior accessors keeps it valid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    w0: bool,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid) && self.values == other.values && self.w0 == other.w0
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl GridFunction {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let total = grid.n_total();
        Self { grid, values: vec![0.0; total], w0: true }
    }

    /// Zero-extended function from interior values.
    pub fn from_interior(grid: Arc<Grid>, interior: &[f64]) -> Result<Self> {
        if interior.len() != grid.n_interior() {
            return Err(Error::GridMismatch);
        }
        let mut f = Self::zeros(grid);
        let range = f.grid.interior_range();
        f.values[range].copy_from_slice(interior);
        Ok(f)
    }

    /// Zero-extended samples of `f` at interior cell centers.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let interior: Vec<f64> = grid.interior_centers().iter().map(|&x| f(x)).collect();
        Self::from_interior(grid, &interior).expect("sized from grid")
    }

    /// Arbitrary cell values; flagged W0 exactly when the collar is zero.
    pub fn from_cells(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_total() {
            return Err(Error::GridMismatch);
        }
        let w0 = exterior_is_zero(&grid, &values);
        Ok(Self { grid, values, w0 })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn is_w0(&self) -> bool {
        self.w0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[self.grid.interior_range()]
    }

    pub fn interior_mut(&mut self) -> &mut [f64] {
        let range = self.grid.interior_range();
        &mut self.values[range]
    }

    pub fn set_cell(&mut self, cell: usize, value: f64) {
        self.values[cell] = value;
        if !self.grid.is_interior(cell) {
            self.w0 = exterior_is_zero(&self.grid, &self.values);
        }
    }

    pub fn require_w0(&self) -> Result<()> {
        if self.w0 {
            Ok(())
        } else {
            Err(Error::NotW0)
        }
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let values = self.values.iter().map(|v| v * c).collect();
        Self { grid: self.grid.clone(), values, w0: self.w0 }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.interior().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Midpoint `L2(Omega)` inner product.
    pub fn inner_product(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(inner_product_raw(self.interior(), other.interior(), self.grid.interior_widths()))
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm_raw(self.interior(), self.grid.interior_widths())
    }

    /// `u - v` on the interior; the result is W0 when both inputs are.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        GridFunction::from_cells(self.grid.clone(), values)
    }

    /// CSV with columns `center,width,value,interior`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["center", "width", "value", "interior"])?;
        for (k, ((x, w), v)) in self.grid.centers.iter().zip(&self.grid.widths).zip(&self.values).enumerate() {
            let flag = if self.grid.is_interior(k) { "1" } else { "0" };
            wtr.write_record([x.to_string(), w.to_string(), v.to_string(), flag.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read values written by [`GridFunction::write_csv`]; the centers must
    /// match `grid`.
    pub fn read_csv<R: std::io::Read>(grid: Arc<Grid>, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut values = Vec::with_capacity(grid.n_total());
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Config(format!("row {k}: missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("row {k}: {e}")))
            };
            let x = parse(0)?;
            let expected = *grid.centers.get(k).ok_or(Error::GridMismatch)?;
            if (x - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                return Err(Error::GridMismatch);
            }
            values.push(parse(2)?);
        }
        Self::from_cells(grid, values)
    }
}

fn exterior_is_zero(grid: &Grid, values: &[f64]) -> bool {
    values
        .iter()
        .enumerate()
        .all(|(k, &v)| grid.is_interior(k) || v == 0.0)
}

pub(crate) fn inner_product_raw(u: &[f64], v: &[f64], widths: &[f64]) -> f64 {
    u.iter().zip(v).zip(widths).map(|((a, b), w)| a * b * w).sum()
}

pub(crate) fn l2_norm_raw(u: &[f64], widths: &[f64]) -> f64 {
    inner_product_raw(u, u, widths).sqrt()
}
