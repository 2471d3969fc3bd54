//! Uniform space-time grids, grid fields, finite-difference stencils and
//! trapezoidal discrete norms.
//!
//! Everything downstream (forward solver, Carleman weights, the weighted
//! functional) evaluates derivatives through the stencils defined here, so
//! the matrix assembly of the functional and the field-based evaluation share
//! one set of coefficients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Uniform grid on `[x_left, x_right] x [0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    x_left: f64,
    x_right: f64,
    nx: usize,
    final_time: f64,
    nt: usize,
}

impl SpaceTimeGrid {
    pub const MIN_NODES: usize = 5;

    pub fn new(x_left: f64, x_right: f64, nx: usize, final_time: f64, nt: usize) -> Result<Self> {
        if !(x_left.is_finite() && x_right.is_finite()) || x_left >= x_right {
            return Err(Error::InvalidGrid(format!(
                "domain must satisfy x_left < x_right, got ({x_left}, {x_right})"
            )));
        }
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        if nx < Self::MIN_NODES || nt < Self::MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {} space nodes and time levels, got Nx = {nx}, Nt = {nt}",
                Self::MIN_NODES
            )));
        }
        Ok(Self {
            x_left,
            x_right,
            nx,
            final_time,
            nt,
        })
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn h(&self) -> f64 {
        (self.x_right - self.x_left) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.final_time / (self.nt - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx - 1 {
            self.x_right
        } else {
            self.x_left + i as f64 * self.h()
        }
    }

    pub fn t(&self, n: usize) -> f64 {
        if n == self.nt - 1 {
            self.final_time
        } else {
            n as f64 * self.dt()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|n| self.t(n)).collect()
    }

    /// Interior node indices `1..Nx-1`.
    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.nx - 1
    }

    pub fn boundary_coordinate(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.x_left,
            Side::Right => self.x_right,
        }
    }

    pub fn boundary_index(&self, side: Side) -> usize {
        match side {
            Side::Left => 0,
            Side::Right => self.nx - 1,
        }
    }

    /// Trapezoidal quadrature weights in space.
    pub fn space_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.nx, self.h())
    }

    /// Trapezoidal quadrature weights in time.
    pub fn time_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.nt, self.dt())
    }

    /// Grid with both spacings divided by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidGrid("refinement factor must be >= 1".into()));
        }
        Self::new(
            self.x_left,
            self.x_right,
            (self.nx - 1) * factor + 1,
            self.final_time,
            (self.nt - 1) * factor + 1,
        )
    }
}

pub(crate) fn trapezoid_weights(n: usize, step: f64) -> Vec<f64> {
    let mut w = vec![step; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

/// One endpoint of the 1-D domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Outward unit normal.
    pub fn normal(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

/// Grid samples of a function of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        Self::new(vec![0.0; grid.nx()])
    }

    pub fn constant(grid: &SpaceTimeGrid, value: f64) -> Self {
        Self::new(vec![value; grid.nx()])
    }

    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::new((0..grid.nx()).map(|i| f(grid.x(i))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, grid: &SpaceTimeGrid) -> Result<()> {
        check_len("scalar field", grid.nx(), self.len())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.values.iter().map(|v| c * v).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(zip_with(&self.values, &other.values, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(zip_with(&self.values, &other.values, |a, b| a - b))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }
}

/// `Nt x Nx` array of samples, stored level-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    nt: usize,
    nx: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        Self {
            nt: grid.nt(),
            nx: grid.nx(),
            values: vec![0.0; grid.nt() * grid.nx()],
        }
    }

    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for n in 0..grid.nt() {
            let t = grid.t(n);
            for (i, v) in out.row_mut(n).iter_mut().enumerate() {
                *v = f(grid.x(i), t);
            }
        }
        out
    }

    pub fn from_values(nt: usize, nx: usize, values: Vec<f64>) -> Result<Self> {
        check_len("space-time field", nt * nx, values.len())?;
        Ok(Self { nt, nx, values })
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.values[n * self.nx + i]
    }

    pub fn set(&mut self, n: usize, i: usize, v: f64) {
        self.values[n * self.nx + i] = v;
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.nx..(n + 1) * self.nx]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.nx..(n + 1) * self.nx]
    }

    pub fn snapshot(&self, n: usize) -> ScalarField {
        ScalarField::new(self.row(n).to_vec())
    }

    /// Time series at node `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.nt).map(|n| self.get(n, i)).collect()
    }

    pub fn check(&self, grid: &SpaceTimeGrid) -> Result<()> {
        check_len("space-time field levels", grid.nt(), self.nt)?;
        check_len("space-time field nodes", grid.nx(), self.nx)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            nt: self.nt,
            nx: self.nx,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            nt: self.nt,
            nx: self.nx,
            values: zip_with(&self.values, &other.values, |a, b| a + b),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            nt: self.nt,
            nx: self.nx,
            values: zip_with(&self.values, &other.values, |a, b| a - b),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    /// Applies [`time_difference`] along every node's time series.
    pub fn time_derivative(&self, dt: f64, order: usize) -> Result<Self> {
        let mut out = Self {
            nt: self.nt,
            nx: self.nx,
            values: vec![0.0; self.values.len()],
        };
        let stencils = TimeStencils::new(self.nt, order)?;
        let scale = dt.powi(order as i32).recip();
        for n in 0..self.nt {
            let st = stencils.at(n);
            for i in 0..self.nx {
                let acc: f64 = st
                    .weights()
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * self.get(st.start + j, i))
                    .sum();
                out.set(n, i, acc * scale);
            }
        }
        Ok(out)
    }

    /// Applies [`apply_laplacian`] to every snapshot.
    pub fn laplacian(&self, grid: &SpaceTimeGrid) -> Result<Self> {
        self.check(grid)?;
        let mut out = Self::zeros(grid);
        for n in 0..self.nt {
            laplacian_into(self.row(n), grid.h(), out.row_mut(n));
        }
        Ok(out)
    }

    /// Normal-derivative trace on `side` at every level.
    pub fn normal_trace(&self, grid: &SpaceTimeGrid, side: Side) -> Result<TraceSeries> {
        self.check(grid)?;
        let samples = (0..self.nt)
            .map(|n| normal_derivative_slice(self.row(n), grid.h(), side))
            .collect();
        Ok(TraceSeries::new(side, samples))
    }
}

/// Time samples of a boundary quantity at one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSeries {
    boundary_point: Side,
    samples: Vec<f64>,
}

impl TraceSeries {
    pub fn new(boundary_point: Side, samples: Vec<f64>) -> Self {
        Self {
            boundary_point,
            samples,
        }
    }

    pub fn zeros(side: Side, nt: usize) -> Self {
        Self::new(side, vec![0.0; nt])
    }

    pub fn side(&self) -> Side {
        self.boundary_point
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn check(&self, grid: &SpaceTimeGrid) -> Result<()> {
        check_len("trace series", grid.nt(), self.len())
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.boundary_point != other.boundary_point {
            return Err(Error::BoundaryMismatch);
        }
        check_len("trace series", self.len(), other.len())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        Ok(Self::new(
            self.boundary_point,
            zip_with(&self.samples, &other.samples, |a, b| a - b),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        Ok(Self::new(
            self.boundary_point,
            zip_with(&self.samples, &other.samples, |a, b| a + b),
        ))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(
            self.boundary_point,
            self.samples.iter().map(|v| c * v).collect(),
        )
    }

    pub fn time_derivative(&self, dt: f64, order: usize) -> Result<Self> {
        Ok(Self::new(
            self.boundary_point,
            time_difference(&self.samples, dt, order)?,
        ))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.samples)
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "length mismatch in elementwise operation");
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

// ---------------------------------------------------------------------------
// Space stencils

/// Second-order centered Laplacian at interior nodes; boundary output is 0.
pub fn apply_laplacian(field: &ScalarField, grid: &SpaceTimeGrid) -> Result<ScalarField> {
    field.check(grid)?;
    let mut out = vec![0.0; grid.nx()];
    laplacian_into(field.values(), grid.h(), &mut out);
    Ok(ScalarField::new(out))
}

pub(crate) fn laplacian_into(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let inv_h2 = 1.0 / (h * h);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * inv_h2;
    }
}

/// Node offsets (from the boundary node, pointing inward) and weights of the
/// one-sided second-order outward normal derivative.
pub(crate) fn normal_derivative_stencil(nx: usize, h: f64, side: Side) -> [(usize, f64); 3] {
    let c = 1.0 / (2.0 * h);
    match side {
        Side::Right => [(nx - 1, 3.0 * c), (nx - 2, -4.0 * c), (nx - 3, c)],
        // mirrored stencil times -1 for the outward normal
        Side::Left => [(0, 3.0 * c), (1, -4.0 * c), (2, c)],
    }
}

fn normal_derivative_slice(f: &[f64], h: f64, side: Side) -> f64 {
    normal_derivative_stencil(f.len(), h, side)
        .iter()
        .map(|(i, w)| w * f[*i])
        .sum()
}

/// Outward normal derivative at an endpoint, one-sided and second order.
pub fn boundary_normal_derivative(
    field: &ScalarField,
    grid: &SpaceTimeGrid,
    side: Side,
) -> Result<f64> {
    field.check(grid)?;
    if field.len() < 3 {
        return Err(Error::InvalidGrid(
            "normal derivative needs at least 3 nodes".into(),
        ));
    }
    Ok(normal_derivative_slice(field.values(), grid.h(), side))
}

/// Gradient by centered differences, second-order one-sided at the ends.
pub(crate) fn gradient(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut g = vec![0.0; n];
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    g[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    g
}

// ---------------------------------------------------------------------------
// Time stencils

/// Stencil for one time level: `d^k a / dt^k (n) ~ sum_j weights[j] a[start + j] / dt^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStencil {
    pub start: usize,
    len: usize,
    weights: [f64; 5],
}

impl TimeStencil {
    pub fn weights(&self) -> &[f64] {
        &self.weights[..self.len]
    }

    fn from_slice(start: usize, w: &[f64]) -> Self {
        let mut weights = [0.0; 5];
        weights[..w.len()].copy_from_slice(w);
        Self {
            start,
            len: w.len(),
            weights,
        }
    }
}

/// Centered stencils at interior levels plus the one-sided closures at the
/// ends of a series of fixed length.
#[derive(Debug, Clone)]
pub struct TimeStencils {
    len: usize,
    order: usize,
    head: Vec<TimeStencil>,
    tail: Vec<TimeStencil>,
    centered: TimeStencil,
}

impl TimeStencils {
    pub fn new(len: usize, order: usize) -> Result<Self> {
        let (half, centered) = match order {
            1 => (1, TimeStencil::from_slice(0, &[-0.5, 0.0, 0.5])),
            2 => (1, TimeStencil::from_slice(0, &[1.0, -2.0, 1.0])),
            3 => (2, TimeStencil::from_slice(0, &[-0.5, 1.0, 0.0, -1.0, 0.5])),
            k => return Err(Error::UnsupportedOrder(k)),
        };
        let width = order + 2;
        if len < width {
            return Err(Error::SeriesTooShort { len, order });
        }
        let one_sided = |n: usize, start: usize| {
            let nodes: Vec<f64> = (start..start + width).map(|j| j as f64).collect();
            TimeStencil::from_slice(start, &fornberg_weights(n as f64, &nodes, order))
        };
        let head = (0..half.min(len)).map(|n| one_sided(n, 0)).collect();
        let tail = (0..half)
            .map(|k| len - half + k)
            .map(|n| one_sided(n, len - width))
            .collect();
        Ok(Self {
            len,
            order,
            head,
            tail,
            centered,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn at(&self, n: usize) -> TimeStencil {
        let half = self.head.len();
        if n < half {
            self.head[n]
        } else if n >= self.len - half {
            self.tail[n - (self.len - half)]
        } else {
            TimeStencil {
                start: n - half,
                ..self.centered
            }
        }
    }
}

/// Finite-difference weights for the `m`-th derivative at `x0` on arbitrary nodes.
fn fornberg_weights(x0: f64, nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Discrete time derivative of order 1, 2 or 3 mapping a series onto a
/// series of the same length.
pub fn time_difference(samples: &[f64], dt: f64, order: usize) -> Result<Vec<f64>> {
    let stencils = TimeStencils::new(samples.len(), order)?;
    let scale = dt.powi(order as i32).recip();
    Ok((0..samples.len())
        .map(|n| {
            let st = stencils.at(n);
            st.weights()
                .iter()
                .enumerate()
                .map(|(j, w)| w * samples[st.start + j])
                .sum::<f64>()
                * scale
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Norms

/// Which discrete norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `L2(Omega)` of a scalar field.
    L2Space,
    /// `L2(0,T; L2(Omega))` of a space-time field.
    L2SpaceTime,
    /// `L2(0,T; L2(Gamma_0))` of a trace.
    L2Trace,
    /// `H1(0,T; L2(Gamma_0))` of a trace.
    H1Trace,
    /// `H2(0,T; L2(Gamma_0))` of a trace.
    H2Trace,
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2_space" => Ok(Self::L2Space),
            "l2_space_time" => Ok(Self::L2SpaceTime),
            "l2_trace" => Ok(Self::L2Trace),
            "h1_trace" => Ok(Self::H1Trace),
            "h2_trace" => Ok(Self::H2Trace),
            other => Err(Error::UnknownNorm(other.to_string())),
        }
    }
}

/// Object whose norm is requested.
#[derive(Debug, Clone, Copy)]
pub enum NormInput<'a> {
    Space(&'a ScalarField),
    SpaceTime(&'a SpaceTimeField),
    Trace(&'a TraceSeries),
}

/// Squared discrete norm (trapezoidal quadrature in each direction).
pub fn discrete_norm_sq(grid: &SpaceTimeGrid, input: NormInput<'_>, kind: NormKind) -> Result<f64> {
    match (kind, input) {
        (NormKind::L2Space, NormInput::Space(f)) => {
            f.check(grid)?;
            Ok(weighted_sq(f.values(), &grid.space_weights()))
        }
        (NormKind::L2SpaceTime, NormInput::SpaceTime(f)) => {
            f.check(grid)?;
            Ok(space_time_sq(grid, f.values()))
        }
        (NormKind::L2Trace | NormKind::H1Trace | NormKind::H2Trace, NormInput::Trace(tr)) => {
            tr.check(grid)?;
            let wt = grid.time_weights();
            let max_order = match kind {
                NormKind::L2Trace => 0,
                NormKind::H1Trace => 1,
                _ => 2,
            };
            let mut total = weighted_sq(tr.samples(), &wt);
            for k in 1..=max_order {
                let d = time_difference(tr.samples(), grid.dt(), k)?;
                total += weighted_sq(&d, &wt);
            }
            Ok(total)
        }
        (kind, _) => Err(Error::UnknownNorm(format!(
            "{kind:?} is not defined for the supplied object"
        ))),
    }
}

pub fn discrete_norm(grid: &SpaceTimeGrid, input: NormInput<'_>, kind: NormKind) -> Result<f64> {
    discrete_norm_sq(grid, input, kind).map(f64::sqrt)
}

pub(crate) fn weighted_sq(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(a, q)| q * a * a).sum()
}

pub(crate) fn space_time_sq(grid: &SpaceTimeGrid, values: &[f64]) -> f64 {
    let wx = grid.space_weights();
    let wt = grid.time_weights();
    let nx = grid.nx();
    wt.iter()
        .enumerate()
        .map(|(n, qt)| qt * weighted_sq(&values[n * nx..(n + 1) * nx], &wx))
        .sum()
}
