//! Discrete Carleman-weighted quadratic functional
//!
//! ```text
//! J[mu, g](y) = 1/(2s) sum_interior w |L y - g|^2
//!             + 1/2 sum_{Gamma_0} w (|d_n y - mu|^2 + |d_n y_t - mu_t|^2)
//! ```
//!
//! over trajectories with `y(., 0) = y_t(., 0) = 0`, its norm and its minimizer.
//!
//! # Discretization
//!
//! The free unknowns are `y` at time levels `2..Nt` and interior nodes. Level
//! 0 is zero and level 1 is slaved by `y^1 = (9 y^2 - 2 y^3) / 18`, the
//! closure that makes the one-sided second-order stencil for `y_t(0)` vanish
//! and is exact for cubics in time. `y_tt(., 0)` is read off with the
//! one-sided second-order stencil `(2 y^0 - 5 y^1 + 4 y^2 - y^3) / dt^2`.
//!
//! Every residual (interior `L y` rows at all levels, trace and trace-rate rows
//! on each observed side) is a stencil row over the full field. The same rows
//! evaluate `J`, the norm and the bilinear forms, and assemble the normal
//! equations, so matrix and evaluation can never disagree.

use serde::{Deserialize, Serialize};

use crate::carleman::{CarlemanSetup, CarlemanWeights};
use crate::error::{check_len, Error, Result};
use crate::grid::{
    normal_derivative_stencil, ScalarField, Side, SpaceTimeField, SpaceTimeGrid, TimeStencils,
};
use crate::linalg::{norm2, solve_direct, solve_pcg, solve_qr_refined, BandQr, SymBandMatrix};
use crate::observation::MuPair;
use crate::solver::MgtCoefficients;

/// A trajectory satisfying the discrete initial constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryVariable {
    field: SpaceTimeField,
}

impl TrajectoryVariable {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        Self {
            field: SpaceTimeField::zeros(grid),
        }
    }

    /// Number of free unknowns, `(Nt - 2) (Nx - 2)`.
    pub fn free_len(grid: &SpaceTimeGrid) -> usize {
        (grid.nt() - 2) * (grid.nx() - 2)
    }

    /// Lifts free values (levels `2..Nt`, interior nodes, level-major).
    pub fn from_free(grid: &SpaceTimeGrid, free: &[f64]) -> Result<Self> {
        check_len("free unknowns", Self::free_len(grid), free.len())?;
        let m = grid.nx() - 2;
        let mut field = SpaceTimeField::zeros(grid);
        for n in 2..grid.nt() {
            field.row_mut(n)[1..=m].copy_from_slice(&free[(n - 2) * m..(n - 1) * m]);
        }
        Ok(Self::closed(field))
    }

    /// Projects an arbitrary field onto the constraint set: level 0 and the
    /// boundary nodes are zeroed and level 1 is recomputed from levels 2, 3.
    pub fn from_field(mut field: SpaceTimeField, grid: &SpaceTimeGrid) -> Result<Self> {
        field.check(grid)?;
        field.row_mut(0).iter_mut().for_each(|v| *v = 0.0);
        let last = grid.nx() - 1;
        for n in 0..grid.nt() {
            field.set(n, 0, 0.0);
            field.set(n, last, 0.0);
        }
        Ok(Self::closed(field))
    }

    fn closed(mut field: SpaceTimeField) -> Self {
        for i in 1..field.nx() - 1 {
            let v = (9.0 * field.get(2, i) - 2.0 * field.get(3, i)) / 18.0;
            field.set(1, i, v);
        }
        Self { field }
    }

    pub fn field(&self) -> &SpaceTimeField {
        &self.field
    }

    pub fn into_field(self) -> SpaceTimeField {
        self.field
    }

    pub fn free_values(&self) -> Vec<f64> {
        let (nt, nx) = (self.field.nt(), self.field.nx());
        let mut out = Vec::with_capacity((nt - 2) * (nx - 2));
        for n in 2..nt {
            out.extend_from_slice(&self.field.row(n)[1..nx - 1]);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            field: self.field.add(&other.field),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            field: self.field.sub(&other.field),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            field: self.field.scaled(c),
        }
    }

    pub fn initial_second_derivative(&self, grid: &SpaceTimeGrid) -> ScalarField {
        initial_second_derivative(&self.field, grid.dt())
    }
}

/// `y_tt(., 0)` by the one-sided stencil `(2 y^0 - 5 y^1 + 4 y^2 - y^3) / dt^2`
/// at interior nodes; boundary entries are 0.
pub fn initial_second_derivative(y: &SpaceTimeField, dt: f64) -> ScalarField {
    let nx = y.nx();
    let mut out = vec![0.0; nx];
    let inv = 1.0 / (dt * dt);
    for (i, v) in out.iter_mut().enumerate().take(nx - 1).skip(1) {
        *v = (2.0 * y.get(0, i) - 5.0 * y.get(1, i) + 4.0 * y.get(2, i) - y.get(3, i)) * inv;
    }
    ScalarField::new(out)
}

/// Which residual a stencil row represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Row {
    Interior { n: usize, i: usize },
    Trace { side: usize, n: usize },
    TraceRate { side: usize, n: usize },
}

/// Weighted sums of squared residuals, split by kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualParts {
    /// `sum_interior q w |L y - g|^2` (no `1/s` factor).
    pub interior: f64,
    /// `sum_{Gamma_0} q w (|d_n y - mu|^2 + |d_n y_t - mu_t|^2)`.
    pub boundary: f64,
}

/// Linear solver used for the normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded Cholesky with Jacobi equilibration and iterative refinement.
    #[default]
    Cholesky,
    /// Conjugate gradients with the diagonal preconditioner.
    Pcg,
    /// Givens QR of the weighted rows with semi-normal refinement; used
    /// automatically when the Cholesky factorization breaks down.
    Qr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerOptions {
    pub solver_tol: f64,
    pub solver: LinearSolver,
    /// PCG iteration cap; `None` means ten times the unknown count.
    pub max_iterations: Option<usize>,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            solver_tol: 1e-9,
            solver: LinearSolver::Cholesky,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerDiagnostics {
    pub j_value: f64,
    pub v_norm_sq: f64,
    /// `||N z - r|| / ||r||` for the normal equations `N z = r`.
    pub el_residual: f64,
    pub solver_iterations: usize,
    pub solver: LinearSolver,
    pub unknowns: usize,
    pub bandwidth: usize,
    /// `(4/s) sum q w g^2 + 4 sum_{Gamma_0} q w (mu^2 + mu_t^2)`.
    pub bound_rhs: f64,
    /// `bound_rhs - v_norm_sq`.
    pub bound_slack: f64,
    /// Normalization shift of the weights (values are scaled by `exp(-shift)`).
    pub log_scale: f64,
}

/// The functional for fixed coefficients, geometry and scales.
#[derive(Debug, Clone)]
pub struct WeightedFunctional {
    grid: SpaceTimeGrid,
    c2: f64,
    b: f64,
    alpha: Vec<f64>,
    sides: Vec<Side>,
    weights: CarlemanWeights,
    d1: TimeStencils,
    d2: TimeStencils,
    d3: TimeStencils,
    qx: Vec<f64>,
    qt: Vec<f64>,
}

impl WeightedFunctional {
    pub fn new(
        grid: &SpaceTimeGrid,
        coeffs: &MgtCoefficients,
        setup: &CarlemanSetup,
    ) -> Result<Self> {
        coeffs.validate()?;
        coeffs.gamma.check(grid)?;
        if setup.geometry.gamma0_sides.is_empty() {
            return Err(Error::EmptyObservation);
        }
        let weights = CarlemanWeights::new(grid, setup)?;
        let nt = grid.nt();
        Ok(Self {
            grid: *grid,
            c2: coeffs.c * coeffs.c,
            b: coeffs.b,
            alpha: coeffs.alpha(),
            sides: setup.geometry.gamma0_sides.clone(),
            weights,
            d1: TimeStencils::new(nt, 1)?,
            d2: TimeStencils::new(nt, 2)?,
            d3: TimeStencils::new(nt, 3)?,
            qx: grid.space_weights(),
            qt: grid.time_weights(),
        })
    }

    /// Replaces the normalization shift (the minimizer does not depend on it).
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.weights = self.weights.with_shift(shift);
        self
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn weights(&self) -> &CarlemanWeights {
        &self.weights
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    fn s(&self) -> f64 {
        self.weights.s()
    }

    /// Quadrature-times-weight of a row, without the `1/s` factor.
    fn raw_weight(&self, row: Row) -> f64 {
        match row {
            Row::Interior { n, i } => self.qt[n] * self.qx[i] * self.weights.weight(n, i),
            Row::Trace { side, n } | Row::TraceRate { side, n } => {
                let ib = self.grid.boundary_index(self.sides[side]);
                self.qt[n] * self.weights.weight(n, ib)
            }
        }
    }

    /// Row weight in `J = 1/2 sum W r^2`.
    fn row_weight(&self, row: Row) -> f64 {
        match row {
            Row::Interior { .. } => self.raw_weight(row) / self.s(),
            _ => self.raw_weight(row),
        }
    }

    /// Stencil entries of a row over flat full-field indices `n * Nx + i`.
    fn row_entries(&self, row: Row, buf: &mut Vec<(usize, f64)>) {
        buf.clear();
        let nx = self.grid.nx();
        let (h, dt) = (self.grid.h(), self.grid.dt());
        let inv_h2 = 1.0 / (h * h);
        let mut push = |k: usize, j: usize, v: f64| {
            if v != 0.0 {
                buf.push((k * nx + j, v));
            }
        };
        match row {
            Row::Interior { n, i } => {
                let st = self.d3.at(n);
                let sc = 1.0 / (dt * dt * dt);
                for (j, w) in st.weights().iter().enumerate() {
                    push(st.start + j, i, w * sc);
                }
                let st = self.d2.at(n);
                let sc = self.alpha[i] / (dt * dt);
                for (j, w) in st.weights().iter().enumerate() {
                    push(st.start + j, i, w * sc);
                }
                let lap = self.c2 * inv_h2;
                push(n, i - 1, -lap);
                push(n, i, 2.0 * lap);
                push(n, i + 1, -lap);
                let st = self.d1.at(n);
                for (j, w) in st.weights().iter().enumerate() {
                    let v = -self.b * w / dt * inv_h2;
                    push(st.start + j, i - 1, v);
                    push(st.start + j, i, -2.0 * v);
                    push(st.start + j, i + 1, v);
                }
            }
            Row::Trace { side, n } => {
                for (j, w) in normal_derivative_stencil(nx, h, self.sides[side]) {
                    push(n, j, w);
                }
            }
            Row::TraceRate { side, n } => {
                let st = self.d1.at(n);
                let dn = normal_derivative_stencil(nx, h, self.sides[side]);
                for (k, w) in st.weights().iter().enumerate() {
                    for (j, v) in dn {
                        push(st.start + k, j, w / dt * v);
                    }
                }
            }
        }
    }

    fn for_each_row(&self, mut f: impl FnMut(Row)) {
        let (nx, nt) = (self.grid.nx(), self.grid.nt());
        for n in 0..nt {
            for i in 1..nx - 1 {
                f(Row::Interior { n, i });
            }
        }
        for side in 0..self.sides.len() {
            for n in 0..nt {
                f(Row::Trace { side, n });
                f(Row::TraceRate { side, n });
            }
        }
    }

    fn row_data(&self, row: Row, mu: Option<&MuPair>, g: Option<&SpaceTimeField>) -> Result<f64> {
        Ok(match row {
            Row::Interior { n, i } => g.map_or(0.0, |g| g.get(n, i)),
            Row::Trace { side, n } => match mu {
                Some(mu) => mu_series(mu.mu(self.sides[side]))?[n],
                None => 0.0,
            },
            Row::TraceRate { side, n } => match mu {
                Some(mu) => mu_series(mu.mu_t(self.sides[side]))?[n],
                None => 0.0,
            },
        })
    }

    fn check_inputs(&self, mu: Option<&MuPair>, g: Option<&SpaceTimeField>) -> Result<()> {
        if let Some(g) = g {
            g.check(&self.grid)?;
        }
        if let Some(mu) = mu {
            for &side in &self.sides {
                mu_series(mu.mu(side))?;
                mu_series(mu.mu_t(side))?;
                check_len(
                    "mu series",
                    self.grid.nt(),
                    mu.mu(side).map_or(0, |t| t.len()),
                )?;
                check_len(
                    "mu_t series",
                    self.grid.nt(),
                    mu.mu_t(side).map_or(0, |t| t.len()),
                )?;
            }
        }
        Ok(())
    }

    /// Weighted squared residuals of `y` against the data.
    pub fn residual_parts(
        &self,
        y: &SpaceTimeField,
        mu: Option<&MuPair>,
        g: Option<&SpaceTimeField>,
    ) -> Result<ResidualParts> {
        y.check(&self.grid)?;
        self.check_inputs(mu, g)?;
        let vals = y.values();
        let mut buf = Vec::with_capacity(32);
        let mut parts = ResidualParts {
            interior: 0.0,
            boundary: 0.0,
        };
        let mut err = None;
        self.for_each_row(|row| {
            self.row_entries(row, &mut buf);
            let ay: f64 = buf.iter().map(|(k, a)| a * vals[*k]).sum();
            let d = match self.row_data(row, mu, g) {
                Ok(d) => d,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            };
            let r = ay - d;
            let contribution = self.raw_weight(row) * r * r;
            match row {
                Row::Interior { .. } => parts.interior += contribution,
                _ => parts.boundary += contribution,
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(parts),
        }
    }

    /// `J[mu, g](y)` in normalized weights.
    pub fn evaluate_j(
        &self,
        y: &TrajectoryVariable,
        mu: Option<&MuPair>,
        g: Option<&SpaceTimeField>,
    ) -> Result<f64> {
        let p = self.residual_parts(y.field(), mu, g)?;
        Ok(p.interior / (2.0 * self.s()) + p.boundary / 2.0)
    }

    /// `||y||^2_{V,s}` in normalized weights.
    pub fn v_norm_sq(&self, y: &TrajectoryVariable) -> Result<f64> {
        let p = self.residual_parts(y.field(), None, None)?;
        Ok(p.interior / self.s() + p.boundary)
    }

    /// Same quadrature as [`Self::v_norm_sq`] with every weight replaced by 1.
    pub fn unweighted_v_norm_sq(&self, y: &TrajectoryVariable) -> Result<f64> {
        y.field().check(&self.grid)?;
        let vals = y.field().values();
        let mut buf = Vec::new();
        let mut total = 0.0;
        self.for_each_row(|row| {
            self.row_entries(row, &mut buf);
            let ay: f64 = buf.iter().map(|(k, a)| a * vals[*k]).sum();
            let q = match row {
                Row::Interior { n, i } => self.qt[n] * self.qx[i] / self.s(),
                Row::Trace { n, .. } | Row::TraceRate { n, .. } => self.qt[n],
            };
            total += q * ay * ay;
        });
        Ok(total)
    }

    /// `(sum q w g^2, sum_{Gamma_0} q w (mu^2 + mu_t^2))`.
    pub fn weighted_data_norms(
        &self,
        mu: Option<&MuPair>,
        g: Option<&SpaceTimeField>,
    ) -> Result<(f64, f64)> {
        let zero = SpaceTimeField::zeros(&self.grid);
        let p = self.residual_parts(&zero, mu, g)?;
        Ok((p.interior, p.boundary))
    }

    /// Symmetric form `a(y, v) = sum W (A y)(A v)`.
    pub fn bilinear_form(&self, y: &TrajectoryVariable, v: &TrajectoryVariable) -> Result<f64> {
        y.field().check(&self.grid)?;
        v.field().check(&self.grid)?;
        let (yv, vv) = (y.field().values(), v.field().values());
        let mut buf = Vec::new();
        let mut total = 0.0;
        self.for_each_row(|row| {
            self.row_entries(row, &mut buf);
            let ay: f64 = buf.iter().map(|(k, a)| a * yv[*k]).sum();
            let av: f64 = buf.iter().map(|(k, a)| a * vv[*k]).sum();
            total += self.row_weight(row) * ay * av;
        });
        Ok(total)
    }

    /// Data form `l(v) = sum W d (A v)`.
    pub fn data_form(
        &self,
        v: &TrajectoryVariable,
        mu: Option<&MuPair>,
        g: Option<&SpaceTimeField>,
    ) -> Result<f64> {
        v.field().check(&self.grid)?;
        self.check_inputs(mu, g)?;
        let vv = v.field().values();
        let mut buf = Vec::new();
        let mut total = 0.0;
        let mut err = None;
        self.for_each_row(|row| {
            self.row_entries(row, &mut buf);
            let av: f64 = buf.iter().map(|(k, a)| a * vv[*k]).sum();
            match self.row_data(row, mu, g) {
                Ok(d) => total += self.row_weight(row) * d * av,
                Err(e) => {
                    err.get_or_insert(e);
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }

    /// Maps a full-field row to free unknowns, merging duplicates.
    fn lift_row(&self, full: &[(usize, f64)], out: &mut Vec<(usize, f64)>) {
        out.clear();
        let nx = self.grid.nx();
        let m = nx - 2;
        let free = |k: usize, i: usize| (k - 2) * m + (i - 1);
        for &(idx, a) in full {
            let (k, i) = (idx / nx, idx % nx);
            if k == 0 || i == 0 || i == nx - 1 {
                continue;
            }
            if k == 1 {
                out.push((free(2, i), a * 0.5));
                out.push((free(3, i), -a / 9.0));
            } else {
                out.push((free(k, i), a));
            }
        }
        out.sort_unstable_by_key(|e| e.0);
        let mut w = 0;
        for r in 0..out.len() {
            if w > 0 && out[w - 1].0 == out[r].0 {
                out[w - 1].1 += out[r].1;
            } else {
                out[w] = out[r];
                w += 1;
            }
        }
        out.truncate(w);
    }

    /// Normal equations `N z = r` of the quadratic over the free unknowns.
    pub fn assemble(
        &self,
        mu: Option<&MuPair>,
        g: Option<&SpaceTimeField>,
    ) -> Result<(SymBandMatrix, Vec<f64>)> {
        let (mat, rhs, _) = self.assemble_with(mu, g, false)?;
        Ok((mat, rhs))
    }

    /// Normal equations and, on request, the QR factor of the weighted rows.
    fn assemble_with(
        &self,
        mu: Option<&MuPair>,
        g: Option<&SpaceTimeField>,
        with_qr: bool,
    ) -> Result<(SymBandMatrix, Vec<f64>, Option<BandQr>)> {
        self.check_inputs(mu, g)?;
        let nf = TrajectoryVariable::free_len(&self.grid);
        let mut full = Vec::with_capacity(32);
        let mut lifted = Vec::with_capacity(32);
        let mut kd = 0;
        self.for_each_row(|row| {
            self.row_entries(row, &mut full);
            self.lift_row(&full, &mut lifted);
            if let (Some(a), Some(b)) = (lifted.first(), lifted.last()) {
                kd = kd.max(b.0 - a.0);
            }
        });
        let mut mat = SymBandMatrix::zeros(nf, kd);
        let mut rhs = vec![0.0; nf];
        let mut qr = with_qr.then(|| BandQr::new(nf, kd));
        let mut err = None;
        self.for_each_row(|row| {
            self.row_entries(row, &mut full);
            self.lift_row(&full, &mut lifted);
            let w = self.row_weight(row);
            let d = match self.row_data(row, mu, g) {
                Ok(d) => d,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            };
            for (p, &(ip, ap)) in lifted.iter().enumerate() {
                let wa = w * ap;
                rhs[ip] += wa * d;
                for &(iq, aq) in &lifted[..=p] {
                    mat.add_lower(ip, iq, wa * aq);
                }
            }
            if let Some(qr) = qr.as_mut() {
                let sw = w.sqrt();
                lifted.iter_mut().for_each(|e| e.1 *= sw);
                qr.add_row(&lifted, sw * d);
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok((mat, rhs, qr)),
        }
    }

    /// Minimizes `J[mu, g]` by solving the normal equations.
    pub fn minimize(
        &self,
        mu: Option<&MuPair>,
        g: Option<&SpaceTimeField>,
        options: &MinimizerOptions,
    ) -> Result<(TrajectoryVariable, MinimizerDiagnostics)> {
        let (mat, rhs) = self.assemble(mu, g)?;
        let nf = mat.dim();
        let tol = options.solver_tol;
        let qr_solve = || -> Result<_> {
            let (_, _, qr) = self.assemble_with(mu, g, true)?;
            solve_qr_refined(&qr.expect("factor requested"), &mat, &rhs, tol)
        };
        let ((z, stats), solver) = match options.solver {
            LinearSolver::Cholesky => match solve_direct(&mat, &rhs, tol) {
                Err(Error::NotPositiveDefinite { .. }) => (qr_solve()?, LinearSolver::Qr),
                other => (other?, LinearSolver::Cholesky),
            },
            LinearSolver::Pcg => (
                solve_pcg(&mat, &rhs, tol, options.max_iterations.unwrap_or(10 * nf))?,
                LinearSolver::Pcg,
            ),
            LinearSolver::Qr => (qr_solve()?, LinearSolver::Qr),
        };
        let el_residual = relative_gradient(&mat, &z, &rhs);
        if el_residual > options.solver_tol {
            return Err(Error::NotConverged {
                iterations: stats.iterations,
                residual: el_residual,
            });
        }
        let y = TrajectoryVariable::from_free(&self.grid, &z)?;
        let j_value = self.evaluate_j(&y, mu, g)?;
        let v_norm_sq = self.v_norm_sq(&y)?;
        let (g_sq, mu_sq) = self.weighted_data_norms(mu, g)?;
        let bound_rhs = 4.0 / self.s() * g_sq + 4.0 * mu_sq;
        Ok((
            y,
            MinimizerDiagnostics {
                j_value,
                v_norm_sq,
                el_residual,
                solver_iterations: stats.iterations,
                solver,
                unknowns: nf,
                bandwidth: mat.bandwidth(),
                bound_rhs,
                bound_slack: bound_rhs - v_norm_sq,
                log_scale: self.weights.shift(),
            },
        ))
    }

    /// Gradient of `J` at `y` relative to the data term, `||N z - r|| / ||r||`.
    pub fn gradient_residual(
        &self,
        y: &TrajectoryVariable,
        mu: Option<&MuPair>,
        g: Option<&SpaceTimeField>,
    ) -> Result<f64> {
        let (mat, rhs) = self.assemble(mu, g)?;
        Ok(relative_gradient(&mat, &y.free_values(), &rhs))
    }
}

fn mu_series(t: Option<&crate::grid::TraceSeries>) -> Result<&[f64]> {
    t.map(|t| t.samples()).ok_or(Error::BoundaryMismatch)
}

fn relative_gradient(mat: &SymBandMatrix, z: &[f64], rhs: &[f64]) -> f64 {
    let mut nz = vec![0.0; z.len()];
    mat.matvec(z, &mut nz);
    let diff: Vec<f64> = nz.iter().zip(rhs).map(|(a, b)| a - b).collect();
    let r = norm2(rhs);
    let d = norm2(&diff);
    if r == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / r
    }
}

/// `J[mu, g](y)`.
pub fn evaluate_j(
    y: &TrajectoryVariable,
    mu: &MuPair,
    g: &SpaceTimeField,
    coeffs: &MgtCoefficients,
    setup: &CarlemanSetup,
    grid: &SpaceTimeGrid,
) -> Result<f64> {
    WeightedFunctional::new(grid, coeffs, setup)?.evaluate_j(y, Some(mu), Some(g))
}

/// `||y||^2_{V,s}`.
pub fn v_norm_sq(
    y: &TrajectoryVariable,
    coeffs: &MgtCoefficients,
    setup: &CarlemanSetup,
    grid: &SpaceTimeGrid,
) -> Result<f64> {
    WeightedFunctional::new(grid, coeffs, setup)?.v_norm_sq(y)
}

/// Unique minimizer of `J[mu, g]` and its diagnostics.
pub fn minimize_j(
    mu: &MuPair,
    g: &SpaceTimeField,
    coeffs: &MgtCoefficients,
    setup: &CarlemanSetup,
    grid: &SpaceTimeGrid,
    options: &MinimizerOptions,
) -> Result<(TrajectoryVariable, MinimizerDiagnostics)> {
    WeightedFunctional::new(grid, coeffs, setup)?.minimize(Some(mu), Some(g), options)
}

/// Check of the minimizer-difference inequality
/// `1/(2s) |L d|^2_w + |B d|^2_w <= (2/s) |g1 - g2|^2_w` with `d = y1* - y2*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `sqrt(s) int w(., 0) |d_tt(., 0)|^2 / |g1 - g2|^2_w`.
    pub empirical_constant: f64,
    pub max_minimizer_gap: f64,
}

pub fn minimizer_difference_check(
    g1: &SpaceTimeField,
    g2: &SpaceTimeField,
    mu: &MuPair,
    functional: &WeightedFunctional,
    options: &MinimizerOptions,
) -> Result<DifferenceReport> {
    let grid = *functional.grid();
    let (y1, _) = functional.minimize(Some(mu), Some(g1), options)?;
    let (y2, _) = functional.minimize(Some(mu), Some(g2), options)?;
    let d = y1.sub(&y2);
    let p = functional.residual_parts(d.field(), None, None)?;
    let s = functional.s();
    let lhs = p.interior / (2.0 * s) + p.boundary;
    let (gd, _) = functional.weighted_data_norms(None, Some(&g1.sub(g2)))?;
    let rhs = 2.0 / s * gd;
    let dtt = d.initial_second_derivative(&grid);
    let qx = grid.space_weights();
    let w = functional.weights();
    let initial: f64 = (0..grid.nx())
        .map(|i| qx[i] * w.weight(0, i) * dtt.values()[i].powi(2))
        .sum();
    Ok(DifferenceReport {
        lhs,
        rhs,
        slack: rhs - lhs,
        empirical_constant: crate::solver::safe_ratio(s.sqrt() * initial, gd),
        max_minimizer_gap: d.field().max_abs(),
    })
}
