//! Crank–Nicolson forward solver for the MGT equation
//!
//! ```text
//! u_ttt + alpha u_tt - c^2 u_xx - b u_xxt = f,   alpha = gamma + c^2 / b,
//! ```
//!
//! with homogeneous Dirichlet data, plus the energy and Laplacian bound
//! diagnostics and the discrete operator residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    gradient, laplacian_into, space_time_sq, weighted_sq, ScalarField, SpaceTimeField,
    SpaceTimeGrid,
};
use crate::linalg::TridiagonalLu;

/// Known coefficients `c`, `b`, the damping shift `gamma(x)` and its box bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgtCoefficients {
    pub c: f64,
    pub b: f64,
    pub gamma: ScalarField,
    pub box_bound: f64,
}

impl MgtCoefficients {
    pub fn new(c: f64, b: f64, gamma: ScalarField, box_bound: f64) -> Result<Self> {
        let out = Self {
            c,
            b,
            gamma,
            box_bound,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c != 0.0) {
            return Err(Error::InvalidCoefficients(format!(
                "c must be finite and nonzero, got {}",
                self.c
            )));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::InvalidCoefficients(format!(
                "b must be positive, got {}",
                self.b
            )));
        }
        if !(self.box_bound.is_finite() && self.box_bound > 0.0) {
            return Err(Error::InvalidCoefficients(format!(
                "box bound M must be positive, got {}",
                self.box_bound
            )));
        }
        if let Some((i, g)) = self
            .gamma
            .values()
            .iter()
            .enumerate()
            .find(|(_, g)| !(**g >= 0.0 && **g <= self.box_bound))
        {
            return Err(Error::InvalidCoefficients(format!(
                "gamma[{i}] = {g} lies outside [0, {}]",
                self.box_bound
            )));
        }
        Ok(())
    }

    /// Same constants with a different damping shift.
    pub fn with_gamma(&self, gamma: ScalarField) -> Result<Self> {
        Self::new(self.c, self.b, gamma, self.box_bound)
    }

    /// `alpha = gamma + c^2 / b` at every node.
    pub fn alpha(&self) -> Vec<f64> {
        let shift = self.c * self.c / self.b;
        self.gamma.values().iter().map(|g| g + shift).collect()
    }
}

const BOUNDARY_ROUNDOFF: f64 = 1e-12;

/// Initial triple `(u0, u1, u2)` and the positivity floor `eta` for `|u2|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub u0: ScalarField,
    pub u1: ScalarField,
    pub u2: ScalarField,
    pub eta: f64,
}

impl InitialData {
    /// Validates the triple; boundary values of `u0`, `u1` at roundoff level
    /// (e.g. `sin(pi x)` sampled at `x = 1`) are snapped to exact zeros.
    pub fn new(
        mut u0: ScalarField,
        mut u1: ScalarField,
        u2: ScalarField,
        eta: f64,
    ) -> Result<Self> {
        for f in [&mut u0, &mut u1] {
            let tol = BOUNDARY_ROUNDOFF * f.max_abs().max(1.0);
            let v = f.values_mut();
            if let Some(last) = v.len().checked_sub(1) {
                for i in [0, last] {
                    if v[i].abs() <= tol {
                        v[i] = 0.0;
                    }
                }
            }
        }
        let out = Self { u0, u1, u2, eta };
        out.validate_values()?;
        Ok(out)
    }

    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        Self {
            u0: ScalarField::zeros(grid),
            u1: ScalarField::zeros(grid),
            u2: ScalarField::zeros(grid),
            eta: 0.0,
        }
    }

    fn validate_values(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInitialData(format!(
                "eta must be >= 0, got {}",
                self.eta
            )));
        }
        for (name, f) in [("u0", &self.u0), ("u1", &self.u1)] {
            let v = f.values();
            if v.is_empty() {
                continue;
            }
            let tol = BOUNDARY_ROUNDOFF * f.max_abs().max(1.0);
            if v[0].abs() > tol || v[v.len() - 1].abs() > tol {
                return Err(Error::InvalidInitialData(format!(
                    "{name} must vanish at the boundary nodes"
                )));
            }
        }
        self.check_positivity()
    }

    /// Checks `|u2| >= eta` at every node when `eta > 0`.
    pub fn check_positivity(&self) -> Result<()> {
        if self.eta > 0.0 {
            if let Some((node, v)) = self
                .u2
                .values()
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.abs() >= self.eta))
            {
                return Err(Error::PositivityViolated {
                    node,
                    value: *v,
                    eta: self.eta,
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self, grid: &SpaceTimeGrid) -> Result<()> {
        self.u0.check(grid)?;
        self.u1.check(grid)?;
        self.u2.check(grid)?;
        self.validate_values()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            u0: self.u0.scaled(k),
            u1: self.u1.scaled(k),
            u2: self.u2.scaled(k),
            eta: self.eta * k.abs(),
        }
    }
}

/// Snapshots of `(u, u_t, u_tt)` at every time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub u: SpaceTimeField,
    pub ut: SpaceTimeField,
    pub utt: SpaceTimeField,
}

impl Trajectory {
    pub fn sub(&self, other: &Self) -> Self {
        Self {
            u: self.u.sub(&other.u),
            ut: self.ut.sub(&other.ut),
            utt: self.utt.sub(&other.utt),
        }
    }
}

/// Advances the first-order system `(u, v, w)` with the trapezoidal rule.
///
/// Eliminating `u^{n+1}` and `v^{n+1}` leaves one tridiagonal system for
/// `w^{n+1}` per step; its matrix is constant and factored once.
pub fn solve_forward(
    coeffs: &MgtCoefficients,
    data: &InitialData,
    source: &SpaceTimeField,
    grid: &SpaceTimeGrid,
) -> Result<Trajectory> {
    coeffs.validate()?;
    coeffs.gamma.check(grid)?;
    data.validate(grid)?;
    source.check(grid)?;

    let (nx, nt) = (grid.nx(), grid.nt());
    let (h, dt) = (grid.h(), grid.dt());
    let (c2, b) = (coeffs.c * coeffs.c, coeffs.b);
    let alpha = coeffs.alpha();
    let m = nx - 2;

    // (I + dt/2 alpha - dt/2 (c^2 dt^2/4 + b dt/2) Lap) w^{n+1} = rhs
    let kappa = 0.5 * dt * (0.25 * c2 * dt * dt + 0.5 * b * dt) / (h * h);
    let diag: Vec<f64> = (1..nx - 1)
        .map(|i| 1.0 + 0.5 * dt * alpha[i] + 2.0 * kappa)
        .collect();
    let off = vec![-kappa; m - 1];
    let lu = TridiagonalLu::factor(&off, &diag, &off).ok_or(Error::SingularStep { step: 0 })?;

    let mut traj = Trajectory {
        u: SpaceTimeField::zeros(grid),
        ut: SpaceTimeField::zeros(grid),
        utt: SpaceTimeField::zeros(grid),
    };
    // padded work vectors keep the boundary entries at zero
    let mut u = data.u0.values().to_vec();
    let mut v = data.u1.values().to_vec();
    for f in [&mut u, &mut v] {
        f[0] = 0.0;
        f[nx - 1] = 0.0;
    }
    traj.u.row_mut(0).copy_from_slice(&u);
    traj.ut.row_mut(0).copy_from_slice(&v);
    traj.utt.row_mut(0).copy_from_slice(data.u2.values());
    // only interior entries of w are read; boundary entries stay 0 after level 0
    let mut w = data.u2.values().to_vec();
    w[0] = 0.0;
    w[nx - 1] = 0.0;
    let mut u_star = vec![0.0; nx];
    let mut v_star = vec![0.0; nx];
    let mut sum = vec![0.0; nx];
    let mut lap_u = vec![0.0; nx];
    let mut lap_v = vec![0.0; nx];
    let mut rhs = vec![0.0; m];

    for n in 0..nt - 1 {
        for i in 1..nx - 1 {
            u_star[i] = u[i] + dt * v[i] + 0.25 * dt * dt * w[i];
            v_star[i] = v[i] + 0.5 * dt * w[i];
        }
        for i in 0..nx {
            sum[i] = u_star[i] + u[i];
        }
        laplacian_into(&sum, h, &mut lap_u);
        for i in 0..nx {
            sum[i] = v_star[i] + v[i];
        }
        laplacian_into(&sum, h, &mut lap_v);
        let (f0, f1) = (source.row(n), source.row(n + 1));
        for i in 1..nx - 1 {
            let wi = w[i];
            rhs[i - 1] = wi - 0.5 * dt * alpha[i] * wi
                + 0.5 * dt * (c2 * lap_u[i] + b * lap_v[i] + f0[i] + f1[i]);
        }
        lu.solve_in_place(&mut rhs);
        for i in 1..nx - 1 {
            let wn = rhs[i - 1];
            if !wn.is_finite() {
                return Err(Error::NonFiniteState { step: n + 1 });
            }
            w[i] = wn;
            v[i] = v_star[i] + 0.5 * dt * wn;
            u[i] = u_star[i] + 0.25 * dt * dt * wn;
        }
        traj.u.row_mut(n + 1).copy_from_slice(&u);
        traj.ut.row_mut(n + 1).copy_from_slice(&v);
        traj.utt.row_mut(n + 1).copy_from_slice(&w);
    }
    Ok(traj)
}

/// `E_e(y) = (b/2) ||y_x||^2 + (1/2) ||y_t||^2` with trapezoidal quadrature.
pub fn energy_e(y: &ScalarField, yt: &ScalarField, b: f64, grid: &SpaceTimeGrid) -> Result<f64> {
    y.check(grid)?;
    yt.check(grid)?;
    Ok(energy_slices(y.values(), yt.values(), b, grid))
}

fn energy_slices(y: &[f64], yt: &[f64], b: f64, grid: &SpaceTimeGrid) -> f64 {
    let q = grid.space_weights();
    let g = gradient(y, grid.h());
    0.5 * b * weighted_sq(&g, &q) + 0.5 * weighted_sq(yt, &q)
}

/// `E(t_n) = E_e(u_t) + E_e(u)` evaluated from the stored snapshots.
pub fn total_energy(traj: &Trajectory, n: usize, b: f64, grid: &SpaceTimeGrid) -> Result<f64> {
    traj.u.check(grid)?;
    if n >= traj.u.nt() {
        return Err(Error::LevelOutOfRange {
            index: n,
            len: traj.u.nt(),
        });
    }
    Ok(energy_slices(traj.ut.row(n), traj.utt.row(n), b, grid)
        + energy_slices(traj.u.row(n), traj.ut.row(n), b, grid))
}

pub fn energy_series(traj: &Trajectory, b: f64, grid: &SpaceTimeGrid) -> Result<Vec<f64>> {
    (0..grid.nt())
        .map(|n| total_energy(traj, n, b, grid))
        .collect()
}

/// Ratios above this are reported as unbounded growth.
pub const UNBOUNDED_RATIO: f64 = 1e8;

/// `max_t numerator(t) / denominator` with the convention `0/0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub numerator_max: f64,
    pub argmax_level: usize,
    pub denominator: f64,
    pub ratio: f64,
    pub unbounded: bool,
}

impl BoundReport {
    fn from_series(series: &[f64], denominator: f64) -> Self {
        let (argmax_level, numerator_max) =
            series
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, 0.0),
                    |(ia, a), (ib, b)| if b > a { (ib, b) } else { (ia, a) },
                );
        let ratio = safe_ratio(numerator_max, denominator);
        Self {
            numerator_max,
            argmax_level,
            denominator,
            ratio,
            unbounded: !ratio.is_finite() || ratio > UNBOUNDED_RATIO,
        }
    }
}

pub(crate) fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Energy lemma check: `max_t E(t) / (E(0) + ||f||^2)`.
pub fn verify_energy_bound(
    traj: &Trajectory,
    source: &SpaceTimeField,
    b: f64,
    grid: &SpaceTimeGrid,
) -> Result<BoundReport> {
    source.check(grid)?;
    let series = energy_series(traj, b, grid)?;
    let den = series[0] + space_time_sq(grid, source.values());
    Ok(BoundReport::from_series(&series, den))
}

/// Laplacian lemma check: `max_t ||Lap u(t)||^2 / (||f||^2 + E(0) + ||Lap u0||^2)`.
pub fn verify_laplacian_bound(
    traj: &Trajectory,
    source: &SpaceTimeField,
    coeffs: &MgtCoefficients,
    grid: &SpaceTimeGrid,
) -> Result<BoundReport> {
    source.check(grid)?;
    traj.u.check(grid)?;
    let q = grid.space_weights();
    let lap = traj.u.laplacian(grid)?;
    let series: Vec<f64> = (0..grid.nt())
        .map(|n| weighted_sq(lap.row(n), &q))
        .collect();
    let den =
        total_energy(traj, 0, coeffs.b, grid)? + space_time_sq(grid, source.values()) + series[0];
    Ok(BoundReport::from_series(&series, den))
}

/// `L y = y_ttt + alpha y_tt - c^2 y_xx - b y_xxt` at interior nodes
/// (boundary nodes are set to 0), using the grid time stencils.
pub fn mgt_operator(
    y: &SpaceTimeField,
    coeffs: &MgtCoefficients,
    grid: &SpaceTimeGrid,
) -> Result<SpaceTimeField> {
    y.check(grid)?;
    coeffs.gamma.check(grid)?;
    let dt = grid.dt();
    let alpha = coeffs.alpha();
    let y3 = y.time_derivative(dt, 3)?;
    let y2 = y.time_derivative(dt, 2)?;
    let lap = y.laplacian(grid)?;
    let lap_t = lap.time_derivative(dt, 1)?;
    let (c2, b) = (coeffs.c * coeffs.c, coeffs.b);
    let mut out = SpaceTimeField::zeros(grid);
    for n in 0..grid.nt() {
        for i in grid.interior() {
            let v =
                y3.get(n, i) + alpha[i] * y2.get(n, i) - c2 * lap.get(n, i) - b * lap_t.get(n, i);
            out.set(n, i, v);
        }
    }
    Ok(out)
}

/// Pointwise discrete residual `L u - f` of a trajectory.
pub fn pde_residual(
    traj: &Trajectory,
    coeffs: &MgtCoefficients,
    source: &SpaceTimeField,
    grid: &SpaceTimeGrid,
) -> Result<SpaceTimeField> {
    source.check(grid)?;
    let mut r = mgt_operator(&traj.u, coeffs, grid)?;
    for n in 0..grid.nt() {
        for i in grid.interior() {
            let v = r.get(n, i) - source.get(n, i);
            r.set(n, i, v);
        }
    }
    Ok(r)
}

/// Manufactured solution `u = sin(k pi x_hat) t^3` on the grid's interval,
/// with `x_hat` the coordinate mapped to `[0, 1]`, and its exact source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCubic {
    pub alpha: f64,
    pub b: f64,
    pub c: f64,
}

impl ManufacturedCubic {
    fn wavenumber(grid: &SpaceTimeGrid) -> f64 {
        std::f64::consts::PI / (grid.x_right() - grid.x_left())
    }

    pub fn u(&self, grid: &SpaceTimeGrid, x: f64, t: f64) -> f64 {
        let k = Self::wavenumber(grid);
        (k * (x - grid.x_left())).sin() * t.powi(3)
    }

    pub fn source(&self, grid: &SpaceTimeGrid) -> SpaceTimeField {
        let k = Self::wavenumber(grid);
        let (a, b, c) = (self.alpha, self.b, self.c);
        SpaceTimeField::from_fn(grid, |x, t| {
            (k * (x - grid.x_left())).sin()
                * (6.0 + 6.0 * a * t + 3.0 * b * k * k * t * t + c * c * k * k * t.powi(3))
        })
    }

    pub fn exact(&self, grid: &SpaceTimeGrid) -> Trajectory {
        let k = Self::wavenumber(grid);
        let sx = |x: f64| (k * (x - grid.x_left())).sin();
        Trajectory {
            u: SpaceTimeField::from_fn(grid, |x, t| sx(x) * t.powi(3)),
            ut: SpaceTimeField::from_fn(grid, |x, t| sx(x) * 3.0 * t * t),
            utt: SpaceTimeField::from_fn(grid, |x, t| sx(x) * 6.0 * t),
        }
    }

    /// Coefficients realizing `alpha` (requires `alpha >= c^2/b`).
    pub fn coefficients(&self, grid: &SpaceTimeGrid, box_bound: f64) -> Result<MgtCoefficients> {
        let gamma = self.alpha - self.c * self.c / self.b;
        MgtCoefficients::new(
            self.c,
            self.b,
            ScalarField::constant(grid, gamma),
            box_bound,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{discrete_norm_sq, NormInput, NormKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(nx: usize, nt: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(0.0, 1.0, nx, 1.0, nt).unwrap()
    }

    fn zero_coeffs(g: &SpaceTimeGrid) -> MgtCoefficients {
        MgtCoefficients::new(1.0, 1.0, ScalarField::zeros(g), 1.0).unwrap()
    }

    fn unit_u2(g: &SpaceTimeGrid) -> InitialData {
        InitialData::new(
            ScalarField::zeros(g),
            ScalarField::zeros(g),
            ScalarField::constant(g, 1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = grid(21, 21);
        let traj = solve_forward(
            &zero_coeffs(&g),
            &InitialData::zeros(&g),
            &SpaceTimeField::zeros(&g),
            &g,
        )
        .unwrap();
        assert_eq!(traj.u.max_abs(), 0.0);
        assert_eq!(traj.utt.max_abs(), 0.0);
    }

    fn manufactured_error(n: usize) -> f64 {
        let g = grid(n, n);
        let mms = ManufacturedCubic {
            alpha: 1.0,
            b: 1.0,
            c: 1.0,
        };
        let coeffs = mms.coefficients(&g, 1.0).unwrap();
        let traj = solve_forward(&coeffs, &InitialData::zeros(&g), &mms.source(&g), &g).unwrap();
        traj.u.sub(&mms.exact(&g).u).max_abs()
    }

    #[test]
    fn manufactured_solution_second_order() {
        let (e1, e2, e3) = (
            manufactured_error(26),
            manufactured_error(51),
            manufactured_error(101),
        );
        assert!((e1 / e2).log2() >= 1.8, "{e1} {e2}");
        assert!((e2 / e3).log2() >= 1.8, "{e2} {e3}");
    }

    #[test]
    fn snapshot_zero_and_dirichlet_invariants() {
        let g = grid(21, 31);
        let data = InitialData::new(
            ScalarField::from_fn(&g, |x| x * (1.0 - x)),
            ScalarField::from_fn(&g, |x| (PI * x).sin()),
            ScalarField::constant(&g, 1.0),
            0.0,
        )
        .unwrap();
        let traj = solve_forward(&zero_coeffs(&g), &data, &SpaceTimeField::zeros(&g), &g).unwrap();
        assert_eq!(traj.u.row(0), data.u0.values());
        assert_eq!(traj.ut.row(0), data.u1.values());
        assert_eq!(traj.utt.row(0), data.u2.values());
        for n in 0..g.nt() {
            assert_eq!(traj.u.get(n, 0), 0.0);
            assert_eq!(traj.u.get(n, 20), 0.0);
            assert_eq!(traj.ut.get(n, 0), 0.0);
            assert_eq!(traj.ut.get(n, 20), 0.0);
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        let g = grid(11, 11);
        assert!(MgtCoefficients::new(1.0, 0.0, ScalarField::zeros(&g), 1.0).is_err());
        assert!(MgtCoefficients::new(0.0, 1.0, ScalarField::zeros(&g), 1.0).is_err());
        assert!(MgtCoefficients::new(1.0, 1.0, ScalarField::constant(&g, 2.0), 1.0).is_err());
        assert!(InitialData::new(
            ScalarField::constant(&g, 1.0),
            ScalarField::zeros(&g),
            ScalarField::zeros(&g),
            0.0
        )
        .is_err());
        assert!(matches!(
            InitialData::new(
                ScalarField::zeros(&g),
                ScalarField::zeros(&g),
                ScalarField::constant(&g, 0.5),
                1.0
            ),
            Err(Error::PositivityViolated { .. })
        ));
    }

    #[test]
    fn energy_examples() {
        let g = grid(101, 5);
        let z = ScalarField::zeros(&g);
        assert_eq!(energy_e(&z, &z, 1.0, &g).unwrap(), 0.0);
        let s = ScalarField::from_fn(&g, |x| (PI * x).sin());
        assert!((energy_e(&s, &z, 1.0, &g).unwrap() - PI * PI / 4.0).abs() < 1e-3);
        let one = ScalarField::constant(&g, 1.0);
        assert_relative_eq!(energy_e(&z, &one, 1.0, &g).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn total_energy_at_level_zero_and_out_of_range() {
        let g = grid(41, 11);
        let data = unit_u2(&g);
        let traj = solve_forward(&zero_coeffs(&g), &data, &SpaceTimeField::zeros(&g), &g).unwrap();
        let direct = energy_e(&data.u1, &data.u2, 1.0, &g).unwrap()
            + energy_e(&data.u0, &data.u1, 1.0, &g).unwrap();
        assert_eq!(total_energy(&traj, 0, 1.0, &g).unwrap(), direct);
        assert!(matches!(
            total_energy(&traj, 11, 1.0, &g),
            Err(Error::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn manufactured_energy_and_laplacian_at_final_time() {
        let g = grid(101, 101);
        let mms = ManufacturedCubic {
            alpha: 1.0,
            b: 1.0,
            c: 1.0,
        };
        let coeffs = mms.coefficients(&g, 1.0).unwrap();
        let traj = solve_forward(&coeffs, &InitialData::zeros(&g), &mms.source(&g), &g).unwrap();
        // E(1) = E_e(u_t) + E_e(u) with u = sin(pi x) t^3 at t = 1:
        // (pi^2/4)(9 + 1) + (1/4)(36 + 9)
        let exact = PI * PI / 4.0 * 10.0 + 45.0 / 4.0;
        let e = total_energy(&traj, 100, 1.0, &g).unwrap();
        assert!((e - exact).abs() / exact < 0.01, "{e} vs {exact}");
        let rep = verify_laplacian_bound(&traj, &mms.source(&g), &coeffs, &g).unwrap();
        // ||u_xx(1)||^2 = pi^4 / 2
        let lap_exact = PI.powi(4) / 2.0;
        assert!((rep.numerator_max - lap_exact).abs() / lap_exact < 0.01);
        assert_eq!(rep.argmax_level, 100);
    }

    #[test]
    fn bound_reports_zero_case() {
        let g = grid(11, 11);
        let traj = solve_forward(
            &zero_coeffs(&g),
            &InitialData::zeros(&g),
            &SpaceTimeField::zeros(&g),
            &g,
        )
        .unwrap();
        let f = SpaceTimeField::zeros(&g);
        assert_eq!(verify_energy_bound(&traj, &f, 1.0, &g).unwrap().ratio, 0.0);
        assert_eq!(
            verify_laplacian_bound(&traj, &f, &zero_coeffs(&g), &g)
                .unwrap()
                .ratio,
            0.0
        );
    }

    fn energy_ratio(n: usize, gamma: f64) -> f64 {
        let g = SpaceTimeGrid::new(0.0, 1.0, n, 1.0, 2 * n - 1).unwrap();
        let coeffs = MgtCoefficients::new(1.0, 1.0, ScalarField::constant(&g, gamma), 1.0).unwrap();
        let data = InitialData::new(
            ScalarField::zeros(&g),
            ScalarField::from_fn(&g, |x| (PI * x).sin()),
            ScalarField::from_fn(&g, |x| (PI * x).sin()),
            0.0,
        )
        .unwrap();
        let f = SpaceTimeField::zeros(&g);
        let traj = solve_forward(&coeffs, &data, &f, &g).unwrap();
        let rep = verify_energy_bound(&traj, &f, 1.0, &g).unwrap();
        assert!(!rep.unbounded);
        rep.ratio
    }

    #[test]
    fn energy_ratio_refinement_stable() {
        for gamma in [0.0, 1.0] {
            let (r1, r2) = (energy_ratio(41, gamma), energy_ratio(81, gamma));
            assert!(r1.is_finite() && (r1 - r2).abs() / r1 < 0.2, "{r1} {r2}");
        }
    }

    fn residual_norm(n: usize) -> f64 {
        let g = grid(n, n);
        let mms = ManufacturedCubic {
            alpha: 1.0,
            b: 1.0,
            c: 1.0,
        };
        let coeffs = mms.coefficients(&g, 1.0).unwrap();
        let f = mms.source(&g);
        let traj = solve_forward(&coeffs, &InitialData::zeros(&g), &f, &g).unwrap();
        let r = pde_residual(&traj, &coeffs, &f, &g).unwrap();
        discrete_norm_sq(&g, NormInput::SpaceTime(&r), NormKind::L2SpaceTime)
            .unwrap()
            .sqrt()
    }

    #[test]
    fn residual_of_discrete_solution_decays() {
        let (r1, r2, r3) = (residual_norm(26), residual_norm(51), residual_norm(101));
        assert!((r1 / r2).log2() >= 1.8, "{r1} {r2}");
        assert!((r2 / r3).log2() >= 1.8, "{r2} {r3}");
    }

    #[test]
    fn residual_of_exact_solution_decays() {
        let err = |n: usize| {
            let g = grid(n, n);
            let mms = ManufacturedCubic {
                alpha: 1.0,
                b: 1.0,
                c: 1.0,
            };
            let coeffs = mms.coefficients(&g, 1.0).unwrap();
            let r = pde_residual(&mms.exact(&g), &coeffs, &mms.source(&g), &g).unwrap();
            r.max_abs()
        };
        let (a, b) = (err(21), err(41));
        assert!(b < a / 3.0, "{a} {b}");
        let g = grid(11, 11);
        let zero = solve_forward(
            &zero_coeffs(&g),
            &InitialData::zeros(&g),
            &SpaceTimeField::zeros(&g),
            &g,
        )
        .unwrap();
        let r = pde_residual(&zero, &zero_coeffs(&g), &SpaceTimeField::zeros(&g), &g).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn superposition(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 1usize..4, gamma in 0.0f64..1.0) {
            let g = grid(21, 41);
            let coeffs = MgtCoefficients::new(1.0, 1.0, ScalarField::constant(&g, gamma), 1.0).unwrap();
            let d1 = InitialData::new(
                ScalarField::from_fn(&g, |x| (k as f64 * PI * x).sin()),
                ScalarField::zeros(&g),
                ScalarField::constant(&g, 1.0),
                0.0,
            ).unwrap();
            let d2 = InitialData::new(
                ScalarField::zeros(&g),
                ScalarField::from_fn(&g, |x| x * (1.0 - x)),
                ScalarField::from_fn(&g, |x| x),
                0.0,
            ).unwrap();
            let f1 = SpaceTimeField::from_fn(&g, |x, t| x * t);
            let f2 = SpaceTimeField::zeros(&g);
            let t1 = solve_forward(&coeffs, &d1, &f1, &g).unwrap();
            let t2 = solve_forward(&coeffs, &d2, &f2, &g).unwrap();
            let d12 = InitialData::new(
                d1.u0.scaled(a).add(&d2.u0.scaled(b)),
                d1.u1.scaled(a).add(&d2.u1.scaled(b)),
                d1.u2.scaled(a).add(&d2.u2.scaled(b)),
                0.0,
            ).unwrap();
            let t12 = solve_forward(&coeffs, &d12, &f1.scaled(a).add(&f2.scaled(b)), &g).unwrap();
            let combo = t1.u.scaled(a).add(&t2.u.scaled(b));
            let scale = combo.max_abs().max(1.0);
            prop_assert!(t12.u.sub(&combo).max_abs() <= 1e-12 * scale);
        }
    }
}
