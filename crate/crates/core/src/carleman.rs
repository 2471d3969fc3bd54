//! Carleman weight geometry, admissibility checks, log-domain weights and the
//! empirical two-sided evaluation of the Carleman estimate.
//!
//! The weight is `exp(2 s phi_lambda)` with `phi_lambda = exp(lambda phi)` and
//! `phi(x, t) = |x - x0|^2 - beta t^2 + M0`. Everything is kept in the log
//! domain; weighted sums are normalized by `exp(shift)` (by default the
//! smallest log-weight on the grid), which rescales every weighted quantity
//! by the same positive constant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, Side, SpaceTimeField, SpaceTimeGrid};
use crate::solver::{mgt_operator, safe_ratio, MgtCoefficients};

/// Largest admissible log-weight before exponentiation.
pub const LOG_WEIGHT_LIMIT: f64 = 700.0;

/// Observation point `x0`, time scale `beta`, shift `M0` and horizon `T`,
/// together with the observed boundary sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanGeometry {
    pub x0: f64,
    pub beta: f64,
    pub m0: f64,
    pub final_time: f64,
    pub gamma0_sides: Vec<Side>,
}

impl CarlemanGeometry {
    /// Geometry whose observed sides are exactly the ones required by the
    /// multiplier condition for this `x0`.
    pub fn new(x0: f64, beta: f64, m0: f64, final_time: f64, grid: &SpaceTimeGrid) -> Self {
        Self {
            x0,
            beta,
            m0,
            final_time,
            gamma0_sides: required_sides(x0, grid),
        }
    }

    /// `Omega = (0, 1)`, `x0 = -0.1`, `beta = 0.9`, `M0 = 2.5`, `T = 1.25`.
    pub fn canonical(grid: &SpaceTimeGrid) -> Self {
        Self::new(-0.1, 0.9, 2.5, 1.25, grid)
    }

    pub fn phi(&self, x: f64, t: f64) -> f64 {
        phi(x, t, self)
    }

    /// `sup |x - x0|` over the closed domain.
    pub fn sup_distance(&self, grid: &SpaceTimeGrid) -> f64 {
        (grid.x_left() - self.x0)
            .abs()
            .max((grid.x_right() - self.x0).abs())
    }

    fn inf_distance(&self, grid: &SpaceTimeGrid) -> f64 {
        if (grid.x_left()..=grid.x_right()).contains(&self.x0) {
            0.0
        } else {
            (grid.x_left() - self.x0)
                .abs()
                .min((grid.x_right() - self.x0).abs())
        }
    }
}

/// Endpoints `p` with `(p - x0) n(p) >= 0`.
pub fn required_sides(x0: f64, grid: &SpaceTimeGrid) -> Vec<Side> {
    [Side::Left, Side::Right]
        .into_iter()
        .filter(|&side| (grid.boundary_coordinate(side) - x0) * side.normal() >= 0.0)
        .collect()
}

/// Large parameter `s` and the exponent scale `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanScales {
    pub lambda: f64,
    pub s: f64,
}

impl CarlemanScales {
    pub fn new(lambda: f64, s: f64) -> Result<Self> {
        let out = Self { lambda, s };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite() && self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Inadmissible(format!(
                "scales must be positive, got lambda = {}, s = {}",
                self.lambda, self.s
            )));
        }
        Ok(())
    }
}

/// Geometry plus scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanSetup {
    pub geometry: CarlemanGeometry,
    pub scales: CarlemanScales,
}

impl CarlemanSetup {
    pub fn new(geometry: CarlemanGeometry, scales: CarlemanScales) -> Self {
        Self { geometry, scales }
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self {
            geometry: self.geometry.clone(),
            scales: CarlemanScales { s, ..self.scales },
        }
    }

    /// Errors unless the geometry is admissible and the scales are positive.
    pub fn validate(&self, grid: &SpaceTimeGrid) -> Result<()> {
        self.scales.validate()?;
        let report = validate_admissibility(&self.geometry, grid);
        if report.accepted {
            Ok(())
        } else {
            let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::Inadmissible(list.join("; ")))
        }
    }
}

/// One violated admissibility condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum Violation {
    BetaOutOfRange { beta: f64 },
    ObserverInsideDomain { x0: f64 },
    MissingObservedSide { side: Side },
    HorizonTooShort { final_time: f64, sup_distance: f64 },
    BetaHorizonTooShort { beta_t: f64, sup_distance: f64 },
    WeightBelowOne { m0: f64, required: f64 },
    HorizonMismatch { geometry: f64, grid: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BetaOutOfRange { beta } => write!(f, "beta = {beta} is not in (0, 1)"),
            Self::ObserverInsideDomain { x0 } => write!(f, "x0 = {x0} lies in the closed domain"),
            Self::MissingObservedSide { side } => {
                write!(
                    f,
                    "multiplier condition requires observing the {side} endpoint"
                )
            }
            Self::HorizonTooShort {
                final_time,
                sup_distance,
            } => {
                write!(
                    f,
                    "T = {final_time} must exceed sup|x - x0| = {sup_distance}"
                )
            }
            Self::BetaHorizonTooShort {
                beta_t,
                sup_distance,
            } => {
                write!(
                    f,
                    "beta T = {beta_t} must exceed sup|x - x0| = {sup_distance}"
                )
            }
            Self::WeightBelowOne { m0, required } => {
                write!(f, "M0 = {m0} is below beta T^2 + 1 = {required}")
            }
            Self::HorizonMismatch { geometry, grid } => {
                write!(
                    f,
                    "geometry horizon T = {geometry} differs from grid horizon {grid}"
                )
            }
        }
    }
}

/// Outcome of [`validate_admissibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub accepted: bool,
    pub violations: Vec<Violation>,
    /// Observed sides required by the multiplier condition.
    pub gamma0: Vec<Side>,
    pub sup_distance: f64,
    pub beta_t: f64,
    /// `min phi` over the closure of `Omega x [0, T]`.
    pub phi_min: f64,
}

pub fn validate_admissibility(
    geometry: &CarlemanGeometry,
    grid: &SpaceTimeGrid,
) -> AdmissibilityReport {
    let g = geometry;
    let mut violations = Vec::new();
    if !(g.beta > 0.0 && g.beta < 1.0) {
        violations.push(Violation::BetaOutOfRange { beta: g.beta });
    }
    if g.x0 >= grid.x_left() && g.x0 <= grid.x_right() {
        violations.push(Violation::ObserverInsideDomain { x0: g.x0 });
    }
    let gamma0 = required_sides(g.x0, grid);
    for side in &gamma0 {
        if !g.gamma0_sides.contains(side) {
            violations.push(Violation::MissingObservedSide { side: *side });
        }
    }
    let sup_distance = g.sup_distance(grid);
    if !(g.final_time > sup_distance) {
        violations.push(Violation::HorizonTooShort {
            final_time: g.final_time,
            sup_distance,
        });
    }
    let beta_t = g.beta * g.final_time;
    if !(beta_t > sup_distance) {
        violations.push(Violation::BetaHorizonTooShort {
            beta_t,
            sup_distance,
        });
    }
    let required = g.beta * g.final_time * g.final_time + 1.0;
    if !(g.m0 >= required) {
        violations.push(Violation::WeightBelowOne { m0: g.m0, required });
    }
    if (g.final_time - grid.final_time()).abs() > 1e-12 * g.final_time.abs().max(1.0) {
        violations.push(Violation::HorizonMismatch {
            geometry: g.final_time,
            grid: grid.final_time(),
        });
    }
    let dmin = g.inf_distance(grid);
    AdmissibilityReport {
        accepted: violations.is_empty(),
        violations,
        gamma0,
        sup_distance,
        beta_t,
        phi_min: dmin * dmin - g.beta * g.final_time * g.final_time + g.m0,
    }
}

/// `phi(x, t) = |x - x0|^2 - beta t^2 + M0`.
pub fn phi(x: f64, t: f64, geometry: &CarlemanGeometry) -> f64 {
    let d = x - geometry.x0;
    d * d - geometry.beta * t * t + geometry.m0
}

/// Natural logarithm of the weight, `2 s exp(lambda phi)`.
pub fn log_weight(x: f64, t: f64, geometry: &CarlemanGeometry, scales: &CarlemanScales) -> f64 {
    2.0 * scales.s * (scales.lambda * phi(x, t, geometry)).exp()
}

/// Extremes of the log-weight over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightStatistics {
    pub log_min: f64,
    pub log_max: f64,
    pub log10_ratio: f64,
}

pub fn weight_statistics(
    grid: &SpaceTimeGrid,
    geometry: &CarlemanGeometry,
    scales: &CarlemanScales,
) -> WeightStatistics {
    let mut log_min = f64::INFINITY;
    let mut log_max = f64::NEG_INFINITY;
    for n in 0..grid.nt() {
        for i in 0..grid.nx() {
            let lw = log_weight(grid.x(i), grid.t(n), geometry, scales);
            log_min = log_min.min(lw);
            log_max = log_max.max(lw);
        }
    }
    WeightStatistics {
        log_min,
        log_max,
        log10_ratio: (log_max - log_min) / std::f64::consts::LN_10,
    }
}

/// Log-weights and `phi_lambda` tabulated on the grid, with the
/// normalization shift applied on exponentiation.
#[derive(Debug, Clone)]
pub struct CarlemanWeights {
    nx: usize,
    s: f64,
    lambda: f64,
    log_w: Vec<f64>,
    phi_lambda: Vec<f64>,
    shift: f64,
}

impl CarlemanWeights {
    /// Tabulates the weights after validating the setup and the overflow guard.
    pub fn new(grid: &SpaceTimeGrid, setup: &CarlemanSetup) -> Result<Self> {
        setup.validate(grid)?;
        let (nx, nt) = (grid.nx(), grid.nt());
        let sc = &setup.scales;
        let mut log_w = Vec::with_capacity(nx * nt);
        let mut phi_lambda = Vec::with_capacity(nx * nt);
        for n in 0..nt {
            for i in 0..nx {
                let pl = (sc.lambda * phi(grid.x(i), grid.t(n), &setup.geometry)).exp();
                phi_lambda.push(pl);
                log_w.push(2.0 * sc.s * pl);
            }
        }
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max <= LOG_WEIGHT_LIMIT) {
            return Err(Error::WeightOverflow {
                max_log_weight: max,
                limit: LOG_WEIGHT_LIMIT,
            });
        }
        let shift = log_w.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            nx,
            s: sc.s,
            lambda: sc.lambda,
            log_w,
            phi_lambda,
            shift,
        })
    }

    /// Same table with a different normalization shift.
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn log_weight(&self, n: usize, i: usize) -> f64 {
        self.log_w[n * self.nx + i]
    }

    /// `exp(log_weight - shift)`.
    pub fn weight(&self, n: usize, i: usize) -> f64 {
        (self.log_w[n * self.nx + i] - self.shift).exp()
    }

    pub fn phi_lambda(&self, n: usize, i: usize) -> f64 {
        self.phi_lambda[n * self.nx + i]
    }

    pub fn log_min(&self) -> f64 {
        self.log_w.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn log_max(&self) -> f64 {
        self.log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Every term of the Carleman estimate for one trajectory, in weights
/// normalized by `exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanTerms {
    /// `sqrt(s) int w(.,0) |y_tt(.,0)|^2`.
    pub initial_term: f64,
    /// `c^4 W(y)`.
    pub energy_y: f64,
    /// `W(y_t)`.
    pub energy_yt: f64,
    pub lhs: f64,
    /// `int int w |L y|^2`.
    pub rhs_interior: f64,
    /// `s lambda int_{Gamma_0} w (|d_n y_t|^2 + c^4 |d_n y|^2)`.
    pub rhs_boundary: f64,
    pub ratio: f64,
    pub log_scale: f64,
}

/// Checks that `y` vanishes on the boundary and at `t = 0`.
pub(crate) fn check_trajectory_constraints(y: &SpaceTimeField, grid: &SpaceTimeGrid) -> Result<()> {
    y.check(grid)?;
    let tol = 1e-12 * y.max_abs().max(f64::MIN_POSITIVE);
    if y.row(0).iter().any(|v| v.abs() > tol) {
        return Err(Error::InvalidInitialData(
            "trajectory must vanish at t = 0".into(),
        ));
    }
    let last = grid.nx() - 1;
    if (0..grid.nt()).any(|n| y.get(n, 0).abs() > tol || y.get(n, last).abs() > tol) {
        return Err(Error::InvalidInitialData(
            "trajectory must vanish at the boundary nodes".into(),
        ));
    }
    Ok(())
}

/// Evaluates both sides of the Carleman estimate with grid stencils and
/// trapezoidal quadrature; `ratio = lhs / (rhs_interior + rhs_boundary)`.
pub fn carleman_lhs_rhs(
    y: &SpaceTimeField,
    coeffs: &MgtCoefficients,
    setup: &CarlemanSetup,
    grid: &SpaceTimeGrid,
) -> Result<CarlemanTerms> {
    check_trajectory_constraints(y, grid)?;
    let weights = CarlemanWeights::new(grid, setup)?;
    carleman_terms_with(y, coeffs, &setup.geometry, &weights, grid)
}

pub(crate) fn carleman_terms_with(
    y: &SpaceTimeField,
    coeffs: &MgtCoefficients,
    geometry: &CarlemanGeometry,
    weights: &CarlemanWeights,
    grid: &SpaceTimeGrid,
) -> Result<CarlemanTerms> {
    let (nx, nt, h, dt) = (grid.nx(), grid.nt(), grid.h(), grid.dt());
    let (s, lambda) = (weights.s(), weights.lambda());
    let c4 = coeffs.c.powi(4);
    let qx = grid.space_weights();
    let qt = grid.time_weights();

    let yt = y.time_derivative(dt, 1)?;
    let ytt = y.time_derivative(dt, 2)?;
    let ly = mgt_operator(y, coeffs, grid)?;

    let initial_term = s.sqrt()
        * (0..nx)
            .map(|i| qx[i] * weights.weight(0, i) * ytt.get(0, i).powi(2))
            .sum::<f64>();

    let (mut first_y, mut zeroth_y, mut first_yt, mut zeroth_yt, mut rhs_interior) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for n in 0..nt {
        let gy = gradient(y.row(n), h);
        let gyt = gradient(yt.row(n), h);
        for i in 0..nx {
            let q = qt[n] * qx[i] * weights.weight(n, i);
            let pl = weights.phi_lambda(n, i);
            first_y += q * pl * (yt.get(n, i).powi(2) + gy[i] * gy[i]);
            zeroth_y += q * pl.powi(3) * y.get(n, i).powi(2);
            first_yt += q * pl * (ytt.get(n, i).powi(2) + gyt[i] * gyt[i]);
            zeroth_yt += q * pl.powi(3) * yt.get(n, i).powi(2);
            rhs_interior += q * ly.get(n, i).powi(2);
        }
    }
    let sl = s * lambda;
    let sl3 = sl.powi(3);
    let energy_y = c4 * (sl * first_y + sl3 * zeroth_y);
    let energy_yt = sl * first_yt + sl3 * zeroth_yt;

    let mut rhs_boundary = 0.0;
    for &side in &geometry.gamma0_sides {
        let dn = y.normal_trace(grid, side)?;
        let dnt = yt.normal_trace(grid, side)?;
        let ib = grid.boundary_index(side);
        for n in 0..nt {
            rhs_boundary += qt[n]
                * weights.weight(n, ib)
                * (dnt.samples()[n].powi(2) + c4 * dn.samples()[n].powi(2));
        }
    }
    rhs_boundary *= sl;

    let lhs = initial_term + energy_y + energy_yt;
    Ok(CarlemanTerms {
        initial_term,
        energy_y,
        energy_yt,
        lhs,
        rhs_interior,
        rhs_boundary,
        ratio: safe_ratio(lhs, rhs_interior + rhs_boundary),
        log_scale: weights.shift(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn canonical_grid(nx: usize, nt: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(0.0, 1.0, nx, 1.25, nt).unwrap()
    }

    #[test]
    fn canonical_geometry_is_admissible() {
        let g = canonical_grid(51, 51);
        let geo = CarlemanGeometry::canonical(&g);
        let rep = validate_admissibility(&geo, &g);
        assert!(rep.accepted, "{:?}", rep.violations);
        assert_eq!(rep.gamma0, vec![Side::Right]);
        assert_relative_eq!(rep.sup_distance, 1.1, epsilon = 1e-14);
        assert_relative_eq!(rep.beta_t, 1.125, epsilon = 1e-14);
        assert_relative_eq!(rep.phi_min, 1.10375, epsilon = 1e-12);
    }

    #[test]
    fn rejections() {
        let g = canonical_grid(51, 51);
        let mut geo = CarlemanGeometry::canonical(&g);
        geo.beta = 0.8;
        let rep = validate_admissibility(&geo, &g);
        assert!(!rep.accepted);
        assert!(rep
            .violations
            .iter()
            .any(|v| matches!(v, Violation::BetaHorizonTooShort { .. })));

        let geo = CarlemanGeometry::new(0.5, 0.9, 2.5, 1.25, &g);
        let rep = validate_admissibility(&geo, &g);
        assert!(rep
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ObserverInsideDomain { .. })));

        let mut geo = CarlemanGeometry::canonical(&g);
        geo.gamma0_sides = vec![Side::Left];
        let rep = validate_admissibility(&geo, &g);
        assert_eq!(
            rep.violations,
            vec![Violation::MissingObservedSide { side: Side::Right }]
        );
    }

    #[test]
    fn phi_and_log_weight_examples() {
        let g = canonical_grid(11, 11);
        let geo = CarlemanGeometry::canonical(&g);
        assert_relative_eq!(phi(1.0, 0.0, &geo), 3.71, epsilon = 1e-12);
        assert_relative_eq!(phi(0.9, 1.25, &geo), 2.09375, epsilon = 1e-12);
        assert_relative_eq!(phi(0.0, 1.25, &geo), 1.10375, epsilon = 1e-12);
        let lw = log_weight(
            1.0,
            0.0,
            &geo,
            &CarlemanScales {
                lambda: 1.0,
                s: 1.0,
            },
        );
        assert_relative_eq!(lw, 2.0 * 3.71_f64.exp(), epsilon = 1e-12);
        assert!((lw - 81.70).abs() < 0.01);
        let tiny = log_weight(
            0.3,
            0.7,
            &geo,
            &CarlemanScales {
                lambda: 1e-12,
                s: 1.5,
            },
        );
        assert_relative_eq!(tiny, 3.0, epsilon = 1e-9);
        assert_eq!(
            log_weight(
                0.3,
                0.7,
                &geo,
                &CarlemanScales {
                    lambda: 1.0,
                    s: 0.0
                }
            ),
            0.0
        );
    }

    #[test]
    fn canonical_weight_statistics() {
        let g = canonical_grid(101, 501);
        let geo = CarlemanGeometry::canonical(&g);
        let st = weight_statistics(
            &g,
            &geo,
            &CarlemanScales {
                lambda: 1.0,
                s: 1.0,
            },
        );
        // independent evaluation at the extreme corners
        let lo = 2.0 * (0.01_f64 - 0.9 * 1.5625 + 2.5).exp();
        let hi = 2.0 * (1.21_f64 + 2.5).exp();
        assert_relative_eq!(st.log_min, lo, epsilon = 1e-10);
        assert_relative_eq!(st.log_max, hi, epsilon = 1e-10);
        assert!((st.log10_ratio - 32.86).abs() < 0.05, "{}", st.log10_ratio);
        let flat = weight_statistics(
            &g,
            &geo,
            &CarlemanScales {
                lambda: 0.0,
                s: 1.0,
            },
        );
        assert_eq!(flat.log10_ratio, 0.0);
    }

    #[test]
    fn overflow_guard_trips() {
        let g = canonical_grid(11, 11);
        let setup = CarlemanSetup::new(
            CarlemanGeometry::canonical(&g),
            CarlemanScales {
                lambda: 1.0,
                s: 20.0,
            },
        );
        assert!(matches!(
            CarlemanWeights::new(&g, &setup),
            Err(Error::WeightOverflow { .. })
        ));
    }

    fn sample_y(g: &SpaceTimeGrid) -> SpaceTimeField {
        SpaceTimeField::from_fn(g, |x, t| (std::f64::consts::PI * x).sin() * t * t)
    }

    fn zero_gamma(g: &SpaceTimeGrid) -> MgtCoefficients {
        MgtCoefficients::new(1.0, 1.0, ScalarField::zeros(g), 1.0).unwrap()
    }

    #[test]
    fn carleman_ratio_zero_and_refinement() {
        let g = canonical_grid(26, 51);
        let setup = CarlemanSetup::new(
            CarlemanGeometry::canonical(&g),
            CarlemanScales {
                lambda: 1.0,
                s: 1.0,
            },
        );
        let z = SpaceTimeField::zeros(&g);
        let t = carleman_lhs_rhs(&z, &zero_gamma(&g), &setup, &g).unwrap();
        assert_eq!(t.lhs, 0.0);
        assert_eq!(t.ratio, 0.0);

        // the weight grows by ~e^{2 h |d_x log w|} per cell near x = 1, so the
        // quadrature is only resolved from about h = 0.01 on
        let g1 = canonical_grid(101, 201);
        let r1 = carleman_lhs_rhs(&sample_y(&g1), &zero_gamma(&g1), &setup, &g1)
            .unwrap()
            .ratio;
        let g2 = canonical_grid(201, 401);
        let r2 = carleman_lhs_rhs(&sample_y(&g2), &zero_gamma(&g2), &setup, &g2)
            .unwrap()
            .ratio;
        assert!(r1.is_finite() && r1 > 0.0);
        assert!((r1 - r2).abs() / r2 < 0.2, "{r1} {r2}");
    }

    #[test]
    fn constraint_violations_rejected() {
        let g = canonical_grid(11, 11);
        let setup = CarlemanSetup::new(
            CarlemanGeometry::canonical(&g),
            CarlemanScales {
                lambda: 1.0,
                s: 1.0,
            },
        );
        let bad = SpaceTimeField::from_fn(&g, |x, _| x * (1.0 - x));
        assert!(carleman_lhs_rhs(&bad, &zero_gamma(&g), &setup, &g).is_err());
    }

    proptest! {
        #[test]
        fn phi_even_in_time(x in -1.0f64..2.0, t in 0.0f64..2.0) {
            let g = canonical_grid(11, 11);
            let geo = CarlemanGeometry::canonical(&g);
            prop_assert_eq!(phi(x, t, &geo), phi(x, -t, &geo));
        }

        #[test]
        fn phi_at_least_one_on_closure(i in 0usize..51, n in 0usize..51) {
            let g = canonical_grid(51, 51);
            let geo = CarlemanGeometry::canonical(&g);
            prop_assert!(phi(g.x(i), g.t(n), &geo) >= 1.0);
        }

        #[test]
        fn log_weight_monotone(x in 0.0f64..1.0, t in 0.01f64..1.2, dt in 0.001f64..0.05, s in 0.1f64..4.0) {
            let g = canonical_grid(11, 11);
            let geo = CarlemanGeometry::canonical(&g);
            let sc = CarlemanScales { lambda: 1.0, s };
            let w = log_weight(x, t, &geo, &sc);
            prop_assert!(log_weight(x, t + dt, &geo, &sc) < w);
            let bigger = CarlemanScales { lambda: 1.0, s: s * 1.1 };
            prop_assert!(log_weight(x, t, &geo, &bigger) > w);
            prop_assert!(log_weight((x + dt).min(1.0), t, &geo, &sc) >= w);
        }

        #[test]
        fn ratio_monotone_in_scales(s in 0.1f64..3.0, lambda in 0.1f64..1.5) {
            let g = canonical_grid(11, 11);
            let geo = CarlemanGeometry::canonical(&g);
            let base = weight_statistics(&g, &geo, &CarlemanScales { lambda, s }).log10_ratio;
            let more_s = weight_statistics(&g, &geo, &CarlemanScales { lambda, s: 1.2 * s }).log10_ratio;
            let more_l = weight_statistics(&g, &geo, &CarlemanScales { lambda: 1.2 * lambda, s }).log10_ratio;
            prop_assert!(more_s > base && more_l > base);
        }
    }
}
