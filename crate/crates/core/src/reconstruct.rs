//! The fixed-point reconstruction of `gamma` from boundary data.
//!
//! Each iteration forward-solves with the current coefficient, forms the data
//! mismatch pair `mu`, minimizes `J[mu, 0]` with the operator frozen at the
//! current coefficient, updates `gamma <- gamma + y*_tt(., 0) / u2` and clamps
//! the result to `[0, M]`. In synthetic mode the weighted error
//! `e_k = int exp(2 s phi_lambda(x, 0)) (gamma^k - gamma)^2 dx` is tracked.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{log_weight, CarlemanSetup};
use crate::error::{Error, Result};
use crate::functional::{
    initial_second_derivative, MinimizerDiagnostics, MinimizerOptions, WeightedFunctional,
};
use crate::grid::{weighted_sq, ScalarField, SpaceTimeField, SpaceTimeGrid};
use crate::observation::{
    build_mu_smoothed, extract_observation, perturb_with_noise, ObservationData,
};
use crate::solver::{solve_forward, InitialData, MgtCoefficients};

/// Errors at or below this level are treated as zero when forming ratios.
pub const ERROR_FLOOR: f64 = 1e-30;

/// Consecutive increases of `e_k` that stop a synthetic run.
pub const DIVERGENCE_STREAK: usize = 3;

/// A function of `x` on the grid interval, sampled on any grid of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude sin(frequency pi (x - x_left) / (x_right - x_left))`.
    Sine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Values at equispaced points spanning the interval, linearly interpolated.
    Samples {
        values: Vec<f64>,
    },
    /// `mean + sum_k a_k sin(k pi (x - x_left) / (x_right - x_left))`, `k = 1, 2, ...`.
    Fourier {
        mean: f64,
        sine: Vec<f64>,
    },
}

impl Profile {
    pub fn zero() -> Self {
        Self::Constant { value: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Constant { value } => value.is_finite(),
            Self::Sine {
                offset,
                amplitude,
                frequency,
            } => offset.is_finite() && amplitude.is_finite() && frequency.is_finite(),
            Self::Samples { values } => values.len() >= 2 && values.iter().all(|v| v.is_finite()),
            Self::Fourier { mean, sine } => mean.is_finite() && sine.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid profile {self:?}")))
        }
    }

    /// Value at the relative position `r = (x - x_left) / (x_right - x_left)`.
    pub fn at_relative(&self, r: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Sine {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (frequency * std::f64::consts::PI * r).sin(),
            Self::Samples { values } => {
                let last = values.len() - 1;
                let pos = r.clamp(0.0, 1.0) * last as f64;
                let k = (pos.floor() as usize).min(last - 1);
                let frac = pos - k as f64;
                values[k] * (1.0 - frac) + values[k + 1] * frac
            }
            Self::Fourier { mean, sine } => {
                let pi = std::f64::consts::PI;
                mean + sine
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * pi * r).sin())
                    .sum::<f64>()
            }
        }
    }

    pub fn sample(&self, grid: &SpaceTimeGrid) -> ScalarField {
        let (xl, len) = (grid.x_left(), grid.x_right() - grid.x_left());
        ScalarField::from_fn(grid, |x| self.at_relative((x - xl) / len))
    }
}

/// Initial data as profiles, so that it can be sampled on the data grid too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialProfiles {
    pub u0: Profile,
    pub u1: Profile,
    pub u2: Profile,
    pub eta: f64,
}

impl InitialProfiles {
    /// `u0 = u1 = 0`, `u2 = 1`, `eta = 1`.
    pub fn canonical() -> Self {
        Self {
            u0: Profile::zero(),
            u1: Profile::zero(),
            u2: Profile::Constant { value: 1.0 },
            eta: 1.0,
        }
    }

    pub fn sample(&self, grid: &SpaceTimeGrid) -> Result<InitialData> {
        for p in [&self.u0, &self.u1, &self.u2] {
            p.validate()?;
        }
        let data = InitialData::new(
            self.u0.sample(grid),
            self.u1.sample(grid),
            self.u2.sample(grid),
            self.eta,
        )?;
        data.validate(grid)?;
        Ok(data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub grid: SpaceTimeGrid,
    pub c: f64,
    pub b: f64,
    pub box_bound: f64,
    pub initial: InitialProfiles,
    pub setup: CarlemanSetup,
    /// Values of `s` for [`run_s_sweep`]; empty means only `setup.scales.s`.
    pub s_sweep: Vec<f64>,
    pub max_iterations: usize,
    /// Stop once `||gamma^{k+1} - gamma^k||_{L^2} < stop_tol`.
    pub stop_tol: f64,
    /// Relative Gaussian noise added to the synthetic traces.
    pub noise_level: f64,
    pub noise_seed: u64,
    /// Synthetic data is computed on a grid refined by this factor.
    pub data_grid_factor: usize,
    /// Moving-average window applied to trace mismatches (`<= 1` disables).
    pub smoothing_window: usize,
    pub minimizer: MinimizerOptions,
    /// Initial iterate; `None` starts from `gamma^0 = 0`.
    pub warm_start: Option<Profile>,
}

impl ReconstructionConfig {
    /// Defaults around a grid and setup: `c = b = M = 1`, `u2 = 1`, no noise.
    pub fn new(grid: SpaceTimeGrid, setup: CarlemanSetup) -> Self {
        Self {
            grid,
            c: 1.0,
            b: 1.0,
            box_bound: 1.0,
            initial: InitialProfiles::canonical(),
            setup,
            s_sweep: Vec::new(),
            max_iterations: 20,
            stop_tol: 1e-6,
            noise_level: 0.0,
            noise_seed: 0,
            data_grid_factor: 2,
            smoothing_window: 1,
            minimizer: MinimizerOptions::default(),
            warm_start: None,
        }
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self {
            setup: self.setup.with_s(s),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        SpaceTimeGrid::new(g.x_left(), g.x_right(), g.nx(), g.final_time(), g.nt())?;
        MgtCoefficients::new(self.c, self.b, ScalarField::zeros(g), self.box_bound)?;
        if !(self.initial.eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive for the update division, got {}",
                self.initial.eta
            )));
        }
        self.initial.sample(g)?;
        self.setup.validate(g)?;
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "stop_tol must be nonnegative, got {}",
                self.stop_tol
            )));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::NegativeNoise(self.noise_level));
        }
        if self.data_grid_factor == 0 {
            return Err(Error::InvalidConfig(
                "data_grid_factor must be at least 1".into(),
            ));
        }
        if let Some(p) = &self.warm_start {
            p.validate()?;
        }
        for &s in &self.s_sweep {
            self.setup.with_s(s).scales.validate()?;
        }
        Ok(())
    }

    fn coefficients(&self, gamma: ScalarField) -> Result<MgtCoefficients> {
        MgtCoefficients::new(self.c, self.b, gamma, self.box_bound)
    }
}

/// Nodewise clamp to `[0, M]`.
pub fn project_to_box(gamma_tilde: &ScalarField, box_bound: f64) -> ScalarField {
    ScalarField::new(
        gamma_tilde
            .values()
            .iter()
            .map(|v| v.clamp(0.0, box_bound))
            .collect(),
    )
}

/// Boundary data from a forward solve with `gamma_true` on the refined data
/// grid, restricted to the inversion grid and optionally perturbed by noise.
pub fn synthesize_observation(
    config: &ReconstructionConfig,
    gamma_true: &Profile,
) -> Result<ObservationData> {
    config.validate()?;
    gamma_true.validate()?;
    let fine = config.grid.refined(config.data_grid_factor)?;
    let coeffs = config.coefficients(gamma_true.sample(&fine))?;
    let data = config.initial.sample(&fine)?;
    let traj = solve_forward(&coeffs, &data, &SpaceTimeField::zeros(&fine), &fine)?;
    let obs = extract_observation(&traj, &config.setup.geometry, &fine)?
        .subsample(config.data_grid_factor);
    if config.noise_level > 0.0 {
        perturb_with_noise(&obs, config.noise_level, config.noise_seed)
    } else {
        Ok(obs)
    }
}

/// Result of one update `gamma^k -> gamma^{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Unprojected update `gamma^k + y_tt(., 0) / u2`.
    pub gamma_tilde: ScalarField,
    pub gamma_next: ScalarField,
    /// `max |mu|, |mu_t|` over the observed sides.
    pub mu_max: f64,
    /// `None` in oracle mode.
    pub diagnostics: Option<MinimizerDiagnostics>,
}

/// Runs the algorithm for one configuration.
#[derive(Debug, Clone)]
pub struct Reconstructor {
    config: ReconstructionConfig,
    data: InitialData,
    source: SpaceTimeField,
}

impl Reconstructor {
    pub fn new(config: ReconstructionConfig) -> Result<Self> {
        config.validate()?;
        let data = config.initial.sample(&config.grid)?;
        let source = SpaceTimeField::zeros(&config.grid);
        Ok(Self {
            config,
            data,
            source,
        })
    }

    pub fn config(&self) -> &ReconstructionConfig {
        &self.config
    }

    pub fn initial_data(&self) -> &InitialData {
        &self.data
    }

    /// `gamma^0`: zero unless a warm start is configured.
    pub fn initial_iterate(&self) -> ScalarField {
        match &self.config.warm_start {
            Some(p) => project_to_box(&p.sample(&self.config.grid), self.config.box_bound),
            None => ScalarField::zeros(&self.config.grid),
        }
    }

    /// Algorithm steps 1 to 4 from `gamma_k` against the observed data.
    pub fn step(&self, gamma_k: &ScalarField, data_obs: &ObservationData) -> Result<StepOutcome> {
        let cfg = &self.config;
        let grid = &cfg.grid;
        self.data.check_positivity()?;
        let coeffs = cfg.coefficients(gamma_k.clone())?;
        let traj = solve_forward(&coeffs, &self.data, &self.source, grid)?;
        let obs_k = extract_observation(&traj, &cfg.setup.geometry, grid)?;
        let mu = build_mu_smoothed(&obs_k, data_obs, grid.dt(), cfg.smoothing_window)?;
        let functional = WeightedFunctional::new(grid, &coeffs, &cfg.setup)?;
        let (y, diagnostics) = functional.minimize(Some(&mu), None, &cfg.minimizer)?;
        let ytt0 = y.initial_second_derivative(grid);
        let (gamma_tilde, gamma_next) = self.update(gamma_k, &ytt0);
        Ok(StepOutcome {
            gamma_tilde,
            gamma_next,
            mu_max: mu.max_abs(),
            diagnostics: Some(diagnostics),
        })
    }

    /// The step with the minimizer replaced by the exact difference
    /// trajectory `y = u_t(gamma^k) - u_t(gamma_true)`, whose initial
    /// acceleration is `(gamma_true - gamma^k) u2`.
    pub fn oracle_step(
        &self,
        gamma_k: &ScalarField,
        gamma_true: &ScalarField,
    ) -> Result<StepOutcome> {
        let grid = &self.config.grid;
        self.data.check_positivity()?;
        let tk = solve_forward(
            &self.config.coefficients(gamma_k.clone())?,
            &self.data,
            &self.source,
            grid,
        )?;
        let tt = solve_forward(
            &self.config.coefficients(gamma_true.clone())?,
            &self.data,
            &self.source,
            grid,
        )?;
        let y = tk.ut.sub(&tt.ut);
        let ytt0 = initial_second_derivative(&y, grid.dt());
        let (gamma_tilde, gamma_next) = self.update(gamma_k, &ytt0);
        Ok(StepOutcome {
            gamma_tilde,
            gamma_next,
            mu_max: 0.0,
            diagnostics: None,
        })
    }

    /// `gamma_tilde = gamma^k + ytt0 / u2` at interior nodes, the increment
    /// extrapolated linearly to the boundary nodes (where `y` vanishes
    /// identically), then the projection.
    fn update(&self, gamma_k: &ScalarField, ytt0: &ScalarField) -> (ScalarField, ScalarField) {
        let nx = gamma_k.len();
        let u2 = self.data.u2.values();
        let mut inc: Vec<f64> = (0..nx).map(|i| ytt0.values()[i] / u2[i]).collect();
        inc[0] = 2.0 * inc[1] - inc[2];
        inc[nx - 1] = 2.0 * inc[nx - 2] - inc[nx - 3];
        let gamma_tilde = gamma_k.add(&ScalarField::new(inc));
        let gamma_next = project_to_box(&gamma_tilde, self.config.box_bound);
        (gamma_tilde, gamma_next)
    }

    /// `e(gamma) = sum_i q_i exp(2 s phi_lambda(x_i, 0) - shift) (gamma_i - gamma_true_i)^2`,
    /// with `shift` the smallest log-weight at `t = 0`.
    pub fn weighted_error(&self, gamma: &ScalarField, gamma_true: &ScalarField) -> f64 {
        let (w, q) = self.error_weights();
        gamma
            .values()
            .iter()
            .zip(gamma_true.values())
            .zip(w.iter().zip(&q))
            .map(|((a, b), (w, q))| w * q * (a - b).powi(2))
            .sum()
    }

    /// Log of the normalization applied in [`Self::weighted_error`].
    pub fn error_log_scale(&self) -> f64 {
        self.initial_log_weights()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    fn initial_log_weights(&self) -> Vec<f64> {
        let grid = &self.config.grid;
        let setup = &self.config.setup;
        (0..grid.nx())
            .map(|i| log_weight(grid.x(i), 0.0, &setup.geometry, &setup.scales))
            .collect()
    }

    fn error_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let lw = self.initial_log_weights();
        let shift = lw.iter().cloned().fold(f64::INFINITY, f64::min);
        (
            lw.iter().map(|l| (l - shift).exp()).collect(),
            self.config.grid.space_weights(),
        )
    }

    /// Iterates from [`Self::initial_iterate`] until a stopping rule fires.
    /// Failures end the run with their error recorded and the history kept.
    pub fn run(
        &self,
        data_obs: &ObservationData,
        gamma_true: Option<&ScalarField>,
    ) -> ReconstructionReport {
        let cfg = &self.config;
        let q = cfg.grid.space_weights();
        let mut gamma = self.initial_iterate();
        let error_of = |g: &ScalarField| gamma_true.map(|t| self.weighted_error(g, t));
        let mut history = vec![IterateRecord {
            iteration: 0,
            gamma: gamma.clone(),
            update_norm: None,
            weighted_error: error_of(&gamma),
            projection_nonexpansive: None,
            mu_max: None,
            diagnostics: None,
        }];
        let mut increases = 0;
        let mut failure = None;
        let mut stop_reason = StopReason::MaxIterations;
        for k in 0..cfg.max_iterations {
            let outcome = match self.step(&gamma, data_obs) {
                Ok(o) => o,
                Err(e) => {
                    failure = Some(
                        Error::Iteration {
                            iteration: k,
                            source: Box::new(e),
                        }
                        .to_string(),
                    );
                    stop_reason = StopReason::Failed;
                    break;
                }
            };
            let update_norm = weighted_sq(outcome.gamma_next.sub(&gamma).values(), &q).sqrt();
            let weighted_error = error_of(&outcome.gamma_next);
            let projection_nonexpansive = gamma_true.map(|t| {
                let before = self.weighted_error(&outcome.gamma_tilde, t);
                let after = self.weighted_error(&outcome.gamma_next, t);
                after <= before * (1.0 + 1e-12)
            });
            if let (Some(prev), Some(now)) = (
                history.last().and_then(|r| r.weighted_error),
                weighted_error,
            ) {
                increases = if now > prev { increases + 1 } else { 0 };
            }
            gamma = outcome.gamma_next;
            history.push(IterateRecord {
                iteration: k + 1,
                gamma: gamma.clone(),
                update_norm: Some(update_norm),
                weighted_error,
                projection_nonexpansive,
                mu_max: Some(outcome.mu_max),
                diagnostics: outcome.diagnostics,
            });
            if update_norm < cfg.stop_tol {
                stop_reason = StopReason::Converged;
                break;
            }
            if increases >= DIVERGENCE_STREAK {
                stop_reason = StopReason::Diverged;
                break;
            }
        }
        let errors: Option<Vec<f64>> = history.iter().map(|r| r.weighted_error).collect();
        let ratios = errors
            .as_deref()
            .map(contraction_ratios)
            .unwrap_or_default();
        let mean_ratio = mean_defined(&ratios);
        ReconstructionReport {
            s: cfg.setup.scales.s,
            lambda: cfg.setup.scales.lambda,
            stop_reason,
            iterations: history.len() - 1,
            error_log_scale: self.error_log_scale(),
            final_gamma: gamma,
            ratios,
            mean_ratio,
            history,
            failure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Diverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub gamma: ScalarField,
    /// `||gamma^k - gamma^{k-1}||_{L^2}`.
    pub update_norm: Option<f64>,
    /// `e_k`, present in synthetic mode.
    pub weighted_error: Option<f64>,
    /// Whether the projection did not increase the weighted error.
    pub projection_nonexpansive: Option<bool>,
    pub mu_max: Option<f64>,
    pub diagnostics: Option<MinimizerDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub s: f64,
    pub lambda: f64,
    pub stop_reason: StopReason,
    pub iterations: usize,
    /// Weighted errors are scaled by `exp(-error_log_scale)`.
    pub error_log_scale: f64,
    pub final_gamma: ScalarField,
    /// `rho_k = e_{k+1} / e_k`, `None` where `e_k` is negligible.
    pub ratios: Vec<Option<f64>>,
    pub mean_ratio: Option<f64>,
    pub history: Vec<IterateRecord>,
    pub failure: Option<String>,
}

impl ReconstructionReport {
    pub fn weighted_errors(&self) -> Option<Vec<f64>> {
        self.history.iter().map(|r| r.weighted_error).collect()
    }
}

/// `rho_k = e_{k+1} / e_k` wherever `e_k > ERROR_FLOOR`.
pub fn contraction_ratios(errors: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| (w[0] > ERROR_FLOOR).then(|| w[1] / w[0]))
        .collect()
}

fn mean_defined(v: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = v.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Synthesizes data from `gamma_true` and runs the reconstruction.
pub fn run_reconstruction(
    config: &ReconstructionConfig,
    gamma_true: &Profile,
) -> Result<ReconstructionReport> {
    let rec = Reconstructor::new(config.clone())?;
    let obs = synthesize_observation(config, gamma_true)?;
    let truth = gamma_true.sample(&config.grid);
    Ok(rec.run(&obs, Some(&truth)))
}

/// One synthetic run per `s` in `config.s_sweep`, in parallel.
pub fn run_s_sweep(
    config: &ReconstructionConfig,
    gamma_true: &Profile,
) -> Result<Vec<ReconstructionReport>> {
    let values = if config.s_sweep.is_empty() {
        vec![config.setup.scales.s]
    } else {
        config.s_sweep.clone()
    };
    values
        .par_iter()
        .map(|&s| run_reconstruction(&config.with_s(s), gamma_true))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::{CarlemanGeometry, CarlemanScales};
    use proptest::prelude::*;

    fn config(nx: usize, nt: usize, s: f64) -> ReconstructionConfig {
        let grid = SpaceTimeGrid::new(0.0, 1.0, nx, 1.25, nt).unwrap();
        let setup = CarlemanSetup::new(
            CarlemanGeometry::canonical(&grid),
            CarlemanScales { lambda: 1.0, s },
        );
        ReconstructionConfig::new(grid, setup)
    }

    fn smooth_truth() -> Profile {
        Profile::Sine {
            offset: 0.4,
            amplitude: 0.3,
            frequency: 1.0,
        }
    }

    #[test]
    fn projection_examples() {
        let p = project_to_box(&ScalarField::new(vec![1.7, -0.2, 0.3]), 1.0);
        assert_eq!(p.values(), &[1.0, 0.0, 0.3]);
        let inside = ScalarField::new(vec![0.0, 0.5, 1.0]);
        assert_eq!(project_to_box(&inside, 1.0), inside);
    }

    proptest! {
        #[test]
        fn projection_is_nonexpansive(a in prop::collection::vec(-3.0..3.0f64, 8), b in prop::collection::vec(-3.0..3.0f64, 8)) {
            let pa = project_to_box(&ScalarField::new(a.clone()), 1.0);
            let pb = project_to_box(&ScalarField::new(b.clone()), 1.0);
            for i in 0..8 {
                prop_assert!((pa.values()[i] - pb.values()[i]).abs() <= (a[i] - b[i]).abs());
            }
        }
    }

    #[test]
    fn profiles_sample_as_documented() {
        let g = SpaceTimeGrid::new(0.0, 2.0, 5, 1.0, 5).unwrap();
        let s = Profile::Samples {
            values: vec![0.0, 1.0, 0.0],
        }
        .sample(&g);
        assert_eq!(s.values(), &[0.0, 0.5, 1.0, 0.5, 0.0]);
        let sine = smooth_truth().sample(&g);
        assert!((sine.values()[2] - 0.7).abs() < 1e-15);
        assert!(Profile::Samples { values: vec![1.0] }.validate().is_err());
        let f = Profile::Fourier {
            mean: 0.4,
            sine: vec![0.3, 0.0],
        }
        .sample(&g);
        assert_eq!(f, sine);
        let json = r#"{"kind":"sine","offset":0.4,"amplitude":0.3,"frequency":1.0}"#;
        assert_eq!(
            serde_json::from_str::<Profile>(json).unwrap(),
            smooth_truth()
        );
        assert!(serde_json::from_str::<Profile>(r#"{"kind":"constant","value":1,"x":2}"#).is_err());
    }

    #[test]
    fn contraction_ratio_examples() {
        assert!(contraction_ratios(&[2.0, 2.0, 2.0])
            .iter()
            .all(|r| *r == Some(1.0)));
        let geo: Vec<f64> = (0..6).map(|k| 3.0 * 0.5f64.powi(k)).collect();
        for r in contraction_ratios(&geo) {
            assert!((r.unwrap() - 0.5).abs() < 1e-15);
        }
        assert_eq!(contraction_ratios(&[0.0, 1.0]), vec![None]);
    }

    #[test]
    fn zero_truth_stops_after_one_iteration() {
        let mut cfg = config(11, 21, 1.0);
        cfg.data_grid_factor = 1;
        let report = run_reconstruction(&cfg, &Profile::zero()).unwrap();
        assert_eq!(report.stop_reason, StopReason::Converged);
        assert_eq!(report.iterations, 1);
        assert_eq!(report.final_gamma.max_abs(), 0.0);
    }

    #[test]
    fn exact_data_is_a_fixed_point() {
        let mut cfg = config(21, 41, 1.0);
        cfg.data_grid_factor = 1;
        let rec = Reconstructor::new(cfg.clone()).unwrap();
        let truth = smooth_truth().sample(&cfg.grid);
        let obs = synthesize_observation(&cfg, &smooth_truth()).unwrap();
        let out = rec.step(&truth, &obs).unwrap();
        assert!(out.gamma_next.sub(&truth).max_abs() < 1e-8);
    }

    #[test]
    fn oracle_step_recovers_truth() {
        // dt = h^2 resolves the t = 0 layer caused by u2 != 0 at the boundary
        let cfg = config(21, 501, 1.0);
        let rec = Reconstructor::new(cfg.clone()).unwrap();
        let truth = smooth_truth().sample(&cfg.grid);
        let out = rec
            .oracle_step(&ScalarField::zeros(&cfg.grid), &truth)
            .unwrap();
        let err = out.gamma_next.sub(&truth).max_abs();
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn first_step_reduces_weighted_error() {
        let mut cfg = config(51, 201, 2.0);
        cfg.max_iterations = 1;
        cfg.data_grid_factor = 1;
        let report = run_reconstruction(&cfg, &smooth_truth()).unwrap();
        let e = report.weighted_errors().unwrap();
        assert!(e[1] < e[0], "{e:?}");
        assert_eq!(report.ratios.len(), 1);
        assert_eq!(report.ratios[0], Some(e[1] / e[0]));
        assert!(report
            .history
            .iter()
            .skip(1)
            .all(|r| r.projection_nonexpansive == Some(true)));
        assert!(report.history.iter().all(|r| r
            .gamma
            .values()
            .iter()
            .all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn small_eta_data_rejected() {
        let mut cfg = config(11, 21, 1.0);
        cfg.initial.u2 = Profile::Constant { value: 0.5 };
        assert!(matches!(
            cfg.validate(),
            Err(Error::PositivityViolated { .. })
        ));
        cfg.initial.eta = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn failure_keeps_partial_history() {
        let mut cfg = config(11, 21, 1.0);
        cfg.minimizer.solver_tol = 0.0;
        cfg.minimizer.solver = crate::functional::LinearSolver::Pcg;
        cfg.minimizer.max_iterations = Some(1);
        let report = run_reconstruction(&cfg, &smooth_truth()).unwrap();
        assert_eq!(report.stop_reason, StopReason::Failed);
        assert_eq!(report.history.len(), 1);
        assert!(report.failure.unwrap().contains("iteration 0"));
    }
}
