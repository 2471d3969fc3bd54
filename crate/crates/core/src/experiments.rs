//! Verification campaigns for the inequality-type results: two-sided
//! stability of the coefficient-to-trace map, empirical Carleman constants,
//! energy and regularity bounds, and the weight dynamic-range table.
//!
//! Random inputs are drawn from seeded `ChaCha8Rng` streams as grid-free
//! parameter sets, so every campaign can be repeated bit-for-bit and on a
//! refined grid with the same draws. Independent samples run on rayon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{
    carleman_terms_with, check_trajectory_constraints, validate_admissibility, weight_statistics,
    CarlemanGeometry, CarlemanScales, CarlemanSetup, CarlemanTerms, CarlemanWeights,
};
use crate::error::{Error, Result};
use crate::functional::TrajectoryVariable;
use crate::grid::{
    discrete_norm_sq, weighted_sq, NormInput, NormKind, SpaceTimeField, SpaceTimeGrid,
};
use crate::observation::{extract_observation, hidden_regularity_check, HiddenRegularityReport};
use crate::reconstruct::{InitialProfiles, Profile};
use crate::solver::{
    energy_e, solve_forward, total_energy, verify_energy_bound, verify_laplacian_bound,
    BoundReport, MgtCoefficients,
};

/// Random smooth coefficient `mean + sum_k a_k sin(k pi x)` inside `[0, M]`:
/// the mean lies in `[0.3 M, 0.7 M]` and `sum |a_k| <= 0.25 M`.
pub fn random_admissible_gamma(box_bound: f64, rng: &mut impl Rng) -> Profile {
    let modes = 3;
    let mean = box_bound * rng.random_range(0.3..0.7);
    let sine = (1..=modes)
        .map(|k| box_bound * rng.random_range(-1.0..1.0) * 0.25 / (modes as f64 * k as f64))
        .collect();
    Profile::Fourier { mean, sine }
}

/// Random initial data with `u0`, `u1` vanishing at the boundary and
/// `|u2| >= eta` (`u2 = mean + small sine modes`, mean in `[1.5, 2]`).
pub fn random_initial_data(rng: &mut impl Rng) -> InitialProfiles {
    let mut sines = |scale: f64| -> Vec<f64> {
        (1..=3)
            .map(|k| scale * rng.random_range(-1.0..1.0) / k as f64)
            .collect()
    };
    let u0 = sines(1.0);
    let u1 = sines(1.0);
    let u2 = sines(0.2);
    let mean = 1.5 + 0.5 * rng.random::<f64>();
    InitialProfiles {
        u0: Profile::Fourier {
            mean: 0.0,
            sine: u0,
        },
        u1: Profile::Fourier {
            mean: 0.0,
            sine: u1,
        },
        u2: Profile::Fourier { mean, sine: u2 },
        eta: 1.0,
    }
}

/// Forward model shared by the campaigns (source `f = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub grid: SpaceTimeGrid,
    pub c: f64,
    pub b: f64,
    pub box_bound: f64,
    pub initial: InitialProfiles,
    pub geometry: CarlemanGeometry,
}

impl CampaignConfig {
    /// Canonical geometry, `c = b = M = 1`, `u0 = u1 = 0`, `u2 = 1`.
    pub fn canonical(grid: SpaceTimeGrid) -> Self {
        Self {
            geometry: CarlemanGeometry::canonical(&grid),
            grid,
            c: 1.0,
            b: 1.0,
            box_bound: 1.0,
            initial: InitialProfiles::canonical(),
        }
    }

    /// Same campaign on a grid refined by `factor` in both directions.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Ok(Self {
            grid: self.grid.refined(factor)?,
            ..self.clone()
        })
    }

    fn coefficients(&self, gamma: &Profile) -> Result<MgtCoefficients> {
        MgtCoefficients::new(self.c, self.b, gamma.sample(&self.grid), self.box_bound)
    }
}

/// One pair of [`stability_two_sided`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    /// `||alpha1 - alpha2||^2_{L^2}`.
    pub coefficient_norm_sq: f64,
    /// `||d_n u(alpha1) - d_n u(alpha2)||^2_{H^2(0,T; L^2(Gamma_0))}`.
    pub trace_norm_sq: f64,
    /// `trace / coefficient`; the lower inequality needs it `>= 1/C`.
    pub lower_ratio: Option<f64>,
    /// `trace / coefficient`; the upper inequality needs it `<= C`.
    pub upper_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub records: Vec<StabilityRecord>,
    pub min_lower_ratio: Option<f64>,
    pub max_upper_ratio: Option<f64>,
    /// `max(max upper_ratio, 1 / min lower_ratio)`.
    pub empirical_constant: Option<f64>,
}

/// Both sides of the two-sided stability estimate for each pair. Pairs with
/// identical coefficients contribute zero norms and no ratios.
pub fn stability_two_sided(
    pairs: &[(Profile, Profile)],
    config: &CampaignConfig,
) -> Result<StabilityReport> {
    let data = config.initial.sample(&config.grid)?;
    if !(config.initial.eta > 0.0) {
        return Err(Error::InvalidConfig(
            "stability needs a positive eta".into(),
        ));
    }
    let source = SpaceTimeField::zeros(&config.grid);
    let q = config.grid.space_weights();
    let records = pairs
        .par_iter()
        .map(|(a1, a2)| -> Result<StabilityRecord> {
            let c1 = config.coefficients(a1)?;
            let c2 = config.coefficients(a2)?;
            let o1 = extract_observation(
                &solve_forward(&c1, &data, &source, &config.grid)?,
                &config.geometry,
                &config.grid,
            )?;
            let o2 = extract_observation(
                &solve_forward(&c2, &data, &source, &config.grid)?,
                &config.geometry,
                &config.grid,
            )?;
            let mut trace_norm_sq = 0.0;
            for (t1, t2) in o1.traces.iter().zip(&o2.traces) {
                let d = t1.sub(t2)?;
                trace_norm_sq +=
                    discrete_norm_sq(&config.grid, NormInput::Trace(&d), NormKind::H2Trace)?;
            }
            let coefficient_norm_sq = weighted_sq(c1.gamma.sub(&c2.gamma).values(), &q);
            let ratio = (coefficient_norm_sq > 0.0).then(|| trace_norm_sq / coefficient_norm_sq);
            Ok(StabilityRecord {
                coefficient_norm_sq,
                trace_norm_sq,
                lower_ratio: ratio,
                upper_ratio: ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_lower_ratio = records
        .iter()
        .filter_map(|r| r.lower_ratio)
        .reduce(f64::min);
    let max_upper_ratio = records
        .iter()
        .filter_map(|r| r.upper_ratio)
        .reduce(f64::max);
    let empirical_constant = match (min_lower_ratio, max_upper_ratio) {
        (Some(lo), Some(hi)) => Some(hi.max(1.0 / lo)),
        _ => None,
    };
    Ok(StabilityReport {
        records,
        min_lower_ratio,
        max_upper_ratio,
        empirical_constant,
    })
}

/// `count` seeded random pairs of admissible coefficients.
pub fn random_pairs(count: usize, box_bound: f64, seed: u64) -> Vec<(Profile, Profile)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = random_admissible_gamma(box_bound, &mut rng);
            let b = random_admissible_gamma(box_bound, &mut rng);
            (a, b)
        })
        .collect()
}

/// Grid-free random trajectory
/// `y = sum_k a_k sin(k pi x) t^2 (1 + eps cos(omega t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomTrajectory {
    pub amplitudes: Vec<f64>,
    pub eps: f64,
    pub omega: f64,
}

impl RandomTrajectory {
    pub fn draw(rng: &mut impl Rng) -> Self {
        let modes = rng.random_range(1..=4);
        Self {
            amplitudes: (1..=modes)
                .map(|k| rng.random_range(-1.0..1.0) / k as f64)
                .collect(),
            eps: rng.random_range(0.0..0.5),
            omega: rng.random_range(0.5..3.0),
        }
    }

    /// Samples `y` and projects it onto the discrete constraint set.
    pub fn sample(&self, grid: &SpaceTimeGrid) -> Result<TrajectoryVariable> {
        let (xl, len) = (grid.x_left(), grid.x_right() - grid.x_left());
        let pi = std::f64::consts::PI;
        let field = SpaceTimeField::from_fn(grid, |x, t| {
            let r = (x - xl) / len;
            let space: f64 = self
                .amplitudes
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * pi * r).sin())
                .sum();
            space * t * t * (1.0 + self.eps * (self.omega * t).cos())
        });
        TrajectoryVariable::from_field(field, grid)
    }
}

/// Largest Carleman ratio over the samples at one scale pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSweepRow {
    pub lambda: f64,
    pub s: f64,
    pub max_ratio: Option<f64>,
    /// Smallest right-hand side over the samples (positive for `y != 0`).
    pub min_rhs: Option<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanSweepReport {
    pub sample_count: usize,
    pub seed: u64,
    pub rows: Vec<ScaleSweepRow>,
}

/// Evaluates the Carleman estimate on `sample_count` seeded random
/// trajectories for every scale pair.
pub fn carleman_constant_sweep(
    sample_count: usize,
    scales_list: &[CarlemanScales],
    config: &CampaignConfig,
    gamma: &Profile,
    seed: u64,
) -> Result<CarlemanSweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<RandomTrajectory> = (0..sample_count)
        .map(|_| RandomTrajectory::draw(&mut rng))
        .collect();
    let coeffs = config.coefficients(gamma)?;
    let fields = samples
        .iter()
        .map(|y| y.sample(&config.grid).map(TrajectoryVariable::into_field))
        .collect::<Result<Vec<_>>>()?;
    for f in &fields {
        check_trajectory_constraints(f, &config.grid)?;
    }
    let mut rows = Vec::with_capacity(scales_list.len());
    for scales in scales_list {
        let setup = CarlemanSetup::new(config.geometry.clone(), *scales);
        let weights = CarlemanWeights::new(&config.grid, &setup)?;
        let terms = fields
            .par_iter()
            .map(|y| carleman_terms_with(y, &coeffs, &config.geometry, &weights, &config.grid))
            .collect::<Result<Vec<CarlemanTerms>>>()?;
        let ratios: Vec<f64> = terms.iter().map(|t| t.ratio).collect();
        rows.push(ScaleSweepRow {
            lambda: scales.lambda,
            s: scales.s,
            max_ratio: ratios.iter().copied().reduce(f64::max),
            min_rhs: terms
                .iter()
                .map(|t| t.rhs_interior + t.rhs_boundary)
                .reduce(f64::min),
            ratios,
        });
    }
    Ok(CarlemanSweepReport {
        sample_count,
        seed,
        rows,
    })
}

/// Energy, Laplacian and hidden-regularity checks for one forward solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy_bound: BoundReport,
    pub laplacian_bound: BoundReport,
    pub hidden_regularity: HiddenRegularityReport,
    pub times: Vec<f64>,
    /// `E_e(u, u_t)` per level.
    pub energy_e: Vec<f64>,
    /// `E_e(u_t, u_tt) + E_e(u, u_t)` per level.
    pub total_energy: Vec<f64>,
}

pub fn energy_campaign(config: &CampaignConfig, gamma: &Profile) -> Result<EnergyReport> {
    let grid = &config.grid;
    let coeffs = config.coefficients(gamma)?;
    let data = config.initial.sample(grid)?;
    let source = SpaceTimeField::zeros(grid);
    let traj = solve_forward(&coeffs, &data, &source, grid)?;
    let obs = extract_observation(&traj, &config.geometry, grid)?;
    let energy_e = (0..grid.nt())
        .map(|n| energy_e(&traj.u.snapshot(n), &traj.ut.snapshot(n), coeffs.b, grid))
        .collect::<Result<Vec<_>>>()?;
    let total = (0..grid.nt())
        .map(|n| total_energy(&traj, n, coeffs.b, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyReport {
        energy_bound: verify_energy_bound(&traj, &source, coeffs.b, grid)?,
        laplacian_bound: verify_laplacian_bound(&traj, &source, &coeffs, grid)?,
        hidden_regularity: hidden_regularity_check(&obs, &data, &source, grid)?,
        times: grid.ts(),
        energy_e,
        total_energy: total,
    })
}

/// One configuration of [`weight_ratio_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub label: String,
    pub x0: f64,
    pub beta: f64,
    pub m0: f64,
    pub final_time: f64,
    pub lambda: f64,
    pub s: f64,
    pub log_min: f64,
    pub log_max: f64,
    /// `log10(max weight / min weight)`.
    pub log10_ratio: f64,
    pub admissible: bool,
    /// Claimed order of magnitude this row is compared against, if any.
    pub reference_log10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub rows: Vec<WeightRow>,
    /// `M0` at which the remark parameters reach the reference value.
    pub m0_matching_reference: f64,
    pub note: String,
}

/// Order of magnitude quoted for the weight range at the remark parameters.
pub const REMARK_REFERENCE_LOG10: f64 = 340.0;

/// Domain `(0, 1)`, `x0 = 0`, `T = 1`, `beta = 1`, `s = lambda = 3`.
pub fn remark_geometry(m0: f64) -> (CarlemanGeometry, CarlemanScales, SpaceTimeGrid) {
    let grid = SpaceTimeGrid::new(0.0, 1.0, 101, 1.0, 101).expect("fixed grid is valid");
    (
        CarlemanGeometry::new(0.0, 1.0, m0, 1.0, &grid),
        CarlemanScales {
            lambda: 3.0,
            s: 3.0,
        },
        grid,
    )
}

fn weight_row(
    label: &str,
    geometry: &CarlemanGeometry,
    scales: CarlemanScales,
    grid: &SpaceTimeGrid,
) -> WeightRow {
    let stats = weight_statistics(grid, geometry, &scales);
    WeightRow {
        label: label.to_string(),
        x0: geometry.x0,
        beta: geometry.beta,
        m0: geometry.m0,
        final_time: geometry.final_time,
        lambda: scales.lambda,
        s: scales.s,
        log_min: stats.log_min,
        log_max: stats.log_max,
        log10_ratio: stats.log10_ratio,
        admissible: validate_admissibility(geometry, grid).accepted,
        reference_log10: None,
    }
}

/// Weight dynamic range at the canonical setup (`s` and `2s`), over an `M0`
/// sweep of the remark parameters, and at the `M0` that reproduces the
/// quoted order of magnitude.
pub fn weight_ratio_report(
    canonical_grid: &SpaceTimeGrid,
    scales: CarlemanScales,
    m0_sweep: &[f64],
) -> WeightTable {
    let geo = CarlemanGeometry::canonical(canonical_grid);
    let mut rows = vec![
        weight_row("canonical", &geo, scales, canonical_grid),
        weight_row(
            "canonical, s doubled",
            &geo,
            CarlemanScales {
                s: 2.0 * scales.s,
                ..scales
            },
            canonical_grid,
        ),
    ];
    for &m0 in m0_sweep {
        let (g, sc, grid) = remark_geometry(m0);
        rows.push(weight_row("remark parameters", &g, sc, &grid));
    }
    // max phi = 1 + M0 at (1, 0), min phi = M0 - 1 at (0, 1), so
    // log10 ratio = 2 s e^{lambda M0} (e^lambda - e^-lambda) / ln 10
    let (_, sc, _) = remark_geometry(0.0);
    let m0_ref = ((REMARK_REFERENCE_LOG10 * std::f64::consts::LN_10)
        / (2.0 * sc.s * (sc.lambda.exp() - (-sc.lambda).exp())))
    .ln()
        / sc.lambda;
    let (g, sc, grid) = remark_geometry(m0_ref);
    let mut reference = weight_row("remark parameters, reference claim", &g, sc, &grid);
    reference.reference_log10 = Some(REMARK_REFERENCE_LOG10);
    rows.push(reference);
    WeightTable {
        rows,
        m0_matching_reference: m0_ref,
        note:
            "the remark leaves M0 unspecified; 10^340 is reached only near the M0 listed here, and \
               x0 = 0, beta = 1 violate the admissibility conditions"
                .to_string(),
    }
}

/// Evenly spaced `M0` values over `[lo, hi]`.
pub fn m0_range(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// The refinement-stability measure `|a - b| / |b|` used by the campaigns.
pub fn relative_change(coarse: f64, fine: f64) -> f64 {
    (coarse - fine).abs() / fine.abs()
}

/// Hidden-regularity ratios for `count` seeded random data sets.
pub fn hidden_regularity_sweep(
    config: &CampaignConfig,
    gamma: &Profile,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets: Vec<InitialProfiles> = (0..count).map(|_| random_initial_data(&mut rng)).collect();
    sets.par_iter()
        .map(|initial| {
            let cfg = CampaignConfig {
                initial: initial.clone(),
                ..config.clone()
            };
            Ok(energy_campaign(&cfg, gamma)?.hidden_regularity.ratio)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(nx: usize, nt: usize) -> CampaignConfig {
        CampaignConfig::canonical(SpaceTimeGrid::new(0.0, 1.0, nx, 1.25, nt).unwrap())
    }

    #[test]
    fn random_gammas_are_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = SpaceTimeGrid::new(0.0, 1.0, 101, 1.0, 5).unwrap();
        for _ in 0..50 {
            let p = random_admissible_gamma(2.0, &mut rng);
            assert!(p
                .sample(&g)
                .values()
                .iter()
                .all(|v| (0.0..=2.0).contains(v)));
        }
    }

    #[test]
    fn identical_pair_is_skipped_and_swap_is_symmetric() {
        let cfg = canonical(21, 41);
        let pairs = random_pairs(2, 1.0, 7);
        let (a, b) = pairs[0].clone();
        let report = stability_two_sided(
            &[(a.clone(), a.clone()), (a.clone(), b.clone()), (b, a)],
            &cfg,
        )
        .unwrap();
        let r = &report.records;
        assert_eq!(r[0].coefficient_norm_sq, 0.0);
        assert_eq!(r[0].trace_norm_sq, 0.0);
        assert_eq!(r[0].lower_ratio, None);
        assert_eq!(r[1].trace_norm_sq, r[2].trace_norm_sq);
        assert_eq!(r[1].coefficient_norm_sq, r[2].coefficient_norm_sq);
        assert!(r[1].lower_ratio.unwrap() > 0.0);
        assert!(report.empirical_constant.unwrap().is_finite());
    }

    #[test]
    fn stability_ratio_is_locally_linear() {
        let cfg = canonical(21, 41);
        let base = Profile::Constant { value: 0.5 };
        let dir = [0.2, -0.1, 0.05];
        let pair = |t: f64| {
            (
                base.clone(),
                Profile::Fourier {
                    mean: 0.5,
                    sine: dir.iter().map(|a| a * t).collect(),
                },
            )
        };
        let report = stability_two_sided(&[pair(1.0), pair(0.1)], &cfg).unwrap();
        let (r1, r2) = (
            report.records[0].upper_ratio.unwrap(),
            report.records[1].upper_ratio.unwrap(),
        );
        assert!(relative_change(r1, r2) < 0.2, "{r1} {r2}");
    }

    #[test]
    fn empty_carleman_sweep() {
        let cfg = canonical(21, 41);
        let report = carleman_constant_sweep(
            0,
            &[CarlemanScales {
                lambda: 1.0,
                s: 1.0,
            }],
            &cfg,
            &Profile::zero(),
            1,
        )
        .unwrap();
        assert_eq!(report.rows[0].max_ratio, None);
        assert!(report.rows[0].ratios.is_empty());
    }

    #[test]
    fn carleman_sweep_rhs_positive_and_seeded() {
        let cfg = canonical(41, 81);
        let scales = [CarlemanScales {
            lambda: 1.0,
            s: 1.0,
        }];
        let a = carleman_constant_sweep(4, &scales, &cfg, &Profile::zero(), 11).unwrap();
        let b = carleman_constant_sweep(4, &scales, &cfg, &Profile::zero(), 11).unwrap();
        assert_eq!(a, b);
        assert!(a.rows[0].min_rhs.unwrap() > 0.0);
        assert!(a.rows[0].max_ratio.unwrap().is_finite());
    }

    #[test]
    fn weight_table_values() {
        let grid = SpaceTimeGrid::new(0.0, 1.0, 51, 1.25, 101).unwrap();
        let table = weight_ratio_report(
            &grid,
            CarlemanScales {
                lambda: 1.0,
                s: 1.0,
            },
            &m0_range(0.0, 2.0, 5),
        );
        // independent: extremes of 2 s e^{phi} at (1, 0) and (0, T)
        let phi_max: f64 = 1.1f64.powi(2) + 2.5;
        let phi_min: f64 = 0.1f64.powi(2) - 0.9 * 1.25f64.powi(2) + 2.5;
        let expected = 2.0 * (phi_max.exp() - phi_min.exp()) / std::f64::consts::LN_10;
        assert!((table.rows[0].log10_ratio - expected).abs() < 1e-10);
        assert!((table.rows[0].log10_ratio - 32.9).abs() < 0.1);
        assert!((table.rows[1].log10_ratio - 2.0 * table.rows[0].log10_ratio).abs() < 1e-9);
        assert!(table.rows[2..7]
            .iter()
            .all(|r| r.log10_ratio > 40.0 && !r.admissible));
        let last = table.rows.last().unwrap();
        assert!((last.log10_ratio - REMARK_REFERENCE_LOG10).abs() < 1e-6);
        assert!((table.m0_matching_reference - 0.6245).abs() < 1e-3);
    }

    #[test]
    fn energy_campaign_runs() {
        let cfg = canonical(21, 41);
        let r = energy_campaign(&cfg, &Profile::zero()).unwrap();
        assert!(!r.energy_bound.unbounded);
        assert_eq!(r.energy_e.len(), 41);
        assert!(r.hidden_regularity.ratio > 0.0);
    }

    #[test]
    fn m0_range_endpoints() {
        assert_eq!(m0_range(0.0, 2.0, 3), vec![0.0, 1.0, 2.0]);
        assert!(m0_range(0.0, 1.0, 0).is_empty());
    }
}
