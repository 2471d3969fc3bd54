//! Boundary data pipeline: normal-derivative traces on the observed sides,
//! hidden-regularity ratios, seeded noise and the `(mu, mu_t)` pair.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::carleman::CarlemanGeometry;
use crate::error::{check_len, Error, Result};
use crate::grid::{
    discrete_norm_sq, gradient, space_time_sq, weighted_sq, NormInput, NormKind, ScalarField, Side,
    SpaceTimeField, SpaceTimeGrid, TraceSeries,
};
use crate::solver::{safe_ratio, InitialData, Trajectory};

/// Traces of `d_n u` and `d_n u_t`, one pair per observed side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationData {
    pub traces: Vec<TraceSeries>,
    pub traces_t: Vec<TraceSeries>,
    pub noise_level: f64,
    pub seed: Option<u64>,
}

impl ObservationData {
    pub fn new(traces: Vec<TraceSeries>, traces_t: Vec<TraceSeries>) -> Result<Self> {
        let out = Self {
            traces,
            traces_t,
            noise_level: 0.0,
            seed: None,
        };
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if self.traces.is_empty() {
            return Err(Error::EmptyObservation);
        }
        check_len(
            "observation channels",
            self.traces.len(),
            self.traces_t.len(),
        )?;
        let len = self.traces[0].len();
        for (a, b) in self.traces.iter().zip(&self.traces_t) {
            if a.side() != b.side() {
                return Err(Error::BoundaryMismatch);
            }
            check_len("trace series", len, a.len())?;
            check_len("trace series", len, b.len())?;
        }
        Ok(())
    }

    pub fn sides(&self) -> Vec<Side> {
        self.traces.iter().map(TraceSeries::side).collect()
    }

    pub fn trace(&self, side: Side) -> Option<&TraceSeries> {
        self.traces.iter().find(|t| t.side() == side)
    }

    pub fn trace_t(&self, side: Side) -> Option<&TraceSeries> {
        self.traces_t.iter().find(|t| t.side() == side)
    }

    /// Keeps every `factor`-th sample (restriction from a refined time grid).
    pub fn subsample(&self, factor: usize) -> Self {
        let pick = |t: &TraceSeries| {
            TraceSeries::new(
                t.side(),
                t.samples().iter().step_by(factor.max(1)).copied().collect(),
            )
        };
        Self {
            traces: self.traces.iter().map(pick).collect(),
            traces_t: self.traces_t.iter().map(pick).collect(),
            noise_level: self.noise_level,
            seed: self.seed,
        }
    }

    /// CSV with columns `t, dudn, dudtn` for the given side.
    pub fn to_csv(&self, grid: &SpaceTimeGrid, side: Side) -> Result<String> {
        let tr = self.trace(side).ok_or(Error::BoundaryMismatch)?;
        let trt = self.trace_t(side).ok_or(Error::BoundaryMismatch)?;
        tr.check(grid)?;
        let mut out = String::from("t,dudn,dudtn\n");
        for n in 0..grid.nt() {
            writeln!(
                out,
                "{},{},{}",
                fmt_float(grid.t(n)),
                fmt_float(tr.samples()[n]),
                fmt_float(trt.samples()[n])
            )
            .expect("writing to a String cannot fail");
        }
        Ok(out)
    }
}

/// Float formatting with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `d_n u` and `d_n u_t` on every observed side.
pub fn extract_observation(
    traj: &Trajectory,
    geometry: &CarlemanGeometry,
    grid: &SpaceTimeGrid,
) -> Result<ObservationData> {
    if geometry.gamma0_sides.is_empty() {
        return Err(Error::EmptyObservation);
    }
    let mut traces = Vec::new();
    let mut traces_t = Vec::new();
    for &side in &geometry.gamma0_sides {
        traces.push(traj.u.normal_trace(grid, side)?);
        traces_t.push(traj.ut.normal_trace(grid, side)?);
    }
    ObservationData::new(traces, traces_t)
}

/// Hidden-regularity ratio `||d_n u||^2_{H^1(0,T)} / data norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenRegularityReport {
    pub trace_norm_sq: f64,
    pub data_norm_sq: f64,
    pub ratio: f64,
}

pub fn hidden_regularity_check(
    obs: &ObservationData,
    data: &InitialData,
    source: &SpaceTimeField,
    grid: &SpaceTimeGrid,
) -> Result<HiddenRegularityReport> {
    data.validate(grid)?;
    source.check(grid)?;
    let mut trace_norm_sq = 0.0;
    for tr in &obs.traces {
        trace_norm_sq += discrete_norm_sq(grid, NormInput::Trace(tr), NormKind::H1Trace)?;
    }
    let q = grid.space_weights();
    let h = grid.h();
    let l2 = |f: &ScalarField| weighted_sq(f.values(), &q);
    let grad = |f: &ScalarField| weighted_sq(&gradient(f.values(), h), &q);
    let lap = crate::grid::apply_laplacian(&data.u0, grid)?;
    let data_norm_sq = l2(&data.u0)
        + grad(&data.u0)
        + l2(&lap)
        + l2(&data.u1)
        + grad(&data.u1)
        + l2(&data.u2)
        + space_time_sq(grid, source.values());
    Ok(HiddenRegularityReport {
        trace_norm_sq,
        data_norm_sq,
        ratio: safe_ratio(trace_norm_sq, data_norm_sq),
    })
}

/// Adds seeded Gaussian noise with standard deviation `level * max|series|`
/// to every sample of every series (each series uses its own maximum).
pub fn perturb_with_noise(obs: &ObservationData, level: f64, seed: u64) -> Result<ObservationData> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::NegativeNoise(level));
    }
    let mut out = obs.clone();
    out.noise_level = level;
    out.seed = Some(seed);
    if level == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal is valid");
    for series in out.traces.iter_mut().chain(out.traces_t.iter_mut()) {
        let sigma = level * series.max_abs();
        for v in series.samples_mut() {
            *v += sigma * standard.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Time derivatives of the trace mismatches on every observed side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuPair {
    pub mu: Vec<TraceSeries>,
    pub mu_t: Vec<TraceSeries>,
}

impl MuPair {
    pub fn zeros(sides: &[Side], nt: usize) -> Self {
        Self {
            mu: sides.iter().map(|&s| TraceSeries::zeros(s, nt)).collect(),
            mu_t: sides.iter().map(|&s| TraceSeries::zeros(s, nt)).collect(),
        }
    }

    pub fn mu(&self, side: Side) -> Option<&TraceSeries> {
        self.mu.iter().find(|t| t.side() == side)
    }

    pub fn mu_t(&self, side: Side) -> Option<&TraceSeries> {
        self.mu_t.iter().find(|t| t.side() == side)
    }

    pub fn max_abs(&self) -> f64 {
        self.mu
            .iter()
            .chain(&self.mu_t)
            .map(TraceSeries::max_abs)
            .fold(0.0, f64::max)
    }
}

/// `mu = d/dt (trace_k - trace_data)`, `mu_t = d/dt (trace_t,k - trace_t,data)`.
pub fn build_mu(obs_k: &ObservationData, obs_data: &ObservationData, dt: f64) -> Result<MuPair> {
    build_mu_smoothed(obs_k, obs_data, dt, 1)
}

/// [`build_mu`] with a centered moving average of `window` samples applied to
/// the trace differences before differentiation (`window <= 1` disables it).
pub fn build_mu_smoothed(
    obs_k: &ObservationData,
    obs_data: &ObservationData,
    dt: f64,
    window: usize,
) -> Result<MuPair> {
    check_len(
        "observation channels",
        obs_k.traces.len(),
        obs_data.traces.len(),
    )?;
    let diff = |a: &TraceSeries, b: &TraceSeries| -> Result<TraceSeries> {
        let d = a.sub(b)?;
        let smoothed = TraceSeries::new(d.side(), moving_average(d.samples(), window));
        smoothed.time_derivative(dt, 1)
    };
    let mut mu = Vec::new();
    let mut mu_t = Vec::new();
    for (a, b) in obs_k.traces.iter().zip(&obs_data.traces) {
        mu.push(diff(a, b)?);
    }
    for (a, b) in obs_k.traces_t.iter().zip(&obs_data.traces_t) {
        mu_t.push(diff(a, b)?);
    }
    Ok(MuPair { mu, mu_t })
}

fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return v.to_vec();
    }
    let half = window / 2;
    (0..v.len())
        .map(|n| {
            let lo = n.saturating_sub(half);
            let hi = (n + half + 1).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}
