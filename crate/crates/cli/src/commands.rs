use std::f64::consts::PI;

use anyhow::{bail, Context};
use clap::ValueEnum;
use mgt_core::carleman::CarlemanScales;
use mgt_core::experiments::{
    carleman_constant_sweep, energy_campaign, random_pairs, stability_two_sided,
    weight_ratio_report, WeightTable,
};
use mgt_core::grid::{Side, SpaceTimeField, SpaceTimeGrid};
use mgt_core::observation::{
    extract_observation, fmt_float, hidden_regularity_check, HiddenRegularityReport,
};
use mgt_core::reconstruct::{run_reconstruction, run_s_sweep, ReconstructionReport, StopReason};
use mgt_core::solver::{
    energy_e, solve_forward, total_energy, verify_energy_bound, verify_laplacian_bound,
    BoundReport, MgtCoefficients,
};
use serde::{Deserialize, Serialize};

use crate::config::{GridSpec, RunConfig, SourceKind};
use crate::output::{csv, OutputDir};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const MAX_ITERATIONS: i32 = 2;
    pub const DIVERGED: i32 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Carleman,
    Stability,
    Weights,
    Energy,
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Left => "left",
        Side::Right => "right",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardSummary {
    pub grid: GridSpec,
    pub source: SourceKind,
    pub sides: Vec<Side>,
    pub max_abs_u: f64,
    pub trace_max_abs: Vec<f64>,
    pub energy_bound: BoundReport,
    pub laplacian_bound: BoundReport,
    pub hidden_regularity: HiddenRegularityReport,
    /// `max_n |d_n u(1, t_n) + pi t_n^3|` for the manufactured source.
    pub manufactured_trace_error: Option<f64>,
}

/// `f` for which `u = sin(pi x) t^3` is exact.
fn manufactured_source(coeffs: &MgtCoefficients, grid: &SpaceTimeGrid) -> SpaceTimeField {
    let alpha = coeffs.alpha();
    let (c2, b) = (coeffs.c * coeffs.c, coeffs.b);
    let mut f = SpaceTimeField::zeros(grid);
    let k = PI / (grid.x_right() - grid.x_left());
    for n in 0..grid.nt() {
        let t = grid.t(n);
        for (i, a) in alpha.iter().enumerate() {
            let x = grid.x(i) - grid.x_left();
            let v = (k * x).sin()
                * (6.0 + 6.0 * a * t + c2 * k * k * t.powi(3) + 3.0 * b * k * k * t * t);
            f.set(n, i, v);
        }
    }
    f
}

pub fn forward(run: &RunConfig, out: &mut OutputDir) -> anyhow::Result<i32> {
    let grid = run.grid()?;
    let coeffs = MgtCoefficients::new(
        run.model.c,
        run.model.b,
        run.gamma_true.sample(&grid),
        run.model.box_bound,
    )?;
    let data = run.initial.sample(&grid)?;
    let source = match run.source {
        SourceKind::Zero => SpaceTimeField::zeros(&grid),
        SourceKind::Manufactured => {
            if [&data.u0, &data.u1, &data.u2]
                .iter()
                .any(|f| f.max_abs() != 0.0)
            {
                bail!(
                    "the manufactured source needs zero initial data (u0 = u1 = u2 = 0, eta = 0)"
                );
            }
            manufactured_source(&coeffs, &grid)
        }
    };
    let geometry = run.geometry(&grid);
    let traj = solve_forward(&coeffs, &data, &source, &grid)?;
    let obs = extract_observation(&traj, &geometry, &grid)?;

    for &side in &geometry.gamma0_sides {
        out.write(
            &format!("trace_{}.csv", side_name(side)),
            &obs.to_csv(&grid, side)?,
        )?;
    }
    let mut rows = Vec::with_capacity(grid.nt());
    for n in 0..grid.nt() {
        let e = energy_e(&traj.u.snapshot(n), &traj.ut.snapshot(n), coeffs.b, &grid)?;
        rows.push(vec![
            Some(grid.t(n)),
            Some(e),
            Some(total_energy(&traj, n, coeffs.b, &grid)?),
        ]);
    }
    out.write("energy.csv", &csv(&["t", "E_e", "E_bar"], rows))?;

    let manufactured_trace_error = match (run.source, obs.trace(Side::Right)) {
        (SourceKind::Manufactured, Some(tr)) => Some(
            tr.samples()
                .iter()
                .enumerate()
                .map(|(n, v)| (v + PI / (grid.x_right() - grid.x_left()) * grid.t(n).powi(3)).abs())
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    let summary = ForwardSummary {
        grid: run.grid,
        source: run.source,
        sides: geometry.gamma0_sides.clone(),
        max_abs_u: traj.u.max_abs(),
        trace_max_abs: obs.traces.iter().map(|t| t.max_abs()).collect(),
        energy_bound: verify_energy_bound(&traj, &source, coeffs.b, &grid)?,
        laplacian_bound: verify_laplacian_bound(&traj, &source, &coeffs, &grid)?,
        hidden_regularity: hidden_regularity_check(&obs, &data, &source, &grid)?,
        manufactured_trace_error,
    };
    out.write_json("forward_summary.json", &summary)?;
    Ok(exit::OK)
}

/// One entry of the `s` sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub s: f64,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub ratios: Vec<Option<f64>>,
    pub mean_ratio: Option<f64>,
    pub final_weighted_error: Option<f64>,
    pub failure: Option<String>,
}

impl From<&ReconstructionReport> for SweepEntry {
    fn from(r: &ReconstructionReport) -> Self {
        Self {
            s: r.s,
            stop_reason: r.stop_reason,
            iterations: r.iterations,
            ratios: r.ratios.clone(),
            mean_ratio: r.mean_ratio,
            final_weighted_error: r.history.last().and_then(|h| h.weighted_error),
            failure: r.failure.clone(),
        }
    }
}

fn write_reconstruction(
    report: &ReconstructionReport,
    grid: &SpaceTimeGrid,
    run: &RunConfig,
    out: &mut OutputDir,
) -> anyhow::Result<()> {
    out.write_json("reconstruction_report.json", report)?;

    let truth = run.gamma_true.sample(grid);
    let mut header = vec!["x".to_string(), "gamma_true".to_string()];
    header.extend(
        report
            .history
            .iter()
            .map(|h| format!("gamma_{}", h.iteration)),
    );
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..grid.nx()).map(|i| {
        let mut row = vec![Some(grid.x(i)), Some(truth.values()[i])];
        row.extend(report.history.iter().map(|h| Some(h.gamma.values()[i])));
        row
    });
    out.write("gamma_iterates.csv", &csv(&header, rows))?;

    let rows = report.history.iter().map(|h| {
        let rho = h
            .iteration
            .checked_sub(1)
            .and_then(|k| report.ratios.get(k).copied().flatten());
        vec![
            Some(h.iteration as f64),
            h.update_norm,
            h.weighted_error,
            rho,
            h.mu_max,
        ]
    });
    out.write(
        "history.csv",
        &csv(
            &[
                "iteration",
                "update_norm",
                "weighted_error",
                "rho",
                "mu_max",
            ],
            rows,
        ),
    )
}

pub fn reconstruct(run: &RunConfig, out: &mut OutputDir) -> anyhow::Result<i32> {
    let cfg = run.reconstruction()?;
    let report = run_reconstruction(&cfg, &run.gamma_true)?;
    write_reconstruction(&report, &cfg.grid, run, out)?;
    if !cfg.s_sweep.is_empty() {
        let sweep: Vec<SweepEntry> = run_s_sweep(&cfg, &run.gamma_true)?
            .iter()
            .map(SweepEntry::from)
            .collect();
        out.write_json("s_sweep.json", &sweep)?;
    }
    Ok(match report.stop_reason {
        StopReason::Converged => exit::OK,
        StopReason::MaxIterations => exit::MAX_ITERATIONS,
        StopReason::Diverged => exit::DIVERGED,
        StopReason::Failed => {
            eprintln!(
                "error: {}",
                report.failure.as_deref().unwrap_or("reconstruction failed")
            );
            exit::ERROR
        }
    })
}

fn weights_csv(table: &WeightTable) -> String {
    let mut out = String::from(
        "label,x0,beta,M0,T,lambda,s,log_min,log_max,log10_ratio,admissible,reference_log10\n",
    );
    for r in &table.rows {
        let nums = [
            r.x0,
            r.beta,
            r.m0,
            r.final_time,
            r.lambda,
            r.s,
            r.log_min,
            r.log_max,
            r.log10_ratio,
        ];
        let nums: Vec<String> = nums.iter().map(|&v| fmt_float(v)).collect();
        out.push_str(&format!(
            "\"{}\",{},{},{}\n",
            r.label,
            nums.join(","),
            r.admissible,
            r.reference_log10.map(fmt_float).unwrap_or_default()
        ));
    }
    out
}

pub fn verify(run: &RunConfig, suite: Suite, out: &mut OutputDir) -> anyhow::Result<i32> {
    let seed = run.verify.seed;
    match suite {
        Suite::Carleman => {
            let campaign = run.campaign()?;
            let report = carleman_constant_sweep(
                run.verify.samples,
                &run.verify.scales,
                &campaign,
                &run.gamma_true,
                seed,
            )?;
            let rows = report
                .rows
                .iter()
                .map(|r| vec![Some(r.lambda), Some(r.s), r.max_ratio, r.min_rhs]);
            out.write(
                "carleman.csv",
                &csv(&["lambda", "s", "max_ratio", "min_rhs"], rows),
            )?;
            out.write_json("carleman_report.json", &report)?;
        }
        Suite::Stability => {
            let campaign = run.campaign()?;
            let pairs = random_pairs(run.verify.samples, run.model.box_bound, seed);
            let report = stability_two_sided(&pairs, &campaign)?;
            let rows = report.records.iter().enumerate().map(|(k, r)| {
                vec![
                    Some(k as f64),
                    Some(r.coefficient_norm_sq),
                    Some(r.trace_norm_sq),
                    r.lower_ratio,
                    r.upper_ratio,
                ]
            });
            out.write(
                "stability.csv",
                &csv(
                    &[
                        "pair",
                        "coefficient_norm_sq",
                        "trace_norm_sq",
                        "lower_ratio",
                        "upper_ratio",
                    ],
                    rows,
                ),
            )?;
            out.write_json("stability_report.json", &report)?;
        }
        Suite::Weights => {
            let grid = run.grid()?;
            let scales = CarlemanScales {
                lambda: run.carleman.lambda,
                s: run.carleman.s,
            };
            scales.validate()?;
            let table = weight_ratio_report(&grid, scales, &run.m0_sweep()?);
            out.write("weights.csv", &weights_csv(&table))?;
            out.write_json("weights_report.json", &table)?;
        }
        Suite::Energy => {
            let report =
                energy_campaign(&run.campaign()?, &run.gamma_true).context("energy campaign")?;
            let rows = (0..report.times.len()).map(|n| {
                vec![
                    Some(report.times[n]),
                    Some(report.energy_e[n]),
                    Some(report.total_energy[n]),
                ]
            });
            out.write("energy.csv", &csv(&["t", "E_e", "E_bar"], rows))?;
            out.write_json("energy_report.json", &report)?;
        }
    }
    Ok(exit::OK)
}
