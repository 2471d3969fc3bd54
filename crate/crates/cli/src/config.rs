//! The JSON run configuration. The published schema lives in
//! `config.schema.json` next to the crate manifest.

use std::path::Path;

use anyhow::{bail, Context};
use mgt_core::carleman::{CarlemanGeometry, CarlemanScales, CarlemanSetup};
use mgt_core::experiments::{m0_range, CampaignConfig};
use mgt_core::functional::{LinearSolver, MinimizerOptions};
use mgt_core::grid::{Side, SpaceTimeGrid};
use mgt_core::reconstruct::{InitialProfiles, Profile, ReconstructionConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "InitialProfiles::canonical")]
    pub initial: InitialProfiles,
    /// Coefficient of the forward and verification runs, and the synthetic
    /// truth of a reconstruction.
    #[serde(default = "Profile::zero")]
    pub gamma_true: Profile,
    #[serde(default)]
    pub source: SourceKind,
    #[serde(default)]
    pub carleman: CarlemanSpec,
    #[serde(default)]
    pub reconstruction: ReconstructionSpec,
    #[serde(default)]
    pub verify: VerifySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub x_left: f64,
    #[serde(default = "one")]
    pub x_right: f64,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "T")]
    pub final_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub c: f64,
    pub b: f64,
    /// Upper end `M` of the admissible box `[0, M]`.
    pub box_bound: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            c: 1.0,
            b: 1.0,
            box_bound: 1.0,
        }
    }
}

/// Right-hand side of the forward problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Zero,
    /// The source for which `u = sin(pi x) t^3` is exact; needs zero initial
    /// data.
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanSpec {
    pub x0: f64,
    pub beta: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    pub lambda: f64,
    pub s: f64,
    /// Observed sides; `None` picks the sides required by `x0`.
    pub gamma0: Option<Vec<Side>>,
}

impl Default for CarlemanSpec {
    fn default() -> Self {
        Self {
            x0: -0.1,
            beta: 0.9,
            m0: 2.5,
            lambda: 1.0,
            s: 1.0,
            gamma0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionSpec {
    pub s_sweep: Vec<f64>,
    pub max_iterations: usize,
    pub stop_tol: f64,
    pub noise_level: f64,
    pub noise_seed: u64,
    pub data_grid_factor: usize,
    pub smoothing_window: usize,
    pub solver: LinearSolver,
    pub solver_tol: f64,
    pub solver_max_iterations: Option<usize>,
    pub warm_start: Option<Profile>,
}

impl Default for ReconstructionSpec {
    fn default() -> Self {
        let opts = MinimizerOptions::default();
        Self {
            s_sweep: Vec::new(),
            max_iterations: 20,
            stop_tol: 1e-6,
            noise_level: 0.0,
            noise_seed: 0,
            data_grid_factor: 2,
            smoothing_window: 1,
            solver: opts.solver,
            solver_tol: opts.solver_tol,
            solver_max_iterations: opts.max_iterations,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Random trajectories (carleman) or coefficient pairs (stability).
    pub samples: usize,
    pub seed: u64,
    /// `(lambda, s)` pairs of the Carleman sweep.
    pub scales: Vec<CarlemanScales>,
    /// `M0` sweep of the weights table.
    pub m0_from: f64,
    pub m0_to: f64,
    pub m0_count: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 0,
            scales: [1.0, 2.0, 4.0]
                .iter()
                .map(|&s| CarlemanScales { lambda: 1.0, s })
                .collect(),
            m0_from: 0.0,
            m0_to: 2.0,
            m0_count: 9,
        }
    }
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    /// Parses a document, reporting the dotted path of any offending field.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        match serde_path_to_error::deserialize::<_, Self>(de) {
            Ok(cfg) => Ok(cfg),
            Err(err) => {
                let path = err.path().to_string();
                let inner = err.into_inner();
                // a missing key is reported at its parent; name the field itself
                let msg = inner.to_string();
                let field = msg
                    .strip_prefix("missing field `")
                    .and_then(|rest| rest.split('`').next())
                    .map(|f| {
                        if path == "." {
                            f.to_string()
                        } else {
                            format!("{path}.{f}")
                        }
                    });
                match field {
                    Some(f) => bail!("config field `{f}` is required ({inner})"),
                    None => bail!("config field `{path}`: {inner}"),
                }
            }
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.reconstruction.noise_seed = seed;
        self.verify.seed = seed;
    }

    pub fn grid(&self) -> anyhow::Result<SpaceTimeGrid> {
        let g = &self.grid;
        Ok(SpaceTimeGrid::new(
            g.x_left,
            g.x_right,
            g.nx,
            g.final_time,
            g.nt,
        )?)
    }

    pub fn geometry(&self, grid: &SpaceTimeGrid) -> CarlemanGeometry {
        let c = &self.carleman;
        let mut geo = CarlemanGeometry::new(c.x0, c.beta, c.m0, grid.final_time(), grid);
        if let Some(sides) = &c.gamma0 {
            geo.gamma0_sides = sides.clone();
        }
        geo
    }

    pub fn setup(&self, grid: &SpaceTimeGrid) -> CarlemanSetup {
        CarlemanSetup::new(
            self.geometry(grid),
            CarlemanScales {
                lambda: self.carleman.lambda,
                s: self.carleman.s,
            },
        )
    }

    pub fn campaign(&self) -> anyhow::Result<CampaignConfig> {
        let grid = self.grid()?;
        Ok(CampaignConfig {
            geometry: self.geometry(&grid),
            grid,
            c: self.model.c,
            b: self.model.b,
            box_bound: self.model.box_bound,
            initial: self.initial.clone(),
        })
    }

    pub fn reconstruction(&self) -> anyhow::Result<ReconstructionConfig> {
        let grid = self.grid()?;
        let r = &self.reconstruction;
        let cfg = ReconstructionConfig {
            c: self.model.c,
            b: self.model.b,
            box_bound: self.model.box_bound,
            initial: self.initial.clone(),
            setup: self.setup(&grid),
            grid,
            s_sweep: r.s_sweep.clone(),
            max_iterations: r.max_iterations,
            stop_tol: r.stop_tol,
            noise_level: r.noise_level,
            noise_seed: r.noise_seed,
            data_grid_factor: r.data_grid_factor,
            smoothing_window: r.smoothing_window,
            minimizer: MinimizerOptions {
                solver_tol: r.solver_tol,
                solver: r.solver,
                max_iterations: r.solver_max_iterations,
            },
            warm_start: r.warm_start.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn m0_sweep(&self) -> anyhow::Result<Vec<f64>> {
        let v = &self.verify;
        if !(v.m0_from.is_finite() && v.m0_to.is_finite()) {
            bail!("verify.m0_from and verify.m0_to must be finite");
        }
        Ok(m0_range(v.m0_from, v.m0_to, v.m0_count))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"grid": {"Nx": 11, "Nt": 21, "T": 1.25}}"#;

    #[test]
    fn minimal_config_takes_canonical_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.grid.x_right, 1.0);
        assert_eq!(cfg.carleman.m0, 2.5);
        assert_eq!(cfg.initial, InitialProfiles::canonical());
        assert_eq!(cfg.gamma_true, Profile::zero());
        assert_eq!(
            cfg.geometry(&cfg.grid().unwrap()).gamma0_sides,
            vec![Side::Right]
        );
    }

    #[test]
    fn missing_field_is_named_with_its_path() {
        let err = RunConfig::from_json(r#"{"grid": {"Nt": 21, "T": 1.25}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.Nx"), "{err}");
        let err = RunConfig::from_json("{}").unwrap_err();
        assert!(err.to_string().contains("`grid`"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"grid": {"Nx": 11, "Nt": 21, "T": 1.0, "dx": 0.1}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("grid"), "{err}");
        assert!(
            RunConfig::from_json(r#"{"grid": {"Nx": 11, "Nt": 21, "T": 1.0}, "extra": 1}"#)
                .is_err()
        );
        let nested =
            r#"{"grid": {"Nx": 11, "Nt": 21, "T": 1.0}, "reconstruction": {"stop_tolerance": 1}}"#;
        let err = RunConfig::from_json(nested).unwrap_err();
        assert!(err.to_string().contains("reconstruction"), "{err}");
    }

    #[test]
    fn serialized_config_round_trips() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.carleman.gamma0 = Some(vec![Side::Right]);
        cfg.reconstruction.warm_start = Some(Profile::Constant { value: 0.2 });
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    fn keys(v: &serde_json::Value) -> Vec<String> {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    }

    #[test]
    fn published_schema_lists_exactly_the_config_fields() {
        let schema: serde_json::Value =
            serde_json::from_str(include_str!("../config.schema.json")).unwrap();
        let cfg = serde_json::to_value(RunConfig::from_json(MINIMAL).unwrap()).unwrap();
        let props = &schema["properties"];
        assert_eq!(keys(props), keys(&cfg));
        for section in [
            "grid",
            "model",
            "initial",
            "carleman",
            "reconstruction",
            "verify",
        ] {
            assert_eq!(
                keys(&props[section]["properties"]),
                keys(&cfg[section]),
                "{section}"
            );
            assert_eq!(props[section]["additionalProperties"], false, "{section}");
        }
        let required: Vec<&str> = props["grid"]["required"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap())
            .collect();
        assert_eq!(required, ["Nx", "Nt", "T"]);
    }

    #[test]
    fn schema_defaults_match_the_code() {
        let schema: serde_json::Value =
            serde_json::from_str(include_str!("../config.schema.json")).unwrap();
        let cfg = serde_json::to_value(RunConfig::from_json(MINIMAL).unwrap()).unwrap();
        for section in ["model", "carleman", "reconstruction", "verify"] {
            for (key, entry) in schema["properties"][section]["properties"]
                .as_object()
                .unwrap()
            {
                let default = &entry["default"];
                let actual = &cfg[section][key];
                let same = match (default.as_f64(), actual.as_f64()) {
                    (Some(a), Some(b)) => a == b,
                    _ => default == actual,
                };
                assert!(same, "{section}.{key}: schema {default} vs code {actual}");
            }
        }
    }

    #[test]
    fn seed_overrides_both_sections() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        cfg.apply_seed(17);
        assert_eq!(cfg.reconstruction.noise_seed, 17);
        assert_eq!(cfg.verify.seed, 17);
        assert_eq!(cfg.reconstruction().unwrap().noise_seed, 17);
    }
}
