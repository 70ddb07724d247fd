//! TOML scenario files.
//!
//! ```toml
//! name = "one-target"
//! snr_db = 10.0            # `inf` for noise-free data
//!
//! [radar]                  # optional, defaults to 8 x 8 at half a wavelength
//! n_tx = 8
//! n_rx = 8
//! tx_spacing = 0.5
//! rx_spacing = 0.5
//!
//! [grid]                   # optional; either min/max/step or an explicit list
//! min_deg = -90.0
//! max_deg = 90.0
//! step_deg = 5.0
//! # angles_deg = [-60.0, -20.0, 40.0]
//!
//! [[emitters]]
//! magnitude = 1.0
//! phase_deg = 0.0          # optional
//! doa_deg = -20.0
//! dod_deg = -20.0
//!
//! [solver]                 # optional, every key optional
//! method = "tigre"         # or "mp-iaa"
//! init = "diagonal-ls"     # or "matched-filter", "random"
//! lambda_diag = 1.0
//! lambda_offdiag = 10.0
//! eps0 = 1e-6
//! eps_x = 1e-2
//! max_iters = 100
//! diag_loading = 1e-8
//! relaxation = 0.5
//! ```
//!
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::bench::Scenario;
use crate::error::{Error, Result};
use crate::model::{AngleGrid, Emitter, RadarConfig, Scene};
use crate::solver::{Init, Method, SolverParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub snr_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar: Option<RadarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub emitters: Vec<Emitter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Uniform(UniformGrid),
    Explicit(ExplicitGrid),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformGrid {
    pub min_deg: f64,
    pub max_deg: f64,
    pub step_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitGrid {
    pub angles_deg: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_diag: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_offdiag: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_loading: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<f64>,
}

impl SolverOverrides {
    /// Defaults for the chosen method with the given keys replaced.
    pub fn apply(&self) -> SolverParams {
        let base = match self.method {
            Some(Method::MpIaa) => SolverParams::mp_iaa(),
            _ => SolverParams::tigre(),
        };
        SolverParams {
            method: self.method.unwrap_or(base.method),
            init: self.init.unwrap_or(base.init),
            lambda_diag: self.lambda_diag.unwrap_or(base.lambda_diag),
            lambda_offdiag: self.lambda_offdiag.unwrap_or(base.lambda_offdiag),
            eps0: self.eps0.unwrap_or(base.eps0),
            eps_x: self.eps_x.unwrap_or(base.eps_x),
            max_iters: self.max_iters.unwrap_or(base.max_iters),
            diag_loading: self.diag_loading.unwrap_or(base.diag_loading),
            relaxation: self.relaxation.unwrap_or(base.relaxation),
        }
    }

    /// Every key set explicitly.
    pub fn full(params: &SolverParams) -> Self {
        Self {
            method: Some(params.method),
            init: Some(params.init),
            lambda_diag: Some(params.lambda_diag),
            lambda_offdiag: Some(params.lambda_offdiag),
            eps0: Some(params.eps0),
            eps_x: Some(params.eps_x),
            max_iters: Some(params.max_iters),
            diag_loading: Some(params.diag_loading),
            relaxation: Some(params.relaxation),
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Checks the file and builds the scenario and solver settings it describes.
    pub fn resolve(&self) -> Result<(Scenario, SolverParams)> {
        if self.snr_db.is_nan() {
            return Err(Error::Parse("snr_db is NaN".into()));
        }
        let radar = self.radar.unwrap_or_default();
        radar.validate()?;
        let grid = match &self.grid {
            None => AngleGrid::default(),
            Some(GridSpec::Uniform(u)) => AngleGrid::uniform(u.min_deg, u.max_deg, u.step_deg)?,
            Some(GridSpec::Explicit(e)) => AngleGrid::new(e.angles_deg.clone())?,
        };
        for (index, e) in self.emitters.iter().enumerate() {
            if !(e.magnitude.is_finite() && e.magnitude >= 0.0 && e.phase_deg.is_finite()) {
                return Err(Error::Parse(format!(
                    "emitters[{index}]: magnitude must be finite and nonnegative and phase finite"
                )));
            }
        }
        let scenario = Scenario {
            name: self.name.clone(),
            scene: Scene::new(self.emitters.clone()),
            snr_db: self.snr_db,
            grid,
            radar,
        };
        scenario.model()?;
        let params = self.solver.unwrap_or_default().apply();
        params.validate()?;
        Ok((scenario, params))
    }

    /// A file that resolves back to exactly `scenario` and `params`.
    pub fn from_scenario(scenario: &Scenario, params: &SolverParams) -> Self {
        Self {
            name: scenario.name.clone(),
            snr_db: scenario.snr_db,
            radar: Some(scenario.radar),
            grid: Some(GridSpec::Explicit(ExplicitGrid {
                angles_deg: scenario.grid.angles_deg().to_vec(),
            })),
            emitters: scenario.scene.emitters.clone(),
            solver: Some(SolverOverrides::full(params)),
        }
    }
}

/// Parses and resolves scenario text in one go.
pub fn load_scenario(text: &str) -> Result<(Scenario, SolverParams)> {
    ScenarioFile::parse(text)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::builtin_scenarios;

    const MINIMAL: &str = r#"
name = "minimal"
snr_db = 10.0

[[emitters]]
magnitude = 1.0
doa_deg = -20.0
dod_deg = -20.0
"#;

    #[test]
    fn minimal_file_uses_defaults() {
        let (scenario, params) = load_scenario(MINIMAL).unwrap();
        assert_eq!(scenario.grid, AngleGrid::default());
        assert_eq!(scenario.radar, RadarConfig::default());
        assert_eq!(scenario.scene.emitters[0].phase_deg, 0.0);
        assert_eq!(params, SolverParams::tigre());
    }

    #[test]
    fn grid_forms_and_solver_overrides() {
        let text = r#"
name = "custom"
snr_db = inf
[radar]
n_tx = 4
n_rx = 6
tx_spacing = 0.5
rx_spacing = 0.25
[grid]
angles_deg = [-30.0, 0.0, 30.0]
[solver]
method = "mp-iaa"
max_iters = 7
"#;
        let (scenario, params) = load_scenario(text).unwrap();
        assert_eq!(scenario.grid.angles_deg(), &[-30.0, 0.0, 30.0]);
        assert_eq!(scenario.radar.n_rx, 6);
        assert!(scenario.snr_db.is_infinite());
        assert_eq!(params.method, Method::MpIaa);
        assert_eq!(params.init, Init::MatchedFilter);
        assert_eq!(params.max_iters, 7);

        let text = "name = \"u\"\nsnr_db = 0.0\n[grid]\nmin_deg = -60.0\nmax_deg = 60.0\nstep_deg = 10.0\n";
        let (scenario, _) = load_scenario(text).unwrap();
        assert_eq!(scenario.grid.len(), 13);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = format!("{MINIMAL}colour = \"red\"\n");
        let err = load_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        assert!(err.contains("line"), "{err}");

        let text = MINIMAL.replace("magnitude = 1.0", "magnitude = 1.0\nampl = 2.0");
        let err = load_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("ampl"), "{err}");

        let text = format!("{MINIMAL}[solver]\nlambda = 3.0\n");
        assert!(load_scenario(&text).is_err());
    }

    #[test]
    fn invalid_content_is_rejected() {
        let off_grid = MINIMAL.replace("dod_deg = -20.0", "dod_deg = -21.0");
        assert!(matches!(load_scenario(&off_grid), Err(Error::OffGridEmitter { index: 0, .. })));
        let negative = MINIMAL.replace("magnitude = 1.0", "magnitude = -1.0");
        assert!(load_scenario(&negative).is_err());
        let bad_params = format!("{MINIMAL}[solver]\neps0 = 0.0\n");
        assert!(matches!(load_scenario(&bad_params), Err(Error::InvalidParams(_))));
        let bad_radar = format!("{MINIMAL}[radar]\nn_tx = 0\nn_rx = 8\ntx_spacing = 0.5\nrx_spacing = 0.5\n");
        assert!(load_scenario(&bad_radar).is_err());
        assert!(matches!(load_scenario("name = "), Err(Error::Parse(_))));
    }

    #[test]
    fn builtins_round_trip() {
        for scenario in builtin_scenarios() {
            for params in [SolverParams::tigre(), SolverParams::mp_iaa(), SolverParams::tigre_random_init()] {
                let text = ScenarioFile::from_scenario(&scenario, &params).to_toml().unwrap();
                let (back, back_params) = load_scenario(&text).unwrap();
                assert_eq!(back, scenario);
                assert_eq!(back_params, params);
            }
        }
    }
}
