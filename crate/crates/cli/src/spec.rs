//! Experiment specification: one TOML file, every key optional, unknown keys rejected.

use serde::{Deserialize, Serialize};

use jumpsense_core::analytic::{FirstFactor, Resampling};
use jumpsense_core::master::Variant;
use jumpsense_core::protocols::{self, DephasingStrategy, NoiseModel, SensorCode};
use jumpsense_core::trajectory::TrajectoryOptions;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodeSpec {
    ExampleI {
        #[serde(default = "exact")]
        strategy: DephasingStrategy,
    },
    ExampleIi {
        #[serde(default = "exact")]
        strategy: DephasingStrategy,
        #[serde(default)]
        parity_interval: Option<f64>,
    },
    Xy {
        theta: f64,
        #[serde(default = "exact")]
        strategy: DephasingStrategy,
    },
    General {
        theta: f64,
        phi: f64,
        omega: f64,
    },
    HomodyneZ {
        b: f64,
    },
    Interferometer {
        g2: f64,
    },
}

fn exact() -> DephasingStrategy {
    DephasingStrategy::ExactTerm
}

impl Default for CodeSpec {
    fn default() -> Self {
        CodeSpec::ExampleI { strategy: DephasingStrategy::ExactTerm }
    }
}

impl CodeSpec {
    /// Builds the code for signal `g`; for the interferometer `g` is the first arm.
    pub fn build(&self, g: f64, gamma: f64) -> Result<SensorCode, CliError> {
        let built = match self {
            CodeSpec::ExampleI { strategy } => protocols::build_example_i(g, gamma, *strategy),
            CodeSpec::ExampleIi { strategy, parity_interval } => {
                protocols::build_example_ii(g, gamma, *strategy).and_then(|c| match parity_interval {
                    Some(iv) => c.with_parity_interval(*iv),
                    None => Ok(c),
                })
            }
            CodeSpec::Xy { theta, strategy } => protocols::build_xy_code(*theta, g, gamma, *strategy),
            CodeSpec::General { theta, phi, omega } => {
                protocols::build_general_signal_code(*theta, *phi, g, gamma, *omega)
            }
            CodeSpec::HomodyneZ { b } => protocols::build_homodyne_z(*b, g, gamma),
            CodeSpec::Interferometer { g2 } => protocols::build_interferometer_code(g, *g2, gamma),
        };
        built.map_err(|e| CliError::Validation(format!("code: {e}")))
    }

    /// Signal value handed to the simulators (the interferometer senses `g − g₂`).
    pub fn signal(&self, g: f64) -> f64 {
        match self {
            CodeSpec::Interferometer { g2 } => g - g2,
            _ => g,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub g: f64,
    pub duration: f64,
    /// `0` picks a tenth of the stability bound.
    pub dt: f64,
    pub n_traj: usize,
    pub n_records: usize,
    pub options: TrajectoryOptions,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection { g: 0.2, duration: 20.0, dt: 0.0, n_traj: 1000, n_records: 201, options: Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MasterSection {
    pub g: f64,
    pub duration: f64,
    /// `0` picks the default step of the integrator.
    pub dt: f64,
    pub variant: Variant,
    pub ec_interval: f64,
    pub n_records: usize,
}

impl Default for MasterSection {
    fn default() -> Self {
        MasterSection { g: 0.2, duration: 50.0, dt: 0.0, variant: Variant::Corrected, ec_interval: 0.01, n_records: 201 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSection {
    pub tau: f64,
    pub g: f64,
    pub gamma: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub n_samples: usize,
    pub resampling: Resampling,
    pub first_factor: FirstFactor,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        AnalyticSection {
            tau: 0.2,
            g: 0.2,
            gamma: 1.0,
            t_max: 140.0,
            n_points: 141,
            n_samples: 4000,
            resampling: Resampling::FixedCount,
            first_factor: FirstFactor::Simplified,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Table1Section {
    pub alphas: Vec<f64>,
    pub g: f64,
    pub dt: f64,
    pub n_samples: usize,
    /// Fit window start, in units of 1/γ.
    pub fit_start: f64,
    /// Fit window length, in periods `π/g`.
    pub fit_periods: f64,
}

impl Default for Table1Section {
    fn default() -> Self {
        Table1Section {
            alphas: vec![0.01, 0.03, 0.05, 0.08],
            g: 0.01,
            dt: 5e-3,
            n_samples: 2000,
            fit_start: 5.0,
            fit_periods: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KlSection {
    /// JSON file with `{"code_states": [[[re, im], ...], [[re, im], ...]]}`; empty uses `[code]`.
    pub code_file: String,
    /// Error names: `identity`, `sigma_minus:<site>`, `homodyne:<site>:<b>`, `pauli:<site>:<x|y|z>`.
    pub errors: Vec<String>,
    pub tolerance: f64,
    pub axis_site: usize,
    pub axis_grid: (usize, usize),
    pub nogo_codes: usize,
    pub nogo_qubits: Vec<usize>,
    pub homodyne_b: f64,
    pub homodyne_codes: usize,
}

impl Default for KlSection {
    fn default() -> Self {
        KlSection {
            code_file: String::new(),
            errors: vec!["identity".into(), "sigma_minus:1".into()],
            tolerance: 1e-9,
            axis_site: 1,
            axis_grid: (7, 8),
            nogo_codes: 10_000,
            nogo_qubits: vec![1, 2, 3],
            homodyne_b: 1.0,
            homodyne_codes: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    pub g: f64,
    pub gamma: f64,
    pub totals: Vec<f64>,
    pub alphas: Vec<f64>,
    pub grid_points: usize,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        SensitivitySection {
            g: 0.2,
            gamma: 1.0,
            totals: vec![10.0, 40.0, 160.0, 640.0],
            alphas: vec![0.005, 0.01, 0.03],
            grid_points: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { svg: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    /// Worker threads; `0` uses all cores.
    pub threads: usize,
    pub code: CodeSpec,
    pub noise: NoiseModel,
    pub trajectory: TrajectorySection,
    pub master: MasterSection,
    pub analytic: AnalyticSection,
    pub fig2: AnalyticSection,
    pub table1: Table1Section,
    pub klcheck: KlSection,
    pub sensitivity: SensitivitySection,
    pub output: OutputSection,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "default".into(),
            seed: 1,
            threads: 0,
            code: CodeSpec::default(),
            noise: NoiseModel::ideal(1.0),
            trajectory: TrajectorySection::default(),
            master: MasterSection::default(),
            analytic: AnalyticSection::default(),
            fig2: AnalyticSection::default(),
            table1: Table1Section::default(),
            klcheck: KlSection::default(),
            sensitivity: SensitivitySection::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| CliError::Validation(format!("spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.noise.validate().map_err(|e| CliError::Validation(format!("noise: {e}")))?;
        let bad = |m: &str| Err(CliError::Validation(m.to_string()));
        if self.trajectory.n_records == 0 || self.master.n_records == 0 {
            return bad("n_records must be at least 1");
        }
        for (name, a) in [("analytic", &self.analytic), ("fig2", &self.fig2)] {
            if a.n_points < 2 || a.n_samples < 2 || !(a.t_max > 0.0) {
                return Err(CliError::Validation(format!("{name}: need n_points ≥ 2, n_samples ≥ 2, t_max > 0")));
            }
        }
        if self.table1.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("table1.alphas must lie in [0, 1]");
        }
        if self.sensitivity.totals.len() < 4 {
            return bad("sensitivity.totals needs at least four entries");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let spec = ExperimentSpec::default();
        assert_eq!(ExperimentSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn partial_spec_fills_defaults() {
        let spec = ExperimentSpec::from_toml("seed = 9\n[code]\nkind = \"homodyne_z\"\nb = 0.5\n").unwrap();
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.code, CodeSpec::HomodyneZ { b: 0.5 });
        assert_eq!(spec.master, MasterSection::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["sede = 1", "[master]\nduraton = 3.0", "[code]\nkind = \"example_i\"\nomega = 2.0"] {
            assert!(matches!(ExperimentSpec::from_toml(text), Err(CliError::Validation(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentSpec::from_toml("[noise]\ngamma = -1.0").is_err());
        assert!(ExperimentSpec::from_toml("[table1]\nalphas = [1.5]").is_err());
        assert!(ExperimentSpec::from_toml("[sensitivity]\ntotals = [1.0, 2.0]").is_err());
    }

    #[test]
    fn interferometer_senses_difference() {
        let c = CodeSpec::Interferometer { g2: 0.05 };
        assert!((c.signal(0.2) - 0.15).abs() < 1e-15);
        assert!(c.build(0.2, 1.0).is_ok());
    }
}
