//! Run configuration shared by the command-line driver and the acceptance
//! suite. Every section has defaults matching the shipped desk instance.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::LanczosOptions;
use crate::model::{make_grid, CutoffProfile, ExternalPotential, Grid, ModelParams, ProfileKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct GridConfig {
    /// Points per axis (power of two).
    pub n: usize,
    pub length: f64,
    /// Length multiple of the pair-potential grid.
    pub potential_oversample: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 128,
            length: 40.0,
            potential_oversample: 8,
        }
    }
}

impl GridConfig {
    /// One-particle (`d`-axis) base grid.
    pub fn base(&self, d: usize) -> Result<Grid> {
        make_grid(d, self.n, self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct ScanConfig {
    pub alphas: Vec<f64>,
    pub kappa: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            kappa: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct FiberConfig {
    /// Relative-coordinate grid.
    pub n: usize,
    pub length: f64,
    /// Couplings of the `E(0) ≤ E(P)` check.
    pub alphas: Vec<f64>,
}

impl Default for FiberConfig {
    fn default() -> Self {
        Self {
            n: 512,
            length: 60.0,
            alphas: vec![0.0, 4.0, 16.0],
        }
    }
}

/// Strong-coupling instance (no external potential) for the `ℰ^0/α²`
/// asymptotics and the concentration of the relative ground state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct ConcentrationConfig {
    pub profile: CutoffProfile,
    pub n: usize,
    pub length: f64,
    pub potential_oversample: usize,
    pub alphas: Vec<f64>,
    pub radius: f64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            profile: CutoffProfile {
                kind: ProfileKind::SharpFlat,
                lambda: 1.0,
                sigma_floor: 0.1,
                scale: 1.0,
            },
            n: 512,
            length: 60.0,
            potential_oversample: 8,
            alphas: vec![4.0, 8.0, 16.0],
            radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct LevyConfig {
    pub probe_paths: usize,
    pub probe_frequencies: Vec<f64>,
    pub probe_masses: Vec<f64>,
    pub probe_horizons: Vec<f64>,
    pub laplace_arguments: Vec<f64>,
    pub fk_paths: usize,
    pub fk_steps: usize,
    pub fk_t: f64,
    pub fk_n: usize,
    pub fk_length: f64,
    pub exceedance_paths: usize,
    pub exceedance_levels: Vec<f64>,
    pub exceedance_t: f64,
    pub exceedance_min_steps: usize,
    pub exceedance_max_steps: usize,
}

impl Default for LevyConfig {
    fn default() -> Self {
        Self {
            probe_paths: 100_000,
            probe_frequencies: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            probe_masses: vec![0.5, 2.0],
            probe_horizons: vec![0.5, 2.0],
            laplace_arguments: vec![0.5, 1.0, 2.0],
            fk_paths: 100_000,
            fk_steps: 128,
            fk_t: 1.0,
            fk_n: 256,
            fk_length: 20.0,
            exceedance_paths: 1_000_000,
            exceedance_levels: vec![2.0, 4.0, 6.0, 8.0],
            exceedance_t: 1.0,
            exceedance_min_steps: 16,
            exceedance_max_steps: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct EnvelopeConfig {
    /// Coupling of the bound instance.
    pub alpha: f64,
    /// Horizon factor: `t = ε|X|`.
    pub epsilon: f64,
    pub radii: Vec<f64>,
    pub steps: usize,
    pub paths: usize,
    /// Relative exponent perturbation for the sensitivity report.
    pub exponent_perturbation: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            epsilon: 0.1,
            radii: vec![4.0, 6.0, 8.0, 10.0],
            steps: 64,
            paths: 20_000,
            exponent_perturbation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct FockConfig {
    /// Particle grid (per axis).
    pub n: usize,
    pub length: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub modes: usize,
    /// Nested occupation cutoffs.
    pub ladder: Vec<usize>,
    pub kappas: Vec<f64>,
    pub trend_n_max: usize,
    pub krylov_dim: usize,
}

impl Default for FockConfig {
    fn default() -> Self {
        Self {
            n: 64,
            length: 40.0,
            alpha: 1.0,
            kappa: 2.0,
            modes: 4,
            ladder: vec![1, 2, 3],
            kappas: vec![1.0, 2.0, 4.0, 8.0],
            trend_n_max: 3,
            krylov_dim: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LabConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "desk_model")]
    pub model: ModelParams,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub lanczos: LanczosOptions,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub fiber: FiberConfig,
    #[serde(default)]
    pub concentration: ConcentrationConfig,
    #[serde(default)]
    pub levy: LevyConfig,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub fock: FockConfig,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_seed() -> u64 {
    20_240_917
}

/// `d = 1`, two unit masses, shallow Gaussian well and a Gaussian form
/// factor with an infrared floor.
pub fn desk_model() -> ModelParams {
    ModelParams {
        d: 1,
        masses: vec![1.0, 1.0],
        alpha: 4.0,
        kappa: 4.0,
        ir_cutoff: 0.0,
        profiles: vec![
            CutoffProfile {
                kind: ProfileKind::Gaussian,
                lambda: 2.0,
                sigma_floor: 0.5,
                scale: 1.0,
            };
            2
        ],
        potential: ExternalPotential::GaussianWell { v0: 0.07, w: 1.0 },
    }
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: default_seed(),
            model: desk_model(),
            grid: GridConfig::default(),
            lanczos: LanczosOptions::default(),
            scan: ScanConfig::default(),
            fiber: FiberConfig::default(),
            concentration: ConcentrationConfig::default(),
            levy: LevyConfig::default(),
            envelope: EnvelopeConfig::default(),
            fock: FockConfig::default(),
        }
    }
}

fn check_grid(name: &'static str, n: usize, length: f64) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(invalid(name, format!("points per axis must be a power of two >= 2, got {n}")));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(invalid(name, format!("box length must be positive, got {length}")));
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn check_increasing(name: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() || v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(name, "must be a nonempty strictly increasing list"));
    }
    Ok(())
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema-version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.model.validate()?;
        check_grid("grid.n", self.grid.n, self.grid.length)?;
        if self.grid.potential_oversample == 0 {
            return Err(invalid("grid.potential-oversample", "must be at least 1"));
        }
        if !(self.lanczos.tol > 0.0) || self.lanczos.krylov_dim < 4 || self.lanczos.max_matvecs == 0 {
            return Err(invalid("lanczos", "tol must be positive, krylov-dim >= 4, max-matvecs >= 1"));
        }
        check_increasing("scan.alphas", &self.scan.alphas)?;
        if self.scan.alphas.iter().any(|a| *a < 0.0) {
            return Err(invalid("scan.alphas", "couplings must be nonnegative"));
        }
        check_positive("scan.kappa", self.scan.kappa)?;
        check_grid("fiber.n", self.fiber.n, self.fiber.length)?;
        self.concentration.profile.check()?;
        check_grid("concentration.n", self.concentration.n, self.concentration.length)?;
        check_increasing("concentration.alphas", &self.concentration.alphas)?;
        check_positive("concentration.radius", self.concentration.radius)?;
        let l = &self.levy;
        for (name, v) in [
            ("levy.probe-paths", l.probe_paths),
            ("levy.fk-paths", l.fk_paths),
            ("levy.fk-steps", l.fk_steps),
            ("levy.exceedance-paths", l.exceedance_paths),
            ("levy.exceedance-min-steps", l.exceedance_min_steps),
        ] {
            if v < 2 {
                return Err(invalid(name, "must be at least 2"));
            }
        }
        if l.exceedance_max_steps < l.exceedance_min_steps {
            return Err(invalid("levy.exceedance-max-steps", "must be >= exceedance-min-steps"));
        }
        check_positive("levy.fk-t", l.fk_t)?;
        check_positive("levy.exceedance-t", l.exceedance_t)?;
        check_grid("levy.fk-n", l.fk_n, l.fk_length)?;
        check_increasing("levy.exceedance-levels", &l.exceedance_levels)?;
        for m in l.probe_masses.iter() {
            check_positive("levy.probe-masses", *m)?;
        }
        for t in l.probe_horizons.iter() {
            check_positive("levy.probe-horizons", *t)?;
        }
        let e = &self.envelope;
        check_positive("envelope.epsilon", e.epsilon)?;
        check_increasing("envelope.radii", &e.radii)?;
        if e.radii.len() < 2 {
            return Err(invalid("envelope.radii", "need at least two radii for a rate fit"));
        }
        if e.steps == 0 || e.paths < 2 {
            return Err(invalid("envelope", "steps >= 1 and paths >= 2 required"));
        }
        let f = &self.fock;
        check_grid("fock.n", f.n, f.length)?;
        check_positive("fock.kappa", f.kappa)?;
        if f.ladder.is_empty() || f.ladder.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("fock.ladder", "must be a nonempty nondecreasing list"));
        }
        check_increasing("fock.kappas", &f.kappas)?;
        if f.modes == 0 {
            return Err(invalid("fock.modes", "need at least one mode"));
        }
        Ok(())
    }

    /// Lanczos options with the run seed.
    pub fn lanczos_options(&self) -> LanczosOptions {
        LanczosOptions {
            seed: self.lanczos.seed ^ self.seed,
            ..self.lanczos.clone()
        }
    }

    /// Scales every Monte Carlo path count by `factor`.
    pub fn scale_paths(&mut self, factor: f64) {
        let s = |n: &mut usize| *n = ((*n as f64 * factor).round() as usize).max(2);
        s(&mut self.levy.probe_paths);
        s(&mut self.levy.fk_paths);
        s(&mut self.levy.exceedance_paths);
        s(&mut self.envelope.paths);
    }
}
