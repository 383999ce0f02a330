//! Domain types shared by every other module: model parameters, ultraviolet
//! form factors, periodic grids and grid wavefunctions.
//!
//! Momentum-space quantities follow the unnormalized convention
//! `∫ dk f(k) ≈ Δk^d Σ_q f(k_q)`; position-space norms carry the cell volume
//! `(L/n)^dims`, so both converge to their continuum values under refinement.

use std::f64::consts::PI;

use num_complex::Complex64;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// Particle dispersion `Ω(k) = √(|k|² + m²) − m`, evaluated in the
/// cancellation-free form `|k|² / (√(|k|² + m²) + m)`.
#[inline]
pub fn dispersion(k_sq: f64, mass: f64) -> f64 {
    if k_sq == 0.0 {
        return 0.0;
    }
    k_sq / ((k_sq + mass * mass).sqrt() + mass)
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Periodic box `[−L/2, L/2)^dims` with `n` points per axis.
///
/// A grid with `dims == 0` has exactly one point; it is used for the
/// relative-coordinate space of a one-particle cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: usize,
    n: usize,
    length: f64,
}

pub fn make_grid(dims: usize, n: usize, length: f64) -> Result<Grid> {
    if n < 2 || !n.is_power_of_two() {
        return Err(LabError::InvalidGridSize(n));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(invalid("length", format!("box length must be positive, got {length}")));
    }
    Ok(Grid { dims, n, length })
}

impl Grid {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Total number of grid points, `n^dims`.
    pub fn size(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn momentum_spacing(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dims as i32)
    }

    pub fn momentum_cell_volume(&self) -> f64 {
        self.momentum_spacing().powi(self.dims as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dims as i32)
    }

    /// Largest representable momentum magnitude per axis, `πn/L`.
    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    /// Signed FFT frequency index of raw index `m`.
    #[inline]
    pub fn wrap(&self, m: usize) -> i64 {
        if m < self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    pub fn axis_positions(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|m| -0.5 * self.length + m as f64 * h).collect()
    }

    pub fn axis_momenta(&self) -> Vec<f64> {
        let dk = self.momentum_spacing();
        (0..self.n).map(|m| dk * self.wrap(m) as f64).collect()
    }

    /// Index of the point `x = 0` along one axis.
    pub fn origin_index(&self) -> usize {
        self.n / 2
    }

    /// Flat index of the origin.
    pub fn origin_flat(&self) -> usize {
        (0..self.dims).fold(0, |acc, _| acc * self.n + self.origin_index())
    }

    /// Row-major multi-index of a flat index (axis 0 slowest).
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.dims);
        for a in (0..self.dims).rev() {
            out[a] = flat % self.n;
            flat /= self.n;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Calls `f(flat, coords)` for every grid point with position coordinates.
    pub fn for_each_position(&self, mut f: impl FnMut(usize, &[f64])) {
        let axis = self.axis_positions();
        self.for_each_coord(&axis, &mut f);
    }

    /// Calls `f(flat, k)` for every grid point with momentum coordinates.
    pub fn for_each_momentum(&self, mut f: impl FnMut(usize, &[f64])) {
        let axis = self.axis_momenta();
        self.for_each_coord(&axis, &mut f);
    }

    fn for_each_coord(&self, axis: &[f64], f: &mut impl FnMut(usize, &[f64])) {
        let mut idx = vec![0usize; self.dims];
        let mut coords: Vec<f64> = vec![axis[0]; self.dims];
        for flat in 0..self.size() {
            f(flat, &coords);
            // odometer increment, last axis fastest
            for a in (0..self.dims).rev() {
                idx[a] += 1;
                if idx[a] < self.n {
                    coords[a] = axis[idx[a]];
                    break;
                }
                idx[a] = 0;
                coords[a] = axis[0];
            }
        }
    }

    /// Minimum-image representative of a displacement along one axis.
    #[inline]
    pub fn minimum_image(&self, dx: f64) -> f64 {
        dx - self.length * (dx / self.length).round()
    }

    /// Momentum-space Riemann sum `Δk^dims Σ_q f(k_q)`.
    pub fn momentum_sum(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_momentum(|_, k| acc += f(k));
        acc * self.momentum_cell_volume()
    }

    /// Grid with the same per-axis resolution and `dims` axes.
    pub fn with_dims(&self, dims: usize) -> Grid {
        Grid {
            dims,
            n: self.n,
            length: self.length,
        }
    }
}

// ---------------------------------------------------------------------------
// Grid wavefunction
// ---------------------------------------------------------------------------

/// Complex amplitudes on a [`Grid`]; norms carry the cell-volume weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
}

impl GridWavefunction {
    pub fn new(grid: Grid, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.size() {
            return Err(LabError::DimensionMismatch {
                expected: grid.size(),
                actual: amplitudes.len(),
            });
        }
        Ok(Self { grid, amplitudes })
    }

    pub fn zeros(grid: Grid) -> Self {
        let amplitudes = vec![Complex64::new(0.0, 0.0); grid.size()];
        Self { grid, amplitudes }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); grid.size()];
        grid.for_each_position(|i, x| amplitudes[i] = f(x));
        Self { grid, amplitudes }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// Scales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let nrm = self.norm();
        if nrm > 0.0 {
            let s = 1.0 / nrm;
            self.amplitudes.iter_mut().for_each(|a| *a *= s);
        }
        nrm
    }

    /// `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &GridWavefunction) -> Complex64 {
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Cutoff profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// `(2π)^{−d/2} 𝟙_{σ≤|k|≤Λ}`
    SharpFlat,
    /// `(2π)^{−d/2} 𝟙_{σ≤|k|≤Λ} / ω(k)`
    SharpOverOmega,
    /// `(2π)^{−d/2} e^{−|k|²/(2Λ²)} 𝟙_{|k|≥σ}`
    Gaussian,
}

/// Ultraviolet form factor `λ̂(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CutoffProfile {
    pub kind: ProfileKind,
    pub lambda: f64,
    #[serde(default)]
    pub sigma_floor: f64,
    /// Overall amplitude multiplier; `1` gives the normalizations listed on
    /// [`ProfileKind`].
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl CutoffProfile {
    pub fn new(kind: ProfileKind, lambda: f64, sigma_floor: f64) -> Result<Self> {
        let p = Self {
            kind,
            lambda,
            sigma_floor,
            scale: 1.0,
        };
        p.check()?;
        Ok(p)
    }

    pub fn sharp_flat(lambda: f64, sigma_floor: f64) -> Result<Self> {
        Self::new(ProfileKind::SharpFlat, lambda, sigma_floor)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", format!("UV scale must be positive, got {}", self.lambda)));
        }
        if !(self.sigma_floor >= 0.0) || !self.sigma_floor.is_finite() {
            return Err(invalid(
                "sigma_floor",
                format!("IR floor must be nonnegative, got {}", self.sigma_floor),
            ));
        }
        if !self.scale.is_finite() {
            return Err(invalid("scale", "profile scale must be finite"));
        }
        Ok(())
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale *= factor;
        self
    }

    /// Same profile with the IR floor raised to at least `sigma`.
    pub fn with_ir_floor(mut self, sigma: f64) -> Self {
        self.sigma_floor = self.sigma_floor.max(sigma);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0
    }

    /// `λ̂(k)` for a `d = k.len()` dimensional momentum.
    ///
    /// The `1/ω` singularity of the sharp-over-omega kind at `k = 0` is
    /// assigned the value 0 (a single measure-zero grid point).
    pub fn value(&self, k: &[f64]) -> f64 {
        let d = k.len() as i32;
        let k_abs = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm = self.scale * (2.0 * PI).powf(-0.5 * d as f64);
        match self.kind {
            ProfileKind::SharpFlat => {
                if k_abs >= self.sigma_floor && k_abs <= self.lambda {
                    norm
                } else {
                    0.0
                }
            }
            ProfileKind::SharpOverOmega => {
                if k_abs > 0.0 && k_abs >= self.sigma_floor && k_abs <= self.lambda {
                    norm / k_abs
                } else {
                    0.0
                }
            }
            ProfileKind::Gaussian => {
                if k_abs >= self.sigma_floor {
                    norm * (-k_abs * k_abs / (2.0 * self.lambda * self.lambda)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// External potential
// ---------------------------------------------------------------------------

/// One-body external potential `V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ExternalPotential {
    /// No external potential.
    Zero,
    /// `V(x) = −v₀ e^{−|x|²/(2w²)}`
    GaussianWell { v0: f64, w: f64 },
    /// `V(x) = δ·Ṽ(|x|)` with `Ṽ` linearly interpolated from samples at
    /// radii `0, dr, 2dr, …` and zero beyond the last sample.
    ScaledTable { delta: f64, dr: f64, values: Vec<f64> },
}

impl ExternalPotential {
    pub fn gaussian_well(v0: f64, w: f64) -> Result<Self> {
        let p = ExternalPotential::GaussianWell { v0, w };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        match self {
            ExternalPotential::Zero => Ok(()),
            ExternalPotential::GaussianWell { v0, w } => {
                if !(*v0 >= 0.0) || !v0.is_finite() {
                    return Err(invalid("v0", format!("well depth must be nonnegative, got {v0}")));
                }
                if !(*w > 0.0) || !w.is_finite() {
                    return Err(invalid("w", format!("well width must be positive, got {w}")));
                }
                Ok(())
            }
            ExternalPotential::ScaledTable { delta, dr, values } => {
                if !(*delta >= 0.0) || !delta.is_finite() {
                    return Err(invalid("delta", "scale must be nonnegative"));
                }
                if !(*dr > 0.0) {
                    return Err(invalid("dr", "table spacing must be positive"));
                }
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("values", "table must be nonempty and finite"));
                }
                Ok(())
            }
        }
    }

    /// `V` at a `d`-dimensional point (the defining formula, no wrapping).
    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            ExternalPotential::Zero => 0.0,
            ExternalPotential::GaussianWell { v0, w } => -v0 * (-r2 / (2.0 * w * w)).exp(),
            ExternalPotential::ScaledTable { delta, dr, values } => {
                let s = r2.sqrt() / dr;
                let i = s.floor() as usize;
                if i + 1 >= values.len() {
                    if i + 1 == values.len() && s == i as f64 {
                        return delta * values[i];
                    }
                    return 0.0;
                }
                let f = s - i as f64;
                delta * ((1.0 - f) * values[i] + f * values[i + 1])
            }
        }
    }

    /// Lower bound `inf V`.
    pub fn lower_bound(&self) -> f64 {
        match self {
            ExternalPotential::Zero => 0.0,
            ExternalPotential::GaussianWell { v0, .. } => -v0,
            ExternalPotential::ScaledTable { delta, values, .. } => {
                delta * values.iter().cloned().fold(0.0, f64::min)
            }
        }
    }

    /// Characteristic width used for the box-size check.
    pub fn width(&self) -> f64 {
        match self {
            ExternalPotential::Zero => 0.0,
            ExternalPotential::GaussianWell { w, .. } => *w,
            ExternalPotential::ScaledTable { dr, values, .. } => dr * (values.len() - 1) as f64,
        }
    }

    /// Witness that `V → 0` toward the box edge: `max |V|` over the faces of
    /// the box relative to `|inf V|` is at most `rel_tol`.
    pub fn decays_at_edge(&self, grid: &Grid, rel_tol: f64) -> bool {
        let floor = self.lower_bound().abs();
        if floor == 0.0 {
            return true;
        }
        let mut edge = vec![0.0; grid.dims()];
        edge[0] = -0.5 * grid.length();
        self.value(&edge).abs() <= rel_tol * floor
    }
}

// ---------------------------------------------------------------------------
// Model parameters
// ---------------------------------------------------------------------------

/// Single source of truth for a model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelParams {
    pub d: usize,
    pub masses: Vec<f64>,
    pub alpha: f64,
    pub kappa: f64,
    #[serde(default)]
    pub ir_cutoff: f64,
    pub profiles: Vec<CutoffProfile>,
    pub potential: ExternalPotential,
}

impl ModelParams {
    /// `n_particles` identical particles sharing one profile.
    pub fn identical(
        d: usize,
        n_particles: usize,
        mass: f64,
        alpha: f64,
        kappa: f64,
        profile: CutoffProfile,
        potential: ExternalPotential,
    ) -> Result<Self> {
        let p = Self {
            d,
            masses: vec![mass; n_particles],
            alpha,
            kappa,
            ir_cutoff: 0.0,
            profiles: vec![profile; n_particles],
            potential,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(invalid("d", "spatial dimension must be at least 1"));
        }
        if self.masses.is_empty() {
            return Err(invalid("masses", "need at least one particle"));
        }
        if let Some(m) = self.masses.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(invalid("masses", format!("masses must be positive, got {m}")));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", format!("coupling must be nonnegative, got {}", self.alpha)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(invalid("kappa", format!("scaling must be positive, got {}", self.kappa)));
        }
        if !(self.ir_cutoff >= 0.0) || !self.ir_cutoff.is_finite() {
            return Err(invalid("ir_cutoff", "infrared cutoff must be nonnegative"));
        }
        if self.profiles.len() != self.masses.len() {
            return Err(invalid(
                "profiles",
                format!(
                    "need one profile per particle ({} masses, {} profiles)",
                    self.masses.len(),
                    self.profiles.len()
                ),
            ));
        }
        for p in &self.profiles {
            p.check()?;
        }
        self.potential.check()
    }

    /// Profile of particle `j` with the model's infrared cutoff applied.
    pub fn profile(&self, j: usize) -> CutoffProfile {
        self.profiles[j].clone().with_ir_floor(self.ir_cutoff)
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self {
            kappa,
            ..self.clone()
        }
    }

    pub fn with_potential(&self, potential: ExternalPotential) -> Self {
        Self {
            potential,
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// Profile validation
// ---------------------------------------------------------------------------

/// Ratio of a squared norm on the refined grid to the base grid above which
/// the norm is declared divergent. Convergent sums change by `O(Δk)`;
/// logarithmic or power divergences at `k → 0` grow by ≥ 2×.
pub const DIVERGENCE_RATIO: f64 = 1.25;

/// Numeric witnesses of the (UV)/(IR) assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// `‖λ̂‖₂`
    pub uv_norm: f64,
    /// `‖λ̂/ω‖₂`
    pub ir_norm: f64,
    /// `‖λ̂/√ω‖₂`
    pub half_norm: f64,
    pub uv_finite: bool,
    pub ir_finite: bool,
    pub half_finite: bool,
    pub symmetric: bool,
    /// Squared-norm ratios refined/base for (uv, ir, half).
    pub refinement_ratios: [f64; 3],
}

fn squared_norms(profile: &CutoffProfile, grid: &Grid) -> Result<[f64; 3]> {
    let mut acc = [0.0f64; 3];
    let mut negative = None;
    grid.for_each_momentum(|_, k| {
        let v = profile.value(k);
        if v < 0.0 && negative.is_none() {
            negative = Some((v, k.iter().map(|x| x * x).sum::<f64>().sqrt()));
        }
        let w = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        acc[0] += v * v;
        if w > 0.0 {
            acc[1] += v * v / (w * w);
            acc[2] += v * v / w;
        }
    });
    if let Some((value, k_abs)) = negative {
        return Err(LabError::NegativeProfile { value, k_abs });
    }
    let dv = grid.momentum_cell_volume();
    Ok([acc[0] * dv, acc[1] * dv, acc[2] * dv])
}

/// Riemann-sum norms of `λ̂`, `λ̂/ω`, `λ̂/√ω` on the momentum grid, with a
/// finiteness verdict from a refined grid (`Δk/2`, `2·k_max`).
pub fn validate_profile(profile: &CutoffProfile, grid: &Grid) -> Result<ValidityReport> {
    profile.check()?;
    let base = squared_norms(profile, grid)?;
    let refined_grid = make_grid(grid.dims(), grid.n() * 4, grid.length() * 2.0)?;
    let refined = squared_norms(profile, &refined_grid)?;

    let mut ratios = [1.0; 3];
    let mut finite = [true; 3];
    for i in 0..3 {
        if base[i] > 0.0 {
            ratios[i] = refined[i] / base[i];
            finite[i] = ratios[i] <= DIVERGENCE_RATIO;
        } else if refined[i] > 0.0 {
            ratios[i] = f64::INFINITY;
            finite[i] = false;
        }
    }

    let momenta = grid.axis_momenta();
    let nyq = grid.n() / 2;
    let mut symmetric = true;
    let mut idx = vec![0usize; grid.dims()];
    let mut k = vec![0.0; grid.dims()];
    let mut mk = vec![0.0; grid.dims()];
    for flat in 0..grid.size() {
        grid.unflatten(flat, &mut idx);
        if idx.contains(&nyq) {
            continue;
        }
        for a in 0..grid.dims() {
            k[a] = momenta[idx[a]];
            mk[a] = -k[a];
        }
        if profile.value(&k) != profile.value(&mk) {
            symmetric = false;
            break;
        }
    }

    Ok(ValidityReport {
        uv_norm: base[0].sqrt(),
        ir_norm: base[1].sqrt(),
        half_norm: base[2].sqrt(),
        uv_finite: finite[0],
        ir_finite: finite[1],
        half_finite: finite[2],
        symmetric,
        refinement_ratios: ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_momenta_are_wrapped_frequencies() {
        let g = make_grid(1, 4, 2.0 * PI).unwrap();
        assert_eq!(g.axis_momenta(), vec![0.0, 1.0, -2.0, -1.0]);
        let g = make_grid(1, 8, 8.0).unwrap();
        assert_relative_eq!(g.momentum_spacing(), PI / 4.0);
        let g = make_grid(2, 4, 1.0).unwrap();
        assert_eq!(g.size(), 16);
    }

    #[test]
    fn grid_rejects_odd_and_non_power_sizes() {
        assert!(matches!(make_grid(1, 5, 1.0), Err(LabError::InvalidGridSize(5))));
        assert!(make_grid(1, 12, 1.0).is_err());
        assert!(make_grid(1, 8, -1.0).is_err());
    }

    #[test]
    fn nyquist_is_max_momentum() {
        let g = make_grid(1, 16, 3.0).unwrap();
        let kmax = g.axis_momenta().iter().fold(0.0f64, |m, k| m.max(k.abs()));
        assert_relative_eq!(kmax, g.nyquist(), epsilon = 1e-12);
    }

    #[test]
    fn positions_and_momenta_closed_under_negation() {
        let g = make_grid(1, 16, 5.0).unwrap();
        for set in [g.axis_positions(), g.axis_momenta()] {
            let unmatched = set
                .iter()
                .filter(|x| !set.iter().any(|y| (*y + **x).abs() < 1e-12))
                .count();
            assert_eq!(unmatched, 1);
        }
    }

    #[test]
    fn normalization_gives_unit_norm() {
        let g = make_grid(2, 8, 3.0).unwrap();
        let mut psi = GridWavefunction::from_fn(g, |x| Complex64::new(x[0].cos() + 2.0, x[1]));
        psi.normalize();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dispersion_special_values() {
        assert_eq!(dispersion(0.0, 1.0), 0.0);
        assert_eq!(dispersion(16.0, 3.0), 2.0);
        assert!((dispersion(4.0, 0.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_profile_gives_zero_norms() {
        let g = make_grid(1, 64, 20.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.0).unwrap().scaled(0.0);
        let r = validate_profile(&p, &g).unwrap();
        assert_eq!(r.uv_norm, 0.0);
        assert_eq!(r.ir_norm, 0.0);
        assert_eq!(r.half_norm, 0.0);
        assert!(r.symmetric && r.uv_finite && r.ir_finite && r.half_finite);
    }

    #[test]
    fn negative_profile_rejected() {
        let g = make_grid(1, 64, 20.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.0).unwrap().scaled(-1.0);
        assert!(matches!(validate_profile(&p, &g), Err(LabError::NegativeProfile { .. })));
    }

    #[test]
    fn d1_sharp_flat_without_floor_violates_ir() {
        let g = make_grid(1, 256, 100.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.0).unwrap();
        let r = validate_profile(&p, &g).unwrap();
        assert!(r.uv_finite);
        assert!(!r.ir_finite, "ratio {:?}", r.refinement_ratios);
        // quadrature at two resolutions shows growth of Σ 1/k² Δk
        let coarse: f64 = (1..=16).map(|j| 1.0 / (j as f64 * 0.0625).powi(2)).sum::<f64>() * 0.0625;
        let fine: f64 = (1..=32).map(|j| 1.0 / (j as f64 * 0.03125).powi(2)).sum::<f64>() * 0.03125;
        assert!(fine > 1.9 * coarse);
    }

    #[test]
    fn d1_sharp_flat_with_floor_is_ir_regular() {
        let g = make_grid(1, 1024, 400.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let r = validate_profile(&p, &g).unwrap();
        assert!(r.ir_finite && r.half_finite && r.symmetric);
        // ‖λ̂/√ω‖² = (1/2π)·2·ln(Λ/σ)
        assert_relative_eq!(r.half_norm.powi(2), 10f64.ln() / PI, max_relative = 2e-2);
    }

    #[test]
    fn d3_sharp_over_omega_violates_ir() {
        let g = make_grid(3, 16, 30.0).unwrap();
        let p = CutoffProfile::new(ProfileKind::SharpOverOmega, 1.0, 0.0).unwrap();
        let r = validate_profile(&p, &g).unwrap();
        assert!(!r.ir_finite);
    }

    #[test]
    fn gaussian_norms_stable_under_resolution_doubling() {
        let p = CutoffProfile::new(ProfileKind::Gaussian, 1.0, 0.0).unwrap();
        let a = validate_profile(&p, &make_grid(1, 128, 60.0).unwrap()).unwrap();
        let b = validate_profile(&p, &make_grid(1, 256, 60.0).unwrap()).unwrap();
        assert_relative_eq!(a.uv_norm, b.uv_norm, max_relative = 1e-2);
        assert_relative_eq!(a.ir_norm, b.ir_norm, max_relative = 1e-2);
    }

    #[test]
    fn validate_profile_is_deterministic() {
        let g = make_grid(2, 16, 10.0).unwrap();
        let p = CutoffProfile::new(ProfileKind::Gaussian, 1.3, 0.2).unwrap();
        assert_eq!(validate_profile(&p, &g).unwrap(), validate_profile(&p, &g).unwrap());
    }

    #[test]
    fn model_params_validation() {
        let prof = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let ok = ModelParams::identical(1, 2, 1.0, 1.0, 2.0, prof.clone(), ExternalPotential::Zero);
        assert!(ok.is_ok());
        let bad = ModelParams::identical(1, 2, -1.0, 1.0, 2.0, prof.clone(), ExternalPotential::Zero);
        assert!(bad.is_err());
        let bad = ModelParams::identical(1, 2, 1.0, 1.0, 0.0, prof, ExternalPotential::Zero);
        assert!(bad.is_err());
    }

    #[test]
    fn gaussian_well_decays_at_box_edge() {
        let g = make_grid(1, 64, 40.0).unwrap();
        let v = ExternalPotential::gaussian_well(0.5, 1.0).unwrap();
        assert!(v.decays_at_edge(&g, 1e-6));
        assert_eq!(v.lower_bound(), -0.5);
    }

    #[test]
    fn scaled_table_interpolates() {
        let v = ExternalPotential::ScaledTable {
            delta: 2.0,
            dr: 1.0,
            values: vec![-1.0, -0.5, 0.0],
        };
        assert_relative_eq!(v.value(&[0.5]), -1.5);
        assert_relative_eq!(v.value(&[-1.0]), -1.0);
        assert_eq!(v.value(&[5.0]), 0.0);
        assert_eq!(v.lower_bound(), -2.0);
    }
}
