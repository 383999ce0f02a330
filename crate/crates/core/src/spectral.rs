//! Ground states of effective cluster Hamiltonians, the lowest two-cluster
//! threshold `Ξ^V`, the finite-grid binding verdict, and localization
//! diagnostics.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effpot::VeffEvaluator;
use crate::error::{LabError, Result};
use crate::fiber::build_cluster_fiber;
use crate::kinetic::EffectiveHamiltonian;
use crate::linalg::{dense_eigenvalues, lanczos_ground_state, LanczosOptions, LanczosResult, LinearOperator, DENSE_LIMIT};
use crate::model::{dispersion, Grid, GridWavefunction, ModelParams};

/// Largest particle count for subset enumeration.
pub const MAX_CLUSTER_PARTICLES: usize = 4;

/// Gap below which the two lowest eigenvalues are flagged as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalue: f64,
    pub eigenvector: GridWavefunction,
    pub residual: f64,
    pub iterations: usize,
    pub second: Option<f64>,
}

impl EigenResult {
    pub fn gap(&self) -> Option<f64> {
        self.second.map(|s| s - self.eigenvalue)
    }

    pub fn near_degenerate(&self) -> bool {
        self.gap().is_some_and(|g| g < DEGENERACY_GAP)
    }
}

/// Converts an `ℓ²`-normalized coefficient vector to a unit-norm grid
/// wavefunction with a fixed global phase (largest entry real positive).
pub fn to_wavefunction(grid: &Grid, mut v: Vec<Complex64>) -> Result<GridWavefunction> {
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, z)| if z.norm() > bv * (1.0 + 1e-12) { (i, z.norm()) } else { (bi, bv) });
    let phase = if v[imax].norm() > 0.0 {
        v[imax].conj() / v[imax].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let s = 1.0 / grid.cell_volume().sqrt();
    v.iter_mut().for_each(|z| *z *= phase * s);
    let mut psi = GridWavefunction::new(grid.clone(), v)?;
    psi.normalize();
    Ok(psi)
}

fn eigen_result(grid: &Grid, r: LanczosResult) -> Result<EigenResult> {
    Ok(EigenResult {
        eigenvalue: r.eigenvalue,
        eigenvector: to_wavefunction(grid, r.eigenvector)?,
        residual: r.residual,
        iterations: r.matvecs,
        second: r.second,
    })
}

pub fn ground_state(op: &dyn LinearOperator, grid: &Grid, opts: &LanczosOptions) -> Result<EigenResult> {
    if op.dim() != grid.size() {
        return Err(LabError::DimensionMismatch {
            expected: grid.size(),
            actual: op.dim(),
        });
    }
    eigen_result(grid, lanczos_ground_state(op, opts, None)?)
}

// ---------------------------------------------------------------------------
// Cluster thresholds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetRow {
    pub beta: Vec<usize>,
    pub complement: Vec<usize>,
    pub e_v_beta: f64,
    pub e_0_complement: f64,
    pub sum: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub rows: Vec<SubsetRow>,
    pub xi: f64,
    pub argmin: Vec<usize>,
}

impl ThresholdReport {
    /// `Ξ^V ≤ ℰ^V(β) + ℰ^0(β^c)` for every stored row.
    pub fn is_consistent(&self) -> bool {
        self.rows.iter().all(|r| self.xi <= r.sum)
    }
}

fn subsets(n: usize) -> Vec<Vec<usize>> {
    (0..(1usize << n))
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
        .collect()
}

/// `ℰ^V(β) = inf σ(h_eff^V(β))` with `ℰ^V(∅) = 0`.
pub fn cluster_energy_v(
    params: &ModelParams,
    grid: &Grid,
    veff: Option<&VeffEvaluator>,
    beta: &[usize],
    opts: &LanczosOptions,
) -> Result<f64> {
    if beta.is_empty() {
        return Ok(0.0);
    }
    let g = grid.with_dims(params.d * beta.len());
    let h = EffectiveHamiltonian::build(params, &g, veff, beta, true)?;
    Ok(lanczos_ground_state(&h, opts, None)?.eigenvalue)
}

/// `ℰ^0(β) = inf σ(k_β(0))` in relative coordinates, `ℰ^0(∅) = 0`.
pub fn cluster_energy_0(
    params: &ModelParams,
    grid: &Grid,
    veff: Option<&VeffEvaluator>,
    beta: &[usize],
    opts: &LanczosOptions,
) -> Result<f64> {
    if beta.len() <= 1 {
        return Ok(0.0);
    }
    let g = grid.with_dims(params.d * (beta.len() - 1));
    let op = build_cluster_fiber(&vec![0.0; params.d], params, &g, veff, beta)?;
    Ok(lanczos_ground_state(&op, opts, None)?.eigenvalue)
}

/// Energies of all proper subsets and `Ξ^V = min_β (ℰ^V(β) + ℰ^0(β^c))`.
pub fn cluster_energies(
    params: &ModelParams,
    grid: &Grid,
    veff: Option<&VeffEvaluator>,
    opts: &LanczosOptions,
) -> Result<ThresholdReport> {
    let n = params.n_particles();
    if n > MAX_CLUSTER_PARTICLES {
        return Err(LabError::Budget {
            what: "particles for subset enumeration",
            size: n,
            limit: MAX_CLUSTER_PARTICLES,
        });
    }
    let all: Vec<Vec<usize>> = subsets(n).into_iter().filter(|b| b.len() < n).collect();
    let rows: Vec<Result<SubsetRow>> = all
        .par_iter()
        .map(|beta| {
            let complement: Vec<usize> = (0..n).filter(|i| !beta.contains(i)).collect();
            let wrap = |e: LabError| LabError::Subset {
                subset: beta.clone(),
                source: Box::new(e),
            };
            let e_v_beta = cluster_energy_v(params, grid, veff, beta, opts).map_err(wrap)?;
            let e_0_complement = cluster_energy_0(params, grid, veff, &complement, opts).map_err(wrap)?;
            Ok(SubsetRow {
                beta: beta.clone(),
                complement,
                e_v_beta,
                e_0_complement,
                sum: e_v_beta + e_0_complement,
            })
        })
        .collect();
    let rows: Vec<SubsetRow> = rows.into_iter().collect::<Result<_>>()?;
    let best = rows
        .iter()
        .min_by(|a, b| a.sum.total_cmp(&b.sum))
        .expect("at least the empty subset");
    Ok(ThresholdReport {
        xi: best.sum,
        argmin: best.beta.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Binding verdict
// ---------------------------------------------------------------------------

/// Smallest nonzero kinetic energy on the grid, `min_j Ω_j(2π/L)`.
pub fn grid_energy_resolution(params: &ModelParams, grid: &Grid) -> f64 {
    let dk = grid.momentum_spacing();
    params
        .masses
        .iter()
        .map(|m| dispersion(dk * dk, *m))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BindingReport {
    pub e_v: f64,
    pub residual: f64,
    pub xi: f64,
    pub argmin: Vec<usize>,
    pub margin: f64,
    pub resolution: f64,
    pub margin_threshold: f64,
    pub participation_ratio: f64,
    pub box_volume: f64,
    pub decay_rate: Option<f64>,
    pub gap: Option<f64>,
    pub near_degenerate: bool,
    pub localized: bool,
    pub bound: bool,
    pub threshold: ThresholdReport,
    pub warnings: Vec<String>,
}

/// Full-system ground state plus threshold and the margin/localization verdict.
pub fn binding_analysis(
    params: &ModelParams,
    grid: &Grid,
    veff: Option<&VeffEvaluator>,
    opts: &LanczosOptions,
) -> Result<(BindingReport, EigenResult)> {
    let n = params.n_particles();
    let all: Vec<usize> = (0..n).collect();
    let g = grid.with_dims(params.d * n);
    let h = EffectiveHamiltonian::build(params, &g, veff, &all, true)?;
    let gs_opts = LanczosOptions {
        second: true,
        ..opts.clone()
    };
    let gs = ground_state(&h, &g, &gs_opts)?;
    let threshold = cluster_energies(params, grid, veff, opts)?;
    let resolution = grid_energy_resolution(params, grid);
    let margin_threshold = (5.0 * resolution).max(1e-4);
    let margin = threshold.xi - gs.eigenvalue;
    let metrics = localization_metrics(&gs.eigenvector, &[]);
    let localized = metrics.participation_ratio < crate::fiber::LOCALIZED_FRACTION * g.volume();
    let report = BindingReport {
        e_v: gs.eigenvalue,
        residual: gs.residual,
        xi: threshold.xi,
        argmin: threshold.argmin.clone(),
        margin,
        resolution,
        margin_threshold,
        participation_ratio: metrics.participation_ratio,
        box_volume: g.volume(),
        decay_rate: metrics.decay_rate,
        gap: gs.gap(),
        near_degenerate: gs.near_degenerate(),
        localized,
        bound: margin > margin_threshold && localized,
        threshold,
        warnings: h.warnings().to_vec(),
    };
    Ok((report, gs))
}

// ---------------------------------------------------------------------------
// Negative eigenvalues
// ---------------------------------------------------------------------------

/// Number of eigenvalues below `−floor_tol` from the dense spectrum.
pub fn count_negative_eigenvalues(h: &dyn LinearOperator, floor_tol: f64) -> Result<usize> {
    if h.dim() > DENSE_LIMIT {
        return Err(LabError::Budget {
            what: "grid points for dense counting",
            size: h.dim(),
            limit: DENSE_LIMIT,
        });
    }
    Ok(dense_eigenvalues(h)?.iter().filter(|v| **v < -floor_tol).count())
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    /// `(Σ |v|⁴ · cell volume)^{-1}` for unit-norm `v`, in volume units.
    pub participation_ratio: f64,
    /// `(r, ∫_{|x|>r} |v|²)` for each requested radius.
    pub mass_outside: Vec<(f64, f64)>,
    /// `−slope` of a least-squares fit of `ln|v|` against `|x|` over points
    /// with `|v| > 1e−10`.
    pub decay_rate: Option<f64>,
}

pub fn mass_outside(v: &GridWavefunction, r: f64) -> f64 {
    let cv = v.grid().cell_volume();
    let amps = v.amplitudes();
    let mut acc = 0.0;
    v.grid().for_each_position(|flat, x| {
        if x.iter().map(|c| c * c).sum::<f64>() > r * r {
            acc += amps[flat].norm_sqr();
        }
    });
    acc * cv
}

pub fn localization_metrics(v: &GridWavefunction, radii: &[f64]) -> LocalizationMetrics {
    let grid = v.grid();
    let cv = grid.cell_volume();
    let n2 = v.norm().powi(2);
    let amps = v.amplitudes();
    let s4: f64 = amps.iter().map(|a| a.norm_sqr().powi(2)).sum::<f64>() * cv / (n2 * n2);
    let participation_ratio = 1.0 / s4;
    let mass = radii.iter().map(|&r| (r, mass_outside(v, r) / n2)).collect();

    let scale = n2.sqrt();
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    grid.for_each_position(|flat, x| {
        let a = amps[flat].norm() / scale;
        if a > 1e-10 {
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            let y = a.ln();
            sx += r;
            sy += y;
            sxx += r * r;
            sxy += r * y;
            cnt += 1.0;
        }
    });
    let den = cnt * sxx - sx * sx;
    let decay_rate = if cnt >= 3.0 && den.abs() > 1e-300 {
        Some(-(cnt * sxy - sx * sy) / den)
    } else {
        None
    };
    LocalizationMetrics {
        participation_ratio,
        mass_outside: mass,
        decay_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effpot::{potential_grid, veff_assemble, PairTables};
    use crate::linalg::dense_eigh;
    use crate::model::{make_grid, CutoffProfile, ExternalPotential};

    fn one_body(v0: f64, n: usize, l: f64) -> (ModelParams, Grid, EffectiveHamiltonian) {
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let v = if v0 > 0.0 {
            ExternalPotential::gaussian_well(v0, 1.0).unwrap()
        } else {
            ExternalPotential::Zero
        };
        let params = ModelParams::identical(1, 1, 1.0, 0.0, 1.0, p, v).unwrap();
        let g = make_grid(1, n, l).unwrap();
        let h = EffectiveHamiltonian::build(&params, &g, None, &[0], true).unwrap();
        (params, g, h)
    }

    #[test]
    fn free_particle_ground_state_is_zero() {
        let (_, g, h) = one_body(0.0, 64, 20.0);
        let r = ground_state(&h, &g, &LanczosOptions::default()).unwrap();
        assert!(r.eigenvalue.abs() < 1e-10);
        assert!(r.residual <= 1e-10);
    }

    #[test]
    fn gaussian_well_matches_dense_oracle() {
        let (_, g, h) = one_body(0.5, 256, 40.0);
        let r = ground_state(&h, &g, &LanczosOptions::default()).unwrap();
        let (vals, _) = dense_eigh(&h).unwrap();
        assert!((r.eigenvalue - vals[0]).abs() < 1e-8);
        assert!((r.eigenvector.norm() - 1.0).abs() < 1e-10);
        assert!(r.residual <= 1e-10 * (r.eigenvalue.abs() + 1.0));
    }

    #[test]
    fn deep_well_respects_variational_floor() {
        let (_, g, h) = one_body(50.0, 128, 20.0);
        let r = ground_state(&h, &g, &LanczosOptions::default()).unwrap();
        assert!(r.eigenvalue >= -50.0);
        assert!(r.eigenvalue < -40.0);
    }

    #[test]
    fn free_pair_threshold_is_zero() {
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let params = ModelParams::identical(1, 2, 1.0, 0.0, 1.0, p, ExternalPotential::Zero).unwrap();
        let g = make_grid(1, 32, 16.0).unwrap();
        let r = cluster_energies(&params, &g, None, &LanczosOptions::default()).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.xi.abs() < 1e-10);
        assert!(r.rows.iter().all(|row| row.sum.abs() < 1e-10));
    }

    #[test]
    fn coupled_pair_without_well_has_free_singletons_and_negative_e0() {
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let params = ModelParams::identical(1, 2, 1.0, 3.0, 1.0, p, ExternalPotential::Zero).unwrap();
        let g = make_grid(1, 64, 24.0).unwrap();
        let pg = potential_grid(&g, 1, 64).unwrap();
        let ev = veff_assemble(PairTables::compute(&params, &pg).unwrap(), 3.0, 1);
        let opts = LanczosOptions::default();
        let r = cluster_energies(&params, &g, Some(&ev), &opts).unwrap();
        let e0 = cluster_energy_0(&params, &g, Some(&ev), &[0, 1], &opts).unwrap();
        assert!(e0 < 0.0);
        for row in &r.rows {
            if row.beta.is_empty() {
                assert_eq!(row.sum, e0);
            } else {
                // ℰ^V({j}) = ℰ^0({j}) = 0 for a free particle
                assert!(row.sum.abs() < 1e-9);
            }
        }
        assert_eq!(r.xi, e0);
        assert!(r.argmin.is_empty());
        // Gaussian trial state in the relative coordinate bounds ℰ^0 from above
        let op = build_cluster_fiber(&[0.0], &params, &g, Some(&ev), &[0, 1]).unwrap();
        let trial: Vec<Complex64> = g.axis_positions().iter().map(|y| Complex64::new((-y * y).exp(), 0.0)).collect();
        let q = crate::linalg::rayleigh(&op, &trial);
        assert!(q < 0.0 && e0 <= q + 1e-12);
    }

    #[test]
    fn negative_eigenvalue_count() {
        let (_, _, h) = one_body(0.0, 128, 40.0);
        assert_eq!(count_negative_eigenvalues(&h, 1e-3).unwrap(), 0);
        let base = ExternalPotential::gaussian_well(1.0, 1.0).unwrap();
        let g = make_grid(1, 256, 40.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let count = |delta: f64| {
            let v = ExternalPotential::ScaledTable {
                delta,
                dr: 0.05,
                values: (0..200).map(|i| base.value(&[i as f64 * 0.05])).collect(),
            };
            let params = ModelParams::identical(1, 1, 1.0, 0.0, 1.0, p.clone(), v).unwrap();
            let h = EffectiveHamiltonian::build(&params, &g, None, &[0], true).unwrap();
            count_negative_eigenvalues(&h, grid_energy_resolution(&params, &g)).unwrap()
        };
        assert_eq!(count(0.01), 0);
        assert!(count(5.0) >= 1);
    }

    #[test]
    fn localization_of_delta_and_constant() {
        let g = make_grid(2, 16, 8.0).unwrap();
        let mut delta = GridWavefunction::zeros(g.clone());
        delta.amplitudes_mut()[37] = Complex64::new(1.0, 0.0);
        delta.normalize();
        let m = localization_metrics(&delta, &[]);
        assert!((m.participation_ratio - g.cell_volume()).abs() < 1e-12);

        let mut c = GridWavefunction::from_fn(g.clone(), |_| Complex64::new(1.0, 0.0));
        c.normalize();
        let m = localization_metrics(&c, &[2.0]);
        assert!((m.participation_ratio - g.volume()).abs() < 1e-9);
        let mut inside = 0usize;
        g.for_each_position(|_, x| {
            if x[0] * x[0] + x[1] * x[1] <= 4.0 {
                inside += 1;
            }
        });
        let want = 1.0 - inside as f64 / g.size() as f64;
        assert!((m.mass_outside[0].1 - want).abs() < 1e-12);
        // continuum value within discretization error
        assert!((want - (1.0 - std::f64::consts::PI * 4.0 / 64.0)).abs() < 0.03);
    }

    #[test]
    fn bound_state_has_positive_decay_rate() {
        let (_, g, h) = one_body(3.0, 256, 40.0);
        let r = ground_state(&h, &g, &LanczosOptions::default()).unwrap();
        let m = localization_metrics(&r.eigenvector, &[]);
        assert!(m.decay_rate.unwrap() > 0.0);
    }
}
