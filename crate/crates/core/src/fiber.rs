//! Total-momentum fibers of the translation-invariant effective operator.
//!
//! Particle `cluster[0]` is the reference; the relative grid carries
//! `y_j = x_j − x_ref` for the remaining members, and
//! `k(P) = Ω_ref(P − Σ q_j) + Σ Ω_j(q_j) + α² Σ_j W_ref,j(−y_j) + α² Σ_{i<j} W_ij(y_i − y_j)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effpot::VeffEvaluator;
use crate::error::{LabError, Result};
use crate::kinetic::EffectiveHamiltonian;
use crate::linalg::{lanczos_ground_state, rayleigh, random_unit_vector, LanczosOptions, LinearOperator};
use crate::model::{dispersion, Grid, GridWavefunction, ModelParams};
use crate::spectral::{localization_metrics, LocalizationMetrics};

/// Fraction of the box volume below which a participation ratio counts as
/// localized.
pub const LOCALIZED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct FiberOperator {
    p: Vec<f64>,
    edge: bool,
    inner: EffectiveHamiltonian,
}

impl FiberOperator {
    pub fn total_momentum(&self) -> &[f64] {
        &self.p
    }

    /// True when a component of `P` sits at the Nyquist momentum.
    pub fn is_edge_sample(&self) -> bool {
        self.edge
    }

    pub fn grid(&self) -> &Grid {
        self.inner.grid()
    }

    pub fn symbol(&self) -> &[f64] {
        self.inner.kinetic_symbol()
    }

    pub fn potential(&self) -> &[f64] {
        self.inner.potential()
    }

    pub fn as_hamiltonian(&self) -> &EffectiveHamiltonian {
        &self.inner
    }
}

impl LinearOperator for FiberOperator {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.inner.apply(x, y)
    }

    fn is_real(&self) -> bool {
        self.p.iter().all(|v| *v == 0.0)
    }
}

/// `k(P)` for the whole particle set.
pub fn build_fiber(
    p: &[f64],
    params: &ModelParams,
    grid_rel: &Grid,
    veff: Option<&VeffEvaluator>,
) -> Result<FiberOperator> {
    let all: Vec<usize> = (0..params.n_particles()).collect();
    build_cluster_fiber(p, params, grid_rel, veff, &all)
}

/// `k(P)` restricted to `cluster` (no external potential).
pub fn build_cluster_fiber(
    p: &[f64],
    params: &ModelParams,
    grid_rel: &Grid,
    veff: Option<&VeffEvaluator>,
    cluster: &[usize],
) -> Result<FiberOperator> {
    if cluster.is_empty() {
        return Err(LabError::EmptyCluster);
    }
    let d = params.d;
    if p.len() != d {
        return Err(LabError::DimensionMismatch {
            expected: d,
            actual: p.len(),
        });
    }
    let rel = cluster.len() - 1;
    if grid_rel.dims() != d * rel {
        return Err(LabError::DimensionMismatch {
            expected: d * rel,
            actual: grid_rel.dims(),
        });
    }
    let m_ref = params.masses[cluster[0]];
    let mut kinetic = vec![0.0; grid_rel.size()];
    let mut total = vec![0.0; d];
    grid_rel.for_each_momentum(|flat, q| {
        total.copy_from_slice(p);
        let mut s = 0.0;
        for (b, &j) in cluster.iter().enumerate().skip(1) {
            let qb = &q[(b - 1) * d..b * d];
            let mut q2 = 0.0;
            for a in 0..d {
                total[a] -= qb[a];
                q2 += qb[a] * qb[a];
            }
            s += dispersion(q2, params.masses[j]);
        }
        let t2: f64 = total.iter().map(|v| v * v).sum();
        kinetic[flat] = dispersion(t2, m_ref) + s;
    });

    let mut potential = vec![0.0; grid_rel.size()];
    if let Some(ev) = veff {
        let a2 = ev.alpha() * ev.alpha();
        if a2 != 0.0 && rel > 0 {
            let tables = ev.tables();
            let mut diff = vec![0.0; d];
            grid_rel.for_each_position(|flat, y| {
                let mut acc = 0.0;
                for b in 1..=rel {
                    let yb = &y[(b - 1) * d..b * d];
                    for a in 0..d {
                        diff[a] = grid_rel.minimum_image(-yb[a]);
                    }
                    acc += tables.value(cluster[0], cluster[b], &diff);
                    for c in (b + 1)..=rel {
                        let yc = &y[(c - 1) * d..c * d];
                        for a in 0..d {
                            diff[a] = grid_rel.minimum_image(yb[a] - yc[a]);
                        }
                        acc += tables.value(cluster[b], cluster[c], &diff);
                    }
                }
                potential[flat] = a2 * acc;
            });
        }
    }

    let nyq = grid_rel.nyquist();
    let edge = rel > 0 && p.iter().any(|v| (v.abs() - nyq).abs() <= 1e-12 * nyq);
    Ok(FiberOperator {
        p: p.to_vec(),
        edge,
        inner: EffectiveHamiltonian::from_parts(grid_rel, kinetic, potential)?,
    })
}

/// Nine equispaced samples along the first axis from 0 to half the Nyquist
/// momentum.
pub fn default_p_samples(grid_rel: &Grid, d: usize) -> Vec<Vec<f64>> {
    let top = 0.5 * grid_rel.nyquist();
    (0..9)
        .map(|i| {
            let mut p = vec![0.0; d];
            p[0] = top * i as f64 / 8.0;
            p
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionSample {
    pub p: Vec<f64>,
    pub energy: Option<f64>,
    pub residual: Option<f64>,
    pub edge: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionCurve {
    pub samples: Vec<DispersionSample>,
    /// Largest `|E(P) − E(Q)| / |P − Q|` over adjacent solved samples.
    pub modulus: Option<f64>,
    /// `E(0) ≤ E(P) + 2·tol` for every solved sample.
    pub minimum_at_zero: bool,
    pub tol: f64,
}

impl DispersionCurve {
    pub fn energies(&self) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.energy).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p_abs,energy,residual,edge\n");
        for s in &self.samples {
            let pa = s.p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let e = s.energy.map(|v| format!("{v:.12e}")).unwrap_or_default();
            let r = s.residual.map(|v| format!("{v:.3e}")).unwrap_or_default();
            out.push_str(&format!("{pa:.12e},{e},{r},{}\n", s.edge));
        }
        out
    }
}

pub fn dispersion_scan(
    p_samples: &[Vec<f64>],
    params: &ModelParams,
    grid_rel: &Grid,
    veff: Option<&VeffEvaluator>,
    opts: &LanczosOptions,
) -> Result<DispersionCurve> {
    let samples: Vec<DispersionSample> = p_samples
        .par_iter()
        .map(|p| {
            let op = match build_fiber(p, params, grid_rel, veff) {
                Ok(op) => op,
                Err(e) => {
                    return DispersionSample {
                        p: p.clone(),
                        energy: None,
                        residual: None,
                        edge: false,
                        error: Some(e.to_string()),
                    }
                }
            };
            let edge = op.is_edge_sample();
            match lanczos_ground_state(&op, opts, None) {
                Ok(r) => DispersionSample {
                    p: p.clone(),
                    energy: Some(r.eigenvalue),
                    residual: Some(r.residual),
                    edge,
                    error: None,
                },
                Err(e) => DispersionSample {
                    p: p.clone(),
                    energy: None,
                    residual: None,
                    edge,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let tol_abs = |e: f64| opts.tol * (e.abs() + 1.0);
    let e0 = samples
        .iter()
        .find(|s| s.p.iter().all(|v| *v == 0.0))
        .and_then(|s| s.energy);
    let minimum_at_zero = match e0 {
        Some(e0) => samples
            .iter()
            .filter_map(|s| s.energy)
            .all(|e| e0 <= e + 2.0 * tol_abs(e)),
        None => false,
    };
    let mut modulus: Option<f64> = None;
    for w in samples.windows(2) {
        if let (Some(a), Some(b)) = (w[0].energy, w[1].energy) {
            let dp = w[0]
                .p
                .iter()
                .zip(&w[1].p)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if dp > 0.0 {
                let slope = (a - b).abs() / dp;
                modulus = Some(modulus.map_or(slope, |m: f64| m.max(slope)));
            }
        }
    }
    Ok(DispersionCurve {
        samples,
        modulus,
        minimum_at_zero,
        tol: opts.tol,
    })
}

#[derive(Debug, Clone)]
pub struct FiberGroundState {
    pub state: GridWavefunction,
    pub energy: f64,
    pub residual: f64,
    pub metrics: LocalizationMetrics,
    pub localized: bool,
}

/// Normalized ground state `u_α` of `k(0)` at coupling `alpha`.
pub fn fiber_ground_state(
    alpha: f64,
    params: &ModelParams,
    grid_rel: &Grid,
    veff: &VeffEvaluator,
    opts: &LanczosOptions,
) -> Result<FiberGroundState> {
    let params = params.with_alpha(alpha);
    let ev = crate::effpot::veff_assemble(veff.tables().clone(), alpha, params.d);
    let op = build_fiber(&vec![0.0; params.d], &params, grid_rel, Some(&ev))?;
    let r = lanczos_ground_state(&op, opts, None)?;
    let scale = 1.0 / grid_rel.cell_volume().sqrt();
    let mut amps = r.eigenvector;
    amps.iter_mut().for_each(|v| *v *= scale);
    let state = GridWavefunction::new(grid_rel.clone(), amps)?;
    let metrics = localization_metrics(&state, &[]);
    let localized = metrics.participation_ratio < LOCALIZED_FRACTION * grid_rel.volume();
    Ok(FiberGroundState {
        state,
        energy: r.eigenvalue,
        residual: r.residual,
        metrics,
        localized,
    })
}

/// Rayleigh-quotient comparison of the transformed translation-invariant
/// operator `Ω_1(p_1 − Σ p_j) + Σ Ω_j(p_j) + V_eff` against the dominating
/// `|p_1| + k(0)` on `(x_1, y_2, …, y_N)` coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominationCheck {
    pub samples: usize,
    /// Largest `q_transformed − q_dominating` observed.
    pub max_excess: f64,
    pub holds: bool,
}

pub fn check_domination(
    params: &ModelParams,
    grid_full: &Grid,
    veff: Option<&VeffEvaluator>,
    n_states: usize,
    seed: u64,
) -> Result<DominationCheck> {
    let d = params.d;
    let n = params.n_particles();
    if grid_full.dims() != d * n {
        return Err(LabError::DimensionMismatch {
            expected: d * n,
            actual: grid_full.dims(),
        });
    }
    let grid_rel = grid_full.with_dims(d * (n - 1));
    let rel = build_fiber(&vec![0.0; d], params, &grid_rel, veff)?;
    let m1 = params.masses[0];
    let mut transformed = vec![0.0; grid_full.size()];
    let mut dominating = vec![0.0; grid_full.size()];
    let mut t = vec![0.0; d];
    grid_full.for_each_momentum(|flat, k| {
        let p1 = &k[..d];
        t.copy_from_slice(p1);
        let mut s = 0.0;
        let mut tq = vec![0.0; d];
        for j in 1..n {
            let q = &k[j * d..(j + 1) * d];
            let mut q2 = 0.0;
            for a in 0..d {
                t[a] -= q[a];
                tq[a] -= q[a];
                q2 += q[a] * q[a];
            }
            s += dispersion(q2, params.masses[j]);
        }
        let t2: f64 = t.iter().map(|v| v * v).sum();
        let tq2: f64 = tq.iter().map(|v| v * v).sum();
        let p_abs = p1.iter().map(|v| v * v).sum::<f64>().sqrt();
        transformed[flat] = dispersion(t2, m1) + s;
        dominating[flat] = p_abs + dispersion(tq2, m1) + s;
    });
    // V_eff depends on the relative coordinates only: broadcast over x_1.
    let rel_pot = rel.potential();
    let block = grid_rel.size();
    let potential: Vec<f64> = (0..grid_full.size()).map(|i| rel_pot[i % block]).collect();
    let a = EffectiveHamiltonian::from_parts(grid_full, transformed, potential.clone())?;
    let b = EffectiveHamiltonian::from_parts(grid_full, dominating, potential)?;
    let mut max_excess = f64::NEG_INFINITY;
    for s in 0..n_states as u64 {
        let x = random_unit_vector(grid_full.size(), seed.wrapping_add(s));
        let qa = rayleigh(&a, &x);
        let qb = rayleigh(&b, &x);
        max_excess = max_excess.max(qa - qb);
    }
    Ok(DominationCheck {
        samples: n_states,
        max_excess,
        holds: max_excess <= 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effpot::{potential_grid, veff_assemble, PairTables};
    use crate::model::{make_grid, CutoffProfile, ExternalPotential};

    fn free_pair() -> ModelParams {
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        ModelParams::identical(1, 2, 1.0, 0.0, 1.0, p, ExternalPotential::Zero).unwrap()
    }

    /// Scalar minimization of `Ω(P − q) + Ω(q)` over a fine `q` grid.
    fn pair_min_oracle(p: f64, m1: f64, m2: f64) -> f64 {
        (0..=200_000)
            .map(|i| -10.0 + 20.0 * i as f64 / 200_000.0)
            .map(|q| dispersion((p - q) * (p - q), m1) + dispersion(q * q, m2))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn free_symbol_minimum_at_zero_momentum() {
        let g = make_grid(1, 64, 20.0).unwrap();
        let op = build_fiber(&[0.0], &free_pair(), &g, None).unwrap();
        let min = op.symbol().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, 0.0);
        assert_eq!(op.symbol()[0], 0.0);
    }

    #[test]
    fn free_symbol_minimum_matches_scalar_oracle() {
        let g = make_grid(1, 512, 60.0).unwrap();
        let op = build_fiber(&[3.0], &free_pair(), &g, None).unwrap();
        let min = op.symbol().iter().cloned().fold(f64::INFINITY, f64::min);
        let oracle = pair_min_oracle(3.0, 1.0, 1.0);
        assert!((oracle - (13f64.sqrt() - 2.0)).abs() < 1e-8);
        assert!((min - oracle).abs() < 5e-3 * oracle);
    }

    #[test]
    fn nyquist_sample_is_flagged() {
        let g = make_grid(1, 16, 8.0).unwrap();
        let op = build_fiber(&[g.nyquist()], &free_pair(), &g, None).unwrap();
        assert!(op.is_edge_sample());
        assert!(!build_fiber(&[0.5], &free_pair(), &g, None).unwrap().is_edge_sample());
    }

    #[test]
    fn single_sample_has_no_modulus() {
        let g = make_grid(1, 64, 20.0).unwrap();
        let c = dispersion_scan(&[vec![0.0]], &free_pair(), &g, None, &LanczosOptions::default()).unwrap();
        assert_eq!(c.samples.len(), 1);
        assert!(c.modulus.is_none());
        assert!(c.minimum_at_zero);
    }

    #[test]
    fn domination_holds_on_random_states() {
        let params = free_pair().with_alpha(2.0);
        let g = make_grid(2, 32, 16.0).unwrap();
        let pg = potential_grid(&g, 1, 16).unwrap();
        let ev = veff_assemble(PairTables::compute(&params, &pg).unwrap(), 2.0, 1);
        let c = check_domination(&params, &g, Some(&ev), 20, 3).unwrap();
        assert!(c.holds, "excess {}", c.max_excess);
    }

    #[test]
    fn zero_coupling_ground_state_is_delocalized() {
        let params = free_pair();
        let g = make_grid(1, 128, 40.0).unwrap();
        let pg = potential_grid(&g, 1, 8).unwrap();
        let ev = veff_assemble(PairTables::compute(&params, &pg).unwrap(), 0.0, 1);
        let gs = fiber_ground_state(0.0, &params, &g, &ev, &LanczosOptions::default()).unwrap();
        assert!(gs.energy.abs() < 1e-10);
        assert!(!gs.localized);
        assert!((gs.metrics.participation_ratio - g.volume()).abs() < 1e-6 * g.volume());
    }
}
