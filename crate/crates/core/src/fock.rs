//! Full Hamiltonian `H^V = H_p + κ²H_f + κα Σ_j φ_j(x_j)` on a particle grid
//! tensored with a truncated Fock space over finitely many field modes.
//!
//! Mode normalization: `c_ij = √(Δk^d) λ̂_j(k_i)`, so that `Σ_i c_ij²` is the
//! grid Riemann sum of `|λ̂_j|²` and
//! `φ_j(x) = Σ_i 2^{−1/2} c_ij (a_i e^{ik_i·x} + a_i† e^{−ik_i·x})`.
//! Modes with `ω(k) ≤ σ` are decoupled.
//!
//! The finite mode set is itself a Nelson model with a discrete form factor.
//! Its effective quantities are the mode sums
//! `W_ij(y) = −Σ_m c_mi c_mj cos(k_m·y)/ω_m` and
//! `E_diag = (α²/2) Σ_j Σ_m c_mj²/ω_m`, which are what the certificate and
//! the κ trend compare against.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::kinetic::EffectiveHamiltonian;
use crate::linalg::{lanczos_ground_state, LanczosOptions, LinearOperator};
use crate::model::{Grid, ModelParams};

/// Largest `dim(particle grid)·dim(Fock)` accepted by [`build_coupled`].
pub const FOCK_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMode {
    pub k: Vec<f64>,
    pub omega: f64,
    /// `c_ij` for each particle `j`.
    pub couplings: Vec<f64>,
}

/// The `m` lowest-`|k|` coupled points of the single-particle momentum
/// lattice of `grid` (ties broken by lattice order), optionally preceded by
/// `k = 0`. Points whose couplings all vanish (for example `ω ≤ σ`) are
/// skipped. `grid` must have `params.d` axes.
pub fn select_modes(params: &ModelParams, grid: &Grid, m: usize, include_zero: bool) -> Result<Vec<FieldMode>> {
    if grid.dims() != params.d {
        return Err(LabError::DimensionMismatch {
            expected: params.d,
            actual: grid.dims(),
        });
    }
    let mut pts: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    grid.for_each_momentum(|flat, k| {
        let a = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        if a > 0.0 || include_zero {
            pts.push((a, flat, k.to_vec()));
        }
    });
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let w = grid.momentum_cell_volume().sqrt();
    let profiles: Vec<_> = (0..params.n_particles()).map(|j| params.profile(j)).collect();
    let mut out = Vec::with_capacity(m + 1);
    for (omega, _, k) in pts {
        let zero = omega == 0.0;
        let couplings: Vec<f64> = profiles
            .iter()
            .map(|p| if zero || omega <= params.ir_cutoff { 0.0 } else { w * p.value(&k) })
            .collect();
        if zero || couplings.iter().any(|c| *c != 0.0) {
            out.push(FieldMode { k, omega, couplings });
        }
        if out.len() == m + usize::from(include_zero) {
            return Ok(out);
        }
    }
    Err(invalid("modes", format!("grid has only {} coupled momentum points", out.len())))
}

// ---------------------------------------------------------------------------
// Fock space
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TruncatedFockSpace {
    n_modes: usize,
    n_max: usize,
    states: Vec<Vec<u16>>,
    /// `[mode][state]` index of the state with `n_mode + 1`, if inside the cutoff.
    raise: Vec<Vec<Option<usize>>>,
    /// `[mode][state]` index of the state with `n_mode − 1`, if `n_mode > 0`.
    lower: Vec<Vec<Option<usize>>>,
}

pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl TruncatedFockSpace {
    /// All occupation tuples with `Σ n_i ≤ n_max`, ordered by total
    /// occupation (vacuum first).
    pub fn new(n_modes: usize, n_max: usize) -> Self {
        let mut states: Vec<Vec<u16>> = vec![vec![0; n_modes]];
        let mut layer = states.clone();
        for _ in 0..n_max {
            let mut next = Vec::new();
            for s in &layer {
                // raise only at or after the last occupied mode: each tuple once
                let start = s.iter().rposition(|n| *n > 0).unwrap_or(0);
                for i in start..n_modes {
                    let mut t = s.clone();
                    t[i] += 1;
                    next.push(t);
                }
            }
            states.extend(next.iter().cloned());
            layer = next;
        }
        let index: std::collections::HashMap<&[u16], usize> =
            states.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
        let mut raise = vec![vec![None; states.len()]; n_modes];
        let mut lower = vec![vec![None; states.len()]; n_modes];
        for (b, s) in states.iter().enumerate() {
            for i in 0..n_modes {
                let mut t = s.clone();
                t[i] += 1;
                raise[i][b] = index.get(t.as_slice()).copied();
                if s[i] > 0 {
                    t[i] -= 2;
                    lower[i][b] = index.get(t.as_slice()).copied();
                }
            }
        }
        Self {
            n_modes,
            n_max,
            states,
            raise,
            lower,
        }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn state(&self, b: usize) -> &[u16] {
        &self.states[b]
    }

    pub fn vacuum(&self) -> usize {
        0
    }

    pub fn raise(&self, mode: usize, b: usize) -> Option<usize> {
        self.raise[mode][b]
    }

    pub fn lower(&self, mode: usize, b: usize) -> Option<usize> {
        self.lower[mode][b]
    }
}

// ---------------------------------------------------------------------------
// Coupled Hamiltonian
// ---------------------------------------------------------------------------

/// Matrix-free `H^V`; vectors are laid out `[Fock state][grid point]`.
pub struct CoupledHamiltonian {
    hp: EffectiveHamiltonian,
    fock: TruncatedFockSpace,
    modes: Vec<FieldMode>,
    /// `κ²Σ n_i ω_i` per Fock state.
    field_energy: Vec<f64>,
    /// `(κα/√2) Σ_j c_ij e^{ik_i·x_j}` per mode on the grid.
    coupling: Vec<Vec<Complex64>>,
    real: bool,
}

/// `H_p` (kinetic plus external potential, no pair terms) on `grid`.
fn particle_hamiltonian(params: &ModelParams, grid: &Grid) -> Result<EffectiveHamiltonian> {
    let all: Vec<usize> = (0..params.n_particles()).collect();
    EffectiveHamiltonian::build(params, grid, None, &all, true)
}

pub fn build_coupled(params: &ModelParams, grid: &Grid, modes: &[FieldMode], n_max: usize) -> Result<CoupledHamiltonian> {
    params.validate()?;
    let n = params.n_particles();
    let d = params.d;
    if let Some(m) = modes.iter().find(|m| m.k.len() != d || m.couplings.len() != n) {
        return Err(LabError::DimensionMismatch {
            expected: d,
            actual: m.k.len(),
        });
    }
    if modes.iter().any(|m| !(m.omega > 0.0) && m.couplings.iter().any(|c| *c != 0.0)) {
        return Err(invalid("modes", "coupled modes need a positive frequency"));
    }
    let fock_dim = binomial(modes.len() + n_max, n_max);
    let size = fock_dim.saturating_mul(grid.size());
    if size > FOCK_BUDGET {
        return Err(LabError::Budget {
            what: "coupled basis size",
            size,
            limit: FOCK_BUDGET,
        });
    }
    let hp = particle_hamiltonian(params, grid)?;
    let fock = TruncatedFockSpace::new(modes.len(), n_max);
    let k2 = params.kappa * params.kappa;
    let field_energy = (0..fock.dim())
        .map(|b| k2 * fock.state(b).iter().zip(modes).map(|(n, m)| *n as f64 * m.omega).sum::<f64>())
        .collect();
    let pref = params.kappa * params.alpha / std::f64::consts::SQRT_2;
    let coupling = modes
        .iter()
        .map(|m| {
            let mut a = vec![Complex64::new(0.0, 0.0); grid.size()];
            grid.for_each_position(|flat, x| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, c) in m.couplings.iter().enumerate() {
                    let phase: f64 = (0..d).map(|a| m.k[a] * x[j * d + a]).sum();
                    acc += Complex64::from_polar(*c, phase);
                }
                a[flat] = pref * acc;
            });
            a
        })
        .collect();
    let real = modes.iter().all(|m| m.k.iter().all(|v| *v == 0.0));
    Ok(CoupledHamiltonian {
        hp,
        fock,
        modes: modes.to_vec(),
        field_energy,
        coupling,
        real,
    })
}

impl CoupledHamiltonian {
    pub fn fock(&self) -> &TruncatedFockSpace {
        &self.fock
    }

    pub fn modes(&self) -> &[FieldMode] {
        &self.modes
    }

    pub fn particle_grid(&self) -> &Grid {
        self.hp.grid()
    }
}

impl LinearOperator for CoupledHamiltonian {
    fn dim(&self) -> usize {
        self.fock.dim() * self.hp.dim()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let g = self.hp.dim();
        y.par_chunks_mut(g).enumerate().for_each(|(b, yb)| {
            let xb = &x[b * g..(b + 1) * g];
            self.hp.apply(xb, yb);
            let e = self.field_energy[b];
            yb.iter_mut().zip(xb).for_each(|(yi, xi)| *yi += e * xi);
            let occ = self.fock.state(b);
            for (i, a) in self.coupling.iter().enumerate() {
                // (a_i x)_b = √(n_i + 1) x_{b + e_i}, weighted by A_i(x)
                if let Some(r) = self.fock.raise(i, b) {
                    let s = ((occ[i] + 1) as f64).sqrt();
                    let xr = &x[r * g..(r + 1) * g];
                    yb.iter_mut().zip(xr.iter().zip(a)).for_each(|(yi, (xi, ai))| *yi += s * ai * xi);
                }
                // (a_i† x)_b = √n_i x_{b − e_i}, weighted by conj A_i(x)
                if let Some(l) = self.fock.lower(i, b) {
                    let s = (occ[i] as f64).sqrt();
                    let xl = &x[l * g..(l + 1) * g];
                    yb.iter_mut().zip(xl.iter().zip(a)).for_each(|(yi, (xi, ai))| *yi += s * ai.conj() * xi);
                }
            }
        });
    }

    fn is_real(&self) -> bool {
        self.real
    }
}

// ---------------------------------------------------------------------------
// Mode-consistent effective quantities
// ---------------------------------------------------------------------------

/// `E_diag = (α²/2) Σ_j Σ_m c_mj²/ω_m` for the mode set.
pub fn mode_ediag(alpha: f64, modes: &[FieldMode]) -> f64 {
    0.5 * alpha
        * alpha
        * modes
            .iter()
            .filter(|m| m.omega > 0.0)
            .map(|m| m.couplings.iter().map(|c| c * c).sum::<f64>() / m.omega)
            .sum::<f64>()
}

/// `h_eff^V = H_p + α² Σ_{i<j} W_ij(x_i − x_j)` with the mode-sum `W`.
pub fn mode_effective_hamiltonian(params: &ModelParams, grid: &Grid, modes: &[FieldMode]) -> Result<EffectiveHamiltonian> {
    let hp = particle_hamiltonian(params, grid)?;
    let d = params.d;
    let n = params.n_particles();
    let a2 = params.alpha * params.alpha;
    let mut pot = hp.potential().to_vec();
    grid.for_each_position(|flat, x| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                for m in modes.iter().filter(|m| m.omega > 0.0) {
                    let phase: f64 = (0..d).map(|a| m.k[a] * (x[i * d + a] - x[j * d + a])).sum();
                    acc -= m.couplings[i] * m.couplings[j] * phase.cos() / m.omega;
                }
            }
        }
        pot[flat] += a2 * acc;
    });
    EffectiveHamiltonian::from_parts(grid, hp.kinetic_symbol().to_vec(), pot)
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub modes: usize,
    pub n_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RungResult {
    pub modes: usize,
    pub n_max: usize,
    pub dim: usize,
    pub energy: Option<f64>,
    pub residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub rungs: Vec<RungResult>,
    pub e_v: f64,
    pub e_diag: f64,
    /// `ℰ^V + E_diag`
    pub bound: f64,
    pub certified: bool,
    pub certified_rung: Option<usize>,
    /// Energies nonincreasing along the ladder within `1e−8`.
    pub monotone: bool,
}

fn check_nested(ladder: &[Truncation], pool: usize) -> Result<()> {
    if ladder.is_empty() {
        return Err(invalid("ladder", "truncation ladder is empty"));
    }
    if ladder.windows(2).any(|w| w[1].modes < w[0].modes || w[1].n_max < w[0].n_max) {
        return Err(invalid("ladder", "truncation ladder must be nested"));
    }
    if ladder.iter().any(|t| t.modes > pool) {
        return Err(invalid("ladder", format!("only {pool} modes available")));
    }
    Ok(())
}

/// Truncated ground energy (a variational upper bound for the mode model).
pub fn truncated_energy(
    params: &ModelParams,
    grid: &Grid,
    modes: &[FieldMode],
    n_max: usize,
    opts: &LanczosOptions,
) -> Result<(f64, f64, usize)> {
    let h = build_coupled(params, grid, modes, n_max)?;
    let r = lanczos_ground_state(&h, opts, None)?;
    Ok((r.eigenvalue, r.residual, h.dim()))
}

/// `ℰ^V` of the mode model on `grid`.
pub fn mode_effective_energy(params: &ModelParams, grid: &Grid, modes: &[FieldMode], opts: &LanczosOptions) -> Result<f64> {
    let h = mode_effective_hamiltonian(params, grid, modes)?;
    Ok(lanczos_ground_state(&h, opts, None)?.eigenvalue)
}

/// Runs the nested `ladder` (rung `r` uses the first `ladder[r].modes`
/// modes of `pool`). `ℰ^V` and `E_diag` use the largest rung's modes.
pub fn certify_energy_comparison(
    params: &ModelParams,
    grid: &Grid,
    pool: &[FieldMode],
    ladder: &[Truncation],
    opts: &LanczosOptions,
) -> Result<CertificateReport> {
    check_nested(ladder, pool.len())?;
    let top = &pool[..ladder.last().map(|t| t.modes).unwrap_or(0)];
    let e_v = mode_effective_energy(params, grid, top, opts)?;
    let e_diag = mode_ediag(params.alpha, top);
    let bound = e_v + e_diag;
    let rungs: Vec<RungResult> = ladder
        .par_iter()
        .map(|t| {
            let dim = binomial(t.modes + t.n_max, t.n_max) * grid.size();
            match truncated_energy(params, grid, &pool[..t.modes], t.n_max, opts) {
                Ok((e, r, _)) => RungResult {
                    modes: t.modes,
                    n_max: t.n_max,
                    dim,
                    energy: Some(e),
                    residual: Some(r),
                    error: None,
                },
                Err(err) => RungResult {
                    modes: t.modes,
                    n_max: t.n_max,
                    dim,
                    energy: None,
                    residual: None,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect();
    let energies: Vec<f64> = rungs.iter().filter_map(|r| r.energy).collect();
    let monotone = energies.windows(2).all(|w| w[1] <= w[0] + 1e-8);
    let certified_rung = rungs.iter().position(|r| r.energy.is_some_and(|e| e <= bound + 1e-9));
    Ok(CertificateReport {
        rungs,
        e_v,
        e_diag,
        bound,
        certified: certified_rung.is_some(),
        certified_rung,
        monotone,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaRow {
    pub kappa: f64,
    pub e_trunc: f64,
    /// `ℰ^V − E_diag`
    pub target: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaTrend {
    pub truncation: Truncation,
    pub rows: Vec<KappaRow>,
    /// Gap nonincreasing in `κ` within `1e−6`.
    pub nonincreasing: bool,
}

impl KappaTrend {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kappa,e_trunc,target,gap\n");
        for r in &self.rows {
            out.push_str(&format!("{:.6e},{:.12e},{:.12e},{:.12e}\n", r.kappa, r.e_trunc, r.target, r.gap));
        }
        out
    }
}

/// `|E_trunc(κ) − (ℰ^V − E_diag)|` over `kappas` at a fixed truncation.
pub fn scaling_limit_trend(
    params: &ModelParams,
    grid: &Grid,
    pool: &[FieldMode],
    kappas: &[f64],
    truncation: Truncation,
    opts: &LanczosOptions,
) -> Result<KappaTrend> {
    check_nested(&[truncation], pool.len())?;
    let modes = &pool[..truncation.modes];
    let target = mode_effective_energy(params, grid, modes, opts)? - mode_ediag(params.alpha, modes);
    let rows = kappas
        .par_iter()
        .map(|&kappa| {
            let p = params.with_kappa(kappa);
            let (e, _, _) = truncated_energy(&p, grid, modes, truncation.n_max, opts)?;
            Ok(KappaRow {
                kappa,
                e_trunc: e,
                target,
                gap: (e - target).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let nonincreasing = rows.windows(2).all(|w| w[1].gap <= w[0].gap + 1e-6);
    Ok(KappaTrend {
        truncation,
        rows,
        nonincreasing,
    })
}
