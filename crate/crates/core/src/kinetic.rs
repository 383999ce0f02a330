//! Relativistic kinetic multipliers and the effective particle Hamiltonian
//! `h_eff = Σ_j (Ω_j(p_j) + V(x_j)) + V_eff` as a matrix-free operator.
//!
//! Configuration grids are `d·|β|`-dimensional; particle `β[b]` owns axes
//! `b·d .. (b+1)·d`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::effpot::VeffEvaluator;
use crate::error::{LabError, Result};
use crate::fourier::GridFft;
use crate::linalg::LinearOperator;
use crate::model::{dispersion, ExternalPotential, Grid, GridWavefunction, ModelParams};

/// Minimum ratio of box length to potential width before a warning.
pub const BOX_WIDTH_RATIO: f64 = 8.0;

/// `Ω(p) = √(p² + m²) − m` acting on one particle's axis block.
#[derive(Debug, Clone)]
pub struct KineticOperator {
    mass: f64,
    block: usize,
    d: usize,
    grid: Grid,
    symbol: Vec<f64>,
    fft: GridFft,
}

impl KineticOperator {
    pub fn new(grid: &Grid, d: usize, block: usize, mass: f64) -> Result<Self> {
        if d == 0 || (block + 1) * d > grid.dims() {
            return Err(LabError::DimensionMismatch {
                expected: (block + 1) * d,
                actual: grid.dims(),
            });
        }
        let symbol = block_symbol(grid, d, block, mass);
        Ok(Self {
            mass,
            block,
            d,
            grid: grid.clone(),
            symbol,
            fft: GridFft::new(grid),
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Symbol per flat momentum index.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }
}

/// `Ω(k_block)` over every momentum point of `grid`.
pub fn block_symbol(grid: &Grid, d: usize, block: usize, mass: f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.size()];
    grid.for_each_momentum(|flat, k| {
        let k2: f64 = k[block * d..(block + 1) * d].iter().map(|x| x * x).sum();
        out[flat] = dispersion(k2, mass);
    });
    out
}

fn apply_multiplier(fft: &GridFft, symbol: &[f64], data: &mut [Complex64]) {
    fft.forward(data);
    data.par_iter_mut().zip(symbol.par_iter()).for_each(|(v, s)| *v *= *s);
    fft.inverse(data);
}

pub fn apply_kinetic(op: &KineticOperator, psi: &GridWavefunction) -> Result<GridWavefunction> {
    if psi.grid() != &op.grid {
        return Err(LabError::DimensionMismatch {
            expected: op.grid.size(),
            actual: psi.grid().size(),
        });
    }
    let mut data = psi.amplitudes().to_vec();
    apply_multiplier(&op.fft, &op.symbol, &mut data);
    GridWavefunction::new(op.grid.clone(), data)
}

/// `h_eff^V(β)` or `h_eff^0(β)` on a configuration grid.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    grid: Grid,
    fft: GridFft,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    cluster: Vec<usize>,
    warnings: Vec<String>,
}

impl EffectiveHamiltonian {
    /// Cluster Hamiltonian for particles `cluster` (indices into `params`),
    /// with the external potential when `external` is set and the pair terms
    /// of `veff` restricted to the cluster.
    pub fn build(
        params: &ModelParams,
        grid: &Grid,
        veff: Option<&VeffEvaluator>,
        cluster: &[usize],
        external: bool,
    ) -> Result<Self> {
        if cluster.is_empty() {
            return Err(LabError::EmptyCluster);
        }
        let d = params.d;
        if grid.dims() != d * cluster.len() {
            return Err(LabError::DimensionMismatch {
                expected: d * cluster.len(),
                actual: grid.dims(),
            });
        }
        if let Some(&bad) = cluster.iter().find(|&&j| j >= params.n_particles()) {
            return Err(LabError::InvalidParameter {
                name: "cluster",
                reason: format!("particle index {bad} out of range"),
            });
        }
        let mut kinetic = vec![0.0; grid.size()];
        for (b, &j) in cluster.iter().enumerate() {
            let s = block_symbol(grid, d, b, params.masses[j]);
            kinetic.iter_mut().zip(&s).for_each(|(k, v)| *k += v);
        }
        let mut potential = match veff {
            Some(ev) => ev.on_grid(grid, cluster),
            None => vec![0.0; grid.size()],
        };
        if external {
            add_external(&params.potential, grid, d, cluster.len(), &mut potential);
        }
        let mut warnings = Vec::new();
        if external {
            let w = params.potential.width();
            if w > 0.0 && grid.length() < BOX_WIDTH_RATIO * w {
                warnings.push(format!(
                    "box length {} is below {BOX_WIDTH_RATIO}x the potential width {w}",
                    grid.length()
                ));
            }
        }
        if let (Some(ev), true) = (veff, cluster.len() > 1) {
            for t in ev.tables().tables() {
                let edge = t.value_at(&vec![0.5 * grid.length() - grid.spacing(); d]).abs();
                if edge > 0.05 * t.w0().abs() {
                    warnings.push(format!(
                        "pair potential {:?} has not decayed at the box edge ({edge:.3e} vs |W(0)| = {:.3e})",
                        t.pair(),
                        t.w0().abs()
                    ));
                    break;
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            fft: GridFft::new(grid),
            kinetic,
            potential,
            cluster: cluster.to_vec(),
            warnings,
        })
    }

    /// Operator `Σ_b Ω(k_b) + U(x)` from explicit tables.
    pub fn from_parts(grid: &Grid, kinetic: Vec<f64>, potential: Vec<f64>) -> Result<Self> {
        for len in [kinetic.len(), potential.len()] {
            if len != grid.size() {
                return Err(LabError::DimensionMismatch {
                    expected: grid.size(),
                    actual: len,
                });
            }
        }
        Ok(Self {
            grid: grid.clone(),
            fft: GridFft::new(grid),
            kinetic,
            potential,
            cluster: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cluster(&self) -> &[usize] {
        &self.cluster
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Total kinetic symbol per flat momentum index.
    pub fn kinetic_symbol(&self) -> &[f64] {
        &self.kinetic
    }

    /// Multiplicative potential per flat position index.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn potential_min(&self) -> f64 {
        self.potential.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn fft(&self) -> &GridFft {
        &self.fft
    }

    /// `x ← s(k) x` for a symbol `s` on this grid's momentum lattice.
    pub fn apply_symbol(&self, symbol: &[f64], x: &mut [Complex64]) {
        apply_multiplier(&self.fft, symbol, x);
    }

    /// `y ← (Σ Ω_j) x`.
    pub fn apply_kinetic_sum(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.copy_from_slice(x);
        apply_multiplier(&self.fft, &self.kinetic, y);
    }
}

/// Adds `Σ_b V(x_b)` to `out`.
pub fn add_external(v: &ExternalPotential, grid: &Grid, d: usize, particles: usize, out: &mut [f64]) {
    if matches!(v, ExternalPotential::Zero) {
        return;
    }
    grid.for_each_position(|flat, x| {
        let mut acc = 0.0;
        for b in 0..particles {
            acc += v.value(&x[b * d..(b + 1) * d]);
        }
        out[flat] += acc;
    });
}

impl LinearOperator for EffectiveHamiltonian {
    fn dim(&self) -> usize {
        self.grid.size()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_kinetic_sum(x, y);
        y.par_iter_mut()
            .zip(x.par_iter().zip(self.potential.par_iter()))
            .for_each(|(yi, (xi, u))| *yi += xi * u);
    }

    fn is_real(&self) -> bool {
        true
    }
}

pub fn apply_heff(h: &EffectiveHamiltonian, psi: &GridWavefunction) -> Result<GridWavefunction> {
    if psi.grid() != &h.grid {
        return Err(LabError::DimensionMismatch {
            expected: h.grid.size(),
            actual: psi.grid().size(),
        });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); h.dim()];
    h.apply(psi.amplitudes(), &mut out);
    GridWavefunction::new(h.grid.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effpot::{potential_grid, veff_assemble, PairTables};
    use crate::linalg::{dot, random_unit_vector};
    use crate::model::{make_grid, CutoffProfile};
    use std::f64::consts::PI;

    fn plane_wave(grid: &Grid, k: f64) -> GridWavefunction {
        GridWavefunction::from_fn(grid.clone(), |x| Complex64::from_polar(1.0, k * x[0]))
    }

    #[test]
    fn constant_mode_is_annihilated() {
        let g = make_grid(1, 32, 10.0).unwrap();
        let op = KineticOperator::new(&g, 1, 0, 1.0).unwrap();
        let psi = GridWavefunction::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let out = apply_kinetic(&op, &psi).unwrap();
        assert!(out.amplitudes().iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn plane_wave_eigenvalues() {
        let g = make_grid(1, 64, 2.0 * PI).unwrap();
        let psi = plane_wave(&g, 4.0);
        let op = KineticOperator::new(&g, 1, 0, 3.0).unwrap();
        let out = apply_kinetic(&op, &psi).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - 2.0 * b).norm() < 1e-12);
        }
        let op = KineticOperator::new(&g, 1, 0, 0.0).unwrap();
        let out = apply_kinetic(&op, &psi).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - 4.0 * b).norm() < 1e-12);
        }
    }

    #[test]
    fn symbol_properties() {
        let g = make_grid(2, 16, 7.0).unwrap();
        let s = block_symbol(&g, 1, 1, 1.3);
        assert!(s.iter().all(|v| *v >= 0.0));
        assert_eq!(s[0], 0.0);
        let massless = block_symbol(&g, 2, 0, 1e-6);
        let mut worst = 0.0f64;
        g.for_each_momentum(|flat, k| {
            let kk = (k[0] * k[0] + k[1] * k[1]).sqrt();
            worst = worst.max((massless[flat] - kk).abs());
        });
        assert!(worst <= 1e-6);
    }

    #[test]
    fn subadditivity_over_grid_momentum_pairs() {
        let g = make_grid(1, 64, 20.0).unwrap();
        let ks = g.axis_momenta();
        let m = 0.7;
        for &a in &ks {
            for &b in &ks {
                let lhs = dispersion((a + b) * (a + b), m);
                let rhs = a.abs() + dispersion(b * b, m);
                assert!(lhs <= rhs + 1e-12);
            }
        }
    }

    #[test]
    fn kinetic_commutes_with_translations() {
        let g = make_grid(1, 64, 12.0).unwrap();
        let op = KineticOperator::new(&g, 1, 0, 1.0).unwrap();
        let psi = GridWavefunction::from_fn(g.clone(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.3 * x[0].sin()));
        let shift = |w: &GridWavefunction| {
            let a = w.amplitudes();
            let n = a.len();
            GridWavefunction::new(g.clone(), (0..n).map(|i| a[(i + n - 5) % n]).collect()).unwrap()
        };
        let lhs = apply_kinetic(&op, &shift(&psi)).unwrap();
        let rhs = shift(&apply_kinetic(&op, &psi).unwrap());
        for (a, b) in lhs.amplitudes().iter().zip(rhs.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    fn two_body(alpha: f64, v0: f64) -> (ModelParams, Grid, EffectiveHamiltonian) {
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let v = ExternalPotential::gaussian_well(v0, 1.0).unwrap();
        let params = ModelParams::identical(1, 2, 1.0, alpha, 1.0, p, v).unwrap();
        let g = make_grid(2, 32, 16.0).unwrap();
        let pg = potential_grid(&g, 1, 16).unwrap();
        let ev = veff_assemble(PairTables::compute(&params, &pg).unwrap(), alpha, 1);
        let h = EffectiveHamiltonian::build(&params, &g, Some(&ev), &[0, 1], true).unwrap();
        (params, g, h)
    }

    #[test]
    fn heff_is_hermitian() {
        let (_, _, h) = two_body(2.0, 0.4);
        let n = h.dim();
        for s in 0..3u64 {
            let mut u = random_unit_vector(n, s);
            let v = random_unit_vector(n, s + 100);
            u.iter_mut().enumerate().for_each(|(i, z)| z.im = (i as f64 * 0.1).sin());
            let mut hu = vec![Complex64::new(0.0, 0.0); n];
            let mut hv = vec![Complex64::new(0.0, 0.0); n];
            h.apply(&u, &mut hu);
            h.apply(&v, &mut hv);
            assert!((dot(&u, &hv) - dot(&v, &hu).conj()).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_coupling_zero_potential_is_kinetic_sum() {
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let params = ModelParams::identical(1, 2, 1.0, 0.0, 1.0, p, ExternalPotential::Zero).unwrap();
        let g = make_grid(2, 16, 8.0).unwrap();
        let h = EffectiveHamiltonian::build(&params, &g, None, &[0, 1], true).unwrap();
        let psi = GridWavefunction::from_fn(g.clone(), |x| Complex64::new((-(x[0] * x[0]) - 0.5 * x[1] * x[1]).exp(), 0.0));
        let out = apply_heff(&h, &psi).unwrap();
        let k0 = apply_kinetic(&KineticOperator::new(&g, 1, 0, 1.0).unwrap(), &psi).unwrap();
        let k1 = apply_kinetic(&KineticOperator::new(&g, 1, 1, 1.0).unwrap(), &psi).unwrap();
        for i in 0..g.size() {
            let want = k0.amplitudes()[i] + k1.amplitudes()[i];
            assert!((out.amplitudes()[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn rayleigh_quotient_above_potential_minimum() {
        let (_, g, h) = two_body(3.0, 0.8);
        let floor = h.potential_min();
        for s in 0..10u64 {
            let psi = GridWavefunction::new(g.clone(), random_unit_vector(g.size(), s)).unwrap();
            let hpsi = apply_heff(&h, &psi).unwrap();
            let q = psi.inner(&hpsi).re / psi.inner(&psi).re;
            assert!(q >= floor - 1e-12);
        }
    }

    #[test]
    fn empty_cluster_rejected() {
        let (params, g, _) = two_body(1.0, 0.1);
        assert!(matches!(
            EffectiveHamiltonian::build(&params, &g, None, &[], true),
            Err(LabError::EmptyCluster)
        ));
    }

    #[test]
    fn small_box_warns() {
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let v = ExternalPotential::gaussian_well(1.0, 2.0).unwrap();
        let params = ModelParams::identical(1, 1, 1.0, 0.0, 1.0, p, v).unwrap();
        let g = make_grid(1, 32, 10.0).unwrap();
        let h = EffectiveHamiltonian::build(&params, &g, None, &[0], true).unwrap();
        assert_eq!(h.warnings().len(), 1);
    }
}
