//! Effective pair potentials `W_ij(x) = −∫ λ̂_i(−k) λ̂_j(k) ω(k)^{-1} e^{−ik·x} dk`,
//! the diagonal self-energy `E_diag = (α²/2) Σ_j ‖λ̂_j/√ω‖²`, and the
//! assembled `V_eff = α² Σ_{i<j} W_ij(x_i − x_j)`.
//!
//! Tables live on a dedicated `d`-dimensional potential grid. Choosing it as
//! an `r`-fold enlargement of a configuration box (same spacing, `r` times
//! the length) keeps configuration-grid differences on table nodes while the
//! momentum spacing `2π/(rL)` resolves the infrared floor of the profile.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fourier::GridFft;
use crate::model::{make_grid, validate_profile, CutoffProfile, Grid, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPotentialTable {
    grid: Grid,
    values: Vec<f64>,
    w0: f64,
    pair: (usize, usize),
}

impl PairPotentialTable {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `W(0)`.
    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest `|W|` on the outermost shell of the table (`|x_a| = L/2` for
    /// some axis).
    pub fn edge_max(&self) -> f64 {
        let mut idx = vec![0usize; self.grid.dims()];
        let mut m = 0.0f64;
        for (flat, v) in self.values.iter().enumerate() {
            self.grid.unflatten(flat, &mut idx);
            if idx.contains(&0) {
                m = m.max(v.abs());
            }
        }
        m
    }

    /// `W(x)` by multilinear interpolation; zero outside the table's half
    /// extent, where the periodic table no longer represents `W`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let d = self.grid.dims();
        debug_assert_eq!(x.len(), d);
        let half = 0.5 * self.grid.length();
        let h = self.grid.spacing();
        let n = self.grid.n();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        for a in 0..d {
            if x[a].abs() >= half {
                return 0.0;
            }
            let s = (x[a] + half) / h;
            let mut i = s.floor();
            let mut f = s - i;
            if f > 1.0 - 1e-9 {
                i += 1.0;
                f = 0.0;
            } else if f < 1e-9 {
                f = 0.0;
            }
            base[a] = i as usize;
            frac[a] = f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            let mut skip = false;
            for a in 0..d {
                let up = (corner >> a) & 1 == 1;
                let f = frac[a];
                if up {
                    if f == 0.0 {
                        skip = true;
                        break;
                    }
                    w *= f;
                } else {
                    w *= 1.0 - f;
                }
                let i = base[a] + up as usize;
                flat = flat * n + i.min(n - 1);
            }
            if !skip && w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }

    /// CSV with one column per position component and the value `W`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for a in 0..self.grid.dims() {
            let _ = write!(out, "x{a},");
        }
        out.push_str("W\n");
        let vals = &self.values;
        self.grid.for_each_position(|flat, x| {
            for c in x {
                let _ = write!(out, "{c:.12e},");
            }
            let _ = writeln!(out, "{:.12e}", vals[flat]);
        });
        out
    }
}

/// Integrand `λ̂_i(−k) λ̂_j(k) / ω(k)` with the `k = 0` convention: zero in
/// `d ≥ 2`, an infrared error in `d = 1` unless the numerator vanishes.
fn pair_integrand(pi: &CutoffProfile, pj: &CutoffProfile, k: &[f64], mk: &[f64]) -> Result<f64> {
    let num = pi.value(mk) * pj.value(k);
    let w = k.iter().map(|x| x * x).sum::<f64>().sqrt();
    if w == 0.0 {
        if num != 0.0 && k.len() == 1 {
            return Err(LabError::InfraredViolation(
                "λ̂_iλ̂_j/ω is not integrable at k = 0 in d = 1; set an infrared floor σ > 0".into(),
            ));
        }
        return Ok(0.0);
    }
    Ok(num / w)
}

/// Pair potential table for profiles `(i, j)` on `grid` (dimension `d`).
pub fn compute_pair_potential(
    profile_i: &CutoffProfile,
    profile_j: &CutoffProfile,
    grid: &Grid,
) -> Result<PairPotentialTable> {
    compute_pair_potential_indexed(profile_i, profile_j, grid, (0, 1))
}

pub fn compute_pair_potential_indexed(
    profile_i: &CutoffProfile,
    profile_j: &CutoffProfile,
    grid: &Grid,
    pair: (usize, usize),
) -> Result<PairPotentialTable> {
    profile_i.check()?;
    profile_j.check()?;
    let d = grid.dims();
    let mut data = vec![Complex64::new(0.0, 0.0); grid.size()];
    let mut idx = vec![0usize; d];
    let mut mk = vec![0.0; d];
    let mut err = None;
    grid.for_each_momentum(|flat, k| {
        if err.is_some() {
            return;
        }
        for a in 0..d {
            mk[a] = -k[a];
        }
        match pair_integrand(profile_i, profile_j, k, &mk) {
            Ok(f) => {
                grid.unflatten(flat, &mut idx);
                let parity: usize = idx.iter().sum();
                let sign = if parity.is_multiple_of(2) { 1.0 } else { -1.0 };
                data[flat] = Complex64::new(sign * f, 0.0);
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let scale: f64 = data.iter().map(|v| v.re.abs()).sum::<f64>() * grid.momentum_cell_volume();
    GridFft::new(grid).forward_unnormalized(&mut data);
    let dv = grid.momentum_cell_volume();
    let mut max_im = 0.0f64;
    let values: Vec<f64> = data
        .iter()
        .map(|v| {
            max_im = max_im.max((v.im * dv).abs());
            -v.re * dv
        })
        .collect();
    if max_im > 1e-12 * scale.max(1.0) {
        return Err(LabError::ImaginaryResidue(max_im));
    }
    let w0 = values[grid.origin_flat()];
    Ok(PairPotentialTable {
        grid: grid.clone(),
        values,
        w0,
        pair,
    })
}

/// Potential grid sharing the spacing of `config` with `oversample` times
/// its length in each of `d` dimensions.
pub fn potential_grid(config: &Grid, d: usize, oversample: usize) -> Result<Grid> {
    let r = oversample.max(1).next_power_of_two();
    make_grid(d, config.n() * r, config.length() * r as f64)
}

/// All `N(N−1)/2` pair tables of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTables {
    n_particles: usize,
    tables: Vec<PairPotentialTable>,
}

impl PairTables {
    pub fn compute(params: &ModelParams, grid: &Grid) -> Result<Self> {
        params.validate()?;
        if grid.dims() != params.d {
            return Err(LabError::DimensionMismatch {
                expected: params.d,
                actual: grid.dims(),
            });
        }
        let n = params.n_particles();
        let mut tables = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let pi = params.profile(i);
                let pj = params.profile(j);
                // identical profiles share one transform
                if let Some(t) = tables.iter().find(|t: &&PairPotentialTable| {
                    params.profile(t.pair.0) == pi && params.profile(t.pair.1) == pj
                }) {
                    let mut t = t.clone();
                    t.pair = (i, j);
                    tables.push(t);
                } else {
                    tables.push(compute_pair_potential_indexed(&pi, &pj, grid, (i, j))?);
                }
            }
        }
        Ok(Self {
            n_particles: n,
            tables,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn tables(&self) -> &[PairPotentialTable] {
        &self.tables
    }

    /// Table for the unordered pair `{i, j}`.
    pub fn get(&self, i: usize, j: usize) -> &PairPotentialTable {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.tables
            .iter()
            .find(|t| t.pair == (a, b))
            .expect("pair index out of range")
    }

    /// `W_ij(x)`; `W_ij(x) = W_ji(−x)` covers reversed order.
    pub fn value(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        if i < j {
            self.get(i, j).value_at(x)
        } else {
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            self.get(j, i).value_at(&neg)
        }
    }
}

/// `E_diag = (α²/2) Σ_j ‖λ̂_j/√ω‖²` as a momentum-grid Riemann sum.
pub fn compute_ediag(params: &ModelParams, grid: &Grid) -> Result<f64> {
    ediag_for(params, grid, &(0..params.n_particles()).collect::<Vec<_>>())
}

/// Cluster version: the sum runs over `members` only.
pub fn ediag_for(params: &ModelParams, grid: &Grid, members: &[usize]) -> Result<f64> {
    params.validate()?;
    if params.alpha == 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for &j in members {
        let report = validate_profile(&params.profile(j), grid)?;
        if !report.half_finite {
            return Err(LabError::InfraredViolation(format!(
                "‖λ̂_{j}/√ω‖ diverges under refinement (ratio {:.3})",
                report.refinement_ratios[2]
            )));
        }
        sum += report.half_norm * report.half_norm;
    }
    Ok(0.5 * params.alpha * params.alpha * sum)
}

/// `V_eff = α² Σ_{i<j} W_ij(x_i − x_j)`.
#[derive(Debug, Clone)]
pub struct VeffEvaluator {
    alpha: f64,
    d: usize,
    tables: PairTables,
}

pub fn veff_assemble(tables: PairTables, alpha: f64, d: usize) -> VeffEvaluator {
    VeffEvaluator { alpha, d, tables }
}

impl VeffEvaluator {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tables(&self) -> &PairTables {
        &self.tables
    }

    /// `V_eff` at a configuration `(x_1, …, x_N)` in `ℝ^{dN}` with plain
    /// (unwrapped) differences.
    pub fn at(&self, positions: &[f64]) -> f64 {
        let n = self.tables.n_particles();
        let d = self.d;
        debug_assert_eq!(positions.len(), n * d);
        let a2 = self.alpha * self.alpha;
        if a2 == 0.0 {
            return 0.0;
        }
        let mut diff = [0.0f64; 3];
        let mut acc = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                for a in 0..d {
                    diff[a] = positions[i * d + a] - positions[j * d + a];
                }
                acc += self.tables.get(i, j).value_at(&diff[..d]);
            }
        }
        a2 * acc
    }

    /// `α² Σ_{i<j ∈ cluster} W_ij` on a configuration grid of dimension
    /// `d·|cluster|` with minimum-image differences.
    pub fn on_grid(&self, grid: &Grid, cluster: &[usize]) -> Vec<f64> {
        let d = self.d;
        let a2 = self.alpha * self.alpha;
        let mut out = vec![0.0; grid.size()];
        if a2 == 0.0 || cluster.len() < 2 {
            return out;
        }
        let mut diff = vec![0.0; d];
        grid.for_each_position(|flat, x| {
            let mut acc = 0.0;
            for (ci, &i) in cluster.iter().enumerate() {
                for (cj, &j) in cluster.iter().enumerate().skip(ci + 1) {
                    for a in 0..d {
                        diff[a] = grid.minimum_image(x[ci * d + a] - x[cj * d + a]);
                    }
                    acc += self.tables.value(i, j, &diff);
                }
            }
            out[flat] = a2 * acc;
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExternalPotential, ProfileKind};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Direct quadrature `−(1/π) ∫_σ^Λ cos(kx)/k dk` by composite Simpson.
    fn w_d1_sharp_flat_oracle(x: f64, lambda: f64, sigma: f64) -> f64 {
        let m = 200_000;
        let h = (lambda - sigma) / m as f64;
        let f = |k: f64| (k * x).cos() / k;
        let mut s = f(sigma) + f(lambda);
        for i in 1..m {
            let k = sigma + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(k);
        }
        -(s * h / 3.0) / PI
    }

    #[test]
    fn d1_w0_matches_log_formula() {
        let g = make_grid(1, 16384, 16000.0 * PI).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let t = compute_pair_potential(&p, &p, &g).unwrap();
        assert_relative_eq!(t.w0(), -(10f64).ln() / PI, max_relative = 1e-3);
    }

    #[test]
    fn d1_table_matches_direct_quadrature_off_origin() {
        let g = make_grid(1, 16384, 16000.0 * PI).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let t = compute_pair_potential(&p, &p, &g).unwrap();
        let h = g.spacing();
        for m in [3usize, 10, 40] {
            let x = m as f64 * h;
            let oracle = w_d1_sharp_flat_oracle(x, 1.0, 0.1);
            assert!((t.value_at(&[x]) - oracle).abs() < 2e-3 * t.w0().abs(), "x={x}");
        }
    }

    #[test]
    fn zero_profile_gives_zero_table() {
        let g = make_grid(1, 256, 100.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let z = p.clone().scaled(0.0);
        let t = compute_pair_potential(&z, &p, &g).unwrap();
        assert!(t.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn d1_without_ir_floor_is_rejected() {
        let g = make_grid(1, 256, 100.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.0).unwrap();
        assert!(matches!(
            compute_pair_potential(&p, &p, &g),
            Err(LabError::InfraredViolation(_))
        ));
    }

    #[test]
    fn table_is_even_negative_at_origin_and_minimal_there() {
        let g = make_grid(1, 4096, 800.0).unwrap();
        for p in [
            CutoffProfile::sharp_flat(1.0, 0.1).unwrap(),
            CutoffProfile::new(ProfileKind::Gaussian, 1.5, 0.05).unwrap(),
        ] {
            let t = compute_pair_potential(&p, &p, &g).unwrap();
            assert!(t.w0() < 0.0);
            let v = t.values();
            let o = g.origin_index();
            for m in 1..o {
                assert!((v[o + m] - v[o - m]).abs() <= 1e-12 * t.w0().abs());
            }
            assert!(v.iter().all(|x| *x >= t.w0() - 1e-12 * t.w0().abs()));
        }
    }

    #[test]
    fn resolution_doubling_changes_w0_by_under_one_percent() {
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let a = compute_pair_potential(&p, &p, &make_grid(1, 4096, 1600.0).unwrap()).unwrap();
        let b = compute_pair_potential(&p, &p, &make_grid(1, 8192, 3200.0).unwrap()).unwrap();
        assert_relative_eq!(a.w0(), b.w0(), max_relative = 1e-2);
    }

    #[test]
    fn ediag_zero_coupling_and_alpha_squared_scaling() {
        let g = make_grid(1, 4096, 1600.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let params = ModelParams::identical(1, 2, 1.0, 0.0, 1.0, p, ExternalPotential::Zero).unwrap();
        assert_eq!(compute_ediag(&params, &g).unwrap(), 0.0);
        let e1 = compute_ediag(&params.with_alpha(1.0), &g).unwrap();
        let e2 = compute_ediag(&params.with_alpha(2.0), &g).unwrap();
        assert!(e1 > 0.0);
        assert_relative_eq!(e2, 4.0 * e1, max_relative = 1e-12);
    }

    #[test]
    fn veff_single_particle_is_zero_and_coincident_is_minimum() {
        let pg = make_grid(1, 2048, 400.0).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let one = ModelParams::identical(1, 1, 1.0, 2.0, 1.0, p.clone(), ExternalPotential::Zero).unwrap();
        let ev = veff_assemble(PairTables::compute(&one, &pg).unwrap(), 2.0, 1);
        assert_eq!(ev.at(&[0.3]), 0.0);

        let three = ModelParams::identical(1, 3, 1.0, 2.0, 1.0, p, ExternalPotential::Zero).unwrap();
        let tables = PairTables::compute(&three, &pg).unwrap();
        let w0 = tables.get(0, 1).w0();
        let ev = veff_assemble(tables, 2.0, 1);
        let coincident = ev.at(&[0.7, 0.7, 0.7]);
        assert_relative_eq!(coincident, 4.0 * 3.0 * w0, max_relative = 1e-12);
        assert!(ev.at(&[0.0, 1.0, -2.5]) >= coincident);
    }

    #[test]
    fn config_grid_offsets_hit_table_nodes() {
        let cfg = make_grid(2, 32, 16.0).unwrap();
        let pg = potential_grid(&cfg, 1, 8).unwrap();
        let p = CutoffProfile::sharp_flat(1.0, 0.1).unwrap();
        let params = ModelParams::identical(1, 2, 1.0, 1.0, 1.0, p, ExternalPotential::Zero).unwrap();
        let tables = PairTables::compute(&params, &pg).unwrap();
        let t = tables.get(0, 1).clone();
        let ev = veff_assemble(tables, 1.0, 1);
        let grid_vals = ev.on_grid(&cfg, &[0, 1]);
        // diagonal x1 = x2 carries W(0) exactly
        let o = cfg.origin_index();
        assert_eq!(grid_vals[o * 32 + o], t.w0());
        // offset of three cells equals the table node three cells out
        let node = t.values()[pg.origin_index() + 3];
        assert_eq!(grid_vals[(o + 3) * 32 + o], node);
    }
}
