//! Relativistic Lévy process `X_t` with `𝔼 e^{iu·X_t} = e^{−t Σ_j (√(u_j² + m_j²) − m_j)}`,
//! realized as Brownian motion run on inverse-Gaussian subordinators, and the
//! Monte Carlo functionals built on it.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path
//! index), and per-path results are reduced in path order, so estimates are
//! bit-identical for any thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::model::{Grid, GridWavefunction};

/// Potential evaluated at a configuration in `ℝ^{dN}`.
pub type PathPotential<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-Gaussian variate with mean `mu` and shape `lambda`
/// (Michael–Schucany–Haas).
pub fn sample_inverse_gaussian(rng: &mut ChaCha8Rng, mu: f64, lambda: f64) -> f64 {
    let nu: f64 = rng.sample(StandardNormal);
    let y = nu * nu;
    let x = mu + mu * mu * y / (2.0 * lambda) - mu / (2.0 * lambda) * (4.0 * mu * lambda * y + mu * mu * y * y).sqrt();
    let u: f64 = rng.random();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// Subordinator increment over a time step `s`:
/// `𝔼 e^{−uT_s} = e^{−s(√(2u + m²) − m)}`, i.e. inverse Gaussian with mean
/// `s/m` and shape `s²`.
#[inline]
pub fn subordinator_increment(rng: &mut ChaCha8Rng, mass: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    sample_inverse_gaussian(rng, s / mass, s * s)
}

/// `T_t` for `n` independent paths.
pub fn sample_subordinator(mass: f64, t: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(mass > 0.0) {
        return Err(invalid("mass", "subordinator mass must be positive"));
    }
    if !(t >= 0.0) {
        return Err(invalid("t", "time must be nonnegative"));
    }
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| subordinator_increment(&mut path_rng(seed, i), mass, t))
        .collect())
}

/// Advances every particle by one step of length `dt`; returns the
/// subordinator increments through `sub`.
#[inline]
fn step(rng: &mut ChaCha8Rng, masses: &[f64], d: usize, dt: f64, x: &mut [f64], sub: &mut [f64]) {
    for (j, &m) in masses.iter().enumerate() {
        let tau = subordinator_increment(rng, m, dt);
        sub[j] = tau;
        let s = tau.sqrt();
        for a in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x[j * d + a] += s * z;
        }
    }
}

fn check_time_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.first() != Some(&0.0) {
        return Err(invalid("t_grid", "time grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("t_grid", "time grid must be strictly increasing"));
    }
    Ok(())
}

/// `K + 1` equispaced times on `[0, t]`.
pub fn uniform_time_grid(t: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|i| t * i as f64 / k as f64).collect()
}

/// Seeded ensemble of subordinator values and positions at the times of
/// `t_grid`, all paths started at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyPathBatch {
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub n_paths: usize,
    pub masses: Vec<f64>,
    pub d: usize,
    /// `[path][time][particle]`
    subordinator: Vec<f64>,
    /// `[path][time][particle·d + axis]`
    positions: Vec<f64>,
}

impl LevyPathBatch {
    fn n_times(&self) -> usize {
        self.t_grid.len()
    }

    pub fn subordinator(&self, path: usize, k: usize, particle: usize) -> f64 {
        let np = self.masses.len();
        self.subordinator[(path * self.n_times() + k) * np + particle]
    }

    pub fn position(&self, path: usize, k: usize) -> &[f64] {
        let w = self.masses.len() * self.d;
        let off = (path * self.n_times() + k) * w;
        &self.positions[off..off + w]
    }

    /// Raw paths as CSV, one row per path and time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,t");
        for j in 0..self.masses.len() {
            out.push_str(&format!(",T{j}"));
            for a in 0..self.d {
                out.push_str(&format!(",x{j}_{a}"));
            }
        }
        out.push('\n');
        for p in 0..self.n_paths {
            for (k, t) in self.t_grid.iter().enumerate() {
                out.push_str(&format!("{p},{t:.9e}"));
                let x = self.position(p, k);
                for j in 0..self.masses.len() {
                    out.push_str(&format!(",{:.12e}", self.subordinator(p, k, j)));
                    for a in 0..self.d {
                        out.push_str(&format!(",{:.12e}", x[j * self.d + a]));
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

pub fn sample_paths(masses: &[f64], d: usize, t_grid: &[f64], n: usize, seed: u64) -> Result<LevyPathBatch> {
    check_time_grid(t_grid)?;
    if masses.iter().any(|m| !(*m > 0.0)) {
        return Err(invalid("masses", "masses must be positive"));
    }
    let np = masses.len();
    let nt = t_grid.len();
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut sub = vec![0.0; nt * np];
            let mut pos = vec![0.0; nt * np * d];
            let mut x = vec![0.0; np * d];
            let mut inc = vec![0.0; np];
            for k in 1..nt {
                step(&mut rng, masses, d, t_grid[k] - t_grid[k - 1], &mut x, &mut inc);
                for j in 0..np {
                    sub[k * np + j] = sub[(k - 1) * np + j] + inc[j];
                }
                pos[k * np * d..(k + 1) * np * d].copy_from_slice(&x);
            }
            (sub, pos)
        })
        .collect();
    let mut subordinator = Vec::with_capacity(n * nt * np);
    let mut positions = Vec::with_capacity(n * nt * np * d);
    for (s, p) in per_path {
        subordinator.extend(s);
        positions.extend(p);
    }
    Ok(LevyPathBatch {
        seed,
        t_grid: t_grid.to_vec(),
        n_paths: n,
        masses: masses.to_vec(),
        d,
        subordinator,
        positions,
    })
}

// ---------------------------------------------------------------------------
// Probes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub label: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub z: f64,
}

impl ProbeResult {
    fn from_samples(label: String, samples: impl Iterator<Item = f64>, target: f64) -> Self {
        let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
        for v in samples {
            n += 1.0;
            s += v;
            s2 += v * v;
        }
        let mean = s / n;
        let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        let stderr = (var / n).sqrt();
        let z = if stderr > 0.0 {
            (mean - target) / stderr
        } else if mean == target {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            label,
            estimate: mean,
            stderr,
            target,
            z,
        }
    }
}

/// `√(u² + m²) − m`
pub fn levy_exponent(u: f64, m: f64) -> f64 {
    crate::model::dispersion(u * u, m)
}

/// Empirical `𝔼 e^{−uT}` against `e^{−t(√(2u + m²) − m)}`.
pub fn laplace_probe(samples: &[f64], u: f64, mass: f64, t: f64) -> ProbeResult {
    let target = (-t * ((2.0 * u + mass * mass).sqrt() - mass)).exp();
    ProbeResult::from_samples(
        format!("laplace m={mass} t={t} u={u}"),
        samples.iter().map(|s| (-u * s).exp()),
        target,
    )
}

/// `Re 𝔼 e^{iuX}` of one coordinate at time index `k` against the closed form.
pub fn characteristic_probe(batch: &LevyPathBatch, u: f64, particle: usize, axis: usize, k: usize) -> ProbeResult {
    let m = batch.masses[particle];
    let t = batch.t_grid[k];
    let target = (-t * levy_exponent(u, m)).exp();
    let idx = particle * batch.d + axis;
    ProbeResult::from_samples(
        format!("char m={m} t={t} u={u}"),
        (0..batch.n_paths).map(|p| (u * batch.position(p, k)[idx]).cos()),
        target,
    )
}

// ---------------------------------------------------------------------------
// Lévy density
// ---------------------------------------------------------------------------

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Lévy density `ν(x) = (m/2π)^{(d+1)/2} |x|^{−(d+1)/2} ∫_0^∞ ξ^{(d−1)/2} e^{−(ξ+1/ξ)m|x|/2} dξ`
/// of one particle, `d = x.len()`, by adaptive Simpson in `s = ln ξ`.
/// `tol` is the relative quadrature tolerance.
pub fn levy_density_with_tol(x: &[f64], mass: f64, tol: f64) -> Result<f64> {
    let d = x.len() as f64;
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r < 1e-8 {
        return Err(LabError::OriginSingularity(r));
    }
    if !(mass > 0.0) {
        return Err(invalid("mass", "mass must be positive"));
    }
    let mr = mass * r;
    let p = 0.5 * (d + 1.0);
    // log-integrand after factoring e^{−mr}: p·s − mr(cosh s − 1)
    let g = |s: f64| p * s - mr * (s.cosh() - 1.0);
    // peak at sinh(s*) = p/mr
    let s_star = (p / mr).asinh();
    let peak = g(s_star);
    let mut hi = s_star + 1.0;
    while g(hi) > peak - 60.0 {
        hi += 1.0;
    }
    let mut lo = s_star - 1.0;
    while g(lo) > peak - 60.0 {
        lo -= 1.0;
    }
    let f = |s: f64| (g(s) - peak).exp();
    // split at the peak so the adaptive rule sees both flanks
    let est = adaptive_simpson(&f, lo, s_star, tol) + adaptive_simpson(&f, s_star, hi, tol);
    let log_val = p * (mass / (2.0 * PI)).ln() - p * r.ln() + est.ln() + peak - mr;
    Ok(log_val.exp())
}

pub fn levy_density(x: &[f64], mass: f64) -> Result<f64> {
    levy_density_with_tol(x, mass, 1e-12)
}

// ---------------------------------------------------------------------------
// Exceedance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExceedanceEstimate {
    pub a: f64,
    pub probability: f64,
    pub stderr: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExceedanceLadder {
    pub t: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub steps: usize,
    pub estimates: Vec<ExceedanceEstimate>,
    /// Step counts tried while doubling.
    pub refinements: Vec<usize>,
}

fn exceedance_once(a_list: &[f64], t: f64, masses: &[f64], d: usize, n: usize, steps: usize, seed: u64) -> Vec<ExceedanceEstimate> {
    let dt = t / steps as f64;
    let w = masses.len() * d;
    let sups: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed ^ (steps as u64).rotate_left(32), i);
            let mut x = vec![0.0; w];
            let mut inc = vec![0.0; masses.len()];
            let mut sup = 0.0f64;
            for _ in 0..steps {
                step(&mut rng, masses, d, dt, &mut x, &mut inc);
                sup = sup.max(x.iter().map(|v| v * v).sum::<f64>());
            }
            sup.sqrt()
        })
        .collect();
    a_list
        .iter()
        .map(|&a| {
            let hits = if a <= 0.0 { n } else { sups.iter().filter(|s| **s > a).count() };
            let p = hits as f64 / n as f64;
            ExceedanceEstimate {
                a,
                probability: p,
                stderr: (p * (1.0 - p) / n as f64).sqrt(),
                steps,
            }
        })
        .collect()
}

/// `P⁰(sup_{s≤t} |X_s| > a)` for each `a`, with the discrete supremum over
/// `K` equal steps; `K` doubles from `k0` until no estimate moves by more
/// than one standard error (or `k_max` is reached).
pub fn exceedance_probability(
    a_list: &[f64],
    t: f64,
    masses: &[f64],
    d: usize,
    n: usize,
    seed: u64,
    k0: usize,
    k_max: usize,
) -> Result<ExceedanceLadder> {
    if !(t > 0.0) {
        return Err(invalid("t", "horizon must be positive"));
    }
    let mut k = k0.max(1);
    let mut prev = exceedance_once(a_list, t, masses, d, n, k, seed);
    let mut refinements = vec![k];
    while k < k_max {
        let k2 = 2 * k;
        let next = exceedance_once(a_list, t, masses, d, n, k2, seed);
        refinements.push(k2);
        let settled = prev
            .iter()
            .zip(&next)
            .all(|(p, q)| (p.probability - q.probability).abs() <= q.stderr.max(p.stderr));
        prev = next;
        k = k2;
        if settled {
            break;
        }
    }
    Ok(ExceedanceLadder {
        t,
        n_paths: n,
        seed,
        steps: k,
        estimates: prev,
        refinements,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogSlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// `slope / slope_stderr`
    pub z: f64,
}

/// Weighted least squares of `ln P` on `a` with weights `(P/σ_P)²`; points
/// with `P = 0` are dropped.
pub fn fit_log_slope(estimates: &[ExceedanceEstimate]) -> Option<LogSlopeFit> {
    let pts: Vec<(f64, f64, f64)> = estimates
        .iter()
        .filter(|e| e.probability > 0.0 && e.stderr > 0.0)
        .map(|e| (e.a, e.probability.ln(), (e.probability / e.stderr).powi(2)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let sx: f64 = pts.iter().map(|p| p.2 * p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.2 * p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * p.0 * p.1).sum();
    let den = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / den;
    let intercept = (sy - slope * sx) / sw;
    let slope_stderr = (sw / den).sqrt();
    Some(LogSlopeFit {
        slope,
        intercept,
        slope_stderr,
        z: slope / slope_stderr,
    })
}

// ---------------------------------------------------------------------------
// Feynman–Kac
// ---------------------------------------------------------------------------

/// Periodic tensor-product Catmull-Rom interpolation of grid samples.
pub fn interpolate_periodic(grid: &Grid, values: &[Complex64], x: &[f64]) -> Complex64 {
    let dims = grid.dims();
    let n = grid.n() as i64;
    let h = grid.spacing();
    let half = 0.5 * grid.length();
    let mut base = [0i64; 8];
    let mut w = [[0.0f64; 4]; 8];
    for a in 0..dims {
        let s = (x[a] + half) / h;
        let i = s.floor();
        let t = s - i;
        base[a] = i as i64;
        let t2 = t * t;
        let t3 = t2 * t;
        w[a] = [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ];
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let total = 4usize.pow(dims as u32);
    for c in 0..total {
        let mut flat = 0usize;
        let mut weight = 1.0;
        let mut rem = c;
        for a in 0..dims {
            let o = rem % 4;
            rem /= 4;
            weight *= w[a][o];
            let idx = (base[a] + o as i64 - 1).rem_euclid(n) as usize;
            flat = flat * grid.n() + idx;
        }
        acc += values[flat] * weight;
    }
    acc
}

/// Wraps a configuration into the periodic box `[−L/2, L/2)^{dims}`.
pub fn wrap_into_box(grid: &Grid, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = grid.minimum_image(*v);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkEstimate {
    pub value: f64,
    pub imag: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub steps: usize,
}

/// Monte Carlo estimate of `(f, e^{−tH_p} g)` with
/// `H_p = Σ_j Ω_j + U` on the periodic box of `f`'s grid: start points are
/// drawn from `|f|` on grid nodes, `g(X_t)` is interpolated, and
/// `∫_0^t U(X_s) ds` uses the left-endpoint rule on `steps` equal steps.
pub fn feynman_kac(
    f: &GridWavefunction,
    g: &GridWavefunction,
    t: f64,
    potential: PathPotential,
    masses: &[f64],
    d: usize,
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<FkEstimate> {
    let grid = f.grid();
    if g.grid() != grid || grid.dims() != masses.len() * d {
        return Err(LabError::DimensionMismatch {
            expected: masses.len() * d,
            actual: grid.dims(),
        });
    }
    if t == 0.0 {
        let ov = f.inner(g);
        return Ok(FkEstimate {
            value: ov.re,
            imag: ov.im,
            stderr: 0.0,
            n_paths: 0,
            steps: 0,
        });
    }
    let weights: Vec<f64> = f.amplitudes().iter().map(|z| z.norm()).collect();
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    if total == 0.0 {
        return Ok(FkEstimate {
            value: 0.0,
            imag: 0.0,
            stderr: 0.0,
            n_paths: n,
            steps,
        });
    }
    let cv = grid.cell_volume();
    let dt = t / steps as f64;
    let axis = grid.axis_positions();
    let dims = grid.dims();
    let vals: Vec<Complex64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let u: f64 = rng.random::<f64>() * total;
            let idx = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
            let mut multi = vec![0usize; dims];
            grid.unflatten(idx, &mut multi);
            let mut x: Vec<f64> = multi.iter().map(|&m| axis[m]).collect();
            let fz = f.amplitudes()[idx];
            let phase = fz.conj() / fz.norm();
            let mut inc = vec![0.0; masses.len()];
            let mut integral = 0.0;
            let mut y = x.clone();
            for _ in 0..steps {
                y.copy_from_slice(&x);
                wrap_into_box(grid, &mut y);
                integral += potential(&y) * dt;
                step(&mut rng, masses, d, dt, &mut x, &mut inc);
            }
            wrap_into_box(grid, &mut x);
            let gz = interpolate_periodic(grid, g.amplitudes(), &x);
            phase * gz * (-integral).exp() * (cv * total)
        })
        .collect();
    let nf = n as f64;
    let mean: Complex64 = vals.iter().sum::<Complex64>() / nf;
    let var = vals.iter().map(|v| (v.re - mean.re).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
    Ok(FkEstimate {
        value: mean.re,
        imag: mean.im,
        stderr: (var / nf).sqrt(),
        n_paths: n,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Decay envelopes and the B_R split
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeEstimate {
    pub x: Vec<f64>,
    pub t: f64,
    /// `𝔼^X[e^{−2∫_0^t W_eff(X_s) ds}]`
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Number of contiguous batches for batch-means standard errors.
pub const BATCHES: usize = 50;

fn batch_means(vals: &[f64]) -> (f64, f64) {
    let n = vals.len();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let b = BATCHES.min(n);
    if b < 2 {
        return (mean, 0.0);
    }
    let size = n / b;
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let end = if i + 1 == b { n } else { (i + 1) * size };
            let s = &vals[i * size..end];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect();
    let mb = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mb).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Integrates `W` along paths started at `x` and returns one
/// `e^{−c∫W}`-type sample per path via `reduce(∫W, visited)`.
fn path_functional(
    x0: &[f64],
    t: f64,
    w: PathPotential,
    masses: &[f64],
    d: usize,
    steps: usize,
    n: usize,
    seed: u64,
    f: &(dyn Fn(f64) -> f64 + Sync),
) -> Vec<f64> {
    let dt = t / steps as f64;
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut x = x0.to_vec();
            let mut inc = vec![0.0; masses.len()];
            let mut integral = 0.0;
            for _ in 0..steps {
                integral += w(&x) * dt;
                step(&mut rng, masses, d, dt, &mut x, &mut inc);
            }
            f(integral)
        })
        .collect()
}

pub fn decay_envelope(
    x: &[f64],
    t: f64,
    w_eff: PathPotential,
    masses: &[f64],
    d: usize,
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<EnvelopeEstimate> {
    if x.len() != masses.len() * d {
        return Err(LabError::DimensionMismatch {
            expected: masses.len() * d,
            actual: x.len(),
        });
    }
    let vals = path_functional(x, t, w_eff, masses, d, steps.max(1), n, seed, &|i| (-2.0 * i).exp());
    let (value, stderr) = batch_means(&vals);
    Ok(EnvelopeEstimate {
        x: x.to_vec(),
        t,
        value,
        stderr,
        n_paths: n,
    })
}

/// `x ∈ B_R ⇔ |x| ≥ 2R and min_{i≠j} |x_i − x_j| ≤ |x|/2`.
pub fn in_b_r(x: &[f64], d: usize, r: f64) -> bool {
    let n = x.len() / d;
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 2.0 * r || n < 2 {
        return false;
    }
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = (0..d).map(|a| (x[i * d + a] - x[j * d + a]).powi(2)).sum();
            min = min.min(s.sqrt());
        }
    }
    min <= 0.5 * norm
}

/// `(V_eff,0^R, V_eff,∞^R) = (V_eff·𝟙_{B_R^c}, V_eff·𝟙_{B_R})`.
pub fn split_veff(veff: f64, x: &[f64], d: usize, r: f64) -> (f64, f64) {
    if in_b_r(x, d, r) {
        (0.0, veff)
    } else {
        (veff, 0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchwarzCheck {
    /// `𝔼[𝟙_{𝓑^c} e^{−2∫W_eff}]`
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `𝔼[𝟙_{𝓑^c} e^{−4∫V_eff,∞}]^{1/2} · 𝔼[𝟙_{𝓑^c} e^{−4∫(V + V_eff,0)}]^{1/2}`
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// `𝔼[𝟙_𝓑 e^{−2∫(V + V_eff,0)}] + lhs` reproduces the full envelope.
    pub decomposition_error: f64,
    pub holds: bool,
}

/// Splitting bookkeeping and the Schwarz bound for the envelope at `x`.
/// `v_ext` is `Σ_j V(x_j)` and `veff` the pair part.
pub fn schwarz_check(
    x0: &[f64],
    t: f64,
    r: f64,
    v_ext: PathPotential,
    veff: PathPotential,
    masses: &[f64],
    d: usize,
    steps: usize,
    n: usize,
    seed: u64,
) -> SchwarzCheck {
    let dt = t / steps as f64;
    let rows: Vec<[f64; 4]> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut x = x0.to_vec();
            let mut inc = vec![0.0; masses.len()];
            let (mut i_full, mut i_inf, mut i_rest) = (0.0, 0.0, 0.0);
            let mut visited = false;
            for _ in 0..steps {
                let v = v_ext(&x);
                let pe = veff(&x);
                let (p0, pinf) = split_veff(pe, &x, d, r);
                visited |= in_b_r(&x, d, r);
                i_full += (v + pe) * dt;
                i_inf += pinf * dt;
                i_rest += (v + p0) * dt;
                step(&mut rng, masses, d, dt, &mut x, &mut inc);
            }
            let ind = if visited { 1.0 } else { 0.0 };
            [
                ind * (-2.0 * i_full).exp(),
                ind * (-4.0 * i_inf).exp(),
                ind * (-4.0 * i_rest).exp(),
                (1.0 - ind) * (-2.0 * i_rest).exp() + ind * (-2.0 * i_full).exp() - (-2.0 * i_full).exp(),
            ]
        })
        .collect();
    let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let (lhs, lhs_se) = batch_means(&col(0));
    let (a, a_se) = batch_means(&col(1));
    let (b, b_se) = batch_means(&col(2));
    let (dec, _) = batch_means(&col(3));
    let rhs = (a * b).sqrt();
    // delta method for √(ab)
    let rhs_se = if a > 0.0 && b > 0.0 {
        0.5 * rhs * ((a_se / a).powi(2) + (b_se / b).powi(2)).sqrt()
    } else {
        0.0
    };
    SchwarzCheck {
        lhs,
        lhs_stderr: lhs_se,
        rhs,
        rhs_stderr: rhs_se,
        decomposition_error: dec.abs(),
        holds: lhs <= rhs + 3.0 * (lhs_se * lhs_se + rhs_se * rhs_se).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;

    #[test]
    fn subordinator_zero_time_is_zero() {
        assert!(sample_subordinator(1.0, 0.0, 100, 1).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn subordinator_mean_and_laplace() {
        let s = sample_subordinator(1.0, 1.0, 100_000, 7).unwrap();
        let p = ProbeResult::from_samples("mean".into(), s.iter().copied(), 1.0);
        assert!(p.z.abs() <= 3.0, "{p:?}");
        for u in [0.5, 1.0, 2.0] {
            let p = laplace_probe(&s, u, 1.0, 1.0);
            assert!(p.z.abs() <= 3.0, "{p:?}");
        }
    }

    #[test]
    fn characteristic_function_and_zero_frequency() {
        let b = sample_paths(&[1.0], 1, &[0.0, 1.0], 100_000, 11).unwrap();
        let p = characteristic_probe(&b, 1.0, 0, 0, 1);
        assert!(p.z.abs() <= 3.0, "{p:?}");
        let p0 = characteristic_probe(&b, 0.0, 0, 0, 1);
        assert_eq!(p0.estimate, 1.0);
    }

    #[test]
    fn heavy_mass_approaches_diffusive_exponent() {
        let u: f64 = 1.0;
        let ratio_exact = levy_exponent(u, 1.0) / levy_exponent(u, 10.0);
        let ratio_diff = (u * u / 2.0) / (u * u / 20.0);
        assert!((ratio_exact / ratio_diff - 1.0).abs() < 0.2);
        // the sampled exponents reproduce the same trend
        let est = |m: f64| {
            let b = sample_paths(&[m], 1, &[0.0, 1.0], 40_000, 3).unwrap();
            -characteristic_probe(&b, u, 0, 0, 1).estimate.ln()
        };
        let r = est(1.0) / est(10.0);
        assert!((r / ratio_diff - 1.0).abs() < 0.3, "{r}");
    }

    #[test]
    fn paths_are_reproducible_and_subordinators_increase() {
        let tg = uniform_time_grid(1.0, 8);
        let a = sample_paths(&[1.0, 2.0], 2, &tg, 200, 99).unwrap();
        let b = sample_paths(&[1.0, 2.0], 2, &tg, 200, 99).unwrap();
        assert_eq!(a, b);
        for p in 0..200 {
            for k in 1..tg.len() {
                for j in 0..2 {
                    assert!(a.subordinator(p, k, j) > a.subordinator(p, k - 1, j));
                }
            }
            assert!(a.position(p, 8).iter().all(|v| v.is_finite()));
        }
        let rayon_pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = rayon_pool.install(|| sample_paths(&[1.0, 2.0], 2, &tg, 200, 99).unwrap());
        assert_eq!(a, c);
    }

    /// `∫_0^∞ ξ^{ν−1} e^{−z(ξ+1/ξ)/2} dξ = 2K_ν(z)`; for `ν = 1` compare
    /// against the integral representation `K_1(z) = ∫_0^∞ e^{−z cosh s} cosh s ds`.
    fn bessel_k1(z: f64) -> f64 {
        let m = 400_000;
        let h = 40.0 / m as f64;
        (0..=m)
            .map(|i| {
                let s = i as f64 * h;
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * (-z * s.cosh()).exp() * s.cosh()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn density_matches_bessel_form_in_one_dimension() {
        for x in [0.3, 1.0, 2.5] {
            let want = 2.0 * (1.0 / (2.0 * PI)) * bessel_k1(x) / x;
            let got = levy_density(&[x], 1.0).unwrap();
            assert!((got / want - 1.0).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn density_reproduces_levy_exponent() {
        // ∫(1 − cos ux) ν(x) dx = √(u² + m²) − m, d = 1
        let m = 1.0;
        for u in [0.5, 2.0] {
            let f = |x: f64| 2.0 * (1.0 - (u * x).cos()) * levy_density(&[x], m).unwrap();
            let a: f64 = 1e-6;
            let body = adaptive_simpson(&|s: f64| f(s.exp()) * s.exp(), a.ln(), 60f64.ln(), 1e-11);
            // ν ~ 1/(πx²) near 0: the [0, a] piece is u²a/π
            let head = u * u * a / PI;
            let got = body + head;
            assert!((got - levy_exponent(u, m)).abs() < 1e-5, "{got}");
        }
    }

    #[test]
    fn density_positive_symmetric_and_origin_rejected() {
        for x in [0.01, 0.5, 3.0, 10.0] {
            let a = levy_density(&[x, 0.3], 1.0).unwrap();
            let b = levy_density(&[-x, -0.3], 1.0).unwrap();
            assert!(a > 0.0);
            assert_eq!(a, b);
        }
        assert!(matches!(levy_density(&[1e-9], 1.0), Err(LabError::OriginSingularity(_))));
    }

    #[test]
    fn density_tail_slope_is_stable() {
        let slope = |tol: f64| {
            let xs = [2.0, 3.0, 4.0, 5.0, 6.0];
            let ys: Vec<f64> = xs.iter().map(|x| levy_density_with_tol(&[*x], 1.0, tol).unwrap().ln()).collect();
            let mx = xs.iter().sum::<f64>() / 5.0;
            let my = ys.iter().sum::<f64>() / 5.0;
            let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            num / den
        };
        let a = slope(1e-6);
        let b = slope(1e-12);
        assert!(a < 0.0 && b < 0.0);
        assert!((a / b - 1.0).abs() < 1e-2);
    }

    #[test]
    fn exceedance_zero_level_and_monotone() {
        let r = exceedance_probability(&[0.0, 1.0, 2.0, 3.0], 1.0, &[1.0], 1, 20_000, 5, 16, 64).unwrap();
        assert_eq!(r.estimates[0].probability, 1.0);
        for w in r.estimates.windows(2) {
            assert!(w[1].probability <= w[0].probability + 2.0 * w[0].stderr);
        }
    }

    #[test]
    fn log_slope_fit_recovers_exponential() {
        let est: Vec<ExceedanceEstimate> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&a| ExceedanceEstimate {
                a,
                probability: 0.5 * (-1.5 * a).exp(),
                stderr: 0.01 * 0.5 * (-1.5 * a).exp(),
                steps: 1,
            })
            .collect();
        let f = fit_log_slope(&est).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-10);
        assert!(f.z < -3.0);
    }

    #[test]
    fn envelope_trivial_cases() {
        let zero = |_: &[f64]| 0.0;
        let e = decay_envelope(&[1.0, 2.0], 1.0, &zero, &[1.0, 1.0], 1, 16, 500, 3).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
        let pos = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().min(3.0);
        let e = decay_envelope(&[1.0, 2.0], 1.0, &pos, &[1.0, 1.0], 1, 16, 500, 3).unwrap();
        assert!(e.value <= 1.0);
    }

    #[test]
    fn fk_zero_time_is_overlap() {
        let g = make_grid(1, 64, 20.0).unwrap();
        let f = GridWavefunction::from_fn(g.clone(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let h = GridWavefunction::from_fn(g.clone(), |x| Complex64::new((-(x[0] - 0.5).powi(2)).exp(), 0.0));
        let zero = |_: &[f64]| 0.0;
        let e = feynman_kac(&f, &h, 0.0, &zero, &[1.0], 1, 8, 100, 1).unwrap();
        assert_eq!(e.value, f.inner(&h).re);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn catmull_rom_reproduces_nodes_and_smooth_functions() {
        let g = make_grid(2, 64, 20.0).unwrap();
        let f = GridWavefunction::from_fn(g.clone(), |x| Complex64::new((-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp(), 0.0));
        let node = interpolate_periodic(&g, f.amplitudes(), &[g.axis_positions()[30], g.axis_positions()[33]]);
        assert!((node - f.amplitudes()[30 * 64 + 33]).norm() < 1e-14);
        let x = [0.37f64, -0.81];
        let want = (-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp();
        assert!((interpolate_periodic(&g, f.amplitudes(), &x).re - want).abs() < 5e-3);
    }

    #[test]
    fn b_r_split_is_exact_and_schwarz_holds() {
        let x = [5.0, -5.0];
        assert!(!in_b_r(&[0.1, 0.2], 1, 1.0));
        assert!(in_b_r(&[3.0, 3.5], 1, 1.0));
        assert!(!in_b_r(&x, 1, 1.0));
        for (v, y) in [(-0.7, [3.0, 3.5]), (-0.2, [0.1, 0.2]), (0.3, [5.0, -5.0])] {
            let (a, b) = split_veff(v, &y, 1, 1.0);
            assert_eq!(a + b, v);
        }
        let vext = |y: &[f64]| -0.3 * ((-y[0] * y[0]).exp() + (-y[1] * y[1]).exp());
        let veff = |y: &[f64]| -0.5 * (-(y[0] - y[1]).powi(2)).exp();
        let c = schwarz_check(&[1.0, -1.0], 2.0, 0.5, &vext, &veff, &[1.0, 1.0], 1, 32, 4000, 17);
        assert!(c.holds);
        assert!(c.decomposition_error < 1e-12);
    }
}
