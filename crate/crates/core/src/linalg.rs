//! Matrix-free Hermitian operators, a restarted Lanczos ground-state solver,
//! conjugate gradients, and dense reference routines.
//!
//! Vectors here are plain `ℓ²` coefficient arrays; the cell-volume weight of
//! [`GridWavefunction`](crate::model::GridWavefunction) is applied by callers.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Largest dimension the dense routines accept.
pub const DENSE_LIMIT: usize = 4096;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y ← A x`.
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);

    /// True when the matrix in the canonical basis is real symmetric.
    fn is_real(&self) -> bool {
        false
    }
}

pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `y ← y + s x`.
pub fn axpy(s: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += s * xi);
}

pub fn scale(s: f64, x: &mut [Complex64]) {
    x.iter_mut().for_each(|v| *v *= s);
}

/// Deterministic unit vector with independent normal real parts.
pub fn random_unit_vector(dim: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.sample::<f64, _>(rand_distr::StandardNormal), 0.0))
        .collect();
    let n = norm(&v);
    scale(1.0 / n, &mut v);
    v
}

/// Rayleigh quotient `⟨x, A x⟩ / ⟨x, x⟩`.
pub fn rayleigh(op: &dyn LinearOperator, x: &[Complex64]) -> f64 {
    let mut y = vec![ZERO; x.len()];
    op.apply(x, &mut y);
    dot(x, &y).re / dot(x, x).re
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct LanczosOptions {
    /// Convergence when `‖Ax − θx‖ ≤ tol·(|θ| + 1)`.
    pub tol: f64,
    pub max_matvecs: usize,
    /// Krylov basis size per restart cycle.
    pub krylov_dim: usize,
    pub seed: u64,
    /// Also compute the second eigenvalue by a deflated run.
    pub second: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_matvecs: 40_000,
            krylov_dim: 80,
            seed: 0x5eed,
            second: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub eigenvalue: f64,
    /// Unit `ℓ²` norm.
    pub eigenvector: Vec<Complex64>,
    pub residual: f64,
    pub matvecs: usize,
    pub second: Option<f64>,
}

/// Orthogonalizes `w` against `basis` twice (classical Gram-Schmidt with
/// reorthogonalization).
fn orthogonalize(w: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

fn tridiagonal_min(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let s: Vec<f64> = (0..m).map(|r| eig.eigenvectors[(r, order[0])]).collect();
    (vals, s)
}

/// Smallest eigenpair of a Hermitian operator restricted to the orthogonal
/// complement of `locked`.
fn lanczos_core(
    op: &dyn LinearOperator,
    opts: &LanczosOptions,
    start: Option<&[Complex64]>,
    locked: &[Vec<Complex64>],
) -> Result<LanczosResult> {
    let n = op.dim();
    if n == 0 {
        return Err(LabError::InvalidParameter {
            name: "dim",
            reason: "operator has dimension 0".into(),
        });
    }
    let free = n - locked.len();
    if free == 0 {
        return Err(LabError::InvalidParameter {
            name: "dim",
            reason: "no directions left after deflation".into(),
        });
    }
    let kdim = opts.krylov_dim.max(2).min(free);
    let mut x = match start {
        Some(s) => s.to_vec(),
        None => random_unit_vector(n, opts.seed),
    };
    orthogonalize(&mut x, locked);
    if norm(&x) < 1e-12 {
        x = random_unit_vector(n, opts.seed ^ 0x9e37_79b9_7f4a_7c15);
        orthogonalize(&mut x, locked);
    }
    let nx = norm(&x);
    scale(1.0 / nx, &mut x);

    let mut matvecs = 0usize;
    let mut w = vec![ZERO; n];
    let mut best = (f64::INFINITY, f64::INFINITY, x.clone(), None::<f64>);
    loop {
        let mut basis: Vec<Vec<Complex64>> = vec![x.clone()];
        let mut alpha = Vec::with_capacity(kdim);
        let mut beta: Vec<f64> = Vec::with_capacity(kdim);
        for j in 0..kdim {
            op.apply(&basis[j], &mut w);
            matvecs += 1;
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            orthogonalize(&mut w, locked);
            orthogonalize(&mut w, &basis);
            let b = norm(&w);
            let early = j + 1 == kdim || b <= 1e-13 * (a.abs() + 1.0);
            if early || (j + 1) % 8 == 0 {
                let (vals, s) = tridiagonal_min(&alpha, &beta);
                let est = b * s[j].abs();
                if early || est <= 0.1 * opts.tol * (vals[0].abs() + 1.0) {
                    break;
                }
            }
            if matvecs >= opts.max_matvecs {
                break;
            }
            beta.push(b);
            let mut q = w.clone();
            scale(1.0 / b, &mut q);
            basis.push(q);
        }
        let m = alpha.len();
        let (vals, s) = tridiagonal_min(&alpha, &beta[..m - 1]);
        let mut ritz = vec![ZERO; n];
        for (i, q) in basis.iter().take(m).enumerate() {
            axpy(Complex64::new(s[i], 0.0), q, &mut ritz);
        }
        orthogonalize(&mut ritz, locked);
        let rn = norm(&ritz);
        scale(1.0 / rn, &mut ritz);
        op.apply(&ritz, &mut w);
        matvecs += 1;
        let theta = dot(&ritz, &w).re;
        axpy(Complex64::new(-theta, 0.0), &ritz, &mut w);
        orthogonalize(&mut w, locked);
        let res = norm(&w);
        let second = vals.get(1).copied();
        if res < best.1 {
            best = (theta, res, ritz.clone(), second);
        }
        if res <= opts.tol * (theta.abs() + 1.0) || m == free {
            return Ok(LanczosResult {
                eigenvalue: theta,
                eigenvector: ritz,
                residual: res,
                matvecs,
                second,
            });
        }
        if matvecs >= opts.max_matvecs {
            return Err(LabError::NonConvergence {
                iterations: matvecs,
                best_eigenvalue: best.0,
                residual: best.1,
            });
        }
        x = ritz;
    }
}

/// Smallest eigenpair by restarted Lanczos with full reorthogonalization.
/// Operators up to [`DENSE_FALLBACK`] that stall (tightly clustered bottom
/// spectrum) are diagonalized densely instead.
pub fn lanczos_ground_state(
    op: &dyn LinearOperator,
    opts: &LanczosOptions,
    start: Option<&[Complex64]>,
) -> Result<LanczosResult> {
    let mut r = match lanczos_core(op, opts, start, &[]) {
        Err(LabError::NonConvergence { .. }) if op.dim() <= DENSE_FALLBACK => return dense_ground_state(op, opts),
        other => other?,
    };
    if opts.second && op.dim() > 1 {
        let locked = vec![r.eigenvector.clone()];
        let s = match lanczos_core(op, opts, None, &locked) {
            Err(LabError::NonConvergence { .. }) if op.dim() <= DENSE_FALLBACK => {
                return dense_ground_state(op, opts);
            }
            other => other?,
        };
        r.second = Some(s.eigenvalue);
        r.matvecs += s.matvecs;
    } else if !opts.second {
        r.second = None;
    }
    Ok(r)
}

/// Largest dimension for the dense fallback of [`lanczos_ground_state`].
pub const DENSE_FALLBACK: usize = 2048;

fn dense_ground_state(op: &dyn LinearOperator, opts: &LanczosOptions) -> Result<LanczosResult> {
    let (vals, vecs) = dense_eigh(op)?;
    let v: Vec<Complex64> = vecs.column(0).iter().copied().collect();
    let mut av = vec![ZERO; v.len()];
    op.apply(&v, &mut av);
    axpy(Complex64::new(-vals[0], 0.0), &v, &mut av);
    Ok(LanczosResult {
        eigenvalue: vals[0],
        eigenvector: v,
        residual: norm(&av),
        matvecs: op.dim(),
        second: if opts.second { vals.get(1).copied() } else { None },
    })
}

/// Solves `A x = b` for Hermitian positive definite `A` by conjugate
/// gradients; returns `(x, iterations, relative residual)`.
pub fn conjugate_gradient(
    op: &dyn LinearOperator,
    b: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> (Vec<Complex64>, usize, f64) {
    preconditioned_cg(op, None, b, tol, max_iter)
}

/// `z ← M⁻¹ r`.
pub type Preconditioner<'a> = &'a (dyn Fn(&[Complex64], &mut [Complex64]) + Sync);

/// Conjugate gradients with an optional Hermitian positive definite
/// preconditioner `z ← M⁻¹ r`.
pub fn preconditioned_cg(
    op: &dyn LinearOperator,
    precond: Option<Preconditioner>,
    b: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> (Vec<Complex64>, usize, f64) {
    let n = b.len();
    let apply_m = |r: &[Complex64], z: &mut [Complex64]| match precond {
        Some(m) => m(r, z),
        None => z.copy_from_slice(r),
    };
    let mut x = vec![ZERO; n];
    let mut r = b.to_vec();
    let mut z = vec![ZERO; n];
    apply_m(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![ZERO; n];
    let bn = norm(b).max(f64::MIN_POSITIVE);
    let mut rz = dot(&r, &z).re;
    let mut rn = norm(&r);
    let mut it = 0;
    while it < max_iter && rn > tol * bn {
        op.apply(&p, &mut ap);
        let a = rz / dot(&p, &ap).re;
        axpy(Complex64::new(a, 0.0), &p, &mut x);
        axpy(Complex64::new(-a, 0.0), &ap, &mut r);
        apply_m(&r, &mut z);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + *pi * beta;
        }
        rz = rz_new;
        rn = norm(&r);
        it += 1;
    }
    (x, it, rn / bn)
}

fn dense_guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(LabError::Budget {
            what: "dense dimension",
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

/// Matrix of `op` in the canonical basis.
pub fn assemble_dense(op: &dyn LinearOperator) -> Result<DMatrix<Complex64>> {
    let n = op.dim();
    dense_guard(n)?;
    let mut m = DMatrix::from_element(n, n, ZERO);
    let mut e = vec![ZERO; n];
    let mut y = vec![ZERO; n];
    for c in 0..n {
        e[c] = Complex64::new(1.0, 0.0);
        op.apply(&e, &mut y);
        e[c] = ZERO;
        for r in 0..n {
            m[(r, c)] = y[r];
        }
    }
    Ok(m)
}

/// Ascending eigenvalues and matching unit eigenvectors (columns) of a
/// Hermitian operator. Real-symmetric operators take the real path.
pub fn dense_eigh(op: &dyn LinearOperator) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let m = assemble_dense(op)?;
    let n = m.nrows();
    if op.is_real() {
        let re = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        let eig = SymmetricEigen::new(re);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(n, n, |r, c| Complex64::new(eig.eigenvectors[(r, order[c])], 0.0));
        Ok((vals, vecs))
    } else {
        let h = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok((vals, vecs))
    }
}

/// Ascending eigenvalues only.
pub fn dense_eigenvalues(op: &dyn LinearOperator) -> Result<Vec<f64>> {
    let m = assemble_dense(op)?;
    let n = m.nrows();
    let mut vals: Vec<f64> = if op.is_real() {
        let re = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        re.symmetric_eigenvalues().iter().copied().collect()
    } else {
        let h = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
        h.symmetric_eigenvalues().iter().copied().collect()
    };
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// `⟨f, e^{−tA} g⟩` in `ℓ²` from a dense eigendecomposition.
pub fn dense_semigroup_form(
    vals: &[f64],
    vecs: &DMatrix<Complex64>,
    t: f64,
    f: &[Complex64],
    g: &[Complex64],
) -> Complex64 {
    let n = vals.len();
    let mut acc = ZERO;
    for c in 0..n {
        let mut uf = ZERO;
        let mut ug = ZERO;
        for r in 0..n {
            let u = vecs[(r, c)];
            uf += u.conj() * f[r];
            ug += u.conj() * g[r];
        }
        acc += uf.conj() * ug * (-t * vals[c]).exp();
    }
    acc
}

/// Dense operator given by an explicit matrix; used in tests and oracles.
pub struct DenseOperator {
    pub matrix: DMatrix<Complex64>,
    pub real: bool,
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.dim();
        for (r, yr) in y.iter_mut().enumerate().take(n) {
            let mut acc = ZERO;
            for (c, xc) in x.iter().enumerate() {
                acc += self.matrix[(r, c)] * xc;
            }
            *yr = acc;
        }
    }

    fn is_real(&self) -> bool {
        self.real
    }
}
