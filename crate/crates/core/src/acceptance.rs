//! The twelve acceptance checks. Each returns a [`CriterionOutcome`] with a
//! one-line summary and the numbers it was decided on.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::LabConfig;
use crate::effpot::{compute_pair_potential, potential_grid, veff_assemble, PairTables, VeffEvaluator};
use crate::error::Result;
use crate::fiber::{build_fiber, default_p_samples, dispersion_scan, fiber_ground_state};
use crate::fock::{
    build_coupled, certify_energy_comparison, scaling_limit_trend, select_modes, FieldMode, Truncation,
};
use crate::kinetic::{apply_kinetic, block_symbol, EffectiveHamiltonian, KineticOperator};
use crate::levy::{
    characteristic_probe, decay_envelope, exceedance_probability, feynman_kac, fit_log_slope, laplace_probe,
    sample_paths, schwarz_check, ProbeResult,
};
use crate::linalg::{dense_eigenvalues, dense_eigh, dense_semigroup_form, lanczos_ground_state, LanczosOptions, LinearOperator};
use crate::model::{make_grid, CutoffProfile, ExternalPotential, Grid, GridWavefunction, ModelParams};
use crate::spectral::{binding_analysis, cluster_energy_0, grid_energy_resolution, mass_outside};
use crate::stability::{coupling_window_scan, StabilitySetup};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub details: Value,
    /// Wall-clock time; kept out of serialized reports so they stay
    /// byte-identical across runs.
    #[serde(skip_serializing, default)]
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<34} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.summary,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub outcomes: Vec<CriterionOutcome>,
    pub passed: bool,
}

impl AcceptanceSummary {
    pub fn table(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            out.push_str(&o.line());
            out.push('\n');
        }
        let n = self.outcomes.iter().filter(|o| o.passed).count();
        out.push_str(&format!("{n}/{} criteria passed\n", self.outcomes.len()));
        out
    }
}

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "kinetic-symbol exactness"),
    (2, "effective-potential oracle"),
    (3, "eigensolver equivalence"),
    (4, "fiber dispersion"),
    (5, "levy-process fidelity"),
    (6, "feynman-kac cross-check"),
    (7, "exceedance-decay structure"),
    (8, "enhanced-binding scan"),
    (9, "strong-coupling asymptotics"),
    (10, "relative-state concentration"),
    (11, "fock certificates"),
    (12, "decay-envelope consistency"),
];

type Check = (bool, String, Value);
type OneBody = dyn Fn(f64) -> f64 + Sync;

fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run_criterion(id: u8, cfg: &LabConfig) -> CriterionOutcome {
    let start = Instant::now();
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1.to_string())
        .unwrap_or_else(|| format!("unknown criterion {id}"));
    let res = match id {
        1 => kinetic_exactness(),
        2 => effective_potential_oracle(),
        3 => eigensolver_equivalence(cfg),
        4 => fiber_dispersion(cfg),
        5 => levy_fidelity(cfg),
        6 => feynman_kac_check(cfg),
        7 => exceedance_structure(cfg),
        8 => enhanced_binding(cfg),
        9 => strong_coupling_asymptotics(cfg),
        10 => concentration(cfg),
        11 => fock_certificates(cfg),
        12 => envelope_consistency(cfg),
        _ => Ok((false, "no such criterion".into(), Value::Null)),
    };
    let (passed, summary, details) = match res {
        Ok(c) => c,
        Err(e) => (false, format!("error: {e}"), json!({ "error": e.to_string() })),
    };
    CriterionOutcome {
        id,
        name,
        passed,
        summary,
        details,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(cfg: &LabConfig) -> AcceptanceSummary {
    let outcomes: Vec<CriterionOutcome> = CRITERIA.iter().map(|(id, _)| run_criterion(*id, cfg)).collect();
    let passed = outcomes.iter().all(|o| o.passed);
    AcceptanceSummary { outcomes, passed }
}

// ---------------------------------------------------------------------------
// 1
// ---------------------------------------------------------------------------

fn kinetic_exactness() -> Result<Check> {
    let mut max_err: f64 = 0.0;
    for (d, n, l) in [(1, 256, 40.0), (2, 64, 20.0), (3, 16, 10.0)] {
        let g = make_grid(d, n, l)?;
        let s = block_symbol(&g, d, 0, 0.0);
        g.for_each_momentum(|flat, k| {
            let a = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            max_err = max_err.max((s[flat] - a).abs());
        });
    }
    // m = 3, |k| = 4 on a lattice with unit momentum spacing
    let g = make_grid(1, 32, 2.0 * PI)?;
    let op = KineticOperator::new(&g, 1, 0, 3.0)?;
    let psi = GridWavefunction::from_fn(g.clone(), |x| Complex64::from_polar(1.0, 4.0 * x[0]));
    let h = apply_kinetic(&op, &psi)?;
    let eig_err = h
        .amplitudes()
        .iter()
        .zip(psi.amplitudes())
        .map(|(a, b)| (a - 2.0 * b).norm())
        .fold(0.0, f64::max);
    let passed = max_err <= 1e-12 && eig_err <= 1e-12;
    Ok((
        passed,
        format!("max | Ω_0(k) − |k| | = {max_err:.2e}, 3-4-5 plane-wave error = {eig_err:.2e}"),
        json!({ "massless_symbol_error": max_err, "plane_wave_error": eig_err }),
    ))
}

// ---------------------------------------------------------------------------
// 2
// ---------------------------------------------------------------------------

fn effective_potential_oracle() -> Result<Check> {
    let p3 = CutoffProfile::sharp_flat(1.0, 0.0)?;
    let g3 = make_grid(3, 64, 60.0 * PI)?;
    let w3 = compute_pair_potential(&p3, &p3, &g3)?.w0();
    let want3 = -1.0 / (4.0 * PI * PI);
    let rel3 = (w3 / want3 - 1.0).abs();
    let p1 = CutoffProfile::sharp_flat(1.0, 0.1)?;
    let g1 = make_grid(1, 16384, 16000.0 * PI)?;
    let w1 = compute_pair_potential(&p1, &p1, &g1)?.w0();
    let want1 = -(10f64).ln() / PI;
    let rel1 = (w1 / want1 - 1.0).abs();
    Ok((
        rel3 <= 1e-3 && rel1 <= 1e-3,
        format!("d=3 W(0) rel err {rel3:.2e}, d=1 W(0) rel err {rel1:.2e} (tol 1e-3)"),
        json!({ "d3": { "w0": w3, "expected": want3, "rel_err": rel3 },
                "d1": { "w0": w1, "expected": want1, "rel_err": rel1 } }),
    ))
}

// ---------------------------------------------------------------------------
// 3
// ---------------------------------------------------------------------------

fn desk_tables(cfg: &LabConfig, n: usize, length: f64) -> Result<PairTables> {
    let base = make_grid(cfg.model.d, n, length)?;
    PairTables::compute(&cfg.model, &potential_grid(&base, cfg.model.d, cfg.grid.potential_oversample)?)
}

fn eigensolver_equivalence(cfg: &LabConfig) -> Result<Check> {
    let opts = cfg.lanczos_options();
    let p = &cfg.model;
    let mut rows = Vec::new();
    let mut check = |label: &str, op: &dyn LinearOperator| -> Result<()> {
        let dense = dense_eigenvalues(op)?[0];
        let lz = lanczos_ground_state(op, &opts, None)?.eigenvalue;
        rows.push((label.to_string(), op.dim(), lz, dense, (lz - dense).abs()));
        Ok(())
    };

    let g1 = make_grid(1, 256, cfg.grid.length)?;
    let one = ModelParams {
        masses: vec![p.masses[0]],
        profiles: vec![p.profiles[0].clone()],
        ..p.clone()
    };
    let h = EffectiveHamiltonian::build(&one, &g1, None, &[0], true)?;
    check("one particle in the well", &h)?;

    let tables = desk_tables(cfg, 32, 20.0)?;
    let ev = veff_assemble(tables, 2.0, p.d);
    let g2 = make_grid(2, 32, 20.0)?;
    let pa = p.with_alpha(2.0);
    let h = EffectiveHamiltonian::build(&pa, &g2, Some(&ev), &[0, 1], true)?;
    check("pair with V_eff, alpha=2", &h)?;

    let tables = desk_tables(cfg, 256, cfg.grid.length)?;
    let ev = veff_assemble(tables, 4.0, p.d);
    let op = build_fiber(&[0.7], &p.with_alpha(4.0), &g1, Some(&ev))?;
    check("fiber P=0.7, alpha=4", &op)?;

    let pf = p.with_alpha(1.0).with_kappa(1.5);
    let gf = make_grid(2, 8, 8.0)?;
    let modes = select_modes(&pf, &gf.with_dims(1), 2, false)?;
    let hc = build_coupled(&pf, &gf, &modes, 3)?;
    check("coupled field, 2 modes, n_max=3", &hc)?;

    let worst = rows.iter().map(|r| r.4 / r.3.abs().max(1.0)).fold(0.0, f64::max);
    let details: Vec<Value> = rows
        .iter()
        .map(|r| json!({ "instance": r.0, "dim": r.1, "lanczos": r.2, "dense": r.3, "abs_diff": r.4 }))
        .collect();
    Ok((
        worst <= 1e-8,
        format!("{} instances, worst |Δ|/max(1,|E|) = {worst:.2e} (tol 1e-8)", rows.len()),
        Value::Array(details),
    ))
}

// ---------------------------------------------------------------------------
// 4
// ---------------------------------------------------------------------------

fn fiber_dispersion(cfg: &LabConfig) -> Result<Check> {
    let opts = cfg.lanczos_options();
    let p = &cfg.model;
    let g = make_grid(p.d * (p.n_particles() - 1), cfg.fiber.n, cfg.fiber.length)?;
    let ps = default_p_samples(&g, p.d);
    let m_tot: f64 = p.masses.iter().sum();
    let free = dispersion_scan(&ps, &p.with_alpha(0.0), &g, None, &opts)?;
    let mut worst: f64 = 0.0;
    let mut free_rows = Vec::new();
    for s in &free.samples {
        let pp = s.p.iter().map(|v| v * v).sum::<f64>();
        let want = (pp + m_tot * m_tot).sqrt() - m_tot;
        let e = s.energy.unwrap_or(f64::NAN);
        let err = (e - want).abs() / want.abs().max(1e-12);
        let err = if want == 0.0 { (e - want).abs() } else { err };
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        free_rows.push(json!({ "p": s.p, "energy": s.energy, "expected": want, "error": s.error }));
    }
    let tables = PairTables::compute(p, &potential_grid(&g.with_dims(p.d), p.d, cfg.grid.potential_oversample)?)?;
    let mut min_ok = true;
    let mut coupled = Vec::new();
    for &alpha in &cfg.fiber.alphas {
        let ev = veff_assemble(tables.clone(), alpha, p.d);
        let c = dispersion_scan(&ps, &p.with_alpha(alpha), &g, Some(&ev), &opts)?;
        let ok = c.minimum_at_zero && c.samples.iter().all(|s| s.energy.is_some());
        min_ok &= ok;
        coupled.push(json!({ "alpha": alpha, "energies": c.energies(), "minimum_at_zero": ok }));
    }
    Ok((
        worst <= 5e-3 && min_ok,
        format!(
            "free curve worst rel err {worst:.2e} (tol 5e-3); E(0) <= E(P) + 2tol for alpha in {:?}: {min_ok}",
            cfg.fiber.alphas
        ),
        json!({ "free": free_rows, "worst_rel_err": worst, "coupled": coupled }),
    ))
}

// ---------------------------------------------------------------------------
// 5
// ---------------------------------------------------------------------------

fn levy_fidelity(cfg: &LabConfig) -> Result<Check> {
    let l = &cfg.levy;
    let mut probes: Vec<ProbeResult> = Vec::new();
    let mut tag = 0u64;
    for &m in &l.probe_masses {
        for &t in &l.probe_horizons {
            tag += 1;
            let b = sample_paths(&[m], 1, &[0.0, t], l.probe_paths, sub_seed(cfg.seed, 500 + tag))?;
            for &u in &l.probe_frequencies {
                probes.push(characteristic_probe(&b, u, 0, 0, 1));
            }
            let sub: Vec<f64> = (0..b.n_paths).map(|i| b.subordinator(i, 1, 0)).collect();
            for &u in &l.laplace_arguments {
                probes.push(laplace_probe(&sub, u, m, t));
            }
        }
    }
    let worst = probes.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    Ok((
        worst <= 3.0,
        format!("{} probes at n={}, max |z| = {worst:.2} (tol 3)", probes.len(), l.probe_paths),
        serde_json::to_value(&probes).unwrap_or(Value::Null),
    ))
}

// ---------------------------------------------------------------------------
// 6
// ---------------------------------------------------------------------------

fn feynman_kac_check(cfg: &LabConfig) -> Result<Check> {
    let l = &cfg.levy;
    let m = cfg.model.masses[0];
    let g = make_grid(1, l.fk_n, l.fk_length)?;
    let f = GridWavefunction::from_fn(g.clone(), |x| Complex64::new((-0.5 * x[0] * x[0]).exp(), 0.0));
    let h = GridWavefunction::from_fn(g.clone(), |x| Complex64::new((-0.35 * (x[0] - 0.5).powi(2)).exp(), 0.0));
    let potentials: Vec<(&str, Box<OneBody>)> = vec![
        ("zero", Box::new(|_| 0.0)),
        ("gaussian well v0=0.5 w=1", Box::new(|x: f64| -0.5 * (-0.5 * x * x).exp())),
        ("soft step 0.4(1-e^{-x^2/8})", Box::new(|x: f64| 0.4 * (1.0 - (-x * x / 8.0).exp()))),
    ];
    let symbol = block_symbol(&g, 1, 0, m);
    let mut rows = Vec::new();
    let mut ok = true;
    for (i, (label, v)) in potentials.iter().enumerate() {
        let mut pot = vec![0.0; g.size()];
        g.for_each_position(|flat, x| pot[flat] = v(x[0]));
        let hp = EffectiveHamiltonian::from_parts(&g, symbol.clone(), pot)?;
        let (vals, vecs) = dense_eigh(&hp)?;
        let exact = dense_semigroup_form(&vals, &vecs, l.fk_t, f.amplitudes(), h.amplitudes()).re * g.cell_volume();
        let vp = |x: &[f64]| v(x[0]);
        let seed = sub_seed(cfg.seed, 600 + i as u64);
        let est = feynman_kac(&f, &h, l.fk_t, &vp, &[m], 1, l.fk_steps, l.fk_paths, seed)?;
        let half = feynman_kac(&f, &h, l.fk_t, &vp, &[m], 1, l.fk_steps / 2, l.fk_paths, seed)?;
        let z = (est.value - exact) / est.stderr;
        let rel = (est.value / exact - 1.0).abs();
        let pass = z.abs() <= 3.0 && rel <= 0.02;
        ok &= pass;
        rows.push(json!({
            "potential": label, "exact": exact, "estimate": est.value, "stderr": est.stderr,
            "z": z, "rel_err": rel, "half_step_estimate": half.value,
            "half_step_shift": est.value - half.value, "passed": pass,
        }));
    }
    let worst_z = rows.iter().filter_map(|r| r["z"].as_f64()).map(f64::abs).fold(0.0, f64::max);
    let worst_rel = rows.iter().filter_map(|r| r["rel_err"].as_f64()).fold(0.0, f64::max);
    Ok((
        ok,
        format!("3 potentials, max |z| = {worst_z:.2}, max rel err = {worst_rel:.2e} (tol 3, 2e-2)"),
        Value::Array(rows),
    ))
}

// ---------------------------------------------------------------------------
// 7
// ---------------------------------------------------------------------------

fn exceedance_structure(cfg: &LabConfig) -> Result<Check> {
    let l = &cfg.levy;
    let ladder = exceedance_probability(
        &l.exceedance_levels,
        l.exceedance_t,
        &[1.0],
        1,
        l.exceedance_paths,
        sub_seed(cfg.seed, 700),
        l.exceedance_min_steps,
        l.exceedance_max_steps,
    )?;
    let fit = fit_log_slope(&ladder.estimates);
    let (passed, summary) = match &fit {
        Some(f) => (
            f.slope < 0.0 && f.z.abs() >= 3.0,
            format!("slope {:.3} ± {:.3}, |z| = {:.1} (need < 0, |z| >= 3), K = {}", f.slope, f.slope_stderr, f.z.abs(), ladder.steps),
        ),
        None => (false, "fewer than two nonzero exceedance estimates".into()),
    };
    Ok((passed, summary, json!({ "ladder": ladder, "fit": fit })))
}

// ---------------------------------------------------------------------------
// 8
// ---------------------------------------------------------------------------

fn enhanced_binding(cfg: &LabConfig) -> Result<Check> {
    let p = &cfg.model;
    let base = cfg.grid.base(p.d)?;
    let pg = potential_grid(&base, p.d, cfg.grid.potential_oversample)?;
    let setup = StabilitySetup::new(p, &base, &pg, cfg.lanczos_options())?;
    let scan = coupling_window_scan(&cfg.scan.alphas, cfg.scan.kappa, p, &setup)?;
    let resolution = grid_energy_resolution(p, &base);
    let first = &scan.rows[0];
    let unbound_start = first.alpha == 0.0 && !first.bound && first.binding_margin <= resolution && !first.localized;
    let window: Vec<f64> = scan
        .rows
        .iter()
        .filter(|r| r.bound && r.binding_margin > 0.0 && r.localized && r.decay_rate.is_some_and(|d| d > 0.0))
        .map(|r| r.alpha)
        .collect();
    Ok((
        unbound_start && !window.is_empty(),
        format!(
            "alpha=0: margin {:.3e} vs resolution {resolution:.3e}, localized={}; bound at alpha in {window:?}; alpha_c in {:?}",
            first.binding_margin, first.localized, scan.alpha_c
        ),
        json!({ "scan": scan, "resolution": resolution, "window": window }),
    ))
}

// ---------------------------------------------------------------------------
// 9, 10
// ---------------------------------------------------------------------------

fn concentration_setup(cfg: &LabConfig) -> Result<(ModelParams, Grid, PairTables)> {
    let c = &cfg.concentration;
    let p = ModelParams::identical(1, 2, 1.0, 1.0, 1.0, c.profile.clone(), ExternalPotential::Zero)?;
    let g = make_grid(1, c.n, c.length)?;
    let tables = PairTables::compute(&p, &potential_grid(&g, 1, c.potential_oversample)?)?;
    Ok((p, g, tables))
}

fn strong_coupling_asymptotics(cfg: &LabConfig) -> Result<Check> {
    let opts = cfg.lanczos_options();
    let (p, g, tables) = concentration_setup(cfg)?;
    let w0 = tables.get(0, 1).w0();
    let mut rows = Vec::new();
    for &alpha in &cfg.concentration.alphas {
        let ev = veff_assemble(tables.clone(), alpha, 1);
        let e0 = cluster_energy_0(&p.with_alpha(alpha), &g, Some(&ev), &[0, 1], &opts)?;
        let ratio = e0 / (alpha * alpha);
        rows.push((alpha, e0, ratio, (ratio - w0).abs() / w0.abs()));
    }
    let monotone = rows.windows(2).all(|w| w[1].3 < w[0].3);
    let last = rows.last().map(|r| r.3).unwrap_or(f64::INFINITY);
    Ok((
        monotone && last <= 0.1,
        format!(
            "|E0/alpha^2 − W(0)|/|W(0)| = {:?} over alpha {:?}; W(0) = {w0:.4}",
            rows.iter().map(|r| format!("{:.3}", r.3)).collect::<Vec<_>>(),
            cfg.concentration.alphas
        ),
        json!({ "w0": w0, "rows": rows.iter().map(|r| json!({ "alpha": r.0, "e0": r.1, "ratio": r.2, "rel_dev": r.3 })).collect::<Vec<_>>() }),
    ))
}

fn concentration(cfg: &LabConfig) -> Result<Check> {
    let opts = cfg.lanczos_options();
    let (p, g, tables) = concentration_setup(cfg)?;
    let w0 = tables.get(0, 1).w0();
    let r = cfg.concentration.radius;
    let mut rows = Vec::new();
    for &alpha in &cfg.concentration.alphas {
        let ev = veff_assemble(tables.clone(), alpha, 1);
        let gs = fiber_ground_state(alpha, &p, &g, &ev, &opts)?;
        let out = mass_outside(&gs.state, r);
        rows.push(json!({ "alpha": alpha, "mass_outside": out, "energy": gs.energy,
                          "variational_floor": alpha * alpha * w0, "above_floor": gs.energy >= alpha * alpha * w0 }));
    }
    let masses: Vec<f64> = rows.iter().filter_map(|r| r["mass_outside"].as_f64()).collect();
    let decreasing = masses.windows(2).all(|w| w[1] < w[0]);
    let last = masses.last().copied().unwrap_or(1.0);
    Ok((
        decreasing && last < 0.05,
        format!("mass outside |y|>{r}: {masses:?} over alpha {:?} (need decreasing, last < 0.05)", cfg.concentration.alphas),
        Value::Array(rows),
    ))
}

// ---------------------------------------------------------------------------
// 11
// ---------------------------------------------------------------------------

fn fock_certificates(cfg: &LabConfig) -> Result<Check> {
    let f = &cfg.fock;
    let opts = LanczosOptions {
        krylov_dim: f.krylov_dim,
        ..cfg.lanczos_options()
    };
    // displaced oscillator: one k = 0 mode, no particle motion coupling
    let (alpha, c, omega) = (1.0, 0.8, 0.5);
    let p1 = ModelParams::identical(1, 1, 1.0, alpha, 1.0, CutoffProfile::sharp_flat(1.0, 0.0)?, ExternalPotential::Zero)?;
    let mode = FieldMode {
        k: vec![0.0],
        omega,
        couplings: vec![c],
    };
    let h = build_coupled(&p1, &make_grid(1, 4, 8.0)?, &[mode], 16)?;
    let e_osc = dense_eigenvalues(&h)?[0];
    let want = -alpha * alpha * c * c / (2.0 * omega);
    let osc_err = (e_osc / want - 1.0).abs();

    let p = cfg.model.with_alpha(f.alpha).with_kappa(f.kappa);
    let g = make_grid(p.d * p.n_particles(), f.n, f.length)?;
    let n_modes = f.modes;
    let pool = select_modes(&p, &g.with_dims(p.d), n_modes, false)?;
    let ladder: Vec<Truncation> = f.ladder.iter().map(|&n| Truncation { modes: n_modes, n_max: n }).collect();
    let cert = certify_energy_comparison(&p, &g, &pool, &ladder, &opts)?;
    let trend = scaling_limit_trend(
        &p,
        &g,
        &pool,
        &f.kappas,
        Truncation {
            modes: n_modes,
            n_max: f.trend_n_max,
        },
        &opts,
    )?;
    let final_gap = cert
        .rungs
        .iter()
        .rev()
        .find_map(|r| r.energy)
        .map(|e| (e - cert.bound).max(0.0))
        .unwrap_or(f64::INFINITY);
    let fallback = trend.nonincreasing && final_gap < 0.1 * cert.e_v.abs();
    let outcome = if cert.certified {
        "certificate attained"
    } else if fallback {
        "certificate not attained; monotone trend and gap < 10% |E^V|"
    } else {
        "certificate not attained"
    };
    let passed = osc_err <= 0.01 && cert.monotone && trend.nonincreasing && (cert.certified || fallback);
    let gaps: Vec<f64> = trend.rows.iter().map(|r| r.gap).collect();
    Ok((
        passed,
        format!(
            "oscillator rel err {osc_err:.2e}; ladder monotone={}; kappa gaps {gaps:?} nonincreasing={}; {outcome}",
            cert.monotone, trend.nonincreasing
        ),
        json!({ "oscillator": { "energy": e_osc, "expected": want, "rel_err": osc_err },
                "certificate": cert, "kappa_trend": trend, "outcome": outcome }),
    ))
}

// ---------------------------------------------------------------------------
// 12
// ---------------------------------------------------------------------------

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn envelope_consistency(cfg: &LabConfig) -> Result<Check> {
    let e = &cfg.envelope;
    let p = cfg.model.with_alpha(e.alpha);
    let base = cfg.grid.base(p.d)?;
    let tables = PairTables::compute(&p, &potential_grid(&base, p.d, cfg.grid.potential_oversample)?)?;
    let ev: VeffEvaluator = veff_assemble(tables, e.alpha, p.d);
    let (binding, _) = binding_analysis(&p, &base, Some(&ev), &cfg.lanczos_options())?;
    let exponent = binding.e_v;
    let d = p.d;
    let n = p.n_particles();
    let v_ext = |x: &[f64]| (0..n).map(|j| p.potential.value(&x[j * d..(j + 1) * d])).sum::<f64>();
    let veff = |x: &[f64]| ev.at(x);
    let w_eff = |x: &[f64]| v_ext(x) + veff(x);
    // particles moved apart: X ∝ (1, −1, 1, −1, …) along the first axis
    let dir: Vec<f64> = (0..n * d)
        .map(|i| if i % d == 0 { if (i / d).is_multiple_of(2) { 1.0 } else { -1.0 } } else { 0.0 })
        .collect();
    let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut points = Vec::new();
    for (i, &r) in e.radii.iter().enumerate() {
        let x: Vec<f64> = dir.iter().map(|v| v * r / dn).collect();
        let t = e.epsilon * r;
        let est = decay_envelope(&x, t, &w_eff, &p.masses, d, e.steps, e.paths, sub_seed(cfg.seed, 1200 + i as u64))?;
        points.push((r, t, est));
    }
    let rs: Vec<f64> = points.iter().map(|q| q.0).collect();
    let rate = |factor: f64| {
        let ys: Vec<f64> = points.iter().map(|(_, t, est)| t * factor * exponent + 0.5 * est.value.ln()).collect();
        -slope(&rs, &ys)
    };
    let delta_env = rate(1.0);
    let sensitivity = [rate(1.0 - e.exponent_perturbation), rate(1.0 + e.exponent_perturbation)];
    let delta_eig = binding.decay_rate.unwrap_or(f64::NAN);
    let r_last = *e.radii.last().unwrap_or(&1.0);
    let x_last: Vec<f64> = dir.iter().map(|v| v * r_last / dn).collect();
    let split = schwarz_check(
        &x_last,
        e.epsilon * r_last,
        0.5 * r_last,
        &v_ext,
        &veff,
        &p.masses,
        d,
        e.steps,
        e.paths,
        sub_seed(cfg.seed, 1299),
    );
    let passed = binding.bound
        && delta_env > 0.0
        && delta_eig >= 0.5 * delta_env
        && split.holds
        && split.decomposition_error == 0.0;
    Ok((
        passed,
        format!(
            "delta_env = {delta_env:.3} (±{:.0}% exponent: {:.3}..{:.3}), eigenvector rate {delta_eig:.3} (need >= {:.3}), bound={}, split holds={}",
            100.0 * e.exponent_perturbation,
            sensitivity[0],
            sensitivity[1],
            0.5 * delta_env,
            binding.bound,
            split.holds
        ),
        json!({
            "alpha": e.alpha, "epsilon": e.epsilon, "exponent": exponent,
            "points": points.iter().map(|(r, t, est)| json!({ "radius": r, "t": t, "value": est.value, "stderr": est.stderr })).collect::<Vec<_>>(),
            "delta_env": delta_env, "delta_env_sensitivity": sensitivity, "delta_eigenvector": delta_eig,
            "binding": binding, "schwarz": split,
        }),
    ))
}
