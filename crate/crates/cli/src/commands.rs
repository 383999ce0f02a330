//! Subcommand bodies. Each writes its reports through an [`Emitter`].

use nelson_lab::acceptance::{run_criterion, CriterionOutcome, CRITERIA};
use nelson_lab::config::LabConfig;
use nelson_lab::effpot::{compute_ediag, potential_grid, veff_assemble, PairTables};
use nelson_lab::fiber::{default_p_samples, dispersion_scan};
use nelson_lab::fock::{certify_energy_comparison, scaling_limit_trend, select_modes, Truncation};
use nelson_lab::linalg::LanczosOptions;
use nelson_lab::model::make_grid;
use nelson_lab::spectral::binding_analysis;
use nelson_lab::stability::{coupling_window_scan, StabilitySetup};
use serde_json::json;

use crate::output::Emitter;
use crate::plot::Plot;
use crate::CliError;

pub fn effective(cfg: &LabConfig, out: &mut Emitter) -> Result<(), CliError> {
    let p = &cfg.model;
    let base = cfg.grid.base(p.d)?;
    let pg = potential_grid(&base, p.d, cfg.grid.potential_oversample)?;
    let tables = out.stage("pair-potentials", || PairTables::compute(p, &pg))?;
    let e_diag = compute_ediag(p, &pg)?;
    let mut pairs = Vec::new();
    for t in tables.tables() {
        let (i, j) = t.pair();
        out.csv(&format!("w_{i}_{j}.csv"), &t.to_csv())?;
        pairs.push(json!({ "i": i, "j": j, "w0": t.w0(), "min": t.min(), "edge_max": t.edge_max() }));
    }
    out.json(
        "effective.json",
        cfg,
        &json!({ "alpha": p.alpha, "e_diag": e_diag, "potential_grid": { "n": pg.n(), "length": pg.length() }, "pairs": pairs }),
    )
}

pub fn spectrum(cfg: &LabConfig, out: &mut Emitter) -> Result<(), CliError> {
    let p = &cfg.model;
    let base = cfg.grid.base(p.d)?;
    let pg = potential_grid(&base, p.d, cfg.grid.potential_oversample)?;
    let tables = PairTables::compute(p, &pg)?;
    let ev = veff_assemble(tables, p.alpha, p.d);
    let opts = cfg.lanczos_options();
    out.seed("lanczos", opts.seed);
    let (report, _) = out.stage("binding-analysis", || binding_analysis(p, &base, Some(&ev), &opts))?;
    let mut csv = String::from("beta,complement,e_v_beta,e_0_complement,sum\n");
    for r in &report.threshold.rows {
        let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        csv.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.12e}\n",
            join(&r.beta),
            join(&r.complement),
            r.e_v_beta,
            r.e_0_complement,
            r.sum
        ));
    }
    out.csv("thresholds.csv", &csv)?;
    out.json("spectrum.json", cfg, &report)
}

pub fn stability_scan(cfg: &LabConfig, out: &mut Emitter) -> Result<(), CliError> {
    let p = &cfg.model;
    let base = cfg.grid.base(p.d)?;
    let pg = potential_grid(&base, p.d, cfg.grid.potential_oversample)?;
    let opts = cfg.lanczos_options();
    out.seed("lanczos", opts.seed);
    let setup = StabilitySetup::new(p, &base, &pg, opts)?;
    let scan = out.stage("coupling-scan", || coupling_window_scan(&cfg.scan.alphas, cfg.scan.kappa, p, &setup))?;
    out.csv("scan.csv", &scan.to_csv())?;
    let plot = Plot::new("coupling scan", "alpha", "energy")
        .series("binding margin", scan.rows.iter().map(|r| (r.alpha, r.binding_margin)).collect())
        .series("E^V", scan.rows.iter().map(|r| (r.alpha, r.e_v)).collect());
    out.plot("scan_plot", &plot)?;
    out.json("scan.json", cfg, &scan)
}

pub fn fiber(cfg: &LabConfig, out: &mut Emitter) -> Result<(), CliError> {
    let p = &cfg.model;
    if p.n_particles() < 2 {
        return Err(CliError::Validation("fiber needs at least two particles (model.masses)".into()));
    }
    let g = make_grid(p.d * (p.n_particles() - 1), cfg.fiber.n, cfg.fiber.length)?;
    let pg = potential_grid(&g.with_dims(p.d), p.d, cfg.grid.potential_oversample)?;
    let tables = PairTables::compute(p, &pg)?;
    let ps = default_p_samples(&g, p.d);
    let opts = cfg.lanczos_options();
    out.seed("lanczos", opts.seed);
    let mut curves = Vec::new();
    let mut plot = Plot::new("fiber dispersion", "|P|", "E(P)");
    for &alpha in &cfg.fiber.alphas {
        let ev = veff_assemble(tables.clone(), alpha, p.d);
        let curve = out.stage(&format!("dispersion alpha={alpha}"), || {
            dispersion_scan(&ps, &p.with_alpha(alpha), &g, Some(&ev), &opts)
        })?;
        out.csv(&format!("dispersion_alpha_{alpha}.csv"), &curve.to_csv())?;
        let pts = curve
            .samples
            .iter()
            .filter_map(|s| s.energy.map(|e| (s.p.iter().map(|v| v * v).sum::<f64>().sqrt(), e)))
            .collect();
        plot = plot.series(&format!("alpha={alpha}"), pts);
        curves.push(json!({ "alpha": alpha, "curve": curve }));
    }
    out.plot("dispersion_plot", &plot)?;
    out.json("fiber.json", cfg, &curves)
}

fn outcomes_csv(outcomes: &[CriterionOutcome]) -> String {
    let mut csv = String::from("id,name,passed,summary\n");
    for o in outcomes {
        csv.push_str(&format!("{},{},{},\"{}\"\n", o.id, o.name, o.passed, o.summary.replace('"', "'")));
    }
    csv
}

fn run_checks(ids: &[u8], cfg: &LabConfig, out: &mut Emitter) -> Vec<CriterionOutcome> {
    ids.iter()
        .map(|&id| {
            let o = out.stage(&format!("criterion {id}"), || run_criterion(id, cfg));
            println!("{}", o.line());
            o
        })
        .collect()
}

fn failures(outcomes: &[CriterionOutcome]) -> Result<(), CliError> {
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| format!("{}: {}", o.id, o.summary)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("failed checks: {}", failed.join("; "))))
    }
}

pub fn fk_verify(cfg: &LabConfig, out: &mut Emitter) -> Result<(), CliError> {
    out.seed("levy", cfg.seed);
    let outcomes = run_checks(&[5, 6, 7], cfg, out);
    out.csv("fk_verify.csv", &outcomes_csv(&outcomes))?;
    if let Some(ladder) = outcomes.iter().find(|o| o.id == 7).and_then(|o| o.details.get("ladder")) {
        let pts: Vec<(f64, f64)> = ladder["estimates"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|e| Some((e["a"].as_f64()?, e["probability"].as_f64()?.ln())))
            .collect();
        out.plot("exceedance_plot", &Plot::new("exceedance", "a", "ln P(sup |X| > a)").series("ln P", pts))?;
    }
    out.json("fk_verify.json", cfg, &outcomes)?;
    failures(&outcomes)
}

pub fn fock_certify(cfg: &LabConfig, out: &mut Emitter) -> Result<(), CliError> {
    let f = &cfg.fock;
    let opts = LanczosOptions {
        krylov_dim: f.krylov_dim,
        ..cfg.lanczos_options()
    };
    out.seed("lanczos", opts.seed);
    let p = cfg.model.with_alpha(f.alpha).with_kappa(f.kappa);
    let g = make_grid(p.d * p.n_particles(), f.n, f.length)?;
    let pool = select_modes(&p, &g.with_dims(p.d), f.modes, false)?;
    let ladder: Vec<Truncation> = f.ladder.iter().map(|&n| Truncation { modes: f.modes, n_max: n }).collect();
    let cert = out.stage("certificate", || certify_energy_comparison(&p, &g, &pool, &ladder, &opts))?;
    let trend_trunc = Truncation {
        modes: f.modes,
        n_max: f.trend_n_max,
    };
    let trend = out.stage("kappa-trend", || scaling_limit_trend(&p, &g, &pool, &f.kappas, trend_trunc, &opts))?;
    out.csv("kappa_trend.csv", &trend.to_csv())?;
    out.plot(
        "kappa_trend_plot",
        &Plot::new("scaling-limit trend", "kappa", "|E_trunc - target|")
            .series("gap", trend.rows.iter().map(|r| (r.kappa, r.gap)).collect()),
    )?;
    out.json("fock_certify.json", cfg, &json!({ "modes": pool, "certificate": cert, "kappa_trend": trend }))
}

pub fn accept(cfg: &LabConfig, criteria: &[u8], out: &mut Emitter) -> Result<(), CliError> {
    if let Some(bad) = criteria.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(CliError::Validation(format!("unknown criterion {bad} (expected 1-12)")));
    }
    let ids: Vec<u8> = if criteria.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        criteria.to_vec()
    };
    out.seed("acceptance", cfg.seed);
    let outcomes = run_checks(&ids, cfg, out);
    let n = outcomes.iter().filter(|o| o.passed).count();
    println!("{n}/{} criteria passed", outcomes.len());
    out.csv("acceptance.csv", &outcomes_csv(&outcomes))?;
    out.json("acceptance.json", cfg, &outcomes)?;
    failures(&outcomes)
}
