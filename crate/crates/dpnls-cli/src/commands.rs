//! The commands. Each writes its CSV artifacts to the output directory and
//! returns the checks it made.

use crate::{write_file, Check, CliError, Outcome, RunConfig};
use dpnls::analysis::{coercivity_check_s, fit_rate, rate_fit_csv, BlowupTime, RateFit};
use dpnls::evolve::{
    evolve_interval, exact_s, run_minimal_mass, EvolutionConfig, FieldState, MinimalMassConfig, StopReason,
};
use dpnls::groundstate::{exact_q_1d, solve_q, solve_qm, GroundState, QmOptions};
use dpnls::linops::LinearizedPair;
use dpnls::numcore::csv::{fmt17, real_field_csv, row};
use dpnls::numcore::{line_fit, OdeOptions, RadialGrid};
use dpnls::profile::{build_profile, ProfileCoeffs};
use dpnls::reducedlaw::{app_state, init_data, integrate_reduced, LawConstants, LawEnergy};
use dpnls::Model;
use std::f64::consts::PI;
use std::sync::Arc;

fn grid(d: usize, n: usize, r: f64) -> Result<Arc<RadialGrid>, CliError> {
    Ok(Arc::new(RadialGrid::new(d, n, r)?))
}

fn csv_table(header: &str, rows: &[Vec<f64>]) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&row(r));
        s.push('\n');
    }
    s
}

fn evolution_config(cfg: &RunConfig, model: Model, eps: f64, g: Arc<RadialGrid>, dt: f64) -> Result<EvolutionConfig, CliError> {
    let mut e = EvolutionConfig::new(model, eps, g, dt)?;
    e.scheme = cfg.scheme()?;
    e.implicit_tol = cfg.numerics.implicit_tol;
    Ok(e)
}

/// Q on the elliptic grid (criterion 1) and the small solitary waves Q_M (criterion 11).
pub fn groundstate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (p, n) = (&cfg.params, &cfg.numerics);
    let model = cfg.model()?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let gs = solve_q(p.d, grid(p.d, n.n, n.r_max)?)?;
    write_file(dir, "groundstate.csv", &format!("d,p,mass,grad2,yQ2,omega\n{}\n", gs.csv_row()))?;
    write_file(dir, "q.csv", &real_field_csv(gs.field()))?;
    out.push(Check::below(1, "q_residual", gs.residual(), 1e-8));
    if p.d == 1 {
        let sup = gs
            .grid()
            .nodes()
            .iter()
            .zip(gs.field().values())
            .map(|(r, v)| (v - exact_q_1d(*r)).abs())
            .fold(0.0, f64::max);
        out.push(Check::below(1, "q_sup_error", sup, 1e-7));
        let exact = PI * 3f64.sqrt() / 2.0;
        out.push(Check::below(1, "q_mass_rel_error", (gs.mass - exact).abs() / exact, 1e-7));
    }
    if p.epsilon == 1 {
        let gq = grid(p.d, n.qm_n, n.qm_r_max)?;
        let mut rows = Vec::new();
        for frac in [0.5, 0.8] {
            let qm = solve_qm(model, frac * gs.l2(), gs.l2(), gq.clone(), QmOptions::default())?;
            out.push(Check::above(11, format!("omega_{frac}"), qm.omega(), 0.0));
            out.push(Check::below(11, format!("energy_{frac}"), qm.energy(), 0.0));
            rows.push(vec![frac, qm.l2(), qm.omega(), qm.energy(), qm.residual()]);
        }
        let de = rows[1][3] - rows[0][3];
        out.push(Check::below(11, "I_increment_0.5_to_0.8", de, 0.0));
        write_file(dir, "qm.csv", &csv_table("fraction,M,omega,energy,residual", &rows))?;
    }
    Ok(out)
}

/// Generalised-kernel identities (criterion 2) and coercivity in d = 1, 2, 3 (criterion 3).
pub fn linops_audit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (p, n) = (&cfg.params, &cfg.numerics);
    let mut out = Outcome::default();
    let pair = |d: usize, nn: usize| -> Result<LinearizedPair, CliError> {
        Ok(LinearizedPair::new(solve_q(d, grid(d, nn, n.r_max)?)?)?)
    };
    let coarse = pair(p.d, n.n / 2)?.algebra_residuals();
    let fine = pair(p.d, n.n)?.algebra_residuals();
    let mut rows = Vec::new();
    for (nn, r) in [(n.n / 2, coarse), (n.n, fine)] {
        let mut v = vec![p.d as f64, nn as f64];
        v.extend(r.as_array());
        rows.push(v);
    }
    write_file(&cfg.output.dir, "linops.csv", &csv_table("d,N,lminus_q,lplus_lambda_q,lminus_y2q,lplus_rho", &rows))?;
    out.push(Check::below(2, "algebra_max_residual", fine.max(), 1e-5));
    // L₋Q and L₊ρ hold to round-off on every grid; the Λ identities converge
    out.push(Check::below(2, "lminus_q_roundoff", fine.lminus_q, 1e-9));
    out.push(Check::below(2, "lplus_rho_roundoff", fine.lplus_rho, 1e-9));
    for (name, a, b) in [
        ("order_lplus_lambda_q", coarse.lplus_lambda_q, fine.lplus_lambda_q),
        ("order_lminus_y2q", coarse.lminus_y2q, fine.lminus_y2q),
    ] {
        let order = (a / b).log2();
        out.push(Check::new(2, name, order, ">= 1.8", order >= 1.8));
    }
    let mut rows = Vec::new();
    for d in 1..=3 {
        let rep = pair(d, n.n / 2)?.coercivity_mu()?;
        out.push(Check::above(3, format!("mu_d{d}"), rep.mu, 0.0));
        out.push(Check::below(3, format!("mu_plus_free_d{d}"), rep.mu_plus_free, 0.0));
        rows.push(vec![d as f64, (n.n / 2) as f64, rep.mu, rep.mu_plus, rep.mu_minus, rep.mu_plus_free]);
    }
    write_file(&cfg.output.dir, "coercivity.csv", &csv_table("d,N,mu,mu_plus,mu_minus,mu_plus_free", &rows))?;
    Ok(out)
}

fn lambdas_for_scaling() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect()
}

/// β_{0,0} (criterion 4) and the scaling of Ψ_K along the law for K = 1, 2 (criterion 5).
pub fn profile_build(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (p, n) = (&cfg.params, &cfg.numerics);
    let model = cfg.model()?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let gs = solve_q(p.d, grid(p.d, n.n, n.r_max)?)?;
    let closed = 2.0 * p.d as f64 * (p.p - 1.0) / (p.p + 1.0) * gs.p_norm(p.p + 1.0) / gs.yq2;
    let pair = Arc::new(LinearizedPair::new(gs)?);
    let prof = build_profile(p.k, model, pair.clone())?;
    prof.write_archive(&dir.join("profile")).map_err(CliError::io("writing the profile archive"))?;
    let sys: Vec<Vec<f64>> = prof
        .system_residuals()?
        .iter()
        .map(|r| {
            let beta = prof.term(r.j, r.k).map_or(f64::NAN, |t| t.beta);
            vec![r.j as f64, r.k as f64, beta, r.plus, r.minus, r.solvability]
        })
        .collect();
    write_file(dir, "profile_systems.csv", &csv_table("j,k,beta,residual_plus,residual_minus,solvability", &sys))?;
    let beta = prof.beta();
    out.push(Check::above(4, "beta", beta, 0.0));
    out.push(Check::below(4, "beta_rel_error", (beta / closed - 1.0).abs(), 1e-6));

    let lams = lambdas_for_scaling();
    let mut rows = Vec::new();
    for k in [1usize, 2] {
        let pk = if k == p.k { prof.clone() } else { build_profile(k, model, pair.clone())? };
        let sc = pk.residual_scaling(&lams)?;
        for i in 0..lams.len() {
            rows.push(vec![k as f64, lams[i], sc.w[i], sc.sup[i], sc.norm[i]]);
        }
        let want = k as f64 + 2.0 - 0.2;
        out.push(Check::new(5, format!("psi_slope_K{k}"), sc.fit.slope, format!(">= {want}"), sc.fit.slope >= want));
    }
    write_file(dir, "residual_scaling.csv", &csv_table("K,lambda,w,sup_weighted_psi,norm_weighted_psi", &rows))?;
    Ok(out)
}

fn law_constants(cfg: &RunConfig, g: Arc<RadialGrid>) -> Result<(ProfileCoeffs, LawConstants), CliError> {
    let model = cfg.model()?;
    let pair = Arc::new(LinearizedPair::new(solve_q(model.d, g)?)?);
    let prof = build_profile(cfg.params.k, model, pair)?;
    let law = LawConstants::from_profile(&prof, cfg.params.e0, cfg.numerics.lambda0)?;
    Ok((prof, law))
}

/// The reduced law (criterion 6) and the choice of final data (criterion 7).
pub fn law_integrate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (p, n) = (&cfg.params, &cfg.numerics);
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let (_, c) = law_constants(cfg, grid(p.d, n.n, n.r_max)?)?;
    let mut worst: f64 = 0.0;
    for s in [1.0, 10.0, 1e2, 1e4] {
        let (r1, r2) = c.app_law_residual(s)?;
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    out.push(Check::below(6, "app_law_residual", worst, 1e-10));

    let th = |b: f64, l: f64| c.theta_one_term(b, l);
    let traj = integrate_reduced(&c, app_state(&c, n.s1)?, 10.0 * n.s1, &th, OdeOptions::default())?;
    write_file(dir, "law.csv", &traj.csv())?;
    let inv0 = traj.invariant(&traj.states[0]);
    let drift = traj
        .states
        .iter()
        .map(|st| (traj.invariant(st) - inv0).abs() / (st.b * st.b / (st.lambda * st.lambda)))
        .fold(0.0, f64::max);
    out.push(Check::below(6, "invariant_drift", drift, 1e-8));
    let lt: Vec<f64> = traj.states.iter().map(|st| (-st.t).ln()).collect();
    let ll: Vec<f64> = traj.states.iter().map(|st| st.lambda.ln()).collect();
    let lb: Vec<f64> = traj.states.iter().map(|st| st.b.ln()).collect();
    let (fl, fb) = (line_fit(&lt, &ll)?, line_fit(&lt, &lb)?);
    let b_exp = c.alpha / (4.0 - c.alpha);
    out.push(Check::below(6, "lambda_exponent_error", (fl.slope - c.sigma).abs(), 1e-3));
    out.push(Check::below(6, "b_exponent_error", (fb.slope - b_exp).abs(), 1e-3));
    write_file(
        dir,
        "law_fit.csv",
        &format!("quantity,exponent,expected\nlambda,{},{}\nb,{},{}\n", fmt17(fl.slope), fmt17(c.sigma), fmt17(fb.slope), fmt17(b_exp)),
    )?;

    let mut rows = Vec::new();
    let mut prev = f64::INFINITY;
    let mut decreasing = true;
    for s1 in [1e2, 1e3, 1e4] {
        let d = init_data(&c, s1, LawEnergy::TwoTerm)?;
        out.push(Check::below(7, format!("f_defect_rel_s{s1}"), d.f_defect.abs() / s1, 1e-10));
        decreasing &= d.proximity < prev;
        prev = d.proximity;
        rows.push(vec![s1, d.b1, d.lambda1, d.proximity, d.h_at_app, d.f_defect, d.e_defect]);
    }
    out.push(Check::new(7, "proximity_decreasing", prev, "decreasing in s1", decreasing));
    write_file(dir, "init_data.csv", &csv_table("s1,b1,lambda1,proximity,h_at_app,f_defect,e_defect", &rows))?;
    Ok(out)
}

fn critical_ground_state(d: usize, n: usize, r: f64) -> Result<GroundState, CliError> {
    Ok(solve_q(d, grid(d, n, r)?)?)
}

/// Critical evolution of S(t) from t = −1 to −0.2 against the closed form (criterion 8).
pub fn evolve_validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (p, n) = (&cfg.params, &cfg.numerics);
    let model = cfg.model()?;
    let mut out = Outcome::default();
    let gs = critical_ground_state(p.d, 4 * n.evolve_n, n.evolve_r_max)?;
    let mut rows = Vec::new();
    for (nn, dt) in [(n.evolve_n, n.dt), (2 * n.evolve_n, 0.5 * n.dt)] {
        let g = grid(p.d, nn, n.evolve_r_max)?;
        let ecfg = evolution_config(cfg, model, 0.0, g.clone(), dt)?;
        let st = FieldState::new(-1.0, exact_s(-1.0, g.clone(), &gs)?);
        let rec = evolve_interval(st, &ecfg, -0.2, 100)?;
        let exact = exact_s(-0.2, g, &gs)?;
        let err = if rec.stop == StopReason::Reached {
            rec.final_state.w.sub(&exact).norm() / exact.norm()
        } else {
            f64::NAN
        };
        rows.push(vec![nn as f64, dt, err, rec.mass_drift(), rec.energy_drift()]);
    }
    write_file(&cfg.output.dir, "evolve_validate.csv", &csv_table("N,dt,rel_l2_error,mass_drift,energy_drift", &rows))?;
    out.push(Check::below(8, "rel_l2_error", rows[0][2], 1e-3));
    let ratio = rows[0][2] / rows[1][2];
    out.push(Check::new(8, "refinement_ratio", ratio, ">= 3", ratio >= 3.0));
    Ok(out)
}

/// The minimal-mass run: rates (criterion 9) and Lyapunov monitors (criterion 12).
pub fn minimal_mass(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (p, n) = (&cfg.params, &cfg.numerics);
    let model = cfg.model()?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let g = grid(p.d, n.evolve_n, n.evolve_r_max)?;
    let (prof, law) = law_constants(cfg, g.clone())?;
    let ecfg = evolution_config(cfg, model, p.epsilon as f64, g, n.dt)?;
    let t1 = match n.t1 {
        Some(t1) => t1,
        None => law.time_of_s(n.s1),
    };
    let mut mcfg = MinimalMassConfig::new(ecfg, t1);
    mcfg.t_stop_factor = n.t_stop_factor;
    mcfg.decompose_every = n.decompose_every;
    mcfg.frame_kappa = n.frame_kappa;
    mcfg.morawetz_a = n.a;
    mcfg.tube = n.tube;
    let run = run_minimal_mass(&prof, &law, &mcfg)?;
    let pts = &run.trajectory.points;
    write_file(dir, "trajectory.csv", &run.trajectory.run_csv())?;
    write_file(dir, "analysis.csv", &run.trajectory.analysis_csv())?;
    write_file(
        dir,
        "minimal_mass.csv",
        &format!(
            "stop,t1,s1,lambda1,b1,mass_defect,C_lambda,sigma\n{:?},{}\n",
            run.stop,
            row(&[run.t1, run.init.s1, run.init.lambda1, run.init.b1, run.mass_defect, law.c_lambda, law.sigma])
        ),
    )?;
    out.push(Check::new(9, "stopped_on_scale", pts.len() as f64, "stop = Reached", run.stop == StopReason::Reached));

    let t: Vec<f64> = pts.iter().map(|q| q.t).collect();
    let lam: Vec<f64> = pts.iter().map(|q| q.lambda).collect();
    let grad: Vec<f64> = pts.iter().map(|q| q.grad_norm).collect();
    let window = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(0.0));
    let fits: Vec<Option<RateFit>> = [&lam, &grad]
        .iter()
        .map(|q| fit_rate(&t, q, window, BlowupTime::Fitted, 1.0).ok())
        .collect();
    let sigma = law.sigma;
    let nan = f64::NAN;
    let (fl, fg) = (fits[0], fits[1]);
    let le = fl.map_or(nan, |f| f.exponent);
    let ge = fg.map_or(nan, |f| f.exponent);
    let amp = fl.map_or(nan, |f| f.amplitude / law.c_lambda - 1.0);
    out.push(Check::new(9, "lambda_decades", fl.map_or(nan, |f| f.decades), ">= 1", fl.is_some()));
    out.push(Check::new(9, "lambda_exponent_error", (le - sigma).abs(), "<= 0.035", (le - sigma).abs() <= 0.035));
    out.push(Check::new(9, "grad_exponent_error", (ge + sigma).abs(), "<= 0.035", (ge + sigma).abs() <= 0.035));
    out.push(Check::new(9, "lambda_amplitude_rel_error", amp.abs(), "<= 0.1", amp.abs() <= 0.1));
    let mut rows = Vec::new();
    if let Some(f) = fl {
        rows.push(("lambda", f, sigma));
    }
    if let Some(f) = fg {
        rows.push(("grad_norm", f, -sigma));
    }
    let mut fit_csv = rate_fit_csv(&rows);
    fit_csv.push_str(&format!("t_star,{},,,,,\n", fmt17(fl.map_or(nan, |f| f.t_star))));
    write_file(dir, "rate_fit.csv", &fit_csv)?;

    let order = p.k;
    let coer = coercivity_check_s(pts, order);
    out.push(Check::new(12, "S_floor_violations", coer.violations as f64, "= 0", coer.passed));
    let small: Vec<f64> = pts
        .iter()
        .filter(|q| q.eps_h1 > 0.0 && q.eps_h1 <= 1e-3 && q.quad_form > 0.0)
        .map(|q| (q.h / q.quad_form - 1.0).abs())
        .collect();
    let worst = small.iter().copied().fold(if small.is_empty() { nan } else { 0.0 }, f64::max);
    out.push(Check::new(12, "H_vs_quadratic_form", worst, "<= 0.1", worst <= 0.1));
    Ok(out)
}

/// Defocusing run from Q: the gradient stays bounded (criterion 10).
pub fn defocusing_sanity(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (p, n) = (&cfg.params, &cfg.numerics);
    let model = cfg.model()?;
    let mut out = Outcome::default();
    let g = grid(p.d, n.defocus_n, n.defocus_r_max)?;
    let gs = solve_q(p.d, g.clone())?;
    let mut ecfg = evolution_config(cfg, model, -1.0, g, n.defocus_dt)?;
    ecfg.blowup_factor = 3.0;
    let rec = evolve_interval(FieldState::new(0.0, gs.field().to_complex()), &ecfg, n.defocus_t_end, 10)?;
    write_file(&cfg.output.dir, "defocusing.csv", &rec.csv())?;
    let g0 = rec.summaries[0].grad_norm;
    let ratio = rec.summaries.iter().map(|s| s.grad_norm / g0).fold(0.0, f64::max);
    out.push(Check::below(10, "max_grad_ratio", ratio, 3.0));
    out.push(Check::new(10, "reached_t_end", rec.final_state.t, format!(">= {}", n.defocus_t_end), rec.stop == StopReason::Reached));
    out.push(Check::below(10, "mass_drift", rec.mass_drift(), 1e-8));
    Ok(out)
}

/// Collect every `summary_*.csv` in the output directory into `report.csv`.
pub fn report(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = &cfg.output.dir;
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(CliError::io(format!("reading {}", dir.display())))?
        .filter_map(|e| e.ok().and_then(|e| e.file_name().into_string().ok()))
        .filter(|n| n.starts_with("summary_") && n.ends_with(".csv"))
        .collect();
    names.sort();
    let mut out = Outcome::default();
    let mut table = String::from("command,criterion,check,value,threshold,passed\n");
    for name in &names {
        let command = &name["summary_".len()..name.len() - 4];
        let path = dir.join(name);
        let text = std::fs::read_to_string(&path).map_err(CliError::io(format!("reading {}", path.display())))?;
        for (i, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || CliError::Config(format!("{}: malformed line {}", path.display(), i + 1));
            if f.len() != 5 {
                return Err(bad());
            }
            let check = Check {
                criterion: f[0].parse().map_err(|_| bad())?,
                name: format!("{command}/{}", f[1]),
                value: f[2].parse().map_err(|_| bad())?,
                threshold: f[3].to_string(),
                passed: f[4].parse().map_err(|_| bad())?,
            };
            table.push_str(&format!("{command},{line}\n"));
            out.push(check);
        }
    }
    out.checks.sort_by_key(|c| c.criterion);
    write_file(dir, "report.csv", &table)?;
    Ok(out)
}
