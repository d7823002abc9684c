use anyhow::{anyhow, Result};
use maslov_core::maslov::{
    compute_ledger, corner_p, corner_q, eigenvalue_scan, interior_grid, lambda_grid, segment_at, shayman_classification,
};
use maslov_core::pde::{evolve, EvolveOptions, PdeGrid};
use maslov_core::singular::{assemble_singular_orbit, jump_off_point, melnikov_integrals, y_constant_quadrature};
use maslov_core::wave::{continue_pulse, solve_pulse, WaveProfile};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{report, to_csv, to_json, Artifacts, Cell};

fn pulse(cfg: &RunConfig) -> Result<WaveProfile> {
    let p = cfg.params();
    let orbit = assemble_singular_orbit(&p)?;
    Ok(solve_pulse(&p, &orbit, &cfg.bvp())?)
}

fn profile_rows(w: &WaveProfile) -> Vec<Vec<Cell>> {
    w.z.iter().zip(&w.states).map(|(&z, x)| vec![z.into(), x[0].into(), x[1].into(), x[2].into(), x[3].into()]).collect()
}

pub fn singular_orbit(cfg: &RunConfig) -> Result<()> {
    let p = cfg.params();
    let orbit = assemble_singular_orbit(&p)?;
    let mut art = Artifacts::new(&cfg.out_dir())?;
    let rows: Vec<Vec<Cell>> = orbit
        .rows()
        .into_iter()
        .map(|(s, x, seg)| vec![seg.tag().into(), s.into(), x[0].into(), x[1].into(), x[2].into(), x[3].into()])
        .collect();
    art.write("orbit.csv", &to_csv(cfg, &["segment", "s", "u", "v", "w", "y"], &rows)?)?;
    let (mf, mb) = melnikov_integrals(p.a)?;
    let body = json!({
        "c_star": orbit.c_star,
        "u_star": orbit.u_star,
        "v_star": orbit.v_star,
        "k": orbit.k,
        "k_quadrature": y_constant_quadrature(p.a)?,
        "melnikov_front": mf,
        "melnikov_back": mb,
        "p": orbit.p.as_slice(),
        "q": orbit.q.as_slice(),
        "q_hat": orbit.q_hat.as_slice(),
    });
    art.write("constants.json", &to_json(&report("singular_orbit", cfg, &body)?)?)?;
    art.finish("singular-orbit", cfg)
}

/// Least-squares slope of log|c - c*| against log eps.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.abs().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Returns whether every requested eps was solved.
pub fn solve_wave(cfg: &RunConfig) -> Result<bool> {
    let mut eps_list = if cfg.params.eps_list.is_empty() { vec![cfg.params.eps] } else { cfg.params.eps_list.clone() };
    eps_list.sort_by(|a, b| b.total_cmp(a));
    let p = cfg.params();
    let orbit = assemble_singular_orbit(&p)?;
    let opts = cfg.bvp();
    let mut art = Artifacts::new(&cfg.out_dir())?;
    let mut entries = Vec::new();
    let mut prev: Option<WaveProfile> = None;
    let mut fit = Vec::new();
    let mut all_ok = true;
    for (i, &eps) in eps_list.iter().enumerate() {
        let res = match &prev {
            Some(w) => continue_pulse(w, eps, &opts),
            None => solve_pulse(&p.with_eps(eps), &orbit, &opts),
        };
        match res {
            Ok(w) => {
                let dc = w.params.c - orbit.c_star;
                fit.push((eps, dc));
                let name = format!("profile_{i}.csv");
                art.write(&name, &to_csv(cfg, &["z", "u", "v", "w", "y"], &profile_rows(&w))?)?;
                entries.push(json!({
                    "eps": eps, "c": w.params.c, "c_minus_c_star": dc, "z_back": w.back_position(),
                    "nodes": w.z.len(), "residual": w.residual, "profile": name,
                }));
                prev = Some(w);
            }
            Err(e) => {
                all_ok = false;
                entries.push(json!({ "eps": eps, "error": e.to_string() }));
            }
        }
    }
    let body = json!({ "c_star": orbit.c_star, "entries": entries, "loglog_slope": loglog_slope(&fit) });
    art.write("speeds.json", &to_json(&report("solve_wave", cfg, &body)?)?)?;
    art.finish("solve-wave", cfg)?;
    Ok(all_ok)
}

pub fn maslov(cfg: &RunConfig) -> Result<String> {
    let w = pulse(cfg)?;
    let opts = cfg.maslov();
    let ledger = compute_ledger(&w, &opts)?;
    let zb = w.back_position().ok_or_else(|| anyhow!("profile has no back"))?;
    let mut art = Artifacts::new(&cfg.out_dir())?;
    let rows: Vec<Vec<Cell>> = ledger
        .beta_trace
        .iter()
        .map(|r| vec![r[0].into(), r[1].into(), r[2].into(), segment_at(&w, r[0], zb, &opts).tag().into()])
        .collect();
    art.write("beta.csv", &to_csv(cfg, &["z", "beta", "u", "segment"], &rows)?)?;
    let mut body = serde_json::to_value(&ledger)?;
    body["c"] = w.params.c.into();
    let text = to_json(&report("maslov_ledger", cfg, &body)?)?;
    art.write("ledger.json", &text)?;
    art.finish("maslov", cfg)?;
    Ok(text)
}

pub fn corners(cfg: &RunConfig) -> Result<()> {
    let c = &cfg.corners;
    let grid = interior_grid(c.a_min, c.a_max, c.points);
    let g = cfg.params.gamma;
    let mut p_rows = Vec::new();
    let mut q_rows = Vec::new();
    for &a in &grid {
        p_rows.push(serde_json::to_value(corner_p(a, g)?)?);
        let landing = jump_off_point(a).0 - 1.0;
        for &f in &c.u_tau_fractions {
            q_rows.push(serde_json::to_value(corner_q(a, g, f * landing)?)?);
        }
    }
    let a = cfg.params.a;
    let us = jump_off_point(a).0;
    let shay: Vec<_> = [0.0, 1.0, us].iter().map(|&u| shayman_classification(u, a, g)).collect::<Result<_, _>>()?;
    let body = json!({ "corner_p": p_rows, "corner_q": q_rows, "shayman": shay });
    let mut art = Artifacts::new(&cfg.out_dir())?;
    art.write("corners.json", &to_json(&report("corners", cfg, &body)?)?)?;
    art.finish("corners", cfg)
}

pub fn spectrum_scan(cfg: &RunConfig) -> Result<usize> {
    let w = pulse(cfg)?;
    let s = &cfg.scan;
    let r = eigenvalue_scan(&w, &lambda_grid(s.lambda_min, s.lambda_max, s.points), s.z_match)?;
    let mut art = Artifacts::new(&cfg.out_dir())?;
    let rows: Vec<Vec<Cell>> =
        r.points.iter().map(|p| vec![p.lambda.into(), p.detection.into(), p.max_lagrangian_defect.into()]).collect();
    art.write("scan.csv", &to_csv(cfg, &["lambda", "detection", "lagrangian_defect"], &rows)?)?;
    let body = json!({ "c": w.params.c, "z_match": r.z_match, "sign_changes": r.sign_changes });
    art.write("scan.json", &to_json(&report("spectrum_scan", cfg, &body)?)?)?;
    art.finish("spectrum-scan", cfg)?;
    Ok(r.sign_changes)
}

pub fn pde_sim(cfg: &RunConfig) -> Result<()> {
    let w = pulse(cfg)?;
    let (z0, z1) = w.z_range();
    let pc = &cfg.pde;
    let nx = ((z1 - z0) / pc.dx).round() as usize + 1;
    let grid = PdeGrid::new(z0, z1, nx, pc.dt, w.params)?;
    let opts = EvolveOptions { t_end: pc.t_end, sample_every: pc.sample_every, shift_window: pc.shift_window };
    let zb = w.back_position().ok_or_else(|| anyhow!("profile has no back"))?;
    let mut art = Artifacts::new(&cfg.out_dir())?;
    let mut summary = Vec::new();
    for (name, pert) in cfg.perturbations(zb) {
        let tr = evolve(&grid, &w, pert, &opts)?;
        let rows: Vec<Vec<Cell>> =
            (0..tr.t.len()).map(|i| vec![tr.t[i].into(), tr.d[i].into(), tr.k[i].into(), tr.max_u[i].into()]).collect();
        let file = format!("decay_{name}.csv");
        art.write(&file, &to_csv(cfg, &["t", "d", "k", "max_u"], &rows)?)?;
        summary.push(json!({
            "perturbation": pert, "d0": tr.d[0], "d_end": tr.d.last(), "ratio": tr.ratio(),
            "max_d": tr.d.iter().cloned().fold(0.0, f64::max), "trace": file,
        }));
    }
    let body = json!({ "c": w.params.c, "dx": grid.dx(), "front_nodes": grid.front_nodes(&w), "runs": summary });
    art.write("pde.json", &to_json(&report("pde_sim", cfg, &body)?)?)?;
    art.finish("pde-sim", cfg)
}
