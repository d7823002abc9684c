//! Acceptance run: one PASS/FAIL line per criterion, INFO lines for context.
//!
//! Exits 0 even when a criterion fails so the rest of `cargo test` still runs;
//! set ACCEPTANCE_STRICT=1 to turn any FAIL into a nonzero exit.

use std::time::Instant;

use maslov_core::maslov::*;
use maslov_core::pde::{evolve, EvolveOptions, Perturbation, PdeGrid};
use maslov_core::singular::{assemble_singular_orbit, jump_off_point, singular_speed, y_constant, y_constant_quadrature, Segment};
use maslov_core::wave::{continue_pulse, solve_pulse, BvpOptions, WaveProfile};
use maslov_core::Params;

const A: f64 = 0.25;
const GAMMA: f64 = 1.0;

struct Card {
    fails: usize,
}

impl Card {
    fn line(&mut self, n: usize, ok: bool, msg: String) {
        if !ok {
            self.fails += 1;
        }
        println!("criterion {n:>2}: {} {msg}", if ok { "PASS" } else { "FAIL" });
    }

    fn info(&self, n: usize, msg: String) {
        println!("criterion {n:>2}: INFO {msg}");
    }
}

fn pulse(eps: f64) -> maslov_core::Result<WaveProfile> {
    let p = Params::singular(A, GAMMA, eps)?;
    solve_pulse(&p, &assemble_singular_orbit(&p)?, &BvpOptions::default())
}

/// Pulses for eps listed in decreasing order, each continued from the previous one.
/// Failures stay in place so the caller can report them.
fn pulses(eps: &[f64]) -> Vec<(f64, maslov_core::Result<WaveProfile>)> {
    let mut out: Vec<(f64, maslov_core::Result<WaveProfile>)> = Vec::new();
    for &e in eps {
        let prev = out.iter().rev().find_map(|(_, r)| r.as_ref().ok());
        let r = match prev {
            Some(w) => continue_pulse(w, e, &BvpOptions::default()),
            None => pulse(e),
        };
        out.push((e, r));
    }
    out
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.abs().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn main() {
    let mut card = Card { fails: 0 };
    let opts = MaslovOptions::default();
    let us = jump_off_point(A).0;

    // 1-3: ledger at eps = 1e-4
    let t0 = Instant::now();
    let small = pulse(1e-4).expect("pulse at eps = 1e-4");
    let ledger = compute_ledger(&small, &opts);
    let secs = t0.elapsed().as_secs_f64();
    match &ledger {
        Ok(l) => {
            let signs: Vec<i32> = l.entries.iter().map(|e| e.sign).collect();
            let ok = signs == [-1, 1, -1] && l.endpoint.n_plus == 1 && l.total == 0 && secs < 120.0;
            card.line(1, ok, format!("signs {signs:?} + endpoint n_+ = {}, total {}, {} points, {secs:.1} s", l.endpoint.n_plus, l.total, l.entries.len() + 1));
            if l.entries.len() == 3 {
                let (f, s, b) = (&l.entries[0], &l.entries[1], &l.entries[2]);
                let mirror = 2.0 * (1.0 + A) / 3.0 - l.reference.u_tau;
                let df = (f.u - (A + 0.5)).abs();
                let db = (us - b.u - (A + 0.5)).abs();
                let ds = (s.u - mirror).abs();
                card.line(
                    2,
                    df <= 0.02 && db <= 0.02 && ds <= 0.02,
                    format!("front u = {:.4} (err {df:.4}), u* - u at back = {:.4} (err {db:.4}), slow-right u = {:.4} vs mirror {mirror:.4} (err {ds:.4})", f.u, us - b.u, s.u),
                );
                let target = A * A - 0.25;
                let (ef, eb) = ((f.gamma - target).abs(), (b.gamma - target).abs());
                card.line(3, ef <= 0.01 && eb <= 0.01, format!("front Gamma = {:.4}, back Gamma = {:.4}, target {target}", f.gamma, b.gamma));
            } else {
                card.line(2, false, format!("expected 3 interior crossings, got {}", l.entries.len()));
                card.line(3, false, "no front/back pair to check".into());
            }
        }
        Err(e) => {
            card.line(1, false, format!("ledger failed: {e}"));
            card.line(2, false, "no ledger".into());
            card.line(3, false, "no ledger".into());
        }
    }

    // 4: speed convergence
    let c_star = singular_speed(A).unwrap();
    let runs = pulses(&[1e-3, 5e-4, 2e-4, 1e-4]);
    let solved: Vec<(f64, f64)> = runs.iter().filter_map(|(e, r)| r.as_ref().ok().map(|w| (*e, w.params.c - c_star))).collect();
    let missing: Vec<String> = runs.iter().filter_map(|(e, r)| r.as_ref().err().map(|err| format!("eps = {e}: {err}"))).collect();
    if missing.is_empty() {
        let s = slope(&solved);
        card.line(4, (0.7..=1.3).contains(&s), format!("slope {s:.3} over 4 eps values, c* = {c_star:.6}"));
    } else {
        card.line(4, false, format!("no pulse on the branch for {}", missing.join("; ")));
        for (e, dc) in &solved {
            card.info(4, format!("eps = {e}: c - c* = {dc:.5}"));
        }
        if solved.len() >= 2 {
            card.info(4, format!("slope over the solved eps = {:.3}", slope(&solved)));
        }
    }

    // 5: symplectic invariants on real lambda
    {
        let ode = bundle_ode();
        let (z0, z1) = small.z_range();
        let mut drift: f64 = 0.0;
        let mut lag: f64 = 0.0;
        let mut bad = None;
        for lam in [0.0, 0.01, 0.5, 1.0] {
            match symplectic_drift(&small, lam, z0, z1, 5.0, &ode) {
                Ok(d) => drift = drift.max(d),
                Err(e) => bad = Some(format!("drift at lambda = {lam}: {e}")),
            }
            if lam > 0.0 {
                for r in [unstable_bundle(&small, lam, z1, &ode), stable_bundle(&small, lam, z0, &ode)] {
                    match r {
                        Ok(p) => lag = lag.max(p.max_lagrangian_defect),
                        Err(e) => bad = Some(format!("bundle at lambda = {lam}: {e}")),
                    }
                }
            }
        }
        let front = unstable_bundle(&small, 0.0, 5.0, &ode).map(|p| p.max_lagrangian_defect);
        match (&front, &ledger) {
            (Ok(d), Ok(l)) => lag = lag.max(*d).max(l.max_lagrangian_defect),
            _ => bad = Some("lambda = 0 bundles failed".into()),
        }
        let ok = bad.is_none() && drift <= 1e-6 && lag <= 1e-8;
        card.line(5, ok, format!("max |e^cz omega - const|/|const| = {drift:.2e}, max Lagrangian residual = {lag:.2e}{}", bad.map(|b| format!(" ({b})")).unwrap_or_default()));
        if let Ok(l) = &ledger {
            card.info(5, format!("largest per-step projection on the anchored lambda = 0 bundle: {:.2e}", l.max_correction));
        }
    }

    // 6: corner p
    {
        let grid = interior_grid(0.01, 0.49, 50);
        let mut worst: f64 = 0.0;
        let mut positive = true;
        let mut err = None;
        for &a in &grid {
            match corner_p(a, GAMMA) {
                Ok(r) => {
                    positive &= r.min_h > 0.0;
                    worst = worst.max((r.min_h - corner_p_closed_form(a)).abs());
                }
                Err(e) => err = Some(e.to_string()),
            }
        }
        let q = corner_p(A, GAMMA).map(|r| r.min_h).unwrap_or(f64::NAN);
        let ok = err.is_none() && positive && worst <= 1e-10 && (q - 0.427051).abs() <= 1e-6;
        card.line(6, ok, format!("50 a-values positive = {positive}, max closed-form mismatch {worst:.1e}, value at a = 0.25: {q:.10}{}", err.map(|e| format!(" ({e})")).unwrap_or_default()));
    }

    // 7: corner q plus no crossing attributed to a corner
    {
        let grid = interior_grid(0.01, 0.49, 50);
        let mut n = 0;
        let mut min_det = f64::INFINITY;
        let mut err = None;
        for &a in &grid {
            let landing = jump_off_point(a).0 - 1.0;
            for f in [0.02, 0.25, 0.5, 0.75, 0.98] {
                match corner_q(a, GAMMA, f * landing) {
                    Ok(r) => {
                        n += 1;
                        min_det = min_det.min(r.det_entry).min(r.det_exit);
                    }
                    Err(e) => err = Some(e.to_string()),
                }
            }
        }
        let mut corner_hits = 0;
        let mut ledgers = 0;
        if let Ok(l) = &ledger {
            corner_hits += l.entries.iter().filter(|e| e.segment == Segment::Corner).count();
            ledgers += 1;
        }
        for th in [0.01, 0.05] {
            if let Ok(l) = compute_ledger(&small, &MaslovOptions { tau_fraction: th, ..opts }) {
                corner_hits += l.entries.iter().filter(|e| e.segment == Segment::Corner).count();
                ledgers += 1;
            }
        }
        let ok = err.is_none() && min_det > 0.0 && corner_hits == 0 && ledgers == 3;
        card.line(7, ok, format!("{n} (a, u_tau) pairs, smallest determinant {min_det:.3e}, corner crossings in {ledgers} ledgers: {corner_hits}{}", err.map(|e| format!(" ({e})")).unwrap_or_default()));
    }

    // 8: fixed planes on Lambda(2)
    {
        let want = vec![((1, 2), 3), ((1, 3), 2), ((2, 4), 1), ((3, 4), 0)];
        let mut ok = true;
        let mut msg = Vec::new();
        for u in [0.0, 1.0, us] {
            match shayman_classification(u, A, GAMMA) {
                Ok(r) => {
                    let d = r.unstable_dims();
                    ok &= d == want;
                    msg.push(format!("u = {u:.4}: {:?}", d.iter().map(|x| x.1).collect::<Vec<_>>()));
                }
                Err(e) => {
                    ok = false;
                    msg.push(format!("u = {u}: {e}"));
                }
            }
        }
        card.line(8, ok, format!("X12, X13, X24, X34 unstable dims {}", msg.join(", ")));
    }

    // 9: eigenvalue scan at eps = 1e-3
    let grid = lambda_grid(0.01, 1.0, 50);
    match runs.iter().find(|r| r.0 == 1e-3).map(|r| &r.1) {
        Some(Ok(w)) => match eigenvalue_scan(w, &grid, 0.0) {
            Ok(r) => card.line(9, r.sign_changes == 0, format!("{} sign changes over 50 points", r.sign_changes)),
            Err(e) => card.line(9, false, format!("scan failed: {e}")),
        },
        Some(Err(e)) => card.line(9, false, format!("no pulse at eps = 1e-3: {e}")),
        None => unreachable!(),
    }
    if let Some((_, Ok(w))) = runs.iter().find(|r| r.0 == 5e-4) {
        if let Ok(r) = eigenvalue_scan(w, &grid, 0.0) {
            let lo = r.points.iter().map(|p| p.detection.abs()).fold(f64::INFINITY, f64::min);
            card.info(9, format!("eps = 5e-4: {} sign changes over 50 points, smallest |detection| {lo:.2e}", r.sign_changes));
        }
    }

    // 10: constants
    {
        let k = y_constant(A);
        let kq = y_constant_quadrature(A).unwrap_or(f64::NAN);
        let (u_star, v_star) = jump_off_point(A);
        let pi_r2 = std::f64::consts::PI * std::f64::consts::SQRT_2;
        let ok = (kq - pi_r2).abs() <= 1e-6 && (k - pi_r2).abs() <= 1e-6 && u_star == 5.0 / 6.0 && (v_star - 35.0 / 432.0).abs() <= 1e-12;
        card.line(10, ok, format!("K quadrature {kq:.16}, closed form {k:.16}, u* = {u_star:.17}, v* = {v_star:.17}"));
    }

    // 11: PDE decay at eps = 1e-3
    let pde_opts = EvolveOptions { t_end: 200.0, ..Default::default() };
    let pde_report = |w: &WaveProfile| -> maslov_core::Result<(f64, f64, f64)> {
        let (z0, z1) = w.z_range();
        let g = PdeGrid::new(z0, z1, ((z1 - z0) / 0.2).round() as usize + 1, 0.05, w.params)?;
        let zb = w.back_position().unwrap_or(0.5 * z1);
        let bump = evolve(&g, w, Perturbation::Bump { amp: 0.05, center: zb / 2.0, width: 2.0 }, &pde_opts)?;
        let zero = evolve(&g, w, Perturbation::Zero, &pde_opts)?;
        let tr = evolve(&g, w, Perturbation::Translation { amp: 0.01 }, &pde_opts)?;
        let m = |d: &[f64]| d.iter().cloned().fold(0.0, f64::max);
        Ok((bump.ratio(), m(&zero.d), m(&tr.d)))
    };
    match runs.iter().find(|r| r.0 == 1e-3).map(|r| &r.1) {
        Some(Ok(w)) => match pde_report(w) {
            Ok((r, z, t)) => card.line(11, r <= 0.2 && z < 1e-3 && t < 1.5 * z, format!("bump ratio {r:.2e}, zero max d {z:.2e}, translation max d {t:.2e}")),
            Err(e) => card.line(11, false, format!("evolution failed: {e}")),
        },
        Some(Err(e)) => card.line(11, false, format!("no pulse at eps = 1e-3: {e}")),
        None => unreachable!(),
    }
    if let Some((_, Ok(w))) = runs.iter().find(|r| r.0 == 5e-4) {
        if let Ok((r, z, t)) = pde_report(w) {
            card.info(11, format!("eps = 5e-4, dx = 0.2: bump ratio {r:.2e}, zero max d {z:.2e}, translation max d {t:.2e}"));
        }
    }

    println!("{} of 11 criteria pass", 11 - card.fails);
    if card.fails > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
