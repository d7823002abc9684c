use std::sync::OnceLock;

use maslov_core::pde::*;
use maslov_core::singular::assemble_singular_orbit;
use maslov_core::wave::{solve_pulse, BvpOptions, WaveProfile};
use maslov_core::Params;

fn pulse() -> &'static WaveProfile {
    static W: OnceLock<WaveProfile> = OnceLock::new();
    W.get_or_init(|| {
        let p = Params::singular(0.25, 1.0, 5e-4).unwrap();
        solve_pulse(&p, &assemble_singular_orbit(&p).unwrap(), &BvpOptions::default()).unwrap()
    })
}

fn grid(dx: f64) -> PdeGrid {
    let (z0, z1) = pulse().z_range();
    PdeGrid::new(z0, z1, ((z1 - z0) / dx).round() as usize + 1, 0.05, pulse().params).unwrap()
}

fn short() -> EvolveOptions {
    EvolveOptions { t_end: 100.0, ..Default::default() }
}

#[test]
fn bump_decays() {
    let zb = pulse().back_position().unwrap();
    let g = grid(0.2);
    assert!(g.front_nodes(pulse()) >= 20);
    let r = evolve(&g, pulse(), Perturbation::Bump { amp: 0.05, center: zb / 2.0, width: 2.0 }, &short()).unwrap();
    assert!(r.ratio() <= 0.2, "ratio {}", r.ratio());
}

#[test]
fn steady_and_translated_stay_at_discretization_level() {
    let g = grid(0.2);
    let z = evolve(&g, pulse(), Perturbation::Zero, &short()).unwrap();
    let t = evolve(&g, pulse(), Perturbation::Translation { amp: 0.01 }, &short()).unwrap();
    let zmax = z.d.iter().cloned().fold(0.0, f64::max);
    let tmax = t.d.iter().cloned().fold(0.0, f64::max);
    assert!(zmax < 1e-3, "{zmax}");
    assert!(tmax < 1.5 * zmax, "{tmax} vs {zmax}");
    // the translated run should settle on the shifted copy
    assert!((t.k.last().unwrap() - z.k.last().unwrap() - 0.01).abs() < 2e-3);
}

#[test]
fn steady_drift_is_second_order() {
    let a = evolve(&grid(0.2), pulse(), Perturbation::Zero, &short()).unwrap();
    let b = evolve(&grid(0.1), pulse(), Perturbation::Zero, &short()).unwrap();
    let r = a.d.last().unwrap() / b.d.last().unwrap();
    assert!((3.0..5.5).contains(&r), "refinement ratio {r}");
}

#[test]
fn grid_checks() {
    let p = pulse().params;
    assert!(PdeGrid::new(0.0, 10.0, 101, 2.0, p).is_err());
    assert!(PdeGrid::new(0.0, 10.0, 2, 0.01, p).is_err());
    assert!(PdeGrid::new(10.0, 0.0, 101, 0.01, p).is_err());
}

#[test]
fn blow_up_is_reported() {
    let g = grid(0.2);
    let r = evolve(&g, pulse(), Perturbation::Bump { amp: 50.0, center: 20.0, width: 2.0 }, &short());
    assert!(r.is_err());
}
