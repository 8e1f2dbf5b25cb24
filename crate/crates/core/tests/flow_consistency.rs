//! Cross-checks between integrators, target representations and grid sizes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subrh_core::diagnostics::{self, clifford_angles, winding_numbers};
use subrh_core::flow::{self, FlowState, InitOptions};
use subrh_core::targets::{wrap_angle, Target};
use subrh_core::{ops, Field, Grid, Map};

fn grid(n: usize) -> Grid {
    Grid::new(n).unwrap()
}

fn angles(n: usize) -> (Field, Field) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = flow::random_smooth_field(grid(n), &mut rng, 2, false).map(|v| 0.4 * v);
    let b = flow::random_smooth_field(grid(n), &mut rng, 2, false).map(|v| 0.4 * v);
    (a, b)
}

/// Sup distance between the Clifford angles of `u` and the chart map `f`.
fn angle_gap(u: &Map, f: &Map) -> f64 {
    let [a1, a2] = clifford_angles(u);
    let mut worst = 0.0f64;
    for (c, a) in [a1, a2].iter().enumerate() {
        for (x, y) in a.data().iter().zip(f.component(c).data()) {
            worst = worst.max(wrap_angle(x - y).abs());
        }
    }
    worst
}

fn extrinsic_intrinsic_gap(n: usize, t_end: f64) -> f64 {
    let g = grid(n);
    let dt = ops::dt_max::<f64>(g);
    let (a, b) = angles(n);
    let mut ext = FlowState::new(flow::clifford_from_angles(&a, &b), Target::by_name("clifford", None).unwrap()).unwrap();
    let mut int = FlowState::new(Map::new(vec![a, b]).unwrap(), Target::by_name("flat_torus", None).unwrap()).unwrap();
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        flow::step_explicit(&mut ext, dt).unwrap();
        flow::step_explicit(&mut int, dt).unwrap();
    }
    angle_gap(&ext.u, &int.u)
}

#[test]
fn extrinsic_and_intrinsic_flat_torus_flows_agree() {
    let e16 = extrinsic_intrinsic_gap(16, 0.05);
    let e32 = extrinsic_intrinsic_gap(32, 0.05);
    let s16 = 1.0 / 256.0 + ops::dt_max::<f64>(grid(16));
    let s32 = 1.0 / 1024.0 + ops::dt_max::<f64>(grid(32));
    assert!(e16 <= s16, "gap {e16:e} at N=16");
    assert!(e32 <= s32, "gap {e32:e} at N=32");
    assert!(e16 / e32 > 3.0, "gap ratio {}", e16 / e32);
}

#[test]
fn imex_and_explicit_steps_agree_to_second_order_in_dt() {
    let g = grid(16);
    let t = Target::by_name("sphere", None).unwrap();
    let u = flow::initial_map(&t, g, 5, &InitOptions::default()).unwrap();
    let gap = |dt: f64| {
        let mut a = FlowState::new(u.clone(), t.clone()).unwrap();
        let mut b = FlowState::new(u.clone(), t.clone()).unwrap();
        flow::step_explicit(&mut a, dt).unwrap();
        flow::step_imex(&mut b, dt).unwrap();
        a.u.sub(&b.u).max_abs()
    };
    let dt = ops::dt_max::<f64>(g);
    let (g1, g2) = (gap(dt / 4.0), gap(dt / 8.0));
    assert!(g1 / g2 > 3.5, "ratio {}", g1 / g2);
}

#[test]
fn tension_free_maps_are_fixed_by_every_integrator() {
    let g = grid(12);
    let dt = ops::dt_max::<f64>(g);
    let cases: Vec<(Target<f64>, Map)> = vec![
        (Target::by_name("sphere", None).unwrap(), Map::from_fn(g, 3, |_, o| o.copy_from_slice(&[0.0, 0.6, 0.8]))),
        (Target::by_name("poincare", None).unwrap(), Map::from_fn(g, 2, |_, o| o.copy_from_slice(&[0.3, -0.2]))),
        (Target::by_name("clifford", None).unwrap(), flow::standard_torus_map(g, [0.3, 0.7])),
    ];
    for (t, u) in cases {
        for imex in [false, true] {
            let mut s = FlowState::new(u.clone(), t.clone()).unwrap();
            for _ in 0..5 {
                if imex {
                    flow::step_imex(&mut s, dt).unwrap();
                } else {
                    flow::step_explicit(&mut s, dt).unwrap();
                }
            }
            let moved = s.u.sub(&u).max_abs();
            assert!(moved < 1e-9, "{} imex={imex}: moved {moved:e}", t.name());
        }
    }
}

#[test]
fn z_dependent_flow_keeps_its_winding_matrix() {
    let g = grid(16);
    let t = Target::by_name("clifford", None).unwrap();
    let opts = InitOptions { z_dependent: true, winding: [[1, 1], [-1, 0]], ..Default::default() };
    let u = flow::initial_map(&t, g, 9, &opts).unwrap();
    let w0 = winding_numbers(&u).unwrap().matrix;
    assert_eq!(w0, [[1, 1], [-1, 0]]);
    let mut s = FlowState::new(u, t).unwrap();
    let dt = ops::dt_max::<f64>(g);
    for _ in 0..300 {
        flow::step_explicit(&mut s, dt).unwrap();
    }
    assert_eq!(winding_numbers(&s.u).unwrap().matrix, w0);
}

#[test]
fn one_explicit_step_lowers_horizontal_energy() {
    let g = grid(16);
    let t = Target::by_name("clifford", None).unwrap();
    let u = flow::initial_map(&t, g, 7, &InitOptions { winding: [[1, 0], [0, 1]], ..Default::default() }).unwrap();
    let e0 = diagnostics::energies(&u, &t).e_h;
    let mut s = FlowState::new(u, t.clone()).unwrap();
    flow::step_explicit(&mut s, ops::dt_max::<f64>(g)).unwrap();
    assert!(diagnostics::energies(&s.u, &t).e_h < e0);
}

#[test]
fn picard_iterates_track_the_unprojected_flow() {
    let g = grid(16);
    let t = Target::by_name("clifford", None).unwrap();
    let u = flow::initial_map(&t, g, 7, &InitOptions::default()).unwrap();
    let dt = ops::dt_max::<f64>(g);
    let p = flow::duhamel_picard(&u, &t, 16.0 * dt, 4, dt).unwrap();
    assert_eq!(p.substeps, 16);
    assert!(p.ratios.iter().all(|&r| r < 0.5), "{:?}", p.ratios);
    let mut s = FlowState::new(u, t).unwrap().with_reprojection(None);
    for _ in 0..p.substeps {
        flow::step_explicit(&mut s, p.dt).unwrap();
    }
    let gap = s.u.sub(p.iterates.last().unwrap()).max_abs();
    assert!(gap <= 1.0 / 256.0 + dt, "gap {gap:e}");
}
