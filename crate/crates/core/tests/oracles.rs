//! Reference implementations checked against the library on randomized
//! instances.

mod common;

use std::collections::BTreeSet;

use common::*;
use fsreach_core::occupancy::{avoid_sets_multi, joint_occupancy_bruteforce, occupancy, superlevel};
use fsreach_core::planner::miqp::{solve_miqp, MiqpOptions, MiqpStatus};
use fsreach_core::{Lattice, NoClock, ObstacleGeometry, SparsePmf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn occupancy_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let dim = 1 + case % 3;
        let r = [0.1, 0.25, 0.05][case % 3];
        let origin: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lattice = Lattice::new(origin, vec![r; dim]).unwrap();
        let spread = [200, 12, 5][dim - 1];
        let pmf = random_pmf(&mut rng, &lattice, 1000, spread);
        let g = random_box(&mut rng, dim, r);
        let field = occupancy(&pmf, &g).unwrap();
        let centers: Vec<(Vec<f64>, f64)> = pmf.iter().map(|(z, m)| (lattice.coord(z), m)).collect();
        for cell in cells_around(&pmf, 5) {
            worst = worst.max((field.get(&cell) - direct_occupancy(&centers, &lattice, &g, &cell)).abs());
        }
        // Nothing is stored outside the padded region.
        for (cell, _) in field.iter() {
            assert!(direct_occupancy(&centers, &lattice, &g, cell) > 0.0, "case {case}: spurious cell {cell:?}");
        }
    }
    assert!(worst <= 1e-12, "max deviation {worst}");
}

#[test]
fn three_center_superlevel_structure() {
    let lattice = Lattice::uniform(2, 0.1).unwrap();
    let z = [[0i64, 0], [6, 3], [20, -2]];
    let pmf = SparsePmf::from_entries(
        lattice.clone(),
        vec![(z[0].to_vec(), 0.2), (z[1].to_vec(), 0.2), (z[2].to_vec(), 0.6)],
    )
    .unwrap();
    let g = ObstacleGeometry::centered_box(vec![0.5, 0.5]).unwrap();
    let set = superlevel(&occupancy(&pmf, &g).unwrap(), 0.3).unwrap();
    // Closed unit box; distances are measured on indices so that cells
    // exactly half a unit away count as covered.
    let covers = |c: &[i64], y: &[i64]| c.iter().zip(y).all(|(a, b)| (a - b).abs() as f64 * 0.1 <= 0.5 + 1e-9);
    let mut expected = BTreeSet::new();
    for y in cells_around(&pmf, 6) {
        if (covers(&z[0], &y) && covers(&z[1], &y)) || covers(&z[2], &y) {
            expected.insert(y);
        }
    }
    assert!(!expected.is_empty());
    assert_eq!(set.cells(), expected);
    // The lone parts of the two light bodies stay free.
    assert!(!set.covers_cell(&[-4, -4]));
    assert!(!set.covers_cell(&[10, 7]));
}

#[test]
fn multi_obstacle_avoid_set_underapproximates_free_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let lattice = Lattice::uniform(2, 0.1).unwrap();
    let mut violations = 0;
    for _ in 0..100 {
        let a = random_pmf(&mut rng, &lattice, 30, 8);
        let b = random_pmf(&mut rng, &lattice, 30, 8).translate(&[rng.random_range(-6..=6), rng.random_range(-6..=6)]);
        let g = random_box(&mut rng, 2, 0.1);
        let alpha = rng.random_range(0.02..0.9);
        let avoid = avoid_sets_multi(&[a.clone(), b.clone()], &g, alpha).unwrap();
        let joint = joint_occupancy_bruteforce(&[a, b], &g).unwrap();
        violations += joint.iter().filter(|(c, v)| *v >= alpha && !avoid.covers_cell(c)).count();
    }
    assert_eq!(violations, 0);
}

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut infeasible = 0;
    for case in 0..50 {
        let p = random_avoidance_miqp(&mut rng, case % 10 == 3);
        assert!(p.n_bin <= 8);
        let bb = solve_miqp(&p, &MiqpOptions::default(), &NoClock).unwrap();
        match miqp_by_enumeration(&p) {
            None => {
                infeasible += 1;
                assert_eq!(bb.status, MiqpStatus::Infeasible, "case {case}");
            }
            Some(f) => {
                assert_eq!(bb.status, MiqpStatus::Optimal, "case {case}");
                let gap = (bb.objective - f).abs() / f.abs().max(1.0);
                assert!(gap <= 1e-6, "case {case}: {} vs {f}", bb.objective);
                assert!(p.max_violation(&bb.x, &bb.binaries) <= 1e-7);
                assert!((p.evaluate(&bb.x, &bb.binaries) - bb.objective).abs() <= 1e-9);
            }
        }
    }
    assert!(infeasible >= 5);
}
