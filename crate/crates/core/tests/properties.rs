use std::collections::BTreeSet;

use fsreach_core::fsr::{fsr_compute, fsr_step};
use fsreach_core::occupancy::{occupancy, superlevel};
use fsreach_core::planner::miqp::MiqpOptions;
use fsreach_core::planner::problem::{PlanConfig, PlanProblem, PlanStatus, RobotModel};
use fsreach_core::{BoxRegion, DynamicsMap, FsrOptions, Lattice, NoClock, ObstacleGeometry, SparsePmf};
use proptest::prelude::*;

fn pmf_2d() -> impl Strategy<Value = SparsePmf> {
    prop::collection::vec(((-6i64..=6, -6i64..=6), 0.01f64..1.0), 1..25).prop_map(|e| {
        let lattice = Lattice::uniform(2, 0.1).unwrap();
        SparsePmf::normalized(lattice, e.into_iter().map(|((a, b), m)| (vec![a, b], m))).unwrap()
    })
}

/// Integer matrices with determinant +-1, which map the lattice onto itself.
fn unimodular() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (-2i64..=2, prop::bool::ANY, prop::bool::ANY).prop_map(|(k, swap, neg)| {
        let s = if neg { -1.0 } else { 1.0 };
        let shear = vec![vec![1.0, k as f64], vec![0.0, s]];
        if swap {
            vec![shear[1].clone(), shear[0].clone()]
        } else {
            shear
        }
    })
}

fn close(a: &SparsePmf, b: &SparsePmf, tol: f64) -> bool {
    let pa: BTreeSet<Vec<i64>> = a.iter().map(|(p, _)| p.to_vec()).collect();
    let pb: BTreeSet<Vec<i64>> = b.iter().map(|(p, _)| p.to_vec()).collect();
    pa == pb && a.iter().all(|(p, m)| (m - b.get(p)).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reach_measures_compose(x0 in pmf_2d(), w in pmf_2d(), a in unimodular(), s in 0usize..4, t in 0usize..4) {
        let f = DynamicsMap::linear(&a).unwrap();
        let whole = fsr_compute(&x0, &f, &w, s + t, &FsrOptions::default(), &NoClock).unwrap();
        let first = fsr_compute(&x0, &f, &w, s, &FsrOptions::default(), &NoClock).unwrap();
        let rest = fsr_compute(first.pmf(s), &f, &w, t, &FsrOptions::default(), &NoClock).unwrap();
        prop_assert!(close(whole.pmf(s + t), rest.pmf(t), 1e-12));
    }

    #[test]
    fn mass_is_conserved(x0 in pmf_2d(), w in pmf_2d(), a in unimodular()) {
        let f = DynamicsMap::linear(&a).unwrap();
        let r = fsr_compute(&x0, &f, &w, 5, &FsrOptions::default(), &NoClock).unwrap();
        for t in 0..=5 {
            prop_assert!((r.pmf(t).total_mass() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_step_support_is_the_image_sumset(x0 in pmf_2d(), w in pmf_2d(), a in unimodular()) {
        let f = DynamicsMap::linear(&a).unwrap();
        let (next, err) = fsr_step(&x0, &f, &w).unwrap();
        prop_assert!(err <= 1e-9);
        let mut expected = BTreeSet::new();
        for (x, _) in x0.iter() {
            let fx = [a[0][0] as i64 * x[0] + a[0][1] as i64 * x[1], a[1][0] as i64 * x[0] + a[1][1] as i64 * x[1]];
            for (v, _) in w.iter() {
                expected.insert(vec![fx[0] + v[0], fx[1] + v[1]]);
            }
        }
        let got: BTreeSet<Vec<i64>> = next.iter().map(|(p, _)| p.to_vec()).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn snapping_inverts_coordinates(
        origin in prop::collection::vec(-5.0f64..5.0, 3),
        res in prop::collection::vec(0.01f64..2.0, 3),
        idx in prop::collection::vec(-10_000i64..10_000, 3),
    ) {
        let l = Lattice::new(origin, res).unwrap();
        prop_assert_eq!(l.snap(&l.coord(&idx)).unwrap().0, idx);
    }

    #[test]
    fn superlevel_sets_shrink_with_alpha(p in pmf_2d(), h in 0.05f64..0.4, a1 in 0.0f64..1.0, a2 in 0.0f64..1.0) {
        let g = ObstacleGeometry::centered_box(vec![h, h]).unwrap();
        let field = occupancy(&p, &g).unwrap();
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let big = superlevel(&field, lo).unwrap().cells();
        let small = superlevel(&field, hi).unwrap().cells();
        prop_assert!(small.is_subset(&big));
        // Box decomposition reproduces the thresholded cells exactly.
        let direct: BTreeSet<Vec<i64>> = field.superlevel_cells(hi).into_iter().collect();
        prop_assert_eq!(small, direct);
    }

    #[test]
    fn occupancy_is_a_probability(p in pmf_2d(), h in 0.05f64..0.6) {
        let g = ObstacleGeometry::centered_box(vec![h, h]).unwrap();
        let field = occupancy(&p, &g).unwrap();
        prop_assert!(field.iter().all(|(_, v)| v > 0.0 && v <= 1.0));
    }
}

fn plan_setup() -> impl Strategy<Value = (Vec<f64>, Vec<(usize, [f64; 4])>, Vec<[f64; 2]>)> {
    (
        prop::collection::vec(-1.0f64..2.0, 2),
        prop::collection::vec((1usize..=4, [-0.5f64..1.5, -0.5f64..1.5, 0.05f64..0.5, 0.05f64..0.5]), 0..4),
        prop::collection::vec([-1.0f64..1.0, -1.0f64..1.0], 4 * 12),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// The branch-and-bound plan is feasible and no sampled feasible control
    /// sequence beats it; when it reports infeasibility no sample is feasible.
    #[test]
    fn plans_are_feasible_and_not_beaten_by_samples((goal, boxes, samples) in plan_setup()) {
        let ubox = BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let model = RobotModel::point_mass(0.25, ubox).unwrap();
        let ws = BoxRegion::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let mut config = PlanConfig::with_defaults(2, 2, ws);
        config.horizon = 4;
        let mut avoid = vec![Vec::new(); 4];
        for (t, [cx, cy, wx, wy]) in &boxes {
            avoid[t - 1].push(BoxRegion::new(vec![cx - wx, cy - wy], vec![cx + wx, cy + wy]).unwrap());
        }
        let p = PlanProblem::build(vec![0.0, 0.0], goal, model, avoid, config).unwrap();
        let sol = p.solve(&MiqpOptions::default(), &NoClock).unwrap();
        prop_assert_ne!(sol.status, PlanStatus::Timeout);
        if sol.status == PlanStatus::Feasible {
            prop_assert!(p.verify(&sol).is_ok(), "{:?}", p.verify(&sol));
        }
        for chunk in samples.chunks(4) {
            let trial = p.evaluate(chunk.iter().map(|u| u.to_vec()).collect());
            if p.verify(&trial).is_ok() {
                prop_assert_eq!(sol.status, PlanStatus::Feasible);
                prop_assert!(sol.objective <= trial.objective + 1e-6 * trial.objective.abs().max(1.0));
            }
        }
    }
}
