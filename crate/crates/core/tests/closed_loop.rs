use fsreach_core::disturbance::SpeedSet;
use fsreach_core::fsr::fsr_compute;
use fsreach_core::sim::{monte_carlo, motion_rng, run, CollisionQuery, ObstacleSpec, Outcome, PlannerSpec, RobotSpec, Scenario};
use fsreach_core::{BoxRegion, DisturbanceSpec, DynamicsMap, FsrOptions, Lattice, NoClock, ObstacleGeometry, SparsePmf};

const SPEEDS: [f64; 8] = [3.0, 2.5, 1.5, 2.0, 1.0, 0.8, 0.5, 0.1];
const PROBS: [f64; 8] = [0.05, 0.05, 0.30, 0.20, 0.25, 0.10, 0.04, 0.01];

fn speed_set(sign: [f64; 2]) -> SpeedSet {
    SpeedSet {
        speeds: SPEEDS.to_vec(),
        probs: PROBS.to_vec(),
        per_axis_sign: sign.to_vec(),
        gain_matrix: None,
        sample_time: 0.2,
    }
}

fn scenario(resolution: f64, obstacles: Vec<ObstacleSpec>) -> Scenario {
    Scenario {
        schema: 1,
        name: "closed loop".into(),
        resolution,
        lattice_origin: None,
        sample_time: 0.2,
        steps: 50,
        horizon: 5,
        alpha: 0.045,
        seed: 11,
        stop_at_goal: true,
        robot: RobotSpec {
            initial: vec![0.0, 0.0],
            goal: vec![1.0, 4.0],
            input_box: BoxRegion::new(vec![-0.2, 0.1], vec![1.0, 1.0]).unwrap(),
            input_gain: None,
        },
        obstacles,
        planner: PlannerSpec::default(),
    }
}

fn obstacle(initial: [f64; 2], sign: [f64; 2]) -> ObstacleSpec {
    ObstacleSpec {
        initial: initial.to_vec(),
        geometry: ObstacleGeometry::centered_box(vec![0.5, 0.5]).unwrap(),
        disturbance: DisturbanceSpec::FiniteSpeedSet(speed_set(sign)),
    }
}

#[test]
fn speed_set_probabilities_and_mean() {
    let s = speed_set([1.0, 1.0]);
    assert_eq!(PROBS.iter().sum::<f64>(), 1.0);
    assert!((s.mean_speed() - 1.476).abs() < 1e-12);
    s.validate().unwrap();
}

#[test]
fn sampled_paths_stay_in_the_reach_supports() {
    // At 0.02 every displacement is a lattice vector, so paths snap exactly.
    let lattice = Lattice::uniform(2, 0.02).unwrap();
    let spec = DisturbanceSpec::FiniteSpeedSet(speed_set([1.0, -1.0]));
    let w = spec.discretize(&lattice).unwrap();
    let x0 = SparsePmf::delta(lattice.clone(), [0, 0]).unwrap();
    let tau = 8;
    let reach = fsr_compute(&x0, &DynamicsMap::identity(2), &w, tau, &FsrOptions::default(), &NoClock).unwrap();
    let mut rng = motion_rng(3);
    for _ in 0..500 {
        let mut x = [0.0, 0.0];
        for t in 1..=tau {
            let v = spec.sample(&mut rng).unwrap();
            x[0] += v[0];
            x[1] += v[1];
            let cell = lattice.snap(&x).unwrap();
            assert!(reach.pmf(t).get(cell.indices()) > 0.0, "step {t}: {x:?} outside the support");
        }
    }
}

#[test]
fn full_mission_keeps_running_past_the_goal() {
    let mut s = scenario(0.05, vec![]);
    s.stop_at_goal = false;
    let trace = run(&s, &NoClock).unwrap();
    assert_eq!(trace.steps(), s.steps);
    assert_eq!(trace.records.len(), s.steps + 1);
    assert!(trace.goal_reached);
    assert_eq!(trace.outcome, Outcome::GoalReached);
}

#[test]
fn points_outside_the_avoid_sets_have_low_collision_risk() {
    let s = scenario(0.05, vec![obstacle([-1.0, 0.5], [1.0, 1.0]), obstacle([2.0, 0.0], [-1.0, 1.0])]);
    let forecaster = s.planner().unwrap().forecaster;
    let starts = s.obstacle_starts();
    let avoid = forecaster.avoid_sets(&starts, s.horizon).unwrap();
    let mut queries = Vec::new();
    for (k, set) in avoid.iter().enumerate() {
        let t = k + 1;
        // Points just outside the boxes, where the risk is largest.
        for region in set.regions() {
            for p in [
                [region.lo[0] - 0.01, region.lo[1] + 0.1],
                [region.hi[0] + 0.01, region.hi[1] - 0.1],
                [region.lo[0] + 0.1, region.hi[1] + 0.01],
                [region.hi[0] - 0.1, region.lo[1] - 0.01],
            ] {
                if !set.contains_point(&p) {
                    queries.push(CollisionQuery { t, starts: starts.clone(), lookahead: t, point: p.to_vec() });
                }
            }
        }
    }
    assert!(queries.len() >= 20);
    let est = monte_carlo(&s, &queries, 20_000, 5).unwrap();
    for (q, e) in queries.iter().zip(&est) {
        let bound = s.alpha + 3.0 * e.sigma_at(s.alpha);
        assert!(e.probability() <= bound, "{:?}: {} > {bound}", q.point, e.probability());
    }
}
