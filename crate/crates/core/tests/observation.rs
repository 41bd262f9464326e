use greenwave::fixtures::{self, GridParams};
use greenwave::network::PhaseSpec;
use greenwave::observation::{KMax, OBSERVATION_BOUND};
use greenwave::{Decision, Env, Scenario, Scope, SimState};
use proptest::prelude::*;

fn with_k_max(mut s: Scenario, k: usize) -> Scenario {
    s.training.observation.k_max = KMax::Fixed(k);
    s
}

/// Adds a third phase to intersection 0 so local blocks have length 20:
/// 3 phases + elapsed + 12 movements + 4 approaches.
fn three_phase(mut p: GridParams) -> Scenario {
    p.four_phase = false;
    let mut s = fixtures::grid(&p);
    let node = &mut s.network.intersections[0];
    let m = node.movements[0].id;
    node.phases.push(PhaseSpec { movements: vec![m] });
    s
}

fn run_to(env: &Env, seed: u64, t: u64) -> SimState {
    let mut state = env.reset(seed).unwrap();
    let zero = env.actions.zero_index();
    while state.clock() < t {
        for agent in state.step().unwrap().decisions {
            state.resolve(agent, Decision::Adjust(zero), &env.actions).unwrap();
        }
    }
    state
}

#[test]
fn dimensions_follow_the_formulas() {
    let grid = three_phase(GridParams::grid(3, 3)).compile().unwrap();
    assert_eq!(grid.observer.local_len(), 20);
    assert_eq!(grid.observer.k_max(), 4);
    assert_eq!(grid.observer.dim(Scope::Neighbor, 9), 104);
    let corridor = three_phase(GridParams::corridor(5)).compile().unwrap();
    assert_eq!(corridor.observer.dim(Scope::Global, 5), 100);
    let state = run_to(&corridor, 1, 100);
    assert_eq!(corridor.observer.global_observation(&state).len(), 100);
    assert_eq!(grid.observer.neighbor_observation(&run_to(&grid, 1, 10), 4).len(), 104);
}

#[test]
fn empty_network_at_reset() {
    let env = fixtures::corridor(1).compile().unwrap();
    let state = env.reset(3).unwrap();
    let obs = env.observer.local_observation(&state, 0);
    let mut expected = vec![0.0; env.observer.local_len()];
    expected[0] = 1.0;
    assert_eq!(obs, expected);
}

#[test]
fn counts_match_queue_and_detection_oracles() {
    let env = fixtures::corridor(2).compile().unwrap();
    let cap = 40.0;
    let mut state = env.reset(8).unwrap();
    let zero = env.actions.zero_index();
    let mut saw_three = false;
    while state.clock() < 900 {
        for agent in state.step().unwrap().decisions {
            state.resolve(agent, Decision::Adjust(zero), &env.actions).unwrap();
        }
        let net = state.network().clone();
        for agent in 0..2 {
            let obs = env.observer.local_observation(&state, agent);
            let node = &net.intersections[agent];
            let phases = 4;
            for (k, &m) in node.movements.iter().enumerate() {
                let queued = state.queue(m).count();
                assert_eq!(obs[phases + 1 + k] * cap, queued as f64);
                saw_three |= queued == 3;
            }
            for (k, &l) in node.incoming.iter().enumerate() {
                let link = &net.links[l];
                let near = state
                    .vehicles()
                    .iter()
                    .filter(|v| match v.location {
                        greenwave::sim::Location::Link { link: on, stop_time } => {
                            on == l && (stop_time - state.clock()) as f64 * link.speed <= link.detection_range_m
                        }
                        _ => false,
                    })
                    .count();
                assert_eq!(obs[phases + 1 + node.movements.len() + k] * cap, near as f64);
            }
        }
    }
    assert!(saw_three);
}

#[test]
fn elapsed_at_g_max_normalizes_to_one() {
    let mut s = fixtures::corridor(1);
    s.signals.phase_greens_s = None;
    s.signals.initial_green_s = s.signals.g_max_s;
    let env = s.compile().unwrap();
    let mut state = env.reset(1).unwrap();
    while state.step().unwrap().decisions.is_empty() {}
    let obs = env.observer.local_observation(&state, 0);
    assert_eq!(obs[4], 1.0);
}

#[test]
fn isolated_intersection_pads_every_neighbor_slot() {
    let env = with_k_max(fixtures::corridor(1), 4).compile().unwrap();
    let state = run_to(&env, 2, 300);
    let local = env.observer.local_observation(&state, 0);
    let obs = env.observer.neighbor_observation(&state, 0);
    let mut expected = local.clone();
    expected.extend(vec![0.0; 4 * local.len() + 4]);
    assert_eq!(obs, expected);
}

#[test]
fn corridor_middle_concatenates_left_then_right() {
    let env = with_k_max(fixtures::corridor(3), 4).compile().unwrap();
    let state = run_to(&env, 4, 400);
    let o = &env.observer;
    let mut expected = o.local_observation(&state, 1);
    expected.extend(o.local_observation(&state, 0));
    expected.extend(o.local_observation(&state, 2));
    expected.extend(vec![0.0; 2 * o.local_len()]);
    expected.extend([1.0, 1.0, 0.0, 0.0]);
    assert_eq!(o.neighbor_observation(&state, 1), expected);
}

#[test]
fn single_intersection_global_equals_local() {
    let env = fixtures::corridor(1).compile().unwrap();
    let state = run_to(&env, 5, 200);
    assert_eq!(env.observer.global_observation(&state), env.observer.local_observation(&state, 0));
}

#[test]
fn shuffled_intersection_order_gives_same_global_vector() {
    let s = fixtures::grid(&GridParams::grid(2, 2));
    let mut shuffled = s.clone();
    shuffled.network.intersections.reverse();
    shuffled.network.intersections.swap(0, 1);
    let a = s.compile().unwrap();
    let b = shuffled.compile().unwrap();
    let (sa, sb) = (run_to(&a, 6, 500), run_to(&b, 6, 500));
    let ga = a.observer.global_observation(&sa);
    assert_eq!(ga, b.observer.global_observation(&sb));
    let blocks: Vec<f64> = (0..4).flat_map(|i| a.observer.local_observation(&sa, i)).collect();
    assert_eq!(ga, blocks);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn entries_are_bounded_pure_and_masked_blocks_match(seed in any::<u64>(), t in 1u64..1500, scale in 0.5f64..3.0) {
        let mut s = fixtures::grid(&GridParams::grid(2, 3));
        s.demand = s.demand.scaled(scale);
        let env = s.compile().unwrap();
        let state = run_to(&env, seed, t);
        let o = &env.observer;
        let len = o.local_len();
        for agent in 0..6 {
            let obs = o.neighbor_observation(&state, agent);
            prop_assert_eq!(&obs, &o.neighbor_observation(&state, agent));
            prop_assert!(obs.iter().all(|x| x.is_finite() && (0.0..=OBSERVATION_BOUND).contains(x)));
            let neighbors = &state.network().intersections[agent].neighbors;
            let mask = &obs[(1 + o.k_max()) * len..];
            for (k, &j) in neighbors.iter().enumerate() {
                prop_assert_eq!(mask[k], 1.0);
                prop_assert_eq!(&obs[(1 + k) * len..(2 + k) * len], &o.local_observation(&state, j)[..]);
            }
            prop_assert!(mask[neighbors.len()..].iter().all(|&m| m == 0.0));
        }
    }
}
