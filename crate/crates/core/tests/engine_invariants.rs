use std::collections::HashMap;

use lobfactor_core::agents::CashDistribution;
use lobfactor_core::engine::{run, Simulation, SimulationConfig, StepWindow};
use lobfactor_core::orderbook::Side;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randomized_config(rng: &mut ChaCha8Rng, seed: u64) -> SimulationConfig {
    let mut c = SimulationConfig {
        seed,
        t_sim: 600,
        no_exec_windows: vec![
            StepWindow { start: 1, end: 50 },
            StepWindow {
                start: 300,
                end: 305,
            },
        ],
        ..SimulationConfig::default()
    };
    c.population.n_agents = rng.random_range(10..80);
    c.population.lambda_c = [0.0, 1.5, 2.5][rng.random_range(0..3)];
    c.population.lambda_m = [0.0, 5e-5, 1e-3][rng.random_range(0..3)];
    c.population.nu = rng.random_range(0.0..1.0);
    c.population.alpha = rng.random_range(0.05..0.3);
    if rng.random::<bool>() {
        c.population.cash_dist = CashDistribution::Pareto {
            c_min: 5_000.0,
            beta: 1.5,
        };
    }
    c.v_max = rng.random_range(1..60);
    c
}

#[test]
fn cash_and_shares_are_conserved_every_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..10 {
        let config = randomized_config(&mut rng, 1_000 + trial);
        let tick = config.tick_size;
        let mut sim = Simulation::new(config).unwrap();
        let cash0: i128 = sim.agents().iter().map(|a| a.state.cash).sum();
        let shares0: u64 = sim.agents().iter().map(|a| a.state.shares).sum();
        while sim.step() {
            let agents = sim.agents();
            assert_eq!(agents.iter().map(|a| a.state.cash).sum::<i128>(), cash0);
            assert_eq!(agents.iter().map(|a| a.state.shares).sum::<u64>(), shares0);

            let mut committed_cash: HashMap<usize, i128> = HashMap::new();
            let mut committed_shares: HashMap<usize, u64> = HashMap::new();
            for o in sim.book().resting(Side::Buy) {
                *committed_cash.entry(o.agent_id).or_default() +=
                    o.limit_price.0 as i128 * o.volume as i128;
            }
            for o in sim.book().resting(Side::Sell) {
                *committed_shares.entry(o.agent_id).or_default() += o.volume;
            }
            for (i, a) in agents.iter().enumerate() {
                let s = &a.state;
                assert_eq!(
                    s.reserved_cash,
                    committed_cash.get(&i).copied().unwrap_or(0)
                );
                assert_eq!(
                    s.reserved_shares,
                    committed_shares.get(&i).copied().unwrap_or(0)
                );
                assert!(
                    s.cash >= 0 && s.free_cash() >= 0,
                    "agent {i} cash {}",
                    s.cash_value(tick)
                );
                assert!(s.reserved_shares <= s.shares);
            }
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..3 {
        let config = randomized_config(&mut rng, seed);
        let a = run(&config).unwrap();
        let b = run(&config).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_ticks_csv(&mut x).unwrap();
        b.write_ticks_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a, b);
    }
}

#[test]
fn different_seeds_diverge() {
    let mut c = SimulationConfig {
        t_sim: 300,
        no_exec_windows: vec![StepWindow { start: 1, end: 50 }],
        seed: 1,
        ..SimulationConfig::default()
    };
    let a = run(&c).unwrap();
    c.seed = 2;
    assert_ne!(a.mid_prices, run(&c).unwrap().mid_prices);
}
