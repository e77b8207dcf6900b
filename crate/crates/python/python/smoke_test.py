"""Smoke test for the lobfactor extension module.

Build and expose the module, then run this script:

    cargo build -p lobfactor-py --release
    cp target/release/liblobfactor.so crates/python/python/lobfactor.so
    python3 crates/python/python/smoke_test.py

With maturin available, `maturin develop -m crates/python/Cargo.toml` works too.
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import lobfactor  # noqa: E402


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAILED: {msg}")
    print(f"ok  {msg}")


def main():
    check(lobfactor.align_to_tick(300.00005) == 3_000_001, "half-tick rounds away from zero")

    n = 100_000
    xs = [lobfactor.sample_pareto(1.0, 3.0, 1.0 - (i + 0.5) / n) for i in range(n)]
    tail = lobfactor.hill_index(xs)
    check(tail.k_used == 5_000 and abs(tail.hill - 3.0) < 0.15, f"Hill on a Pareto(3) grid: {tail.hill:.3f}")

    a, b = [0.0, 1.0], [0.0, 0.5, 1.0]
    check(abs(lobfactor.ot_distance(a, b) - 1 / 12) < 1e-12, "OT of a hand instance is 1/12")
    m = lobfactor.mean_ot(a, [a, b])
    check(m.per_reference[0] == 0.0 and len(m.per_reference) == 2, "mean_ot per-reference values")
    check(abs(lobfactor.theoretical_hill(4.0, 3.8, 3.1) - 2.9) < 1e-12, "additive Hill prediction")

    path = lobfactor.scaled_path_from_counts([1] * 300)
    check(len(path) == 300 and path[-1] == 1.0, "uniform counts give a linear path")

    config = json.loads(lobfactor.default_config())
    check(config["population"]["n_agents"] == 200 and config["t_sim"] == 2110, "default config")

    run = lobfactor.run_simulation(seed=3)
    again = lobfactor.run_simulation(seed=3)
    check(run.n_trades > 0 and run.ticks_csv == again.ticks_csv, f"deterministic run with {run.n_trades} trades")

    prices, volumes = lobfactor.resample_trades(run.trade_mid_prices, run.trade_volumes, path, 300.0)
    check(sum(volumes) == sum(run.trade_volumes), "resampling conserves volume")
    returns = [math.log(q / p) for p, q in zip(prices, prices[1:])]
    facts = lobfactor.stylized_facts(returns, volumes[1:])
    check(set(facts.abs_autocorr) == {1, 10, 20, 30}, f"stylized facts (kurtosis {facts.kurtosis:.2f})")

    sim = lobfactor.Simulation(seed=3)
    totals = sim.totals()
    while sim.step():
        pass
    check(sim.is_finished and sim.totals() == totals, "stepping conserves cash and shares")

    combo = lobfactor.evaluate_combo(n_trials=4, reference_sets=4, reference_samples=5_000)
    check(combo.mean_ot >= 0 and combo.n_trials == 4, f"combo hill {combo.hill:.3f}, mean OT {combo.mean_ot:.2e}")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
