"""Monte Carlo rate over qubits per half station x segment spacing.

Also prints the utilisation ceiling m / T * max_F P_g / (base pairs per
delivery): the rate if every qubit couple attempted all the time and no pair
ever waited.  Results go to a JSON file keyed by cell.
"""
import argparse
import json
import time
from pathlib import Path

from qubus_repeater.photonics import p_spd
from qubus_repeater.repeater_sim import (
    RepeaterConfig,
    aggregate,
    auto_base_fidelity,
    base_pairs_per_delivery,
    fidelity_ladder,
    run_many,
)


def ceiling(cfg: RepeaterConfig) -> float:
    F, rounds = auto_base_fidelity(cfg)
    ladder = fidelity_ladder(cfg, F, rounds)
    return cfg.qubits_per_half_station / cfg.attempt_time * p_spd(F, cfg.segment_span, cfg.eta_sq) \
        / base_pairs_per_delivery(ladder)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", default="8,16,32")
    ap.add_argument("--spans", default="0.4,0.8,1.6")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--gate-error", type=float, default=0.001)
    ap.add_argument("--target-pairs", type=int, default=200)
    ap.add_argument("--parallel", action="store_true")
    ap.add_argument("--out", default="results/rate_sweep.json")
    args = ap.parse_args()

    rows = {}
    print(f"{'qubits':>6} {'span':>5} {'F_base':>6} {'rate':>8} {'stderr':>7} {'ceiling':>8} {'wall':>6}")
    for q in (int(x) for x in args.qubits.split(",")):
        for span in (float(x) for x in args.spans.split(",")):
            base = RepeaterConfig(qubits_per_half_station=q, segment_span=span, gate_error=args.gate_error,
                                  target_pairs=args.target_pairs)
            t0 = time.time()
            reps = run_many([RepeaterConfig(**{**base.to_dict(), "seed": s}) for s in range(1, args.seeds + 1)],
                            parallel=args.parallel)
            agg = aggregate(reps)
            cap = ceiling(base)
            rows[f"{q}x{span:g}"] = dict(qubits=q, span=span, base_fidelity=reps[0].base_fidelity,
                                         base_rounds=reps[0].base_rounds, rate_mean=agg.mean,
                                         rate_stderr=agg.stderr, ceiling=cap, total_qubits=base.total_qubits)
            print(f"{q:>6} {span:>5g} {reps[0].base_fidelity:>6g} {agg.mean:>8.3g} {agg.stderr:>7.2g} "
                  f"{cap:>8.3g} {time.time() - t0:>5.0f}s", flush=True)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
