import dataclasses
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qubus_repeater.bell_algebra import PurificationPolicy, UnreachableTargetError
from qubus_repeater.photonics import Attenuation, p_spd
from qubus_repeater.repeater_sim import (
    TRACE_HEADER,
    AttemptSampler,
    Candidate,
    ConfigError,
    RepeaterConfig,
    aggregate,
    attempt_generation,
    auto_base_fidelity,
    base_pairs_per_delivery,
    default_candidates,
    fidelity_ladder,
    monte_carlo_p_eff,
    run,
    run_many,
    tune_base_fidelity,
    write_trace_csv,
)
from reference_values import TABLE2_QUBITS

SMALL = RepeaterConfig(target_pairs=20)


def pipeline(**kw):
    """One deterministic segment: every attempt succeeds."""
    base = dict(total_span=0.8, segment_span=0.8, qubits_per_half_station=2, success_prob_override=1.0,
                base_fidelity=0.99, target_pairs=10, trace=True)
    base.update(kw)
    return RepeaterConfig(**base)


class TestConfig:
    @pytest.mark.parametrize("key", sorted(TABLE2_QUBITS))
    def test_total_qubits(self, key):
        q, span = key
        assert RepeaterConfig(qubits_per_half_station=q, segment_span=span).total_qubits == TABLE2_QUBITS[key]

    def test_derived(self):
        c = RepeaterConfig()
        assert (c.segments, c.levels) == (64, 6)
        assert c.attempt_time == pytest.approx(2 * 0.8 * 25.5 / 2e5)

    @pytest.mark.parametrize("kw,field", [
        (dict(segment_span=0.7), "total_span"),
        (dict(qubits_per_half_station=1), "qubits_per_half_station"),
        (dict(working_fidelity=0.4), "working_fidelity"),
        (dict(policy="fifo"), "policy"),
        (dict(base_rounds=9), "base_rounds"),
        (dict(success_prob_override=1.5), "success_prob_override"),
        (dict(base_fidelity=0.51, max_rounds=1), "base_fidelity"),
    ])
    def test_field_errors(self, kw, field):
        with pytest.raises(ConfigError) as ei:
            RepeaterConfig(**kw).validate()
        assert field in ei.value.errors

    def test_unreachable_fails_before_running(self):
        with pytest.raises(ConfigError):
            run(RepeaterConfig(base_fidelity=0.52, max_rounds=2))

    def test_from_dict(self):
        c = RepeaterConfig.from_dict({"qubits_per_half_station": 8.0, "base_fidelity": 0.9, "policy": "pumping"})
        assert c.qubits_per_half_station == 8 and isinstance(c.qubits_per_half_station, int)
        assert RepeaterConfig.from_dict(c.to_dict()) == c

    @pytest.mark.parametrize("data", [{"bogus": 1}, {"qubits_per_half_station": 2.5},
                                      {"seed": "x"}, {"trace": 1}, {"working_fidelity": None}])
    def test_from_dict_rejects(self, data):
        with pytest.raises(ConfigError):
            RepeaterConfig.from_dict(data)


class TestLadder:
    def test_costs(self):
        ladder = fidelity_ladder(RepeaterConfig(), 0.95)
        assert len(ladder) == 7
        assert all(step.fidelity >= 0.98 for step in ladder)
        cost = 1.0
        for step in ladder:
            for p in step.purification_probs:
                cost *= 2 / p
        assert base_pairs_per_delivery(ladder) == pytest.approx(cost)

    def test_no_gate_error_direct(self):
        ladder = fidelity_ladder(RepeaterConfig(gate_error=0.0, total_span=0.8), 0.99)
        assert ladder[0].rounds == 0 and ladder[0].fidelity == 0.99

    def test_auto_base_fidelity(self):
        F, rounds = auto_base_fidelity(RepeaterConfig())
        assert 0.5 < F < 1 and rounds >= 1


class TestTuning:
    def test_default_candidates(self):
        best, scores = tune_base_fidelity(default_candidates(), Attenuation(0.8), 0.9)
        assert best.candidate.label == "one-round"
        by = {s.candidate.label: s.p_eff for s in scores}
        assert by["one-round"] > by["direct"] > by["symmetric"]
        assert by["direct"] == pytest.approx(0.03374, abs=5e-6)
        assert by["one-round"] == pytest.approx(0.0547, abs=1e-4)

    def test_single_entry(self):
        c = Candidate(0.75, PurificationPolicy("symmetric_nested", rounds=2, target_fidelity=0.98), "only")
        best, _ = tune_base_fidelity([c], Attenuation(0.8), 0.9)
        assert best.candidate is c

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            tune_base_fidelity([], Attenuation(0.8), 0.9)

    def test_unreachable_flagged(self):
        bad = Candidate(0.51, PurificationPolicy("single_round", target_fidelity=0.98), "bad")
        best, scores = tune_base_fidelity([bad, *default_candidates()], Attenuation(0.8), 0.9)
        assert scores[0].p_eff is None and "0.5" in scores[0].error
        assert best.candidate.label == "one-round"

    def test_ties_prefer_fewer_rounds(self):
        a = Candidate(0.9, PurificationPolicy("single_round"), "one")
        b = Candidate(0.9, PurificationPolicy("pumping", rounds=1), "pump")  # same P_eff: p/2 either way
        best, scores = tune_base_fidelity([b, a], Attenuation(0.8), 0.9)
        assert scores[0].p_eff == pytest.approx(scores[1].p_eff)
        best2, _ = tune_base_fidelity([a, Candidate(0.98, PurificationPolicy("direct"), "d")], 0.8, 0.9)
        assert best2.candidate.label == "one"

    def test_monte_carlo_agrees_with_ordering(self):
        _, scores = tune_base_fidelity(default_candidates(), Attenuation(0.8), 0.9)
        mc = {}
        for s in scores:
            pg = p_spd(s.candidate.base_fidelity, 0.8, 0.9)
            mc[s.candidate.label] = monte_carlo_p_eff(s, pg, 2_000_000, seed=5)
            assert mc[s.candidate.label] == pytest.approx(s.p_eff, rel=0.02)
        assert mc["one-round"] > mc["direct"] > mc["symmetric"]


class TestGeneration:
    def test_extremes(self):
        rng = np.random.default_rng(0)
        assert not any(attempt_generation(0.0, rng) for _ in range(1000))
        assert all(attempt_generation(1.0, rng) for _ in range(1000))
        assert AttemptSampler(1.0, rng)() == 1

    @pytest.mark.parametrize("F,ratio", [(0.9, 0.8), (0.98, 0.4), (0.75, 1.6)])
    def test_bernoulli_frequency(self, F, ratio):
        p = p_spd(F, ratio, 0.9)
        rng = np.random.Generator(np.random.PCG64(11))
        n = 10**6
        hits = sum(attempt_generation(p, rng) for _ in range(n))
        assert abs(hits - n * p) <= 3 * math.sqrt(n * p * (1 - p))

    @pytest.mark.parametrize("F,ratio", [(0.9, 0.8), (0.98, 0.4), (0.75, 1.6)])
    def test_sampler_matches_slots(self, F, ratio):
        # successes within the first 10^6 slots when draws are gaps between successes
        p = p_spd(F, ratio, 0.9)
        sampler = AttemptSampler(p, np.random.Generator(np.random.PCG64(12)))
        n, used, hits = 10**6, 0, 0
        while True:
            used += sampler()
            if used > n:
                break
            hits += 1
        assert abs(hits - n * p) <= 3 * math.sqrt(n * p * (1 - p))


class TestSimulation:
    def test_deterministic(self):
        a, b = run(SMALL), run(SMALL)
        assert a.to_json() == b.to_json()
        assert run(dataclasses.replace(SMALL, seed=1)).delivered_digest != a.delivered_digest

    def test_report_invariants(self):
        r = run(SMALL)
        assert r.pairs_delivered == 20
        assert r.rate_pairs_per_s == pytest.approx(r.pairs_delivered / r.simulated_seconds)
        assert r.total_qubits == 2048
        assert r.below_threshold == 0 and r.fidelity_min >= 0.98
        assert set(r.occupancy) == {f"level_{k}" for k in range(7)} | {"attempting"}
        assert sum(r.occupancy.values()) <= r.total_qubits

    def test_resource_conservation(self):
        run(dataclasses.replace(SMALL, target_pairs=5), audit=True)
        run(dataclasses.replace(SMALL, target_pairs=5, policy="pumping", qubits_per_half_station=4), audit=True)

    def test_pipeline_rate(self):
        cfg = pipeline()
        r = run(cfg)
        assert r.rate_pairs_per_s == pytest.approx(cfg.qubits_per_half_station / cfg.attempt_time, rel=1e-12)
        assert r.fidelity_min == r.fidelity_mean == 0.99

    def test_purification_latency(self):
        cfg = pipeline(base_fidelity=0.9, gate_error=0.0, target_pairs=1)
        r = run(cfg)
        T = cfg.attempt_time
        delay = cfg.segment_km / cfg.light_speed_km_s
        gens = [e for e in r.trace if e[1] == "generate"]
        purs = [e for e in r.trace if e[1] in ("purify", "purify_fail")]
        assert [e[0] for e in gens[:2]] == [T, T]
        assert purs[0][0] == pytest.approx(T + 2 * delay)

    def test_swap_latency(self):
        cfg = pipeline(total_span=1.6, gate_error=0.0, target_pairs=2)
        r = run(cfg)
        delay = cfg.segment_km / cfg.light_speed_km_s
        swaps = [e for e in r.trace if e[1] == "swap"]
        delivers = [e for e in r.trace if e[1] == "deliver"]
        assert swaps[0][0] == pytest.approx(cfg.attempt_time)
        assert delivers[0][0] == pytest.approx(cfg.attempt_time + delay)
        assert delivers[0][5] == pytest.approx(0.99**2 + 0.01**2)

    def test_causality_in_trace(self):
        r = run(dataclasses.replace(SMALL, target_pairs=5, trace=True))
        times = [e[0] for e in r.trace]
        assert times == sorted(times)

    def test_no_success_stops_at_horizon(self):
        r = run(pipeline(success_prob_override=0.0, max_sim_seconds=0.5))
        assert r.pairs_delivered == 0 and r.simulated_seconds == 0.5 and r.rate_pairs_per_s == 0

    def test_trace_csv(self):
        r = run(pipeline(target_pairs=2))
        buf = io.StringIO()
        write_trace_csv(r.trace, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == TRACE_HEADER == "time_s,event,station_a,station_b,level,fidelity"
        assert lines[1].split(",")[1] == "generate"

    def test_parallel_matches_sequential(self):
        cfgs = [dataclasses.replace(SMALL, target_pairs=10, seed=s) for s in (3, 1, 2)]
        seq = [r.to_json() for r in run_many(cfgs)]
        par = [r.to_json() for r in run_many(cfgs, parallel=True, workers=2)]
        assert seq == par
        assert [r.seed for r in run_many(cfgs)] == [3, 1, 2]

    def test_aggregate(self):
        reps = run_many([pipeline(), pipeline(seed=1)])
        agg = aggregate(reps)
        assert agg.n == 2 and agg.stderr == 0.0
        assert aggregate(reversed(reps)) == agg
        with pytest.raises(ValueError):
            aggregate([])

    @settings(max_examples=15)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]), st.sampled_from(["symmetric_nested", "pumping"]))
    def test_small_chains_conserve_qubits(self, seed, m, policy):
        cfg = RepeaterConfig(total_span=3.2, qubits_per_half_station=m, seed=seed, target_pairs=3, policy=policy)
        r = run(cfg, audit=True)
        assert r.pairs_delivered == 3 or r.simulated_seconds == cfg.max_sim_seconds


def test_unreachable_policy_exception_type():
    with pytest.raises(UnreachableTargetError):
        fidelity_ladder(RepeaterConfig(max_rounds=1), 0.51)
