"""Discrete-event Monte Carlo of a nested purify-and-swap repeater chain.

Stations ``0..N`` are joined by ``N = 2**L`` equal segments.  Each station has
two half-stations of ``m`` qubits: the right half serves pairs whose left end
is that station, the left half pairs whose right end is that station.  A
level-``k`` pair spans ``2**k`` segments and holds one qubit at each end.

Per segment, every free (left, right) qubit couple runs heralded attempts of
duration ``2 l / c`` until one succeeds; the number of attempts is drawn as a
geometric variate, so a success costs one event.  Pairs below the working
fidelity are purified with a same-endpoint partner; pairs at or above it are
swapped with their nesting sibling.  A top-level pair at working fidelity is
delivered and its qubits freed.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from .bell_algebra import (
    BellMixture,
    GateErrorModel,
    PurificationPolicy,
    UnreachableTargetError,
    effective_rate,
    purify,
    swap,
)
from .photonics import Attenuation, LinkParams, conditioned_state, p_spd

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid repeater configuration; ``errors`` maps field name to message."""

    def __init__(self, errors: dict[str, str]):
        self.errors = errors
        super().__init__("; ".join(f"{k}: {v}" for k, v in errors.items()))


@dataclass(frozen=True)
class RepeaterConfig:
    total_span: float = 51.2
    segment_span: float = 0.8
    qubits_per_half_station: int = 16
    base_fidelity: float | None = None  # None: pick by tune_base_fidelity
    working_fidelity: float = 0.98
    eta_sq: float = 0.9
    gate_error: float = 0.001
    attenuation_length_km: float = 25.5
    light_speed_km_s: float = 2.0e5
    attempt_overhead_s: float = 0.0
    base_rounds: int | None = None  # purification rounds on base pairs; None: as few as reach working
    policy: str = "symmetric_nested"
    max_rounds: int = 4
    seed: int = 0
    target_pairs: int = 200
    max_sim_seconds: float = 60.0
    success_prob_override: float | None = None
    trace: bool = False

    # -- derived ------------------------------------------------------------
    @property
    def segments(self) -> int:
        return int(round(self.total_span / self.segment_span))

    @property
    def levels(self) -> int:
        return self.segments.bit_length() - 1

    @property
    def total_qubits(self) -> int:
        return 2 * self.qubits_per_half_station * self.segments

    @property
    def segment_km(self) -> float:
        return self.segment_span * self.attenuation_length_km

    @property
    def attempt_time(self) -> float:
        return 2 * self.segment_km / self.light_speed_km_s + self.attempt_overhead_s

    def validate(self) -> None:
        errs: dict[str, str] = {}
        if self.segment_span <= 0:
            errs["segment_span"] = "must be > 0"
        elif self.total_span <= 0:
            errs["total_span"] = "must be > 0"
        else:
            n = self.total_span / self.segment_span
            k = round(n)
            if abs(n - k) > 1e-9 * max(1, n) or k < 1 or k & (k - 1):
                errs["total_span"] = f"total_span/segment_span = {n:g} is not a power of two"
        if self.qubits_per_half_station < 2:
            errs["qubits_per_half_station"] = "need at least 2 qubits per half station"
        if not 0.5 < self.working_fidelity <= 1:
            errs["working_fidelity"] = "must lie in (1/2, 1]"
        if self.base_fidelity is not None and not 0.5 < self.base_fidelity <= 1:
            errs["base_fidelity"] = "must lie in (1/2, 1]"
        if not 0 < self.eta_sq <= 1:
            errs["eta_sq"] = "must lie in (0, 1]"
        if not 0 <= self.gate_error <= 1:
            errs["gate_error"] = "must lie in [0, 1]"
        if self.policy not in ("symmetric_nested", "pumping"):
            errs["policy"] = "simulator supports symmetric_nested or pumping"
        if self.max_rounds < 1:
            errs["max_rounds"] = "must be >= 1"
        if self.base_rounds is not None and not 0 <= self.base_rounds <= self.max_rounds:
            errs["base_rounds"] = "must lie in [0, max_rounds]"
        for name in ("attenuation_length_km", "light_speed_km_s"):
            if getattr(self, name) <= 0:
                errs[name] = "must be > 0"
        if self.attempt_overhead_s < 0:
            errs["attempt_overhead_s"] = "must be >= 0"
        if self.target_pairs < 1:
            errs["target_pairs"] = "must be >= 1"
        if self.max_sim_seconds <= 0:
            errs["max_sim_seconds"] = "must be > 0"
        if self.success_prob_override is not None and not 0 <= self.success_prob_override <= 1:
            errs["success_prob_override"] = "must lie in [0, 1]"
        if errs:
            raise ConfigError(errs)
        if self.base_fidelity is not None:
            try:
                fidelity_ladder(self, self.base_fidelity)
            except UnreachableTargetError as exc:
                raise ConfigError({"base_fidelity": str(exc)}) from None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RepeaterConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError({k: "unknown key" for k in unknown})
        errs = {}
        clean = {}
        for k, v in data.items():
            try:
                clean[k] = _coerce(known[k], v)
            except (TypeError, ValueError) as exc:
                errs[k] = str(exc)
        if errs:
            raise ConfigError(errs)
        return cls(**clean)


def _coerce(f, v):
    kind = str(f.type).replace(" ", "").split("|")
    if v is None:
        if "None" in kind:
            return None
        raise ValueError("may not be null")
    if "bool" in kind:
        if not isinstance(v, bool):
            raise TypeError(f"expected bool, got {v!r}")
        return v
    if "str" in kind:
        if not isinstance(v, str):
            raise TypeError(f"expected string, got {v!r}")
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"expected number, got {v!r}")
    if "int" in kind:
        if isinstance(v, float) and not v.is_integer():
            raise TypeError(f"expected integer, got {v!r}")
        return int(v)
    return float(v)


@dataclass(frozen=True)
class LadderStep:
    level: int
    rounds: int
    fidelity: float
    purification_probs: tuple[float, ...]


def fidelity_ladder(cfg: RepeaterConfig, base_fidelity: float,
                    base_rounds: int | None = None) -> list[LadderStep]:
    """Deterministic fidelities along the symmetric nested protocol, one step per level.

    Raises UnreachableTargetError if some level cannot be brought to the working fidelity.
    """
    err = GateErrorModel(cfg.gate_error)
    if base_rounds is None:
        base_rounds = cfg.base_rounds
    s = conditioned_state(base_fidelity)
    out = []
    for level in range(cfg.levels + 1):
        if level:
            s = swap(s, s, err)
        rounds = 0
        probs = []
        min_rounds = base_rounds if (level == 0 and base_rounds) else 0
        while s.fidelity() < cfg.working_fidelity or rounds < min_rounds:
            if rounds >= cfg.max_rounds:
                raise UnreachableTargetError(
                    f"level {level}: fidelity {s.fidelity():.5f} below {cfg.working_fidelity} after {rounds} rounds")
            p, nxt = purify(s, s, err)
            if nxt.fidelity() <= s.fidelity():
                raise UnreachableTargetError(
                    f"level {level}: purification cannot raise {s.fidelity():.5f} to {cfg.working_fidelity}")
            s = nxt
            rounds += 1
            probs.append(p)
        out.append(LadderStep(level, rounds, s.fidelity(), tuple(probs)))
    return out


def base_pairs_per_delivery(ladder: list[LadderStep]) -> float:
    """Expected base pairs per segment consumed for one end-to-end pair.

    Each symmetric round needs two inputs and succeeds with probability p;
    a swap joins two half-length pairs, which leaves the per-segment count unchanged.
    """
    cost = 1.0
    for step in ladder:
        for p in step.purification_probs:
            cost *= 2.0 / p
    return cost


# ---------------------------------------------------------------------------
# base fidelity tuning

@dataclass(frozen=True)
class Candidate:
    base_fidelity: float
    policy: PurificationPolicy
    label: str = ""


@dataclass(frozen=True)
class CandidateScore:
    candidate: Candidate
    p_eff: float | None
    final_fidelity: float | None
    rounds: int | None
    error: str | None = None


def default_candidates(working_fidelity: float = 0.98) -> list[Candidate]:
    return [
        Candidate(working_fidelity, PurificationPolicy("direct"), "direct"),
        Candidate(0.9, PurificationPolicy("single_round", target_fidelity=working_fidelity), "one-round"),
        Candidate(0.75, PurificationPolicy("symmetric_nested", rounds=2, target_fidelity=working_fidelity),
                  "symmetric"),
    ]


def score_candidates(candidates, att, eta_sq: float, gate_error: float = 0.0) -> list[CandidateScore]:
    err = GateErrorModel(gate_error)
    scores = []
    for c in candidates:
        link = LinkParams(Attenuation(att) if not isinstance(att, Attenuation) else att, eta_sq,
                          target_fidelity=c.base_fidelity)
        try:
            p, s = effective_rate(None, c.policy, link, err)
        except UnreachableTargetError as exc:
            scores.append(CandidateScore(c, None, None, None, str(exc)))
            continue
        fixed = c.policy.fixed_rounds()
        rounds = fixed if fixed is not None else _count_rounds(c, link, err)
        scores.append(CandidateScore(c, p, s.fidelity(), rounds))
    return scores


def _count_rounds(c: Candidate, link: LinkParams, err: GateErrorModel) -> int:
    s = conditioned_state(link.fidelity)
    k = 0
    while s.fidelity() < c.policy.target_fidelity:
        _, s = purify(s, s, err)
        k += 1
    return k


def tune_base_fidelity(candidates, att, eta_sq: float, gate_error: float = 0.0) -> tuple[CandidateScore, list[CandidateScore]]:
    """Pick the candidate with the largest effective generation probability.

    Ties go to fewer purification rounds.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate grid")
    scores = score_candidates(candidates, att, eta_sq, gate_error)
    ok = [s for s in scores if s.p_eff is not None]
    if not ok:
        raise UnreachableTargetError("no candidate reaches its target fidelity")
    best = max(ok, key=lambda s: (round(s.p_eff, 15), -s.rounds))
    return best, scores


def fidelity_grid_candidates(working_fidelity: float, max_rounds: int = 3, step: float = 0.005) -> list[Candidate]:
    """Base fidelities on a grid, each with a symmetric policy of the needed depth."""
    out = []
    n = int(round((1.0 - 0.5) / step))
    for i in range(1, n + 1):
        F = round(0.5 + i * step, 10)
        out.append(Candidate(F, PurificationPolicy("symmetric_nested", target_fidelity=working_fidelity,
                                                   max_rounds=max_rounds)))
    return out


def auto_base_fidelity(cfg: RepeaterConfig, step: float = 0.01) -> tuple[float, int]:
    """(base fidelity, base rounds) maximising P_g / base pairs per segment per delivery.

    Sweeps the base fidelity on a grid and the base-level depth from the
    minimum needed up to ``max_rounds``; ties go to fewer rounds.
    """
    best = None
    n = int(round(0.5 / step))
    for i in range(1, n + 1):
        F = round(0.5 + i * step, 10)
        if cfg.success_prob_override is not None:
            p_g = cfg.success_prob_override
        else:
            p_g = p_spd(F, cfg.segment_span, cfg.eta_sq)
        if p_g <= 0:
            continue
        depths = [cfg.base_rounds] if cfg.base_rounds is not None else range(0, cfg.max_rounds + 1)
        for r in depths:
            try:
                ladder = fidelity_ladder(cfg, F, r)
            except UnreachableTargetError:
                continue
            if ladder[0].rounds != r:
                continue  # r below the minimum needed at this fidelity
            score = p_g / base_pairs_per_delivery(ladder)
            key = (round(score, 12), -r)
            if best is None or key > best[0]:
                best = (key, F, r)
    if best is None:
        raise ConfigError({"working_fidelity": "no base fidelity reaches the working fidelity at every level"})
    return best[1], best[2]


def monte_carlo_p_eff(score: CandidateScore, p_g: float, slots: int, seed: int = 0,
                      gate_error: float = 0.0) -> float:
    """Final pairs per attempt slot when ``slots`` attempts feed the candidate's ladder.

    Successful base pairs are paired off round by round and each pairing
    succeeds with that round's purification probability.
    """
    if score.p_eff is None:
        raise UnreachableTargetError(score.error or "candidate is unreachable")
    rng = np.random.Generator(np.random.PCG64(seed))
    err = GateErrorModel(gate_error)
    state = conditioned_state(score.candidate.base_fidelity)
    n = int(rng.binomial(slots, p_g))
    if score.candidate.policy.kind == "pumping":
        # k pumping steps use k + 1 base pairs and succeed only if every step does
        p_all = 1.0
        for _ in range(score.rounds):
            p, state = purify(state, conditioned_state(score.candidate.base_fidelity), err)
            p_all *= p
        return int(rng.binomial(n // (score.rounds + 1), p_all)) / slots
    for _ in range(score.rounds):
        p, state = purify(state, state, err)
        n = int(rng.binomial(n // 2, p))
    return n / slots


# ---------------------------------------------------------------------------
# base generation primitives

def attempt_generation(p: float, rng: np.random.Generator) -> bool:
    """One heralded attempt slot."""
    return bool(rng.random() < p)


class AttemptSampler:
    """Slots until the next success for a fixed success probability, drawn in blocks."""

    def __init__(self, p: float, rng: np.random.Generator, block: int = 1024):
        self.p = p
        self.rng = rng
        self.block = block
        self._buf = np.empty(0, dtype=np.int64)
        self._i = 0

    def __call__(self) -> int:
        if self.p >= 1.0:
            return 1
        if self._i >= len(self._buf):
            self._buf = self.rng.geometric(self.p, size=self.block)
            self._i = 0
        k = int(self._buf[self._i])
        self._i += 1
        return k


# ---------------------------------------------------------------------------
# the simulation

@dataclass(eq=False, slots=True)
class PairRecord:
    left: int
    right: int
    level: int
    state: BellMixture
    created_at: float
    available_at: float
    rounds: int = 0
    status: str = "pending"  # pending | wait_pur | wait_swap | busy | done
    serial: int = 0
    fidelity: float = field(init=False)

    def __post_init__(self):
        self.fidelity = self.state.phi_minus

    def update(self, state: BellMixture) -> None:
        self.state = state
        self.fidelity = state.phi_minus


@dataclass
class SimReport:
    pairs_delivered: int
    simulated_seconds: float
    rate_pairs_per_s: float
    fidelity_min: float | None
    fidelity_mean: float | None
    below_threshold: int
    base_fidelity: float
    base_rounds: int
    success_probability: float
    attempt_time_s: float
    total_qubits: int
    occupancy: dict[str, float]
    counters: dict[str, int]
    delivered_digest: str
    seed: int
    config: dict[str, Any]
    schema_version: int = SCHEMA_VERSION
    trace: list[tuple] | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("trace")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_GEN, _AVAIL, _PUR, _SWAP_DONE = 0, 1, 2, 3


class _Simulation:
    def __init__(self, cfg: RepeaterConfig, base_fidelity: float, base_rounds: int, audit: bool = False):
        self.cfg = cfg
        self.audit = audit
        self.base_rounds = base_rounds
        self._pur_cache: dict = {}
        self._swap_cache: dict = {}
        self.N = cfg.segments
        self.m = cfg.qubits_per_half_station
        self.err = GateErrorModel(cfg.gate_error)
        self.F0 = base_fidelity
        self.base_state = conditioned_state(base_fidelity)
        if cfg.success_prob_override is not None:
            self.p = cfg.success_prob_override
        else:
            self.p = p_spd(base_fidelity, cfg.segment_span, cfg.eta_sq)
        self.T = cfg.attempt_time
        self.seg_delay = cfg.segment_km / cfg.light_speed_km_s
        streams = np.random.SeedSequence(cfg.seed).spawn(2 * self.N)
        self.gen_draw = [AttemptSampler(self.p, np.random.Generator(np.random.PCG64(s))) for s in streams[: self.N]]
        self.op_rng = [np.random.Generator(np.random.PCG64(s)) for s in streams[self.N:]]

        # pool index: right half of station s -> s, left half of station s -> N + s - 1
        self.free = [self.m] * (2 * self.N)
        self.idle = [0] * (2 * self.N)  # qubits held by pairs waiting for a purification partner
        self.pur_wait: dict[tuple, deque] = {}
        self.swap_wait: dict[tuple[int, int], deque] = {}

        self.events: list = []
        self.seq = 0
        self.now = 0.0
        self.delivered: list[tuple[float, float]] = []
        self.trace: list[tuple] | None = [] if cfg.trace else None

        nlev = cfg.levels + 1
        self.held = [0] * (nlev + 1)  # qubits held per level; last slot: attempting links
        self.occ_integral = [0.0] * (nlev + 1)
        self.last_t = 0.0
        self.counters = dict(attempts_started=0, base_pairs=0, purifications=0, purification_failures=0,
                             swaps=0, discarded=0, evictions=0)

    # -- bookkeeping ---------------------------------------------------------
    def _push(self, t: float, kind: int, obj) -> None:
        self.seq += 1
        heapq.heappush(self.events, (t, self.seq, kind, obj))

    def _advance(self, t: float) -> None:
        dt = t - self.last_t
        if dt > 0:
            occ, held = self.occ_integral, self.held
            for i in range(len(held)):
                if held[i]:
                    occ[i] += held[i] * dt
            self.last_t = t
        self.now = t

    def _log(self, event: str, a: int, b: int, level: int, fid: float | None) -> None:
        if self.trace is not None:
            self.trace.append((self.now, event, a, b, level, fid))

    def _pools(self, pr: PairRecord) -> tuple[int, int]:
        return pr.left, self.N + pr.right - 1

    def _release(self, pr: PairRecord) -> None:
        a, b = self._pools(pr)
        self.free[a] += 1
        self.free[b] += 1
        self.held[pr.level] -= 2
        pr.status = "done"
        self._kick(pr.left, pr.right)

    def _kick(self, *stations: int) -> None:
        """Start attempts on the segments adjacent to the given stations."""
        segs = []
        for s in stations:
            if s > 0:
                segs.append(s - 1)
            if s < self.N:
                segs.append(s)
        for seg in sorted(set(segs)) if len(stations) > 1 else segs:
            self._start_links(seg)

    def _start_links(self, seg: int) -> None:
        if self.p <= 0:
            return
        a, b = seg, self.N + seg
        draw = self.gen_draw[seg]
        while self.free[a] > 0 and self.free[b] > 0:
            self.free[a] -= 1
            self.free[b] -= 1
            self.held[-1] += 2
            k = draw()
            self.counters["attempts_started"] += k
            self._push(self.now + k * self.T, _GEN, seg)

    # -- event handlers --------------------------------------------------------
    def _on_generated(self, seg: int) -> None:
        self.held[-1] -= 2
        self.held[0] += 2
        self.counters["base_pairs"] += 1
        self.seq += 1
        pr = PairRecord(seg, seg + 1, 0, self.base_state, self.now, self.now, serial=self.seq)
        self._log("generate", seg, seg + 1, 0, pr.fidelity)
        self._available(pr)

    def _available(self, pr: PairRecord) -> None:
        if pr.fidelity >= self.cfg.working_fidelity and (pr.level or pr.rounds >= self.base_rounds):
            if pr.level == self.cfg.levels:
                self._deliver(pr)
            else:
                self._offer_swap(pr)
        else:
            self._offer_purify(pr)

    def _deliver(self, pr: PairRecord) -> None:
        self.delivered.append((self.now, pr.fidelity))
        self._log("deliver", pr.left, pr.right, pr.level, pr.fidelity)
        self._release(pr)

    def _purify_key(self, pr: PairRecord):
        if self.cfg.policy == "pumping":
            return (pr.left, pr.right, pr.rounds > 0)
        return (pr.left, pr.right, pr.rounds)

    def _offer_purify(self, pr: PairRecord) -> None:
        if pr.rounds >= self.cfg.max_rounds:
            self.counters["discarded"] += 1
            self._log("discard", pr.left, pr.right, pr.level, pr.fidelity)
            self._release(pr)
            return
        if self.cfg.policy == "pumping":
            # a pumped pair waits for a fresh one; a fresh one takes a pumped pair first
            keys = [(pr.left, pr.right, False)] if pr.rounds else [(pr.left, pr.right, True), (pr.left, pr.right, False)]
        else:
            keys = [(pr.left, pr.right, pr.rounds)]
        for key in keys:
            q = self.pur_wait.get(key)
            if q:
                partner = q.popleft()
                self._set_idle(partner, False)
                keep, sac = (partner, pr) if partner.fidelity >= pr.fidelity else (pr, partner)
                self._start_purify(keep, sac)
                return
        pr.status = "wait_pur"
        self.pur_wait.setdefault(self._purify_key(pr), deque()).append(pr)
        self._set_idle(pr, True)
        self._check_deadlock(pr)

    def _set_idle(self, pr: PairRecord, on: bool) -> None:
        d = 1 if on else -1
        a, b = self._pools(pr)
        self.idle[a] += d
        self.idle[b] += d

    def _start_purify(self, keep: PairRecord, sac: PairRecord) -> None:
        keep.status = sac.status = "busy"
        self.counters["purifications"] += 1
        key = (keep.state, sac.state)
        hit = self._pur_cache.get(key)
        if hit is None:
            hit = self._pur_cache[key] = purify(keep.state, sac.state, self.err)
        p_ok, new_state = hit
        ok = bool(self.op_rng[keep.left].random() < p_ok)
        delay = 2 * (keep.right - keep.left) * self.seg_delay
        self._push(self.now + delay, _PUR, (keep, sac, ok, new_state))

    def _on_purified(self, payload) -> None:
        keep, sac, ok, new_state = payload
        self._release(sac)
        if not ok:
            self.counters["purification_failures"] += 1
            self._log("purify_fail", keep.left, keep.right, keep.level, None)
            self._release(keep)
            return
        keep.update(new_state)
        keep.rounds = max(keep.rounds, sac.rounds) + 1
        keep.available_at = self.now
        self._log("purify", keep.left, keep.right, keep.level, keep.fidelity)
        self._available(keep)

    def _offer_swap(self, pr: PairRecord) -> None:
        span = pr.right - pr.left
        if (pr.left // span) % 2 == 0:
            sib_key = (pr.right, pr.right + span)
        else:
            sib_key = (pr.left - span, pr.left)
        q = self.swap_wait.get(sib_key)
        if q:
            other = q.popleft()
            a, b = (other, pr) if other.left < pr.left else (pr, other)
            self._start_swap(a, b)
            return
        pr.status = "wait_swap"
        self.swap_wait.setdefault((pr.left, pr.right), deque()).append(pr)

    def _start_swap(self, a: PairRecord, b: PairRecord) -> None:
        self.counters["swaps"] += 1
        mid = a.right
        # the middle qubits are measured now
        self.free[self.N + mid - 1] += 1
        self.free[mid] += 1
        self.held[a.level] -= 4
        self.held[a.level + 1] += 2
        a.status = b.status = "done"
        key = (a.state, b.state)
        state = self._swap_cache.get(key)
        if state is None:
            state = self._swap_cache[key] = swap(a.state, b.state, self.err)
        self.seq += 1
        new = PairRecord(a.left, b.right, a.level + 1, state, self.now,
                         self.now + (b.right - a.left) // 2 * self.seg_delay, serial=self.seq)
        new.status = "pending"
        self._log("swap", new.left, new.right, new.level, new.fidelity)
        self._push(new.available_at, _SWAP_DONE, new)
        self._kick(mid)

    def _check_deadlock(self, pr: PairRecord) -> None:
        """Break a half-station that is full of pairs all waiting for purification partners.

        The waiting pair with the smallest (level, rounds) above the base
        key is discarded, so the freed qubit's next base pair can match the
        base-level waiter and free a qubit in turn.
        """
        for pool in self._pools(pr):
            if self.free[pool] == 0 and self.idle[pool] == self.m:
                victim = self._pick_victim(pool)
                if victim is None:
                    continue
                q = self.pur_wait[self._purify_key(victim)]
                q.remove(victim)
                self._set_idle(victim, False)
                self.counters["evictions"] += 1
                self._log("evict", victim.left, victim.right, victim.level, victim.fidelity)
                self._release(victim)

    def _pick_victim(self, pool: int) -> PairRecord | None:
        best = None
        for q in self.pur_wait.values():
            for cand in q:
                if pool not in self._pools(cand):
                    continue
                if cand.level == 0 and cand.rounds == 0:
                    continue
                k = (cand.level, cand.rounds, cand.serial)
                if best is None or k < best[0]:
                    best = (k, cand)
        return None if best is None else best[1]

    def check_invariants(self) -> None:
        """Every qubit is free, attempting, or held by exactly one pair."""
        total = 2 * self.m * self.N
        if sum(self.free) + sum(self.held) != total:
            raise AssertionError(f"qubit count {sum(self.free) + sum(self.held)} != {total}")
        if any(not 0 <= f <= self.m for f in self.free):
            raise AssertionError("pool outside [0, m]")
        if any(h < 0 for h in self.held):
            raise AssertionError("negative holding count")

    # -- main loop -------------------------------------------------------------
    def run(self) -> None:
        for seg in range(self.N):
            self._start_links(seg)
        horizon = self.cfg.max_sim_seconds
        target = self.cfg.target_pairs
        ev = self.events
        while ev and len(self.delivered) < target:
            t, _, kind, obj = heapq.heappop(ev)
            if t > horizon:
                self._advance(horizon)
                return
            self._advance(t)
            if kind == _GEN:
                self._on_generated(obj)
            elif kind == _PUR:
                self._on_purified(obj)
            else:
                self._available(obj)
            if self.audit:
                self.check_invariants()
        if not ev and len(self.delivered) < target:
            self._advance(horizon)


def run(config: RepeaterConfig, *, audit: bool = False) -> SimReport:
    """Simulate one trial.  ``audit`` re-checks qubit accounting after every event."""
    config.validate()
    if config.base_fidelity is None:
        F0, rounds = auto_base_fidelity(config)
    else:
        F0 = config.base_fidelity
        rounds = fidelity_ladder(config, F0)[0].rounds
    sim = _Simulation(config, F0, rounds, audit)
    sim.run()
    T = sim.now
    fids = [f for _, f in sim.delivered]
    n = len(fids)
    digest = hashlib.sha256(json.dumps([[round(t, 15), f] for t, f in sim.delivered]).encode()).hexdigest()
    names = [f"level_{k}" for k in range(config.levels + 1)] + ["attempting"]
    occupancy = {name: (v / T if T > 0 else 0.0) for name, v in zip(names, sim.occ_integral)}
    return SimReport(
        pairs_delivered=n,
        simulated_seconds=T,
        rate_pairs_per_s=n / T if T > 0 else 0.0,
        fidelity_min=min(fids) if fids else None,
        fidelity_mean=sum(fids) / n if fids else None,
        below_threshold=sum(f < config.working_fidelity for f in fids),
        base_fidelity=F0,
        base_rounds=rounds,
        success_probability=sim.p,
        attempt_time_s=sim.T,
        total_qubits=config.total_qubits,
        occupancy=occupancy,
        counters=dict(sim.counters),
        delivered_digest=digest,
        seed=config.seed,
        config=config.to_dict(),
        trace=sim.trace,
    )


TRACE_HEADER = "time_s,event,station_a,station_b,level,fidelity"


def write_trace_csv(trace, fh) -> None:
    fh.write(TRACE_HEADER + "\n")
    for t, event, a, b, level, fid in trace:
        f = "" if fid is None else repr(fid)
        fh.write(f"{t!r},{event},{a},{b},{level},{f}\n")


def run_many(configs, *, parallel: bool = False, workers: int | None = None) -> list[SimReport]:
    """Run independent trials; the result order follows ``configs`` either way.

    Each trial seeds its own streams, so the parallel path returns the same
    reports as the sequential one.
    """
    configs = list(configs)
    for c in configs:
        c.validate()
    if not parallel or len(configs) < 2:
        return [run(c) for c in configs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, configs))


@dataclass(frozen=True)
class RateSummary:
    n: int
    mean: float
    stderr: float


def aggregate(reports) -> RateSummary:
    """Mean and standard error of the rate over trials (order-independent)."""
    rates = sorted(r.rate_pairs_per_s for r in reports)
    n = len(rates)
    if n == 0:
        raise ValueError("no reports to aggregate")
    mean = math.fsum(rates) / n
    if n == 1:
        return RateSummary(1, mean, 0.0)
    var = math.fsum((x - mean) ** 2 for x in rates) / (n - 1)
    return RateSummary(n, mean, math.sqrt(var / n))
