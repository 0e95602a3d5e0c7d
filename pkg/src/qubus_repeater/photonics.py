"""Closed-form link model for the qubus entanglement distribution segment.

A probe of amplitude ``beta`` is displaced conditionally on the first qubit,
sent through a fibre of attenuation ``l/l0`` and displaced again on the second
qubit.  Measuring the probe heralds a rank-2 Bell mixture of fidelity ``F``
with respect to ``|Phi->``.  Everything here is expressed in terms of ``F``
and the transmittance ``t = exp(-l/l0)``; ``beta`` is derived.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, TextIO

from .bell_algebra import BellMixture


class DegenerateChannelError(ValueError):
    """Raised for a lossless channel (l/l0 = 0) where the F-form formulas are singular."""


class Strategy(str, Enum):
    CSP = "csp"  # idealised odd-cat projector
    SPD = "spd"  # single photon detection


@dataclass(frozen=True)
class Attenuation:
    """Channel length in units of the attenuation length."""

    ratio: float

    def __post_init__(self):
        if not math.isfinite(self.ratio) or self.ratio < 0:
            raise ValueError(f"attenuation ratio must be finite and >= 0, got {self.ratio!r}")

    @property
    def transmittance(self) -> float:
        return math.exp(-self.ratio)

    @classmethod
    def from_km(cls, length_km: float, attenuation_length_km: float) -> "Attenuation":
        return cls(length_km / attenuation_length_km)


def attenuation_length_km(loss_db_per_km: float) -> float:
    """Length over which the power falls by 1/e for a fibre loss given in dB/km."""
    return 10.0 / (loss_db_per_km * math.log(10.0))


@dataclass(frozen=True)
class ProbeSummary:
    gamma_bar: float
    mixing_weight: float
    n_plus: float
    n_minus: float
    overlap_c0: float


def _as_att(att) -> Attenuation:
    return att if isinstance(att, Attenuation) else Attenuation(float(att))


def _require_lossy(att: Attenuation) -> None:
    if att.ratio == 0:
        raise DegenerateChannelError("l/l0 = 0: the fidelity/probability trade-off is degenerate")


def _check_fidelity(F: float, *, open_low: bool) -> None:
    lo_ok = F > 0.5 if open_low else F >= 0.5
    if not (lo_ok and F <= 1.0):
        bound = "(1/2, 1]" if open_low else "[1/2, 1]"
        raise ValueError(f"fidelity {F!r} outside {bound}")


def probe_summary(beta: float, att) -> ProbeSummary:
    att = _as_att(att)
    if beta < 0:
        raise ValueError("beta must be >= 0")
    t = att.transmittance
    b2 = beta * beta
    gamma_bar = 2.0 * b2 * -math.expm1(-att.ratio)  # 2 beta^2 (1 - t) without cancellation
    cat = math.exp(-8.0 * b2 * t)
    return ProbeSummary(
        gamma_bar=gamma_bar,
        mixing_weight=(1.0 + math.exp(-gamma_bar / 2.0)) / 2.0,
        n_plus=1.0 + cat,
        n_minus=1.0 - cat,
        overlap_c0=2.0 * math.exp(-4.0 * b2 * t) / (1.0 + cat),
    )


def fidelity_from_beta(beta: float, att, *, allow_degenerate: bool = False) -> float:
    att = _as_att(att)
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if att.ratio == 0:
        if allow_degenerate:
            return 1.0
        _require_lossy(att)
    return probe_summary(beta, att).mixing_weight


def beta_from_fidelity(F: float, att) -> float:
    """Probe amplitude that yields a pair of fidelity ``F`` on this channel."""
    att = _as_att(att)
    _check_fidelity(F, open_low=True)
    _require_lossy(att)
    if F == 1.0:
        return 0.0
    # 2F - 1 = exp(-gamma_bar / 2) = exp(-beta^2 (1 - t))
    return math.sqrt(-math.log(2.0 * F - 1.0) / -math.expm1(-att.ratio))


def spd_exponent(att, eta_sq: float) -> float:
    """Exponent c in P_SPD = c/2 * u^c * ln(1/u), u = 2F - 1."""
    att = _as_att(att)
    if not 0 < eta_sq <= 1:
        raise ValueError("eta_sq must lie in (0, 1]")
    t = att.transmittance
    return 4.0 * eta_sq * t / (1.0 + (7.0 - 8.0 * eta_sq) * t)


def p_csp(F: float, att, *, allow_degenerate: bool = False) -> float:
    att = _as_att(att)
    _check_fidelity(F, open_low=False)
    if att.ratio == 0:
        if not allow_degenerate:
            _require_lossy(att)
        return 0.0 if F == 1.0 else 0.25
    t = att.transmittance
    u = 2.0 * F - 1.0
    return 0.25 * (1.0 - u ** (8.0 * t / -math.expm1(-att.ratio)))


def p_spd(F: float, att, eta_sq: float) -> float:
    """Heralded success probability with a single photon detector of efficiency eta_sq.

    This is the magnitude of the lambda-derivative form: the derivative itself
    is negative for 2F - 1 < 1.
    """
    att = _as_att(att)
    _check_fidelity(F, open_low=False)
    _require_lossy(att)
    c = spd_exponent(att, eta_sq)
    u = 2.0 * F - 1.0
    if u == 0.0 or u == 1.0:
        return 0.0
    return 0.5 * c * u**c * -math.log(u)


def success_probability(F: float, att, strategy: Strategy | str = Strategy.SPD, eta_sq: float = 1.0) -> float:
    if Strategy(strategy) is Strategy.CSP:
        return p_csp(F, att)
    return p_spd(F, att, eta_sq)


def conditioned_state(F: float) -> BellMixture:
    _check_fidelity(F, open_low=False)
    return BellMixture(phi_plus=1.0 - F, phi_minus=F, psi_plus=0.0, psi_minus=0.0)


@dataclass(frozen=True)
class LinkParams:
    """One segment's link settings.  Give exactly one of ``beta`` or ``target_fidelity``."""

    attenuation: Attenuation
    eta_sq: float = 1.0
    beta: float | None = None
    target_fidelity: float | None = None
    strategy: Strategy = Strategy.SPD

    def __post_init__(self):
        if (self.beta is None) == (self.target_fidelity is None):
            raise ValueError("give exactly one of beta or target_fidelity")
        if not 0 < self.eta_sq <= 1:
            raise ValueError("eta_sq must lie in (0, 1]")
        object.__setattr__(self, "attenuation", _as_att(self.attenuation))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.target_fidelity is not None:
            _check_fidelity(self.target_fidelity, open_low=True)

    @property
    def fidelity(self) -> float:
        if self.target_fidelity is not None:
            return self.target_fidelity
        return fidelity_from_beta(self.beta, self.attenuation)

    @property
    def amplitude(self) -> float:
        if self.beta is not None:
            return self.beta
        return beta_from_fidelity(self.target_fidelity, self.attenuation)

    @property
    def success_probability(self) -> float:
        return success_probability(self.fidelity, self.attenuation, self.strategy, self.eta_sq)

    def with_fidelity(self, F: float) -> "LinkParams":
        return LinkParams(self.attenuation, self.eta_sq, None, F, self.strategy)


def default_grid(n: int = 101) -> list[float]:
    return [0.5 + 0.5 * i / (n - 1) for i in range(n)]


def link_curve(att, eta_sq: float, grid: Iterable[float] | None = None) -> list[tuple[float, float, float]]:
    att = _as_att(att)
    _require_lossy(att)
    rows = []
    for F in default_grid() if grid is None else grid:
        rows.append((F, p_csp(F, att), p_spd(F, att, eta_sq)))
    return rows


def write_curve_csv(rows: Sequence[tuple[float, float, float]], fh: TextIO) -> None:
    fh.write("F,p_csp,p_spd\n")
    for F, pc, ps in rows:
        fh.write(f"{F:.6g},{pc:.6g},{ps:.6g}\n")
