"""Truncated Fock-space model of two qubits sharing one probe mode.

Used to check the closed forms in :mod:`photonics` from first principles:
conditional displacements, a pure-loss channel written as a Kraus sum over
lost photon number, the odd-cat projection, and the four-displacement qubus
C-Z gate.  Slow on purpose; nothing here is on the simulator path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .bell_algebra import BellMixture, bell_basis

N_MAX = 64
LEAKAGE_TOL = 1e-10
_PAD = 64


class InsufficientTruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossChannel:
    transmittance: float

    def __post_init__(self):
        if not 0 < self.transmittance <= 1:
            raise ValueError("transmittance must lie in (0, 1]")

    @classmethod
    def from_ratio(cls, ratio: float) -> "LossChannel":
        return cls(math.exp(-ratio))


@dataclass
class CVState:
    """Mixture of pure states of shape (2, 2, n_max + 1): qubit A, qubit B, mode."""

    branches: list[tuple[float, np.ndarray]] = field(default_factory=list)
    n_max: int = N_MAX

    @classmethod
    def pure(cls, amps: np.ndarray) -> "CVState":
        amps = np.asarray(amps, dtype=complex)
        return cls([(1.0, amps / np.linalg.norm(amps))], amps.shape[-1] - 1)

    @classmethod
    def product(cls, qubit_a, qubit_b, mode=None, n_max: int = N_MAX) -> "CVState":
        if mode is None:
            mode = np.zeros(n_max + 1, dtype=complex)
            mode[0] = 1.0
        amps = np.einsum("i,j,k->ijk", np.asarray(qubit_a, complex), np.asarray(qubit_b, complex), mode)
        return cls.pure(amps)

    @property
    def trace(self) -> float:
        return float(sum(w * np.vdot(v, v).real for w, v in self.branches))

    def density_matrix(self) -> np.ndarray:
        d = 4 * (self.n_max + 1)
        rho = np.zeros((d, d), dtype=complex)
        for w, v in self.branches:
            f = v.reshape(d)
            rho += w * np.outer(f, f.conj())
        return rho

    def photon_distribution(self) -> np.ndarray:
        return sum(w * np.sum(np.abs(v) ** 2, axis=(0, 1)) for w, v in self.branches)

    def check(self) -> "CVState":
        if abs(self.trace - 1.0) > LEAKAGE_TOL:
            raise InsufficientTruncationError(f"trace {self.trace!r} drifted; raise n_max")
        if self.photon_distribution()[-1] > LEAKAGE_TOL:
            raise InsufficientTruncationError("population at the truncation edge exceeds 1e-10")
        return self


def coherent_state(alpha: complex, n_max: int = N_MAX) -> np.ndarray:
    n = np.arange(n_max + 1)
    if alpha == 0:
        v = np.zeros(n_max + 1, dtype=complex)
        v[0] = 1.0
        return v
    log_mag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def cat_state(alpha: complex, sign: int, n_max: int = N_MAX) -> np.ndarray:
    """Normalised (|alpha> + sign |-alpha>); the odd cat keeps only odd photon numbers."""
    v = coherent_state(alpha, n_max) + sign * coherent_state(-alpha, n_max)
    return v / np.linalg.norm(v)


@lru_cache(maxsize=256)
def displacement_matrix(alpha: complex, n_max: int = N_MAX) -> np.ndarray:
    """D(alpha) on the first n_max + 1 Fock states, exponentiated in a padded space."""
    dim = n_max + 1 + _PAD
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    gen = alpha * a.conj().T - np.conj(alpha) * a
    return expm(gen)[: n_max + 1, : n_max + 1]


def controlled_displacement(state: CVState, target_qubit: str, beta: complex) -> CVState:
    """D(beta sigma_z) on qubit ``A`` or ``B``: +beta on |0>, -beta on |1>."""
    axis = {"A": 0, "B": 1}[target_qubit]
    d_plus = displacement_matrix(complex(beta), state.n_max)
    d_minus = displacement_matrix(complex(-beta), state.n_max)
    out = []
    for w, v in state.branches:
        v = v.copy()
        idx0 = [slice(None)] * 3
        idx1 = [slice(None)] * 3
        idx0[axis], idx1[axis] = 0, 1
        v[tuple(idx0)] = v[tuple(idx0)] @ d_plus.T
        v[tuple(idx1)] = v[tuple(idx1)] @ d_minus.T
        out.append((w, v))
    return CVState(out, state.n_max).check()


def loss_kraus(t: float, n_max: int = N_MAX) -> list[np.ndarray]:
    """K_k|n> = sqrt(C(n, k) t^(n-k) (1-t)^k) |n-k> for k lost photons."""
    ops = []
    n = np.arange(n_max + 1)
    for k in range(n_max + 1):
        K = np.zeros((n_max + 1, n_max + 1))
        m = n[k:]
        if t == 1.0:
            if k == 0:
                ops.append(np.eye(n_max + 1))
            break
        log_c = gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
        with np.errstate(divide="ignore"):
            log_amp = 0.5 * (log_c + (m - k) * math.log(t) + k * math.log1p(-t))
        K[m - k, m] = np.exp(log_amp)
        ops.append(K)
    return ops


def apply_loss(state: CVState, ch: LossChannel, drop_below: float = 1e-18) -> CVState:
    kraus = loss_kraus(ch.transmittance, state.n_max)
    out = []
    for w, v in state.branches:
        for K in kraus:
            u = v @ K.T
            p = float(np.vdot(u, u).real)
            if p > drop_below:
                out.append((w * p, u / math.sqrt(p)))
    return CVState(out, state.n_max).check()


_PLUS = np.array([1.0, 1.0]) / math.sqrt(2)


def build_protocol_state(beta: float, ch: LossChannel, n_max: int = N_MAX) -> CVState:
    """Both qubits in |+>, probe displaced on A, sent through loss, displaced on B by beta*sqrt(t)."""
    s = CVState.product(_PLUS, _PLUS, n_max=n_max)
    s = controlled_displacement(s, "A", beta)
    s = apply_loss(s, ch)
    return controlled_displacement(s, "B", beta * math.sqrt(ch.transmittance))


def z_states(beta: float, t: float, n_max: int = N_MAX) -> tuple[np.ndarray, np.ndarray]:
    """The two pure components |Z+>, |Z-> of the joint qubit-probe state, as (2, 2, n) arrays."""
    alpha = 2 * beta * math.sqrt(t)
    B = bell_basis().reshape(4, 2, 2)
    vac = coherent_state(0, n_max)
    n_minus = 1 - math.exp(-2 * abs(alpha) ** 2)
    n_plus = 2 - n_minus
    cp = cat_state(alpha, +1, n_max)
    cm = cat_state(alpha, -1, n_max) if n_minus > 0 else np.zeros(n_max + 1)
    out = []
    for sgn in (+1, -1):
        na, nb = (n_plus, n_minus) if sgn > 0 else (n_minus, n_plus)
        ca, cb = (cp, cm) if sgn > 0 else (cm, cp)
        psi = B[2] if sgn > 0 else B[3]
        v = (math.sqrt(na) / 2 * np.einsum("ij,k->ijk", B[0], ca)
             + math.sqrt(nb) / 2 * np.einsum("ij,k->ijk", B[1], cb)
             + np.einsum("ij,k->ijk", psi, vac) / math.sqrt(2))
        out.append(v)
    return out[0], out[1]


def mixing_decomposition(state: CVState, beta: float, t: float) -> tuple[float, float]:
    """Weight of |Z+> and the residual ||rho - (w Z+Z+ + (1-w) Z-Z-)|| (Frobenius)."""
    zp, zm = z_states(beta, t, state.n_max)
    rho = state.density_matrix()
    fp, fm = zp.reshape(-1), zm.reshape(-1)
    w = float(np.vdot(fp, rho @ fp).real)
    model = w * np.outer(fp, fp.conj()) + (1 - w) * np.outer(fm, fm.conj())
    return w, float(np.linalg.norm(rho - model))


def qubit_coherence(beta: float, ch: LossChannel, n_max: int = N_MAX) -> float:
    """|2 rho_01| of qubit A after D(beta sz), loss, and the ideal undo D(-beta sqrt(t) sz).

    The undo returns the probe to vacuum on both branches, so whatever
    coherence is missing was carried off by the lost photons.
    """
    s = CVState.product(_PLUS, [1.0, 0.0], n_max=n_max)
    s = controlled_displacement(s, "A", beta)
    s = apply_loss(s, ch)
    s = controlled_displacement(s, "A", -beta * math.sqrt(ch.transmittance))
    rho01 = sum(w * np.vdot(v[1, 0], v[0, 0]) for w, v in s.branches)
    return float(2 * abs(rho01))


@dataclass(frozen=True)
class CatMeasurement:
    probability: float
    state: BellMixture | None
    offdiagonal: float  # largest Bell-basis coherence left in the heralded state


def measure_cat_projection(state: CVState, beta: float, t: float) -> CatMeasurement:
    """Project the probe on the odd cat |c-> of amplitude 2 beta sqrt(t)."""
    alpha = 2 * beta * math.sqrt(t)
    if alpha == 0:
        return CatMeasurement(0.0, None, 0.0)
    cm = cat_state(alpha, -1, state.n_max)
    rho2 = np.zeros((4, 4), dtype=complex)
    for w, v in state.branches:
        q = (v @ cm.conj()).reshape(4)
        rho2 += w * np.outer(q, q.conj())
    p = float(np.trace(rho2).real)
    if p < 1e-300:
        return CatMeasurement(0.0, None, 0.0)
    rho2 /= p
    B = bell_basis()
    m = B.conj() @ rho2 @ B.T
    diag = np.clip(np.real(np.diag(m)), 0.0, None)
    off = float(np.max(np.abs(m - np.diag(np.diag(m)))))
    return CatMeasurement(p, BellMixture.from_coefficients(diag, normalize=True), off)


def qubus_cz_check(beta1: float, beta2: float, n_max: int = 40, target_product: float | None = None) -> float:
    """Operator distance between the four-displacement sequence and exp(2i b1 b2 sz x sz).

    The sequence D(i b2 sz2) D(b1 sz1) D(-i b2 sz2) D(-b1 sz1) acts on the
    qubits with the bus starting in vacuum; the effective 4x4 block is the
    vacuum-to-vacuum amplitude, so a bus left excited shows up as distance.
    Pass ``target_product`` to compare against a different b1*b2 phase.
    """
    prod = beta1 * beta2 if target_product is None else target_product
    seq = [("A", -beta1), ("B", -1j * beta2), ("A", beta1), ("B", 1j * beta2)]
    U = np.zeros((4, 4), dtype=complex)
    for j in range(4):
        qa = np.eye(2)[j >> 1]
        qb = np.eye(2)[j & 1]
        s = CVState.product(qa, qb, n_max=n_max)
        for q, amp in seq:
            s = controlled_displacement(s, q, amp)
        (w, v), = s.branches
        U[:, j] = v[:, :, 0].reshape(4)
    sz = np.diag([1.0, -1.0])
    target = expm(2j * prod * np.kron(sz, sz))
    phase = np.angle(np.trace(target.conj().T @ U))
    return float(np.linalg.norm(U - np.exp(1j * phase) * target, 2))
