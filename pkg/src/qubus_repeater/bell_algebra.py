"""Bell-diagonal state calculus: purification, swapping and gate noise.

Bell states are labelled by two bits, ``index = phase + 2 * parity``::

    0: Phi+   1: Phi-   2: Psi+   3: Psi-

A Pauli on one qubit of a pair XORs the label, so composing pairs by
swapping XORs labels and the bilateral CNOT moves phase bits from target to
source and parity bits from source to target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

PHI_PLUS, PHI_MINUS, PSI_PLUS, PSI_MINUS = 0, 1, 2, 3
BELL_NAMES = ("phi_plus", "phi_minus", "psi_plus", "psi_minus")


class UnreachableTargetError(ValueError):
    """A purification policy cannot reach the requested fidelity."""


@dataclass(frozen=True)
class BellMixture:
    phi_plus: float
    phi_minus: float
    psi_plus: float
    psi_minus: float

    def __post_init__(self):
        c = self.coefficients
        if any(x < -1e-12 or x > 1 + 1e-12 for x in c):
            raise ValueError(f"Bell coefficients must lie in [0, 1]: {c}")
        if abs(sum(c) - 1.0) > 1e-9:
            raise ValueError(f"Bell coefficients must sum to 1, got {sum(c)!r}")

    @classmethod
    def from_coefficients(cls, c: Sequence[float], normalize: bool = False) -> "BellMixture":
        c = [float(x) for x in c]
        if normalize:
            s = sum(c)
            c = [x / s for x in c]
        return cls(*c)

    @classmethod
    def pure(cls, index: int) -> "BellMixture":
        c = [0.0] * 4
        c[index] = 1.0
        return cls(*c)

    @classmethod
    def uniform(cls) -> "BellMixture":
        return cls(0.25, 0.25, 0.25, 0.25)

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        return (self.phi_plus, self.phi_minus, self.psi_plus, self.psi_minus)

    def fidelity(self, target: int = PHI_MINUS) -> float:
        return self.coefficients[target]

    def is_rank2_phi(self, tol: float = 1e-12) -> bool:
        return self.psi_plus <= tol and self.psi_minus <= tol

    def density_matrix(self) -> np.ndarray:
        B = bell_basis()
        return sum(p * np.outer(B[k], B[k].conj()) for k, p in enumerate(self.coefficients))


@dataclass(frozen=True)
class GateErrorModel:
    """Two-qubit depolarizing noise of weight ``epsilon`` per local C-Z."""

    epsilon: float = 0.001

    def __post_init__(self):
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")


IDEAL = GateErrorModel(0.0)


def apply_gate_error(s: BellMixture, err: GateErrorModel) -> BellMixture:
    e = err.epsilon
    if e == 0:
        return s
    return BellMixture(*((1 - e) * x + e / 4 for x in s.coefficients))


def _apply_linear(m: tuple[int, int, int, int], x: int) -> int:
    """Apply a 2x2 GF(2) matrix (row-major) to label ``x`` = phase + 2 * parity."""
    a, b = x & 1, x >> 1
    return ((m[0] & a) ^ (m[1] & b)) | (((m[2] & a) ^ (m[3] & b)) << 1)


# GL(2, 2): the six relabellings of the three non-trivial Bell labels that
# bilateral local Cliffords can realise while fixing Phi+.
GL22 = tuple(
    m for m in product((0, 1), repeat=4)
    if (m[0] & m[3]) ^ (m[1] & m[2])
)


def purification_frame(a: BellMixture, b: BellMixture, target: int = PHI_MINUS) -> tuple[int, int, int, int]:
    """Relabelling used before the bilateral CNOT.

    After shifting the target to Phi+ (label 0), the matrix sends the
    smallest error weight to label 1, the one error the parity comparison
    cannot see.  This keeps repeated rounds from piling up one error type.
    """
    w = [a.coefficients[x ^ target] + b.coefficients[x ^ target] for x in range(4)]
    hidden = min((1, 2, 3), key=lambda x: (w[x], x))
    for m in GL22:
        if _apply_linear(m, hidden) == 1:
            return m
    raise AssertionError("unreachable")


def _inverse(m: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    for n in GL22:
        if all(_apply_linear(n, _apply_linear(m, x)) == x for x in range(4)):
            return n
    raise AssertionError("unreachable")


def purify(a: BellMixture, b: BellMixture, err: GateErrorModel = IDEAL,
           target: int = PHI_MINUS) -> tuple[float, BellMixture]:
    """One recurrence round on two pairs; ``a`` is kept, ``b`` is measured.

    Both stations apply the frame change from :func:`purification_frame`,
    a CNOT from the kept to the measured qubit, measure the measured pair in
    Z and keep ``a`` when the outcomes agree, then undo the frame change.
    Each local gate carries two-qubit depolarizing noise; on two
    Bell-diagonal pairs that is a global mix towards the maximally mixed
    16-dimensional state.
    """
    m = purification_frame(a, b, target)
    ca = [0.0] * 4
    cb = [0.0] * 4
    for x in range(4):
        y = _apply_linear(m, x ^ target)
        ca[y] = a.coefficients[x]
        cb[y] = b.coefficients[x]
    keep = (1.0 - err.epsilon) ** 2
    noise = (1.0 - keep) / 16.0
    out = [0.0] * 4
    for i, j in product(range(4), repeat=2):
        if (i >> 1) != (j >> 1):
            continue  # parities disagree: rejected
        out[(i & 1) ^ (j & 1) | (i & 2)] += keep * ca[i] * cb[j] + noise
    p_ok = sum(out)
    inv = _inverse(m)
    res = [0.0] * 4
    for y in range(4):
        res[_apply_linear(inv, y) ^ target] = out[y] / p_ok
    return p_ok, BellMixture(*res)


def swap(a: BellMixture, b: BellMixture, err: GateErrorModel = IDEAL, target: int = PHI_MINUS) -> BellMixture:
    """Entanglement swapping with Pauli frame chosen so target x target -> target."""
    ca, cb = a.coefficients, b.coefficients
    out = [0.0] * 4
    for i, j in product(range(4), repeat=2):
        out[i ^ j ^ target] += ca[i] * cb[j]
    return apply_gate_error(BellMixture.from_coefficients(out, normalize=True), err)


def purified_fidelity(F: float) -> float:
    return F * F / (1 - 2 * F + 2 * F * F)


def purification_probability(F: float) -> float:
    return F * F + (1 - F) * (1 - F)


def swapped_fidelity(F1: float, F2: float) -> float:
    return F1 * F2 + (1 - F1) * (1 - F2)


# ---------------------------------------------------------------------------
# policies and effective generation probability

POLICY_KINDS = ("direct", "single_round", "symmetric_nested", "pumping")


@dataclass(frozen=True)
class PurificationPolicy:
    """How base pairs are purified before use.

    ``rounds`` fixes the depth; with only ``target_fidelity`` the smallest
    depth (up to ``max_rounds``) reaching the target is used.
    """

    kind: str = "single_round"
    rounds: int | None = None
    target_fidelity: float | None = None
    max_rounds: int = 12

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.rounds is not None and self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.target_fidelity is not None and not 0.5 < self.target_fidelity <= 1:
            raise ValueError("target fidelity must lie in (1/2, 1]")
        if self.kind == "direct" and self.rounds not in (None, 0):
            raise ValueError("direct policy has no purification rounds")
        if self.kind == "single_round" and self.rounds not in (None, 1):
            raise ValueError("single_round policy has exactly one round")

    def fixed_rounds(self) -> int | None:
        if self.kind == "direct":
            return 0
        if self.kind == "single_round":
            return 1
        return self.rounds


def _purification_ladder(state: BellMixture, policy: PurificationPolicy, err: GateErrorModel, target: int):
    """Yield (success probability, state) after each round of ``policy``."""
    fresh = state
    while True:
        partner = fresh if policy.kind == "pumping" else state
        p, state = purify(state, partner, err)
        yield p, state


def effective_rate(p_g: float | None, policy: PurificationPolicy, link, err: GateErrorModel = IDEAL,
                   target: int = PHI_MINUS) -> tuple[float, BellMixture]:
    """Effective per-channel probability of producing the final pair.

    Symmetric nesting halves the pair count each round, so each round
    contributes ``P_pur / 2``; pumping consumes one extra base pair per step,
    so ``k`` steps divide by ``k + 1``.
    """
    from .photonics import conditioned_state

    F0 = link.fidelity
    if p_g is None:
        p_g = link.success_probability
    state = conditioned_state(F0)
    fixed = policy.fixed_rounds()
    goal = policy.target_fidelity

    def done(rounds: int, s: BellMixture) -> bool:
        if fixed is not None:
            return rounds == fixed
        if goal is None:
            raise ValueError("policy needs rounds or a target fidelity")
        return s.fidelity(target) >= goal

    prob_product = 1.0
    rounds = 0
    ladder = _purification_ladder(state, policy, err, target)
    while not done(rounds, state):
        if rounds >= policy.max_rounds:
            raise UnreachableTargetError(
                f"F={F0} does not reach {goal} within {policy.max_rounds} rounds")
        p, state = next(ladder)
        prob_product *= p if policy.kind == "pumping" else p / 2
        rounds += 1
    if goal is not None and state.fidelity(target) < goal - 1e-12:
        raise UnreachableTargetError(
            f"F={F0} reaches only {state.fidelity(target):.6f} < {goal} after {rounds} round(s)")
    if policy.kind == "pumping":
        prob_product /= rounds + 1
    return p_g * prob_product, state


def rounds_to_reach(state: BellMixture, goal: float, err: GateErrorModel = IDEAL, max_rounds: int = 12,
                    target: int = PHI_MINUS) -> int:
    """Symmetric rounds needed for ``state`` to reach ``goal``; raises if never."""
    for k in range(max_rounds + 1):
        if state.fidelity(target) >= goal:
            return k
        _, nxt = purify(state, state, err)
        if nxt.fidelity(target) <= state.fidelity(target) + 1e-15:
            break
        state = nxt
    raise UnreachableTargetError(f"fidelity {state.fidelity(target):.6f} cannot be purified to {goal}")


# ---------------------------------------------------------------------------
# brute-force four-qubit oracle

_I2 = np.eye(2)
_H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
_PAULIS = (np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0]))


def bell_basis() -> np.ndarray:
    """Rows are Phi+, Phi-, Psi+, Psi- in the |00>,|01>,|10>,|11> basis."""
    s = 1 / math.sqrt(2)
    return np.array([[s, 0, 0, s], [s, 0, 0, -s], [0, s, s, 0], [0, s, -s, 0]], dtype=complex)


def _op_on(ops: dict[int, np.ndarray], n: int = 4) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for q in range(n):
        out = np.kron(out, ops.get(q, _I2))
    return out


def _cnot(control: int, target: int, n: int = 4) -> np.ndarray:
    p0 = np.diag([1.0, 0.0])
    p1 = np.diag([0.0, 1.0])
    return _op_on({control: p0}, n) + _op_on({control: p1, target: _PAULIS[1]}, n)


def _partial_trace(rho: np.ndarray, keep: Sequence[int], n: int = 4) -> np.ndarray:
    t = rho.reshape((2,) * (2 * n))
    drop = [q for q in range(n) if q not in keep]
    letters = "abcdefghijklmnop"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for q in drop:
        col[q] = row[q]
    subs = "".join(row) + "".join(col) + "->" + "".join(row[q] for q in keep) + "".join(col[q] for q in keep)
    d = 2 ** len(keep)
    return np.einsum(subs, t).reshape(d, d)


def _depolarize(rho: np.ndarray, qubits: tuple[int, int], eps: float, n: int = 4) -> np.ndarray:
    if eps == 0:
        return rho
    rest = [q for q in range(n) if q not in qubits]
    reduced = _partial_trace(rho, rest, n)
    # rebuild (I/4 on `qubits`) x reduced in the original qubit order
    mixed = np.kron(np.eye(4) / 4, reduced).reshape((2,) * (2 * n))
    order = list(qubits) + rest
    perm = [order.index(q) for q in range(n)]
    mixed = mixed.transpose(perm + [p + n for p in perm]).reshape(2 ** n, 2 ** n)
    return (1 - eps) * rho + eps * mixed


def _bell_coefficients(rho2: np.ndarray) -> tuple[np.ndarray, float]:
    B = bell_basis()
    m = B.conj() @ rho2 @ B.T
    diag = np.real(np.diag(m)).copy()
    offdiag = float(np.max(np.abs(m - np.diag(np.diag(m)))))
    return diag, offdiag


@dataclass(frozen=True)
class OracleResult:
    state: BellMixture
    success_prob: float
    failure_prob: float
    offdiagonal: float  # largest Bell-basis coherence in the output (0 for Bell-diagonal)


def brute_force_two_pair(a: BellMixture, b: BellMixture, operation: str, err: GateErrorModel = IDEAL,
                         target: int = PHI_MINUS) -> OracleResult:
    """Same maps as :func:`purify` / :func:`swap`, computed on a 16x16 density matrix.

    Qubit order is (0, 1) for pair ``a`` and (2, 3) for pair ``b``.
    """
    rho = np.kron(a.density_matrix(), b.density_matrix())
    eps = err.epsilon
    if operation == "purify":
        m = purification_frame(a, b, target)
        inv = _inverse(m)
        pre = _bilateral_unitary(tuple(_apply_linear(m, x ^ target) for x in range(4)))
        post = _bilateral_unitary(tuple(_apply_linear(inv, y) ^ target for y in range(4)))
        # pair a is qubits (0, 1), pair b is (2, 3); station A holds 0 and 2
        u = _op_on({0: pre[0], 1: pre[1], 2: pre[0], 3: pre[1]})
        rho = u @ rho @ u.conj().T
        for ctrl, tgt in ((0, 2), (1, 3)):
            g = _cnot(ctrl, tgt)
            rho = _depolarize(g @ rho @ g.conj().T, (ctrl, tgt), eps)
        proj = {}
        for m2, m3 in product((0, 1), repeat=2):
            proj[m2, m3] = _op_on({2: np.diag([1.0 - m2, m2]), 3: np.diag([1.0 - m3, m3])})
        accept = proj[0, 0] + proj[1, 1]
        reject = proj[0, 1] + proj[1, 0]
        kept = accept @ rho @ accept
        p_ok = float(np.real(np.trace(kept)))
        p_fail = float(np.real(np.trace(reject @ rho @ reject)))
        out = _partial_trace(kept, (0, 1)) / p_ok
        v = np.kron(post[0], post[1])
        out = v @ out @ v.conj().T
        diag, off = _bell_coefficients(out)
        return OracleResult(BellMixture.from_coefficients(diag, normalize=True), p_ok, p_fail, off)

    if operation == "swap":
        rho = _depolarize(rho, (1, 2), eps)
        B = bell_basis()
        ref = _reference_corrections()
        frame = _PAULIS[_label_pauli(target)]
        out = np.zeros((4, 4), dtype=complex)
        total = 0.0
        for k in range(4):
            proj2 = np.outer(B[k], B[k].conj())
            proj = np.kron(np.kron(_I2, proj2), _I2)
            post = proj @ rho @ proj
            total += float(np.real(np.trace(post)))
            red = _partial_trace(post, (0, 3))
            corr = np.kron(_I2, frame @ _PAULIS[ref[k]])
            out += corr @ red @ corr.conj().T
        diag, off = _bell_coefficients(out / total)
        return OracleResult(BellMixture.from_coefficients(diag, normalize=True), total, 0.0, off)

    raise ValueError(f"unknown operation {operation!r}")


def _clifford_group() -> list[np.ndarray]:
    """The 24 single-qubit Cliffords modulo phase, generated from H and S."""
    S = np.diag([1, 1j])
    group = [np.eye(2, dtype=complex)]
    frontier = list(group)
    while frontier:
        nxt = []
        for g in frontier:
            for h in (_H, S):
                c = h @ g
                if not any(abs(abs(np.trace(c.conj().T @ e)) - 2) < 1e-9 for e in group):
                    group.append(c)
                    nxt.append(c)
        frontier = nxt
    return group


_BILATERAL_CACHE: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}


def _bilateral_unitary(mapping: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Local Cliffords (U_A, U_B) with (U_A x U_B)|B_x> ~ |B_mapping[x]> for each Bell label x."""
    if mapping in _BILATERAL_CACHE:
        return _BILATERAL_CACHE[mapping]
    B = bell_basis()
    cl = _clifford_group()
    for ua in cl:
        for ub in cl:
            u = np.kron(ua, ub)
            if all(abs(abs(np.vdot(B[mapping[x]], u @ B[x])) - 1) < 1e-9 for x in range(4)):
                _BILATERAL_CACHE[mapping] = (ua, ub)
                return ua, ub
    raise ValueError(f"no local Clifford realises Bell relabelling {mapping}")


def _label_pauli(label: int) -> int:
    """Pauli (I, X, Y, Z) on the second qubit that maps Phi+ to Bell state ``label``."""
    B = bell_basis()
    for p in range(4):
        v = np.kron(_I2, _PAULIS[p]) @ B[PHI_PLUS]
        if abs(abs(np.vdot(B[label], v)) - 1) < 1e-12:
            return p
    raise AssertionError("unreachable")


def _reference_corrections() -> list[int]:
    """Correction Pauli on qubit 3 per Bell outcome on (1, 2), fixed by Phi+ x Phi+ -> Phi+."""
    B = bell_basis()
    phi = np.kron(B[PHI_PLUS], B[PHI_PLUS])
    table = []
    psi = phi.reshape(2, 4, 2)
    for k in range(4):
        red = np.einsum("m,amb->ab", B[k].conj(), psi).reshape(4)
        red /= np.linalg.norm(red)
        for p in range(4):
            w = np.kron(_I2, _PAULIS[p]) @ red
            if abs(abs(np.vdot(B[PHI_PLUS], w)) - 1) < 1e-12:
                table.append(p)
                break
        else:  # pragma: no cover
            raise AssertionError("no correction found")
    return table
