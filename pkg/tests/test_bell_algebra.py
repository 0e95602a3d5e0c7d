import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qubus_repeater import bell_algebra as ba
from qubus_repeater.bell_algebra import (
    IDEAL,
    PHI_MINUS,
    PHI_PLUS,
    PSI_MINUS,
    BellMixture,
    GateErrorModel,
    PurificationPolicy,
    UnreachableTargetError,
    apply_gate_error,
    brute_force_two_pair,
    effective_rate,
    purification_probability,
    purified_fidelity,
    purify,
    swap,
    swapped_fidelity,
)
from qubus_repeater.photonics import Attenuation, LinkParams, conditioned_state

GRID = [round(0.5 + 0.01 * i, 10) for i in range(51)]
EPS = GateErrorModel(0.001)


def _random_mixtures(n, seed):
    rng = np.random.default_rng(seed)
    return [BellMixture.from_coefficients(c) for c in rng.dirichlet(np.ones(4), size=n)]


bell_mixtures = st.lists(st.floats(0, 1), min_size=4, max_size=4).filter(lambda c: sum(c) > 1e-6).map(
    lambda c: BellMixture.from_coefficients(c, normalize=True))


class TestBellMixture:
    def test_validation(self):
        with pytest.raises(ValueError):
            BellMixture(0.5, 0.6, 0.0, 0.0)
        with pytest.raises(ValueError):
            BellMixture(-0.1, 1.1, 0.0, 0.0)

    def test_fidelity_targets_phi_minus(self):
        s = BellMixture(0.1, 0.7, 0.15, 0.05)
        assert s.fidelity() == 0.7
        assert s.fidelity(PSI_MINUS) == 0.05

    def test_density_matrix_is_diagonal_in_bell_basis(self):
        s = BellMixture(0.1, 0.7, 0.15, 0.05)
        B = ba.bell_basis()
        m = B.conj() @ s.density_matrix() @ B.T
        np.testing.assert_allclose(m, np.diag(s.coefficients), atol=1e-14)


class TestGateError:
    def test_identity(self):
        s = BellMixture(0.1, 0.7, 0.15, 0.05)
        assert apply_gate_error(s, IDEAL) == s

    def test_pure_phi_minus(self):
        out = apply_gate_error(BellMixture.pure(PHI_MINUS), EPS)
        assert out.phi_minus == pytest.approx(0.99925, abs=1e-15)
        for k in (PHI_PLUS, 2, PSI_MINUS):
            assert out.coefficients[k] == pytest.approx(0.00025, abs=1e-15)

    @given(st.floats(0, 1))
    def test_uniform_fixed_point(self, eps):
        out = apply_gate_error(BellMixture.uniform(), GateErrorModel(eps))
        assert out.coefficients == pytest.approx((0.25,) * 4)

    def test_range(self):
        with pytest.raises(ValueError):
            GateErrorModel(1.5)


class TestPurify:
    def test_named_example(self):
        p, s = purify(conditioned_state(0.9), conditioned_state(0.9))
        assert p == pytest.approx(0.82, abs=1e-15)
        assert s.fidelity() == pytest.approx(0.81 / 0.82, abs=1e-15)
        assert s.fidelity() == pytest.approx(0.987805, abs=5e-7)

    def test_perfect_pairs(self):
        p, s = purify(conditioned_state(1.0), conditioned_state(1.0))
        assert p == 1.0 and s.fidelity() == 1.0

    def test_half_is_fixed_point(self):
        p, s = purify(conditioned_state(0.5), conditioned_state(0.5))
        assert p == pytest.approx(0.5) and s.fidelity() == pytest.approx(0.5)

    @pytest.mark.parametrize("F", GRID)
    def test_closed_form_on_grid(self, F):
        p, s = purify(conditioned_state(F), conditioned_state(F))
        assert p == pytest.approx(purification_probability(F), abs=1e-14)
        assert s.fidelity() == pytest.approx(purified_fidelity(F), abs=1e-14)
        assert s.is_rank2_phi()
        if 0.5 < F < 1:
            assert s.fidelity() > F

    def test_maximally_mixed(self):
        u = BellMixture.uniform()
        p, s = purify(u, u)
        assert p == pytest.approx(0.5)
        assert s.coefficients == pytest.approx((0.25,) * 4)
        r = brute_force_two_pair(u, u, "purify")
        assert r.success_prob == pytest.approx(0.5)
        assert r.success_prob + r.failure_prob == pytest.approx(1.0)

    def test_noise_floor(self):
        s = conditioned_state(0.9)
        for _ in range(12):
            _, s = purify(s, s, EPS)
        assert 0.998 < s.fidelity() < 0.9990

    @given(bell_mixtures, bell_mixtures, st.floats(0, 0.05))
    def test_normalised(self, a, b, eps):
        p, s = purify(a, b, GateErrorModel(eps))
        assert 0 <= p <= 1
        assert sum(s.coefficients) == pytest.approx(1.0, abs=1e-12)


class TestSwap:
    def test_perfect_pair_is_identity(self):
        for F in GRID:
            assert swap(conditioned_state(1.0), conditioned_state(F)).fidelity() == pytest.approx(F, abs=1e-15)

    def test_named_example(self):
        out = swap(conditioned_state(0.98), conditioned_state(0.98))
        assert out.fidelity() == pytest.approx(0.9608, abs=1e-15)

    def test_half(self):
        assert swap(conditioned_state(0.5), conditioned_state(0.5)).fidelity() == pytest.approx(0.5)

    def test_phi_plus_in_its_own_frame(self):
        out = swap(BellMixture.pure(PHI_PLUS), BellMixture.pure(PHI_PLUS), target=PHI_PLUS)
        assert out.phi_plus == pytest.approx(1.0)
        r = brute_force_two_pair(BellMixture.pure(PHI_PLUS), BellMixture.pure(PHI_PLUS), "swap", target=PHI_PLUS)
        assert r.state.phi_plus == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("F1", GRID[::5])
    def test_contraction_and_closure_on_grid(self, F1):
        for F2 in GRID:
            out = swap(conditioned_state(F1), conditioned_state(F2))
            assert out.fidelity() <= min(F1, F2) + 1e-15
            assert out.fidelity() == pytest.approx(swapped_fidelity(F1, F2), abs=1e-15)
            assert out.is_rank2_phi()

    @given(bell_mixtures, bell_mixtures, st.floats(0, 1))
    def test_normalised(self, a, b, eps):
        assert sum(swap(a, b, GateErrorModel(eps)).coefficients) == pytest.approx(1.0, abs=1e-12)


class TestOracle:
    @pytest.mark.parametrize("F", [0.6, 0.75, 0.9, 0.98])
    def test_rank2(self, F):
        a = conditioned_state(F)
        r = brute_force_two_pair(a, a, "purify")
        p, s = purify(a, a)
        assert r.success_prob == pytest.approx(p, abs=1e-12)
        np.testing.assert_allclose(r.state.coefficients, s.coefficients, atol=1e-12)

    @pytest.mark.parametrize("target", range(4))
    @pytest.mark.parametrize("eps", [0.0, 0.001, 0.2])
    def test_random_pairs_every_target(self, target, eps):
        err = GateErrorModel(eps)
        ms = _random_mixtures(20, 100 + target)
        for a, b in zip(ms[::2], ms[1::2]):
            r = brute_force_two_pair(a, b, "purify", err, target)
            p, s = purify(a, b, err, target)
            assert abs(r.success_prob - p) < 1e-10
            assert np.max(np.abs(np.subtract(r.state.coefficients, s.coefficients))) < 1e-10
            assert r.offdiagonal < 1e-10
            r = brute_force_two_pair(a, b, "swap", err, target)
            np.testing.assert_allclose(r.state.coefficients, swap(a, b, err, target).coefficients, atol=1e-10)


class TestEffectiveRate:
    link = LinkParams(Attenuation(0.8), eta_sq=0.9, target_fidelity=0.9)

    def test_one_round(self):
        p, s = effective_rate(None, PurificationPolicy("single_round"), self.link)
        assert p == pytest.approx(0.13338 * 0.82 / 2, abs=1e-5)
        assert p == pytest.approx(0.0547, abs=1e-4)

    def test_direct(self):
        p, s = effective_rate(None, PurificationPolicy("direct"), self.link.with_fidelity(0.98))
        assert p == pytest.approx(0.03374, abs=5e-6)
        assert s.fidelity() == 0.98

    def test_symmetric(self):
        pol = PurificationPolicy("symmetric_nested", rounds=2)
        p, s = effective_rate(None, pol, self.link.with_fidelity(0.75))
        assert p == pytest.approx(0.023023, abs=1e-6)
        assert s.fidelity() > 0.98

    def test_explicit_generation_probability(self):
        p, _ = effective_rate(0.5, PurificationPolicy("single_round"), self.link)
        assert p == pytest.approx(0.5 * 0.82 / 2)

    def test_pumping_divides_by_pairs_used(self):
        pol = PurificationPolicy("pumping", rounds=2)
        p, s = effective_rate(1.0, pol, self.link)
        p1, s1 = purify(conditioned_state(0.9), conditioned_state(0.9))
        p2, s2 = purify(s1, conditioned_state(0.9))
        assert p == pytest.approx(p1 * p2 / 3)
        assert s.fidelity() == pytest.approx(s2.fidelity())

    def test_target_depth(self):
        pol = PurificationPolicy("symmetric_nested", target_fidelity=0.98)
        _, s = effective_rate(None, pol, self.link.with_fidelity(0.75))
        assert s.fidelity() >= 0.98

    def test_unreachable(self):
        pol = PurificationPolicy("single_round", target_fidelity=0.98)
        with pytest.raises(UnreachableTargetError):
            effective_rate(None, pol, self.link.with_fidelity(0.51))
        pol = PurificationPolicy("symmetric_nested", target_fidelity=0.9995, max_rounds=20)
        with pytest.raises(UnreachableTargetError):
            effective_rate(None, pol, self.link, EPS)

    def test_rounds_to_reach(self):
        assert ba.rounds_to_reach(conditioned_state(0.75), 0.98) == 2
        with pytest.raises(UnreachableTargetError):
            ba.rounds_to_reach(conditioned_state(0.9), 0.9995, EPS)


class TestPolicy:
    @pytest.mark.parametrize("kw", [dict(kind="nope"), dict(rounds=-1), dict(target_fidelity=0.4),
                                    dict(kind="direct", rounds=2), dict(kind="single_round", rounds=3)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PurificationPolicy(**kw)
