import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinopto.errors import DomainError
from spinopto.model import (
    MicroscopicParams,
    SpinState,
    SystemParams,
    analogy_equivalence_check,
    analogy_map,
    cavity_drift,
    cavity_steady_state,
    derive_couplings,
    effective_field,
    spin_drift,
)

TWO_PI = 2 * math.pi


def micro(**kw):
    base = dict(g0=TWO_PI * 15e6, delta_ca=TWO_PI * 20e9, upsilon=1.0, gamma=1.0, B=1.0)
    base.update(kw)
    return MicroscopicParams(**base)


class TestDeriveCouplings:
    def test_no_vector_shift(self):
        assert derive_couplings(micro(upsilon=0.0))[1] == 0.0

    def test_zero_field(self):
        assert derive_couplings(micro(B=0.0))[0] == 0.0

    def test_alkali_numbers(self):
        _, omega_cpl, _ = derive_couplings(micro())
        assert omega_cpl / TWO_PI == pytest.approx(-11.25e3, rel=1e-12)

    def test_dispersive_shift_scales_with_atoms(self):
        one = derive_couplings(micro(N=1))[2]
        many = derive_couplings(micro(N=1000))[2]
        assert many == pytest.approx(1000 * one)

    def test_zero_detuning_rejected(self):
        with pytest.raises(DomainError):
            MicroscopicParams(g0=1.0, delta_ca=0.0, upsilon=1.0, gamma=1.0, B=1.0)

    def test_from_microscopic_uses_collective_spin(self):
        p = SystemParams.from_microscopic(micro(N=200, s=0.5), kappa=1.0)
        assert p.S == 100.0


class TestSystemParams:
    def test_rejects_nonpositive_kappa(self):
        with pytest.raises(DomainError):
            SystemParams(omega_L=1.0, omega_cpl=0.0, kappa=0.0)

    def test_rejects_non_unit_field_direction(self):
        with pytest.raises(DomainError):
            SystemParams(omega_L=1.0, omega_cpl=0.0, kappa=1.0, b=(1.0, 1.0, 0.0))

    def test_drive_amplitude(self):
        p = SystemParams(omega_L=1.0, omega_cpl=0.0, kappa=1.0, nmax_plus=10.0)
        assert p.eta_plus == pytest.approx(math.sqrt(10.0))


class TestEffectiveField:
    def test_balanced(self):
        p = SystemParams(omega_L=2.0, omega_cpl=0.3, kappa=1.0)
        np.testing.assert_allclose(effective_field(p, 4.0, 4.0).omega_eff, [2.0, 0, 0])

    def test_pure_imbalance(self):
        p = SystemParams(omega_L=0.0, omega_cpl=2.0, kappa=1.0)
        np.testing.assert_allclose(effective_field(p, 5.0, 1.0).omega_eff, [0, 0, 8.0])

    def test_mixed(self):
        p = SystemParams(omega_L=1.0, omega_cpl=0.5, kappa=1.0)
        np.testing.assert_allclose(effective_field(p, 3.0, 1.0).omega_eff, [1.0, 0, 1.0])


class TestSpinDrift:
    def test_aligned_is_static(self):
        w = np.array([0.3, -0.2, 0.9])
        np.testing.assert_allclose(spin_drift(5 * w, w), 0.0, atol=1e-15)

    def test_larmor_component(self):
        S, dn, oc, ol = 7.0, 3.0, 0.2, 1.1
        d = spin_drift(np.array([S, 0, 0]), np.array([ol, 0, oc * dn]))
        assert d[1] == pytest.approx(-oc * S * dn)
        assert d[2] == 0.0

    def test_cross_product_order(self):
        np.testing.assert_allclose(spin_drift(np.array([0, 1.0, 0]), np.array([1.0, 0, 0])),
                                   [0, 0, -1.0])

    @given(st.lists(st.floats(-10, 10), min_size=6, max_size=6))
    def test_norm_preserving(self, v):
        s, w = np.array(v[:3]), np.array(v[3:])
        assert abs(spin_drift(s, w) @ s) <= 1e-9 * (1 + np.linalg.norm(s) ** 2 * np.linalg.norm(w))


class TestCavity:
    def test_resonant_empty_cavity(self):
        p = SystemParams(omega_L=1.0, omega_cpl=0.0, kappa=2.0, nmax_plus=10.0)
        c = cavity_steady_state(p, 0.0)
        assert c.c_plus == pytest.approx(math.sqrt(10))
        assert c.n_plus == pytest.approx(10.0)

    def test_undriven_decays(self):
        p = SystemParams(omega_L=1.0, omega_cpl=0.1, kappa=1.0)
        c = np.array([1.0 + 1j, -0.5j])
        d = cavity_drift(p, c, 3.0)
        assert np.all(np.real(d / c) == -1.0)

    @settings(max_examples=50)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-2, 2), st.floats(0, 20), st.floats(0, 20))
    def test_steady_state_zeroes_drift(self, dp, dm, sk, np_, nm):
        p = SystemParams(omega_L=1.0, omega_cpl=0.7, kappa=1.3, delta_p_plus=dp,
                         delta_p_minus=dm, nmax_plus=np_, nmax_minus=nm)
        c = cavity_steady_state(p, sk).as_array()
        np.testing.assert_allclose(cavity_drift(p, c, sk), 0.0, atol=1e-12)


class TestAnalogy:
    def test_sql_width(self):
        p = SystemParams(omega_L=1.0, omega_cpl=0.1, kappa=1.0, S=2.0)
        assert analogy_map(p).dS_sql == 1.0

    def test_uncoupled(self):
        p = SystemParams(omega_L=1.0, omega_cpl=0.0, kappa=1.0, S=10.0)
        assert analogy_map(p).g_om == 0.0

    def test_coupling_value(self):
        p = SystemParams(omega_L=TWO_PI * 200e3, omega_cpl=-TWO_PI * 2.3e3, kappa=1.0, S=5000)
        assert analogy_map(p).g_om / TWO_PI == pytest.approx(115e3, rel=1e-12)

    def test_mass_matches_zero_point_width(self):
        # z_zpf**2 = 1 / (2 m omega) with z_zpf = z_ho = 1
        p = SystemParams(omega_L=3.0, omega_cpl=0.1, kappa=1.0, S=10.0)
        m = analogy_map(p)
        assert 1 / (2 * m.mass_equiv * m.omega_z) == pytest.approx(m.z_ho**2)

    def test_requires_positive_larmor(self):
        with pytest.raises(DomainError):
            analogy_map(SystemParams(omega_L=0.0, omega_cpl=0.1, kappa=1.0))

    def test_zero_amplitude(self):
        p = SystemParams(omega_L=1.0, omega_cpl=0.01, kappa=1.0, S=100.0)
        assert analogy_equivalence_check(p, 0.0) == 0.0

    def test_deviation_grows_with_amplitude(self):
        # the curvature of the sphere shows up through the tilted field
        p = SystemParams(omega_L=1.0, omega_cpl=0.01, kappa=1.0, S=100.0)
        devs = [analogy_equivalence_check(p, a, photon_imbalance=0.01)
                for a in (1e-3, 1e-2, 0.1, 0.5)]
        assert devs == sorted(devs)
        assert devs[-1] > 10 * devs[0]

    def test_untilted_precession_is_exactly_harmonic(self):
        p = SystemParams(omega_L=1.0, omega_cpl=0.01, kappa=1.0, S=100.0)
        assert analogy_equivalence_check(p, 0.5) < 1e-12


def test_spin_state_from_angles():
    s = SpinState.from_angles(2.0, math.pi / 2)
    np.testing.assert_allclose(s.as_array(), [2.0, 0, 0], atol=1e-15)
    assert s.norm == pytest.approx(2.0)
