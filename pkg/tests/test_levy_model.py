import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import levybarrier as lb
from levybarrier import JumpSpec, LevyTriplet, characteristic_exponent, classify
from levybarrier.errors import InvalidModel
from levybarrier.path_engine import SimConfig, simulate_batch


def kou(rate=1.0, p_up=0.5, eta_up=2.0, eta_down=2.0):
    return JumpSpec.kou_mixture(rate, p_up, eta_up, eta_down)


# ---------------------------------------------------------------------------
# characteristic exponent
# ---------------------------------------------------------------------------


def test_char_exponent_pure_gaussian():
    t = LevyTriplet(gamma=0.0, sigma=1.0)
    assert characteristic_exponent(t, 2.0) == pytest.approx(2.0 + 0.0j)


def test_char_exponent_pure_drift():
    t = LevyTriplet(gamma=1.0, sigma=0.0)
    assert characteristic_exponent(t, 3.0) == pytest.approx(-3.0j)


def _quad_jump_term(jumps, lam):
    """Independent oracle: numerical quadrature of the jump integrand."""

    def integrand_re(z):
        val = 1.0 - np.exp(1j * lam * z) + 1j * lam * z * (abs(z) < 1.0)
        return (val * jumps.pdf(z)).real

    def integrand_im(z):
        val = 1.0 - np.exp(1j * lam * z) + 1j * lam * z * (abs(z) < 1.0)
        return (val * jumps.pdf(z)).imag

    pieces = [(-60.0, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, 60.0)]
    re = sum(integrate.quad(integrand_re, a, b, limit=200)[0] for a, b in pieces)
    im = sum(integrate.quad(integrand_im, a, b, limit=200)[0] for a, b in pieces)
    return jumps.rate * (re + 1j * im)


def test_char_exponent_kou_matches_quadrature():
    j = kou()
    t = LevyTriplet(gamma=0.0, sigma=0.0, jumps=j)
    got = characteristic_exponent(t, 1.0)
    assert got == pytest.approx(0.2 + 0.0j, abs=1e-12)  # closed form for this symmetric law
    assert got == pytest.approx(_quad_jump_term(j, 1.0), abs=1e-8)


@pytest.mark.parametrize(
    "jumps",
    [
        kou(1.3, 0.7, 1.5, 3.0),
        JumpSpec.gaussian_sizes(0.8, 0.2, 0.6),
        JumpSpec.uniform_sizes(2.0, -0.7, 1.4),
    ],
)
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.7])
def test_char_exponent_quadrature_cross_check(jumps, lam):
    t = LevyTriplet(gamma=0.3, sigma=0.4, jumps=jumps)
    expected = (
        -1j * t.gamma * lam + 0.5 * t.sigma**2 * lam**2 + _quad_jump_term(jumps, lam)
    )
    assert characteristic_exponent(t, lam) == pytest.approx(expected, abs=1e-7)


def test_psi_zero_is_zero():
    for t in [
        LevyTriplet(0.5, 1.0),
        LevyTriplet(0.0, 0.2, jumps=kou()),
        LevyTriplet(-1.0, 0.0, jumps=JumpSpec.atom_sizes(2.0, (-1.0, 2.0), (0.5, 0.5))),
    ]:
        assert characteristic_exponent(t, 0.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
def test_psi_conjugate_symmetry(lam):
    t = LevyTriplet(gamma=0.4, sigma=0.7, jumps=kou(1.0, 0.3, 2.0, 1.0))
    a = characteristic_exponent(t, lam)
    b = characteristic_exponent(t, -lam)
    assert a == pytest.approx(np.conj(b), abs=1e-12)


def test_empirical_characteristic_function():
    # E[e^{i lam X_1}] = e^{-Psi(lam)}: exact in law on the grid, so the
    # Monte Carlo CLT bound 4/sqrt(N) applies per real/imaginary part
    n = 20_000
    cfg = SimConfig(dt=1.0 / 64, horizon_T=1.0, n_paths=n, master_seed=99, tail_tol=0.999)
    for t in [LevyTriplet(0.0, 1.0), LevyTriplet(0.2, 0.5, jumps=kou(1.0, 0.4, 2.0, 3.0))]:
        batch = simulate_batch(t, 0.0, cfg)
        x1 = batch.values[:, -1]
        for lam in (0.5, 1.0, 2.0):
            emp = np.exp(1j * lam * x1).mean()
            target = np.exp(-characteristic_exponent(t, lam))
            assert abs(emp.real - target.real) <= 4 / np.sqrt(n)
            assert abs(emp.imag - target.imag) <= 4 / np.sqrt(n)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def test_classify_gaussian_part_unbounded_variation():
    flags = classify(LevyTriplet(0.0, 1.0, jumps=kou()))
    assert not flags.bounded_variation


def test_classify_driftless_compound_poisson():
    cp = lb.driftless_compound_poisson(JumpSpec.atom_sizes(1.0, (-1.0, 1.0), (0.5, 0.5)))
    flags = classify(cp)
    assert flags.driftless_compound_poisson
    assert flags.bounded_variation
    assert not flags.negative_of_subordinator


def test_classify_negative_of_subordinator():
    t = LevyTriplet(gamma=-1.0, sigma=0.0, jumps=kou(1.0, 0.0, 1.0, 2.0))
    flags = classify(t)
    assert flags.negative_of_subordinator
    assert flags.spectrally_negative
    assert not flags.spectrally_positive


def test_classify_is_pure():
    t = LevyTriplet(0.0, 1.0, jumps=kou())
    assert classify(t) == classify(t)


def test_degenerate_model_rejected():
    with pytest.raises(InvalidModel):
        LevyTriplet(gamma=0.0, sigma=0.0)


# ---------------------------------------------------------------------------
# exponential moments
# ---------------------------------------------------------------------------


def test_exp_moment_gaussian_always_finite():
    t = LevyTriplet(0.0, 1.0, jumps=JumpSpec.gaussian_sizes(1.0, 0.0, 2.0), exp_moment_theta=1.0)
    assert lb.exp_moment_check(t)


def test_exp_moment_kou_tail_too_heavy():
    t = LevyTriplet(0.0, 1.0, jumps=kou(eta_up=2.0), exp_moment_theta=3.0)
    assert not lb.exp_moment_check(t)
    # boundary theta = eta diverges as well
    t2 = LevyTriplet(0.0, 1.0, jumps=kou(eta_up=2.0, eta_down=5.0), exp_moment_theta=2.0)
    assert not lb.exp_moment_check(t2)


def test_exp_moment_bounded_support():
    t = LevyTriplet(
        0.0, 1.0, jumps=JumpSpec.atom_sizes(1.0, (-1.0, 2.0), (0.5, 0.5)), exp_moment_theta=10.0
    )
    assert lb.exp_moment_check(t)


# ---------------------------------------------------------------------------
# jump spec internals
# ---------------------------------------------------------------------------


def test_jump_invariants_rejected():
    with pytest.raises(InvalidModel):
        JumpSpec.kou_mixture(1.0, 1.5, 2.0, 2.0)
    with pytest.raises(InvalidModel):
        JumpSpec.atom_sizes(1.0, (0.0, 1.0), (0.5, 0.5))
    with pytest.raises(InvalidModel):
        JumpSpec.atom_sizes(1.0, (-1.0, 1.0), (0.6, 0.6))
    with pytest.raises(InvalidModel):
        JumpSpec(rate=-1.0)
    with pytest.raises(InvalidModel):
        JumpSpec(rate=1.0, kind="none")


def test_samples_never_zero():
    rng = np.random.default_rng(0)
    for j in [kou(), JumpSpec.uniform_sizes(1.0, -1.0, 1.0), JumpSpec.gaussian_sizes(1.0, 0.0, 1.0)]:
        assert np.all(j.sample(rng, 5000) != 0.0)


def test_truncated_mean_against_quadrature():
    for j in [kou(1.0, 0.7, 1.5, 3.0), JumpSpec.gaussian_sizes(1.0, 0.3, 0.8),
              JumpSpec.uniform_sizes(1.0, -0.4, 2.5)]:
        val, _ = integrate.quad(lambda z: z * j.pdf(z), -1.0, 1.0, limit=200)
        assert j.truncated_mean() == pytest.approx(val, abs=1e-10)


def test_symmetry_flags():
    assert kou().is_symmetric
    assert not kou(p_up=0.4).is_symmetric
    assert JumpSpec.atom_sizes(1.0, (-1.0, 1.0), (0.5, 0.5)).is_symmetric
    assert not JumpSpec.atom_sizes(1.0, (-1.0, 2.0), (0.5, 0.5)).is_symmetric
