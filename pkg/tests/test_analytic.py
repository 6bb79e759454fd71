import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import jump_time_histogram, ordered_bin_integral, two_level_no_jump
from spisim.analytic import (CutoffError, PhotonEnvelope, SquareDriveParams, f0_amplitudes, fn_amplitude,
                             linear_regime_residual, mean_output_amplitude, pn_probability,
                             scatter_probabilities, single_photon_scatter)
from spisim.params import ProbeState
from spisim.slh import (HilbertLayout, assemble_generator, coherent_drive_triple, emitter_triple,
                        initial_density, integrate, series_product, spi_model)
from spisim.slh.model import driven_model, standard_observables


def no_jump_engine(d: SquareDriveParams, t: float):
    """Engine oracle: emitter driven by a c-number field, emitter jumps removed."""
    lay = HilbertLayout(1, 1)
    E = emitter_triple(lay, d.gamma)
    G = series_product(E, coherent_drive_triple(lay, d.beta_rate, 0.0))
    gen = assemble_generator(G, layout=lay, subtract_jumps=(E.L[0],))
    tr = integrate(gen, initial_density(lay, "up"), t, t_eval=[t], observables=standard_observables(lay))
    return tr.observables["pop_up"][-1].real, tr.observables["pop_trion_up"][-1].real


# --- f0_amplitudes ----------------------------------------------------------

@given(st.floats(0.0, 50.0), st.floats(0.05, 5.0))
def test_f0_initial_ground_state(rabi, gamma):
    d = SquareDriveParams.from_rabi(rabi, gamma=gamma, tau=1.0)
    g, e = f0_amplitudes(d, 0.0)
    assert g == pytest.approx(1.0, abs=1e-15)
    assert abs(e) < 1e-15


def test_f0_at_critical_drive_is_finite():
    d = SquareDriveParams.from_rabi(0.5)
    g, e = f0_amplitudes(d, 4.0)
    # Omega' = 0: e^{-t/4}(1 + t/4) and e^{-t/4} Omega t / 2
    assert g == pytest.approx(math.exp(-1) * 2, abs=1e-14)
    assert e == pytest.approx(math.exp(-1) * 1.0, abs=1e-14)


@pytest.mark.parametrize("t", [0.3, 4.0, 17.0])
def test_f0_continuous_across_critical_drive(t):
    left = f0_amplitudes(SquareDriveParams.from_rabi(0.5 - 1e-12), t)
    right = f0_amplitudes(SquareDriveParams.from_rabi(0.5 + 1e-12), t)
    mid = f0_amplitudes(SquareDriveParams.from_rabi(0.5), t)
    for a, b, c in zip(left, right, mid):
        assert abs(a - b) < 1e-9 and abs(a - c) < 1e-9


@pytest.mark.parametrize("sign", [-1, 1])
def test_f0_smooth_across_series_switch(sign):
    # the small-|q| series hands over to the closed form at |q| = 1e-3
    t = 4.0
    w2 = sign * 4e-3 / t**2
    rabi = math.sqrt(0.25 + w2)
    a = f0_amplitudes(SquareDriveParams.from_rabi(rabi * (1 - 1e-12)), t)
    b = f0_amplitudes(SquareDriveParams.from_rabi(rabi * (1 + 1e-12)), t)
    for x, y in zip(a, b):
        assert abs(x - y) < 1e-10


def test_f0_rejects_bad_input():
    with pytest.raises(ValueError):
        f0_amplitudes(SquareDriveParams.from_rabi(1.0), -0.1)
    with pytest.raises(ValueError):
        SquareDriveParams.from_rabi(1.0, gamma=0.0)


def test_f0_matches_engine_at_first_rabi_lobe():
    d = SquareDriveParams.from_rabi(10.0)
    t = math.pi / d.rabi_prime.real
    g, e = f0_amplitudes(d, t)
    pg, pe = no_jump_engine(d, t)
    assert abs(e) == pytest.approx(math.sqrt(pe), abs=1e-6)
    assert abs(g) == pytest.approx(math.sqrt(pg), abs=1e-6)
    # maximum of the first lobe
    assert abs(e) > abs(f0_amplitudes(d, 0.9 * t)[1]) and abs(e) > abs(f0_amplitudes(d, 1.1 * t)[1])


@pytest.mark.parametrize("rabi", [0.3, 1.0, 3.0])
def test_p0_matches_engine_vacuum_component(rabi):
    d = SquareDriveParams.from_rabi(rabi, tau=4.0)
    pg, pe = no_jump_engine(d, 4.0)
    assert pn_probability(d, 0, "g").value == pytest.approx(pg, abs=1e-3)
    assert pn_probability(d, 0, "e").value == pytest.approx(pe, abs=1e-3)


def test_f0_matches_expm_oracle():
    grid, amps = two_level_no_jump(2.3, 1.0, 6.0, n_grid=601)
    d = SquareDriveParams.from_rabi(2.3)
    for k in (0, 100, 350, 600):
        g, e = f0_amplitudes(d, grid[k])
        # phase convention: the oracle's excited amplitude is -i times ours
        assert abs(g - amps[k, 0]) < 1e-10
        assert abs(abs(e) - abs(amps[k, 1])) < 1e-10


# --- fn_amplitude ------------------------------------------------------------

def test_fn_no_instantaneous_emission():
    d = SquareDriveParams.from_rabi(1.0)
    for eps in ("g", "e"):
        assert fn_amplitude(d, 1, eps, 3.0, [0.0]) == 0


def test_fn_single_photon_composition():
    d = SquareDriveParams.from_rabi(1.0)
    expected = -math.sqrt(d.gamma) * f0_amplitudes(d, 4.0)[0] * f0_amplitudes(d, 1.0)[1]
    assert fn_amplitude(d, 1, "g", 5.0, [1.0]) == pytest.approx(expected, abs=1e-15)


def test_fn_validation():
    d = SquareDriveParams.from_rabi(1.0)
    with pytest.raises(ValueError):
        fn_amplitude(d, 2, "g", 5.0, [2.0, 1.0])
    with pytest.raises(ValueError):
        fn_amplitude(d, 2, "g", 5.0, [1.0, 6.0])
    with pytest.raises(ValueError):
        fn_amplitude(d, 2, "x", 5.0, [1.0, 2.0])
    assert fn_amplitude(d, 0, "g", 5.0, []) == pytest.approx(f0_amplitudes(d, 5.0)[0])


@pytest.mark.slow
def test_two_photon_density_matches_jump_monte_carlo():
    rabi, tau = 1.0, 5.0
    d = SquareDriveParams.from_rabi(rabi, tau=tau)
    bins = np.linspace(0.0, tau, 6)
    mc, sigma = jump_time_histogram(rabi, 1.0, tau, bins, n_traj=100_000)

    def density(s1, s2):
        return abs(fn_amplitude(d, 2, "g", tau, [s1, s2])) ** 2

    for i in range(5):
        for j in range(i, 5):
            ref = ordered_bin_integral(density, bins[i], bins[i + 1], bins[j], bins[j + 1])
            assert abs(mc[i, j] - ref) <= 3 * sigma[i, j] + 1e-12, (i, j)


# --- probabilities ---------------------------------------------------------

def test_undriven_emitter_scatters_nothing():
    d = SquareDriveParams.from_rabi(1e-9, tau=5.0)
    assert pn_probability(d, 0, "g").value == pytest.approx(1.0, abs=1e-12)


def test_completeness_at_unit_drive():
    d = SquareDriveParams.from_rabi(1.0, tau=8.0)
    sp = scatter_probabilities(d, n_max=20)
    assert abs(sp.total() + sp.tail_bound - 1.0) < 1e-4
    assert all(0 <= p <= 1 for p in sp.p.ravel())


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.1, 6.0))
def test_completeness_property(rabi, tau):
    sp = scatter_probabilities(SquareDriveParams.from_rabi(rabi, tau=tau), n_max=30)
    assert abs(sp.total() + sp.tail_bound - 1.0) < 1e-4


def test_cutoff_error_carries_tail():
    d = SquareDriveParams.from_rabi(6.0, tau=8.0)
    with pytest.raises(CutoffError) as info:
        pn_probability(d, 7, "g")
    assert info.value.tail_bound > 1e-5


@pytest.mark.parametrize("n,eps", [(1, "g"), (2, "e"), (3, "g")])
def test_quadrature_matches_counting(n, eps):
    d = SquareDriveParams.from_rabi(0.8, tau=3.0)
    ref = pn_probability(d, n, eps, method="counting").value
    est = pn_probability(d, n, eps, method="quadrature")
    assert abs(est.value - ref) < 1e-5
    assert est.error <= 1e-5


@pytest.mark.slow
def test_qmc_matches_counting_for_four_photons():
    d = SquareDriveParams.from_rabi(1.2, tau=3.0)
    ref = pn_probability(d, 4, "g", method="counting").value
    est = pn_probability(d, 4, "g", method="qmc", seed=3)
    assert est.error <= 1e-5
    assert abs(est.value - ref) < 5 * est.error + 1e-7


def test_qmc_deterministic_for_fixed_seed():
    d = SquareDriveParams.from_rabi(1.2, tau=2.0)
    a = pn_probability(d, 4, "e", method="qmc", seed=11)
    b = pn_probability(d, 4, "e", method="qmc", seed=11)
    assert a == b


def test_dark_fringe_first_revival():
    rabi = 20.0
    d = SquareDriveParams.from_rabi(rabi)
    taus = np.linspace(0.8, 1.2, 81) * 2 * math.pi / rabi
    p0 = [pn_probability(SquareDriveParams.from_rabi(rabi, tau=t), 0, "g").value for t in taus]
    k = int(np.argmax(p0))
    assert 0 < k < len(taus) - 1
    assert d.rabi * taus[k] == pytest.approx(2 * math.pi, rel=0.05)


# --- single photon -----------------------------------------------------------

def test_scatter_at_time_zero():
    env = PhotonEnvelope.exponential(0.7)
    s = single_photon_scatter(env, 1.0, 0.0)
    assert s.excited_amplitude == 0
    assert s.emitted_waveform.norm == 0
    assert s.passed_tail.norm == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 20.0), st.floats(0.0, 60.0))
def test_single_photon_norm_conservation(Gamma, tau):
    s = single_photon_scatter(PhotonEnvelope.exponential(Gamma), 1.0, tau)
    assert abs(s.total_norm - 1.0) < 1e-8


def test_degenerate_bandwidth_closed_form():
    env = PhotonEnvelope.exponential(1.0)
    t = 2.5
    s = single_photon_scatter(env, 1.0, t)
    assert s.excited_amplitude == pytest.approx(t * math.exp(-t / 2), abs=1e-12)
    near = single_photon_scatter(PhotonEnvelope.exponential(1.0 + 1e-7), 1.0, t)
    assert abs(near.excited_amplitude - s.excited_amplitude) < 1e-6


def test_monochromatic_pointwise_phase_flip():
    G = 1e-3
    env = PhotonEnvelope.exponential(G)
    ups = single_photon_scatter(env, 1.0, 1e4).emitted_waveform
    t = np.array([40.0, 200.0, 1e3, 5e3])
    rel = np.abs(ups(t) + env(t)) / np.abs(env(t))
    # exact late-time value 2G/(gamma - G), i.e. 2G/gamma to first order
    assert np.all(rel <= 2 * G / (1 - G) + 1e-12)
    assert rel[-1] == pytest.approx(2 * G / (1 - G), rel=1e-9)


def test_mode_matched_excitation_matches_engine():
    probe = ProbeState.single_photon(1.0, 1.0, polarization="R")
    model = spi_model(probe, spin="up")
    t = np.linspace(0, 10, 41)
    traj = model.run(t_eval=t, t_max=10.0, stop=False)
    env = PhotonEnvelope.exponential(1.0)
    for k in range(t.size):
        amp = single_photon_scatter(env, 1.0, t[k]).excited_amplitude
        assert traj.observables["pop_trion_up"][k].real == pytest.approx(abs(amp) ** 2, abs=1e-4)
    assert abs(single_photon_scatter(env, 1.0, 10.0).total_norm - 1) < 1e-8


def test_gaussian_envelope_normalised():
    env = PhotonEnvelope.gaussian(center=5.0, width=1.0)
    assert env.norm() == pytest.approx(1.0, abs=1e-10)
    s = single_photon_scatter(env, 1.0, 7.0)
    assert abs(s.total_norm - 1.0) < 1e-8


# --- mean field --------------------------------------------------------------

def test_mean_amplitude_without_drive():
    d = SquareDriveParams(beta_rate=0.0, tau=5.0)
    assert mean_output_amplitude(d, 2.0) == 0


def test_mean_amplitude_weak_drive_flips_sign():
    d = SquareDriveParams.from_rabi(1e-3, tau=60.0)
    b = mean_output_amplitude(d, 50.0)
    assert b / d.beta_rate == pytest.approx(-1.0, abs=1e-4)


def test_mean_amplitude_matches_engine():
    d = SquareDriveParams.from_rabi(1.0, tau=3.0)
    traj = driven_model(d.beta_rate, 0.0, spin="up", t_floor=3.0).run(t_eval=[3.0], t_max=3.0, stop=False)
    assert mean_output_amplitude(d, 3.0, n_max=30) == pytest.approx(traj.observables["out_r"][-1], abs=1e-3)


def test_mean_amplitude_tail_guard():
    d = SquareDriveParams.from_rabi(8.0, tau=8.0)
    with pytest.raises(CutoffError):
        mean_output_amplitude(d, 8.0, n_max=3)


def test_linear_residual_small_and_quadratic():
    grid = np.linspace(40.0, 60.0, 5)
    r1 = linear_regime_residual(SquareDriveParams.from_rabi(1e-3, tau=60.0), grid)
    r2 = linear_regime_residual(SquareDriveParams.from_rabi(1e-2, tau=60.0), grid)
    assert r1 < 1e-4
    assert r2 / r1 == pytest.approx(100.0, rel=0.05)


def test_linear_residual_without_field():
    assert linear_regime_residual(SquareDriveParams(beta_rate=0.0, tau=20.0), np.linspace(0, 20, 5)) == 0.0


def test_linear_residual_negative_control():
    d = SquareDriveParams.from_rabi(1.0, tau=20.0)
    assert linear_regime_residual(d, np.linspace(6.0, 20.0, 8), n_max=40) > 0.3
