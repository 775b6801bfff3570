"""Cell-model unit tests: equilibrium, stepping, voltage map, bookkeeping."""

import math

import numpy as np
import pytest
from scipy.interpolate import PchipInterpolator

from celloed import model
from celloed.errors import DomainError, SingularityError
from celloed.params import data_file

# Golden rest voltage of the default cell at 50% SoC, frozen after first
# build and cross-checked against the direct table lookup below.
GOLDEN_V_REST_050 = 3.622585617706017
# Golden terminal voltage at 50% SoC equilibrium under 30 A discharge.
GOLDEN_V_30A_050 = 3.6061061601741806


def test_init_state_full_charge_equilibrium(params):
    st = model.init_state(1.0, params)
    up = params.positive.ocp(params.positive.stoich_bounds[1])
    un = params.negative.ocp(params.negative.stoich_bounds[1])
    assert st.v == pytest.approx(float(up - un), abs=1e-12)
    assert st.c_se_p == pytest.approx(st.c_b1_p) == pytest.approx(st.c_b2_p)
    assert st.c_d_p == 0.0 and st.c_d_n == 0.0 and st.phi_diff_state == 0.0


def test_init_state_empty_equilibrium(params):
    st = model.init_state(0.0, params)
    up = params.positive.ocp(params.positive.stoich_bounds[0])
    un = params.negative.ocp(params.negative.stoich_bounds[0])
    assert st.v == pytest.approx(float(up - un), abs=1e-12)


def test_init_state_mid_soc_golden_and_independent_lookup(params):
    st = model.init_state(0.5, params)
    assert st.v == pytest.approx(GOLDEN_V_REST_050, abs=1e-9)
    # independent oracle: raw two-column tables, linear interpolation
    tp = np.loadtxt(data_file("ocp_cathode_nmc.csv"), delimiter=",", skiprows=1)
    tn = np.loadtxt(data_file("ocp_anode_graphite.csv"), delimiter=",", skiprows=1)
    up = np.interp(params.positive.stoich_at_soc(0.5), tp[:, 0], tp[:, 1])
    un = np.interp(params.negative.stoich_at_soc(0.5), tn[:, 0], tn[:, 1])
    assert st.v == pytest.approx(up - un, abs=2e-3)


def test_init_state_rejects_out_of_range(params):
    with pytest.raises(DomainError):
        model.init_state(-0.01, params)
    with pytest.raises(DomainError):
        model.init_state(1.01, params)


def test_step_zero_current_is_fixed_point(params):
    st = model.init_state(0.37, params)
    nxt = model.step(st, 0.0, 1.0, params)
    x0, x1 = st.to_vector(), nxt.to_vector()
    assert np.max(np.abs(x1 - x0) / np.maximum(np.abs(x0), 1.0)) < 1e-12
    assert nxt.v == pytest.approx(st.v, abs=1e-12)


def test_step_discharge_sign_conventions(params):
    st = model.init_state(1.0, params)
    nxt = model.step(st, 150.0, 1.0, params)
    assert nxt.c_se_n < st.c_se_n
    assert nxt.c_se_p > st.c_se_p
    assert nxt.v < st.v


def test_one_hour_1c_discharge_moves_soc_by_one(params):
    prof = model.ExcitationProfile(dt=1.0, currents=np.full(3600, 30.0))
    res = model.simulate_profile(prof, 1.0, params)
    assert res.soc[-1] == pytest.approx(0.0, abs=1e-3)


def test_coulomb_bookkeeping_random_profiles(params, rng):
    m = model.discrete_model(params, 1.0, 298.15)
    for _ in range(5):
        x0 = model.init_state(0.6, params).to_vector()
        cur = rng.uniform(-100.0, 100.0, 400)
        states, _, _, _ = m.simulate(x0, cur)
        soc_end = model.soc_of_states(states, params)[-1]
        expected = 0.6 - cur.sum() / (3600.0 * params.capacity)
        assert soc_end == pytest.approx(expected, rel=1e-6, abs=1e-9)


def test_zoh_refinement_agrees(params, rng):
    x0 = model.init_state(0.8, params).to_vector()
    cur = rng.uniform(-150.0, 150.0, 120)
    coarse = model.discrete_model(params, 1.0, 298.15)
    fine = model.discrete_model(params, 0.1, 298.15)
    s_a, _, _, _ = coarse.simulate(x0, cur)
    s_b, _, _, _ = fine.simulate(x0, np.repeat(cur, 10))
    rel = np.max(np.abs(s_a[-1] - s_b[-1]) / np.maximum(np.abs(s_b[-1]), 1e-12))
    assert rel < 1e-3


def test_terminal_voltage_zero_current_is_ocp_difference(params):
    st = model.init_state(0.42, params)
    v = model.terminal_voltage(st, 0.0, params)
    up = params.positive.ocp(st.c_se_p / params.positive.c_max)
    un = params.negative.ocp(st.c_se_n / params.negative.c_max)
    assert v == pytest.approx(float(up - un), abs=1e-14)


def test_terminal_voltage_antisymmetry(params):
    st = model.init_state(0.55, params)
    rest = model.terminal_voltage(st, 0.0, params)
    for cur in (12.0, 80.0, 150.0):
        vp = model.terminal_voltage(st, cur, params)
        vm = model.terminal_voltage(st, -cur, params)
        assert vp + vm == pytest.approx(2.0 * (rest + st.phi_diff_state), abs=1e-12)


def test_terminal_voltage_golden_seven_term_sum(params):
    """Term-by-term hand evaluation of the voltage map at 50% SoC, 30 A."""
    st = model.init_state(0.5, params)
    T = params.T_ref
    current = 30.0
    F, R = params.faraday, params.gas_constant

    terms = {}
    for tag, e, c_se in (("p", params.positive, st.c_se_p), ("n", params.negative, st.c_se_n)):
        table = np.loadtxt(data_file(f"ocp_{'cathode_nmc' if tag == 'p' else 'anode_graphite'}.csv"),
                           delimiter=",", skiprows=1)
        u = PchipInterpolator(table[:, 0], table[:, 1])(c_se / e.c_max)
        i0 = math.exp((1 / params.T_ref - 1 / T) * e.E_io / R) * F * e.k * math.sqrt(
            c_se * (e.c_max - c_se) * e.c_e
        )
        eta = R * params.T0 * (-e.J * current) / (F * i0)
        terms[f"U_{tag}"] = float(u)
        terms[f"eta_{tag}"] = eta
    hand_sum = (
        terms["U_p"] - terms["U_n"] - terms["eta_p"] + terms["eta_n"]
        + st.phi_diff_state - params.electrolyte_R_ion * current - current * params.R_c
    )
    v = model.terminal_voltage(st, current, params)
    assert v == pytest.approx(hand_sum, abs=1e-12)
    assert v == pytest.approx(GOLDEN_V_30A_050, abs=1e-9)


def test_exchange_current_arrhenius_identity(params):
    e = params.positive
    c = 0.4 * e.c_max
    i0 = model.exchange_current_density(c, e, params.T_ref, params)
    assert i0 == params.faraday * e.k * math.sqrt(c * (e.c_max - c) * e.c_e)


def test_exchange_current_peaks_at_half_concentration(params):
    e = params.negative
    grid = np.linspace(0.02, 0.98, 97) * e.c_max
    vals = [model.exchange_current_density(c, e, 298.15, params) for c in grid]
    assert grid[int(np.argmax(vals))] == pytest.approx(e.c_max / 2, rel=0.02)


def test_exchange_current_linear_in_k(params):
    import dataclasses

    e = params.positive
    e2 = dataclasses.replace(e, k=2.0 * e.k)
    c = 0.3 * e.c_max
    assert model.exchange_current_density(c, e2, 310.0, params) == pytest.approx(
        2.0 * model.exchange_current_density(c, e, 310.0, params), rel=1e-14
    )


def test_exchange_current_singularity(params):
    with pytest.raises(SingularityError):
        model.exchange_current_density(0.0, params.positive, 298.15, params)
    with pytest.raises(SingularityError):
        model.exchange_current_density(params.positive.c_max, params.positive, 298.15, params)


def test_kinetic_overpotential_structure(params):
    e = params.negative
    assert model.kinetic_overpotential(0.0, 50.0, e, params) == 0.0
    eta1 = model.kinetic_overpotential(30.0, 50.0, e, params)
    assert model.kinetic_overpotential(60.0, 50.0, e, params) == pytest.approx(2 * eta1, rel=1e-14)
    assert model.kinetic_overpotential(30.0, 100.0, e, params) == pytest.approx(eta1 / 2, rel=1e-14)
    with pytest.raises(SingularityError):
        model.kinetic_overpotential(10.0, 0.0, e, params)


def test_soc_matches_initialization(params):
    for s in (0.0, 0.3, 1.0):
        st = model.init_state(s, params)
        assert model.soc(st, params) == pytest.approx(s, abs=1e-12)


def test_soc_after_half_hour_1c(params):
    prof = model.ExcitationProfile(dt=1.0, currents=np.full(1800, 30.0))
    res = model.simulate_profile(prof, 1.0, params)
    assert res.soc[-1] == pytest.approx(0.5, abs=1e-3)


def test_simulate_profile_empty(params):
    prof = model.ExcitationProfile(dt=1.0, currents=np.array([]))
    res = model.simulate_profile(prof, 0.5, params)
    assert len(res.v) == 0


def test_simulate_profile_rest_is_constant(params):
    prof = model.ExcitationProfile(dt=1.0, currents=np.zeros(50))
    res = model.simulate_profile(prof, 0.5, params)
    assert np.ptp(res.v) < 1e-12
    assert not res.limit_low.any() and not res.limit_high.any()


def test_simulate_profile_cc_soc_monotone(params):
    prof = model.ExcitationProfile(dt=1.0, currents=np.full(600, 30.0))
    res = model.simulate_profile(prof, 1.0, params)
    assert np.all(np.diff(res.soc) < 0)


def test_simulate_profile_flags_voltage_limits(params):
    prof = model.ExcitationProfile(dt=1.0, currents=np.full(40, -150.0))
    res = model.simulate_profile(prof, 0.98, params)
    assert res.limit_high.any()
    assert not res.limit_low.any()


def test_simulate_profile_saturation_raises(params):
    prof = model.ExcitationProfile(dt=1.0, currents=np.full(200, -150.0))
    with pytest.raises(SingularityError):
        model.simulate_profile(prof, 0.98, params)


def test_state_voltage_consistency_after_steps(params, rng):
    st = model.init_state(0.7, params)
    for _ in range(20):
        cur = float(rng.uniform(-120, 120))
        st = model.step(st, cur, 1.0, params)
        assert st.v == pytest.approx(model.terminal_voltage(st, cur, params), abs=5e-12)


def test_profile_validation():
    with pytest.raises(DomainError):
        model.ExcitationProfile(dt=0.0, currents=np.ones(3))
    with pytest.raises(DomainError):
        model.ExcitationProfile(dt=1.0, currents=np.array([1.0, np.inf]))
    prof = model.ExcitationProfile(dt=2.0, currents=np.ones(30))
    assert prof.duration == 60.0
