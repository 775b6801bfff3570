"""Conventional-profile generation and the shared CSV format."""

import numpy as np
import pytest

from celloed import model, profiles
from celloed.errors import DomainError, LoadError
from celloed.params import data_file


def test_cc_discharge_current_level_and_length(params):
    prof = profiles.cc_discharge(1.0, params, total_length_s=3800.0)
    assert len(prof.currents) == 3800
    n_on = int(np.sum(prof.currents != 0.0))
    assert np.all(prof.currents[:n_on] == 30.0)
    assert np.all(prof.currents[n_on:] == 0.0)
    # discharge leg ends where simulated voltage reaches the cutoff
    res = model.simulate_profile(prof, 1.0, params)
    assert res.v[n_on - 1] <= 2.8 < res.v[n_on - 2]


def test_cc_discharge_degenerate_rate_errors(params):
    with pytest.raises(DomainError):
        profiles.cc_discharge(0.0001, params, hard_cap_s=2000.0)


def test_cc_discharge_rate_above_range_errors(params):
    with pytest.raises(DomainError):
        profiles.cc_discharge(6.0, params)


def test_rcid_charge_per_block(params):
    spec = profiles.ProfileSpec(kind="rcid", c_rate=1.0, rest_s=600.0,
                                soc_stops=(0.9, 0.8))
    prof = profiles.rcid(spec, params)
    cur = prof.currents
    rest = cur == 0.0
    # two pulse blocks separated by rests
    edges = np.flatnonzero(np.diff(rest.astype(int)) != 0)
    assert len(edges) == 3  # pulse->rest, rest->pulse, pulse->rest
    block1 = cur[:edges[0] + 1]
    block2 = cur[edges[1] + 1:edges[2] + 1]
    q_block = 0.1 * params.capacity * 3600.0
    assert block1.sum() * prof.dt == pytest.approx(q_block, rel=1e-9)
    assert block2.sum() * prof.dt == pytest.approx(q_block, rel=1e-9)
    # simulated SoC lands on the stops
    res = model.simulate_profile(prof, 1.0, params)
    assert res.soc[-1] == pytest.approx(0.8, abs=1e-6)


def test_rcid_total_charge_bookkeeping(params):
    spec = profiles.ProfileSpec(kind="rcid", c_rate=2.0, rest_s=120.0,
                                soc_stops=(0.85, 0.7, 0.55))
    prof = profiles.rcid(spec, params)
    removed = prof.currents.sum() * prof.dt
    assert removed == pytest.approx((1.0 - 0.55) * params.capacity * 3600.0, rel=1e-6)


def test_rcid_zero_rests_is_interrupted_cc(params):
    spec = profiles.ProfileSpec(kind="rcid", c_rate=1.0, rest_s=0.0, soc_stops=(0.9,))
    prof = profiles.rcid(spec, params)
    assert np.all(prof.currents > 0.0)


def test_rcid_rests_are_exactly_zero(params):
    spec = profiles.ProfileSpec(kind="rcid", c_rate=1.0, rest_s=300.0, soc_stops=(0.95, 0.9))
    prof = profiles.rcid(spec, params)
    rest_mask = prof.currents == 0.0
    assert rest_mask.sum() == 600


def test_rcid_rejects_nondecreasing_stops(params):
    spec = profiles.ProfileSpec(kind="rcid", soc_stops=(0.8, 0.9))
    with pytest.raises(DomainError):
        profiles.rcid(spec, params)


def test_drive_cycle_identity_resample(tmp_path, params):
    src = tmp_path / "cycle.csv"
    cur = np.array([5.0, -3.0, 12.5, 0.0, 7.25])
    with open(src, "w") as f:
        f.write("t_s,current_A\n")
        for i, c in enumerate(cur):
            f.write(f"{i},{c}\n")
    prof = profiles.load_drive_cycle(src, dt=1.0)
    assert np.array_equal(prof.currents, cur)


def test_drive_cycle_scale_zero(tmp_path):
    src = tmp_path / "cycle.csv"
    with open(src, "w") as f:
        f.write("t_s,current_A\n0,10\n1,20\n2,30\n")
    prof = profiles.load_drive_cycle(src, scale=0.0)
    assert np.all(prof.currents == 0.0)


def test_bundled_drive_cycle_loads(params):
    prof = profiles.load_drive_cycle(data_file("drive_cycle_urban_1530s.csv"))
    assert len(prof.currents) == 1530
    assert prof.dt == 1.0
    profiles.validate_bounds(prof)


def test_drive_cycle_nonmonotone_time_rejected(tmp_path):
    src = tmp_path / "bad.csv"
    with open(src, "w") as f:
        f.write("t_s,current_A\n0,1\n2,2\n1,3\n")
    with pytest.raises(LoadError, match="row 2"):
        profiles.load_drive_cycle(src)


def test_drive_cycle_bound_violation_with_row(tmp_path):
    src = tmp_path / "hot.csv"
    with open(src, "w") as f:
        f.write("t_s,current_A\n0,100\n1,200\n")
    with pytest.raises(LoadError, match="row 1"):
        profiles.load_drive_cycle(src)


def test_profile_csv_roundtrip(tmp_path, params):
    prof = profiles.cc_discharge(1.0, params, total_length_s=3650.0)
    path = tmp_path / "p.csv"
    profiles.save_profile_csv(prof, path, fingerprint="abc123")
    loaded = profiles.load_profile_csv(path)
    assert np.allclose(loaded.currents, prof.currents)
    assert loaded.dt == prof.dt
    assert loaded.temperature == prof.temperature
    assert loaded.label == prof.label


def test_profile_csv_nonconstant_dt_rejected(tmp_path):
    path = tmp_path / "p.csv"
    with open(path, "w") as f:
        f.write("t_s,current_A\n0,1\n1,1\n3,1\n")
    with pytest.raises(LoadError, match="constant"):
        profiles.load_profile_csv(path)


def test_build_profile_dispatch(params):
    spec = profiles.ProfileSpec(kind="cc_discharge", c_rate=1.0, total_length_s=3800.0)
    prof = profiles.build_profile(spec, params)
    assert len(prof.currents) == 3800
    with pytest.raises(DomainError):
        profiles.ProfileSpec(kind="nope")
