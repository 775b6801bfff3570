"""Conventional comparison excitations: constant-current discharge, pulse-rest
schedules, and drive-cycle ingestion, plus the shared profile CSV format."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from . import model
from .errors import DomainError, LoadError
from .params import CellParameters

I_RANGE = (-150.0, 150.0)


@dataclasses.dataclass
class ProfileSpec:
    kind: str  # cc_discharge | rcid | drive_cycle
    c_rate: float = 1.0
    pulse_s: float = 0.0
    rest_s: float = 600.0
    soc_stops: tuple = ()
    temperature: float = 298.15
    source_path: str = ""
    cutoff_v: float = 2.8
    total_length_s: float = 0.0  # 0 means natural length
    scale: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cc_discharge", "rcid", "drive_cycle"):
            raise DomainError(f"unknown profile kind {self.kind!r}")
        if self.kind != "drive_cycle" and self.c_rate <= 0:
            raise DomainError("c_rate must be positive")
        if self.rest_s < 0 or self.pulse_s < 0:
            raise DomainError("pulse/rest durations must be non-negative")


def read_two_column_csv(path, what="profile"):
    """Parse a two-column CSV, skipping '#' comment lines and one header row."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"{what} file not found: {path}")
    rows = [ln for ln in path.read_text().splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise LoadError(f"{path}: empty {what} file")
    try:
        raw = np.array([[float(v) for v in ln.split(",")] for ln in rows[1:]])
    except ValueError as exc:
        raise LoadError(f"cannot parse {what} {path}: {exc}") from exc
    if raw.ndim != 2 or raw.shape[1] != 2:
        raise LoadError(f"{path}: expected two columns")
    return raw


def validate_bounds(profile: model.ExcitationProfile):
    bad = np.flatnonzero((profile.currents < I_RANGE[0]) | (profile.currents > I_RANGE[1]))
    if bad.size:
        raise LoadError(
            f"profile current out of {I_RANGE} A at row {int(bad[0])}: "
            f"{profile.currents[bad[0]]:.3f} A"
        )
    return profile


def cc_discharge(c_rate, params: CellParameters, cutoff_v=2.8, total_length_s=0.0,
                 dt=1.0, temperature=298.15, soc0=1.0, hard_cap_s=20000.0
                 ) -> model.ExcitationProfile:
    """Constant current until the simulated voltage reaches the cutoff,
    followed by rest up to ``total_length_s`` (when given)."""
    current = c_rate * params.capacity
    if not I_RANGE[0] <= current <= I_RANGE[1]:
        raise DomainError(f"{c_rate}C = {current} A exceeds the excitation range")
    dm = model.discrete_model(params, dt, temperature)
    x = model.init_state(soc0, params).to_vector()
    n_cap = int(hard_cap_s / dt)
    chunk = 512
    n_discharge = None
    done = 0
    while done < n_cap:
        m = min(chunk, n_cap - done)
        states, v, _, _, n_ok, flag = dm.simulate_partial(x, np.full(m, current))
        below = np.flatnonzero(v[:n_ok] <= cutoff_v)
        if below.size:
            n_discharge = done + int(below[0]) + 1
            break
        if flag:
            raise DomainError(
                f"surface concentration saturated before the {cutoff_v} V cutoff "
                f"at {c_rate}C (t = {(done + n_ok) * dt} s)"
            )
        x = states[-1]
        done += m
    if n_discharge is None:
        raise DomainError(
            f"cutoff {cutoff_v} V not reached within {hard_cap_s} s at {c_rate}C"
        )
    n_total = max(n_discharge, int(round(total_length_s / dt)))
    currents = np.zeros(n_total)
    currents[:n_discharge] = current
    return model.ExcitationProfile(
        dt=dt, currents=currents, temperature=temperature,
        label=f"cc_discharge_{c_rate:g}C",
    )


def rcid(spec: ProfileSpec, params: CellParameters, soc0=1.0) -> model.ExcitationProfile:
    """Relaxation current interrupt discharge: pulse to each SoC stop, rest.

    The final sample of each pulse carries a fractional current so the charge
    removed per block is exact at the profile's fixed dt.
    """
    stops = tuple(spec.soc_stops)
    if not stops:
        raise DomainError("rcid requires at least one SoC stop")
    if any(b >= a for a, b in zip((soc0,) + stops, stops)):
        raise DomainError(f"soc stops must strictly decrease from {soc0}: {stops}")
    if stops[-1] < 0:
        raise DomainError("soc stops must stay non-negative")
    current = spec.c_rate * params.capacity
    dt = spec.dt
    n_rest = int(round(spec.rest_s / dt))
    pieces = []
    soc_cur = soc0
    for stop in stops:
        charge_s = (soc_cur - stop) * 3600.0 * params.capacity / current  # seconds at full current
        n_full = int(math.floor(charge_s / dt))
        frac = charge_s / dt - n_full
        block = np.full(n_full + (1 if frac > 1e-12 else 0), current)
        if frac > 1e-12:
            block[-1] = current * frac
        pieces.append(block)
        pieces.append(np.zeros(n_rest))
        soc_cur = stop
    currents = np.concatenate(pieces) if pieces else np.zeros(0)
    if spec.total_length_s:
        n_total = int(round(spec.total_length_s / dt))
        if n_total < len(currents):
            raise DomainError(
                f"total_length_s {spec.total_length_s} shorter than schedule "
                f"({len(currents) * dt} s)"
            )
        currents = np.concatenate([currents, np.zeros(n_total - len(currents))])
    return validate_bounds(model.ExcitationProfile(
        dt=dt, currents=currents, temperature=spec.temperature,
        label=f"rcid_{spec.c_rate:g}C",
    ))


def load_drive_cycle(path, dt=1.0, scale=1.0, temperature=298.15) -> model.ExcitationProfile:
    """Two-column (t, I) CSV resampled to a fixed dt by zero-order hold."""
    path = Path(path)
    raw = read_two_column_csv(path, what="drive cycle")
    t, cur = raw[:, 0], raw[:, 1]
    steps = np.diff(t)
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        raise LoadError(f"{path}: time column not strictly increasing at row {int(bad[0]) + 1}")
    grid = np.arange(t[0], t[-1] + dt * 0.5, dt)
    idx = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, len(t) - 1)
    currents = cur[idx] * scale
    return validate_bounds(model.ExcitationProfile(
        dt=dt, currents=currents, temperature=temperature,
        label=f"drive_cycle_{path.stem}",
    ))


def build_profile(spec: ProfileSpec, params: CellParameters) -> model.ExcitationProfile:
    if spec.kind == "cc_discharge":
        return validate_bounds(cc_discharge(
            spec.c_rate, params, cutoff_v=spec.cutoff_v,
            total_length_s=spec.total_length_s, dt=spec.dt,
            temperature=spec.temperature,
        ))
    if spec.kind == "rcid":
        return rcid(spec, params)
    return load_drive_cycle(spec.source_path, dt=spec.dt, scale=spec.scale,
                            temperature=spec.temperature)


def save_profile_csv(profile: model.ExcitationProfile, path, fingerprint=""):
    """Write the shared ``t_s,current_A`` schema plus a JSON metadata sidecar."""
    path = Path(path)
    with open(path, "w") as f:
        if fingerprint:
            f.write(f"# fingerprint={fingerprint}\n")
        f.write("t_s,current_A\n")
        for t, c in zip(profile.times, profile.currents):
            f.write(f"{t:.6g},{c:.10g}\n")
    sidecar = path.with_suffix(".meta.json")
    sidecar.write_text(json.dumps({
        "dt_s": profile.dt,
        "temperature_K": profile.temperature,
        "label": profile.label,
        "fingerprint": fingerprint,
    }, indent=2) + "\n")
    return path


def load_profile_csv(path, temperature=None) -> model.ExcitationProfile:
    """Read a ``t_s,current_A`` profile; constant dt is enforced."""
    path = Path(path)
    raw = read_two_column_csv(path, what="profile")
    t, cur = raw[:, 0], raw[:, 1]
    meta = {}
    sidecar = path.with_suffix(".meta.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    if len(t) > 1:
        steps = np.diff(t)
        dt = float(steps[0])
        if dt <= 0 or not np.allclose(steps, dt, rtol=0, atol=1e-9):
            raise LoadError(f"{path}: sample period is not constant")
    else:
        dt = float(meta.get("dt_s", 1.0))
    temp = temperature if temperature is not None else float(meta.get("temperature_K", 298.15))
    return model.ExcitationProfile(
        dt=dt, currents=cur, temperature=temp, label=str(meta.get("label", path.stem))
    )
