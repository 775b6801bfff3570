"""Voltage sensitivities to the reaction-rate constants, Fisher information,
and the SoC / C-rate sensitivity map.

The analytic sensitivity is the chain-rule product of the overpotential's
dependence on exchange current density and the exchange current density's
dependence on the rate constant; it reduces algebraically to eta_p/k_p for
the cathode constant and -eta_n/k_n for the anode constant. A full
finite-difference re-simulation is provided as the independent oracle.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import model
from .errors import DomainError, SingularityError
from .params import CellParameters

PARAMETERS = ("k_p", "k_n")


def _check_parameter(parameter):
    if parameter not in PARAMETERS:
        raise DomainError(f"parameter must be one of {PARAMETERS}, got {parameter!r}")


@dataclasses.dataclass
class SensitivityTrace:
    """Per-step voltage sensitivity dV/dtheta along a profile."""

    parameter: str
    values: np.ndarray
    dt: float

    def __post_init__(self):
        _check_parameter(self.parameter)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise DomainError("sensitivity trace contains non-finite entries")

    def __len__(self):
        return len(self.values)

    def concat(self, other: "SensitivityTrace") -> "SensitivityTrace":
        if other.parameter != self.parameter or other.dt != self.dt:
            raise DomainError("cannot concatenate traces of different kind")
        return SensitivityTrace(self.parameter, np.concatenate([self.values, other.values]), self.dt)


@dataclasses.dataclass
class FisherSummary:
    """Accumulated squared-sensitivity totals and the Cramér-Rao bound."""

    parameter: str
    fi_raw: float  # sum of squared sensitivities, V^2 theta^-2
    fi_scaled: float  # fi_raw / sigma_y^2
    cramer_rao: float  # 1 / fi_scaled (inf when fi_scaled == 0)
    n_samples: int

    def to_dict(self):
        return dataclasses.asdict(self)


def voltage_sensitivity(state: model.CellState, current, T, params: CellParameters, parameter):
    """Closed-form dV/dk at one step (state already advanced, current held)."""
    _check_parameter(parameter)
    if parameter == "k_p":
        e, c_se = params.positive, state.c_se_p
    else:
        e, c_se = params.negative, state.c_se_n
    i0 = model.exchange_current_density(c_se, e, T, params)
    eta = model.kinetic_overpotential(current, i0, e, params)
    d_eta_d_i0 = -eta / i0
    d_i0_d_k = i0 / e.k
    if parameter == "k_p":
        return -d_eta_d_i0 * d_i0_d_k
    return d_eta_d_i0 * d_i0_d_k


def sensitivity_trace(profile: model.ExcitationProfile, soc0, params: CellParameters,
                      parameter) -> SensitivityTrace:
    """Analytic per-step sensitivity along a simulated profile."""
    _check_parameter(parameter)
    res = model.simulate_profile(profile, soc0, params)
    values = res.sens_p if parameter == "k_p" else res.sens_n
    return SensitivityTrace(parameter, values, profile.dt)


def finite_difference_sensitivity(profile: model.ExcitationProfile, soc0,
                                  params: CellParameters, parameter,
                                  rel_delta=1e-4) -> SensitivityTrace:
    """Central-difference oracle: re-simulates the whole trajectory with the
    rate constant perturbed by +/- rel_delta."""
    _check_parameter(parameter)
    if not 0.0 < rel_delta <= 1e-2:
        raise DomainError(f"rel_delta must lie in (0, 1e-2], got {rel_delta}")
    dm = model.discrete_model(params, profile.dt, profile.temperature)
    x0 = model.init_state(soc0, params).to_vector()
    theta = params.positive.k if parameter == "k_p" else params.negative.k

    voltages = []
    for sign in (+1.0, -1.0):
        k_val = theta * (1.0 + sign * rel_delta)
        override = {"k_p": k_val} if parameter == "k_p" else {"k_n": k_val}
        pack = model.DiscreteModel.build_pack(params, profile.temperature, **override)
        _, v, _, _ = dm.simulate(x0, profile.currents, pack=pack)
        voltages.append(v)
    values = (voltages[0] - voltages[1]) / (2.0 * theta * rel_delta)
    return SensitivityTrace(parameter, values, profile.dt)


def fisher_information(trace: SensitivityTrace, sigma_y) -> FisherSummary:
    """Accumulate a trace into raw/scaled Fisher information totals."""
    if sigma_y <= 0:
        raise DomainError("sigma_y must be positive")
    fi_raw = float(np.sum(trace.values ** 2))
    fi_scaled = fi_raw / sigma_y ** 2
    cramer_rao = 1.0 / fi_scaled if fi_scaled > 0 else math.inf
    return FisherSummary(trace.parameter, fi_raw, fi_scaled, cramer_rao, len(trace))


def fisher_of_profile(profile: model.ExcitationProfile, soc0, params: CellParameters,
                      parameter, sigma_y=None) -> FisherSummary:
    """Fisher information of one profile for one rate constant."""
    sigma = params.sigma_y if sigma_y is None else sigma_y
    return fisher_information(sensitivity_trace(profile, soc0, params, parameter), sigma)


@dataclasses.dataclass
class SensitivityMap:
    """Squared one-step sensitivity over a (C-rate, SoC) grid.

    Cells where the single held step saturates a surface concentration are
    NaN and recorded in ``failures``.
    """

    parameter: str
    c_rates: np.ndarray
    soc_grid: np.ndarray
    values: np.ndarray  # shape (len(c_rates), len(soc_grid))
    temperature: float
    failures: list

    def argmax_soc_at(self, c_rate):
        i = int(np.argmin(np.abs(self.c_rates - c_rate)))
        row = self.values[i]
        if np.all(np.isnan(row)):
            raise DomainError(f"no valid cells at C-rate {c_rate}")
        return float(self.soc_grid[int(np.nanargmax(row))])

    def summary(self):
        return {
            "parameter": self.parameter,
            "temperature_K": self.temperature,
            "argmax_soc_per_c_rate": {
                f"{c:g}C": self.argmax_soc_at(c) for c in self.c_rates if c != 0
            },
            "n_failures": len(self.failures),
        }


def sensitivity_map(c_rates, soc_grid, params: CellParameters, parameter,
                    T=298.15, dt=1.0) -> SensitivityMap:
    """Squared sensitivity at states equilibrated per SoC, one held step each."""
    _check_parameter(parameter)
    c_rates = np.asarray(c_rates, dtype=float)
    soc_grid = np.asarray(soc_grid, dtype=float)
    i_max = 150.0
    if np.any(np.abs(c_rates) * params.capacity > i_max + 1e-9):
        raise DomainError("C-rate exceeds the +/-150 A excitation range")
    if np.any((soc_grid <= 0.0) | (soc_grid >= 1.0)):
        raise DomainError("soc grid must lie strictly inside (0, 1)")

    dm = model.discrete_model(params, dt, T)
    values = np.full((len(c_rates), len(soc_grid)), np.nan)
    failures = []
    for j, s in enumerate(soc_grid):
        x0 = model.init_state(float(s), params).to_vector()
        for i, c in enumerate(c_rates):
            current = c * params.capacity
            if current == 0.0:
                values[i, j] = 0.0
                continue
            try:
                _, _, sens_p, sens_n = dm.simulate(x0, np.array([current]))
            except SingularityError as exc:
                failures.append({"c_rate": float(c), "soc": float(s), "error": str(exc)})
                continue
            sens = sens_p[0] if parameter == "k_p" else sens_n[0]
            values[i, j] = sens ** 2
    return SensitivityMap(parameter, c_rates, soc_grid, values, T, failures)
