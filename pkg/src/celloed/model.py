"""Reduced-order electrochemical cell model.

Discrete-time concentration dynamics under zero-order-hold current plus the
algebraic terminal-voltage map. The linear part (three diffusion shells and
a surface-lag state per electrode, one electrolyte-diffusion filter state)
is discretized exactly with a matrix exponential per (parameters, dt) pair
and advanced by the selected kernel backend.

Sign conventions: discharge current is positive. The reported surface
concentration ``c_se`` is the outer-shell value plus the surface-lag
contribution ``c_d``; it is the concentration that drives the OCP and the
exchange current density.
"""

from __future__ import annotations

import dataclasses
import math
import threading

import numpy as np
from scipy.linalg import expm

from . import _kernel
from .errors import DomainError, SingularityError
from .params import SHELL_WEIGHTS, CellParameters, ElectrodeParameters

N_STATES = 9
# Internal state layout: [c_surf, c_b1, c_b2, c_d] per electrode, positive
# first, then the electrolyte-diffusion filter state.
IDX_P, IDX_N, IDX_PHI = 0, 4, 8

# Scalar pack layout shared with the kernel backends.
PACK_I0K_P, PACK_I0K_N = 0, 1
PACK_CMAX_P, PACK_CMAX_N = 2, 3
PACK_ETA_PREF_P, PACK_ETA_PREF_N = 4, 5
PACK_R_INST = 6
PACK_KP, PACK_KN = 7, 8
PACK_SIZE = 9


@dataclasses.dataclass
class CellState:
    """Nine-component model state plus the electrolyte filter state.

    ``c_se_*`` are effective surface concentrations (outer shell + lag);
    ``v`` is always the algebraic terminal voltage at the most recent held
    current, never an integrated quantity.
    """

    v: float
    c_se_p: float
    c_b1_p: float
    c_b2_p: float
    c_d_p: float
    c_se_n: float
    c_b1_n: float
    c_b2_n: float
    c_d_n: float
    phi_diff_state: float

    def to_vector(self):
        x = np.empty(N_STATES)
        x[0] = self.c_se_p - self.c_d_p
        x[1] = self.c_b1_p
        x[2] = self.c_b2_p
        x[3] = self.c_d_p
        x[4] = self.c_se_n - self.c_d_n
        x[5] = self.c_b1_n
        x[6] = self.c_b2_n
        x[7] = self.c_d_n
        x[8] = self.phi_diff_state
        return x

    @classmethod
    def from_vector(cls, x, v):
        return cls(
            v=float(v),
            c_se_p=float(x[0] + x[3]),
            c_b1_p=float(x[1]),
            c_b2_p=float(x[2]),
            c_d_p=float(x[3]),
            c_se_n=float(x[4] + x[7]),
            c_b1_n=float(x[5]),
            c_b2_n=float(x[6]),
            c_d_n=float(x[7]),
            phi_diff_state=float(x[8]),
        )


@dataclasses.dataclass
class ExcitationProfile:
    """Timestamped current sequence with temperature annotation."""

    dt: float
    currents: np.ndarray
    temperature: float = 298.15
    label: str = ""

    def __post_init__(self):
        self.currents = np.asarray(self.currents, dtype=float)
        if self.dt <= 0:
            raise DomainError("profile dt must be positive")
        if self.currents.ndim != 1:
            raise DomainError("profile currents must be one-dimensional")
        if self.currents.size and not np.all(np.isfinite(self.currents)):
            raise DomainError("profile currents must be finite")

    @property
    def duration(self):
        return len(self.currents) * self.dt

    @property
    def times(self):
        return self.dt * np.arange(len(self.currents))


def _electrode_blocks(e: ElectrodeParameters, gamma_sign, capacity):
    """Continuous-time (A, B) of one electrode's four concentration states."""
    rate = e.diffusion.rate_per_s
    vols = (4.0 * np.pi / 3.0) * np.array([1.0, 7.0, 19.0]) / 27.0  # b1, b2, surf
    g = rate * 4.0 * np.pi * np.array([1.0, 4.0]) / 3.0  # b1-b2, b2-surf conductances

    A = np.zeros((4, 4))
    # order: [c_surf, c_b1, c_b2, c_d]
    A[1, 1] = -g[0] / vols[0]
    A[1, 2] = g[0] / vols[0]
    A[2, 1] = g[0] / vols[1]
    A[2, 2] = -(g[0] + g[1]) / vols[1]
    A[2, 0] = g[1] / vols[1]
    A[0, 2] = g[1] / vols[2]
    A[0, 0] = -g[1] / vols[2]
    A[3, 3] = -1.0 / e.diffusion.lag_tau_s

    x0, x100 = e.stoich_bounds
    gamma = abs(x100 - x0) * e.c_max / (3600.0 * capacity)
    B = np.zeros(4)
    B[0] = gamma_sign * gamma * vols.sum() / vols[2]
    B[3] = gamma_sign * e.diffusion.lag_gain / e.diffusion.lag_tau_s
    return A, B


def continuous_dynamics(params: CellParameters):
    """Full continuous-time (A, B) of the nine-dimensional linear state."""
    A = np.zeros((N_STATES, N_STATES))
    B = np.zeros(N_STATES)
    Ap, Bp = _electrode_blocks(params.positive, +1.0, params.capacity)
    An, Bn = _electrode_blocks(params.negative, -1.0, params.capacity)
    A[IDX_P:IDX_P + 4, IDX_P:IDX_P + 4] = Ap
    A[IDX_N:IDX_N + 4, IDX_N:IDX_N + 4] = An
    B[IDX_P:IDX_P + 4] = Bp
    B[IDX_N:IDX_N + 4] = Bn
    A[IDX_PHI, IDX_PHI] = -1.0 / params.electrolyte_diff_tau
    B[IDX_PHI] = -params.electrolyte_diff_gain / params.electrolyte_diff_tau
    return A, B


def arrhenius_factor(electrode: ElectrodeParameters, T, params: CellParameters):
    return math.exp((1.0 / params.T_ref - 1.0 / T) * electrode.E_io / params.gas_constant)


class DiscreteModel:
    """ZOH-discretized model for one (parameters, dt, temperature) triple.

    Holds the discrete transition matrices, the scalar pack consumed by the
    kernel backends, and the OCP spline coefficient arrays. Immutable after
    construction, so concurrent reads are safe.
    """

    def __init__(self, params: CellParameters, dt, T):
        if dt <= 0:
            raise DomainError("dt must be positive")
        if T <= 0:
            raise DomainError("temperature must be positive")
        self.params = params
        self.dt = float(dt)
        self.T = float(T)

        A, B = continuous_dynamics(params)
        M = np.zeros((N_STATES + 1, N_STATES + 1))
        M[:N_STATES, :N_STATES] = A
        M[:N_STATES, N_STATES] = B
        Md = expm(M * self.dt)
        self.Ad = np.ascontiguousarray(Md[:N_STATES, :N_STATES])
        self.Bd = np.ascontiguousarray(Md[:N_STATES, N_STATES])

        self.pack = self.build_pack(params, T)
        self.ocp_xp, self.ocp_cp = params.positive.ocp.coefficients()
        self.ocp_xn, self.ocp_cn = params.negative.ocp.coefficients()

    @staticmethod
    def build_pack(params: CellParameters, T, k_p=None, k_n=None):
        """Scalar pack for the kernel; rate constants can be overridden."""
        k_p = params.positive.k if k_p is None else k_p
        k_n = params.negative.k if k_n is None else k_n
        pack = np.empty(PACK_SIZE)
        F = params.faraday
        pack[PACK_I0K_P] = (
            arrhenius_factor(params.positive, T, params) * F * k_p
            * math.sqrt(params.positive.c_e)
        )
        pack[PACK_I0K_N] = (
            arrhenius_factor(params.negative, T, params) * F * k_n
            * math.sqrt(params.negative.c_e)
        )
        pack[PACK_CMAX_P] = params.positive.c_max
        pack[PACK_CMAX_N] = params.negative.c_max
        pref = params.gas_constant * params.T0 / F
        pack[PACK_ETA_PREF_P] = pref * (-params.positive.J)
        pack[PACK_ETA_PREF_N] = pref * (-params.negative.J)
        pack[PACK_R_INST] = params.R_c + params.electrolyte_R_ion
        pack[PACK_KP] = k_p
        pack[PACK_KN] = k_n
        return pack

    def simulate_partial(self, x0, currents, pack=None):
        """Advance the state through ``currents`` (one ZOH step each).

        Returns (states, v, sens_p, sens_n, n_done, flag); flag 1/2 marks a
        positive/negative surface-concentration saturation at step n_done,
        in which case only the first n_done output rows are valid.
        """
        currents = np.ascontiguousarray(currents, dtype=float)
        n = len(currents)
        states = np.empty((n, N_STATES))
        v = np.empty(n)
        sens_p = np.empty(n)
        sens_n = np.empty(n)
        if n == 0:
            return states, v, sens_p, sens_n, 0, 0
        n_done, flag = _kernel.simulate(
            self.Ad, self.Bd, np.ascontiguousarray(x0, dtype=float), currents,
            self.pack if pack is None else pack,
            self.ocp_xp, self.ocp_cp, self.ocp_xn, self.ocp_cn,
            states, v, sens_p, sens_n,
        )
        return states, v, sens_p, sens_n, n_done, flag

    def simulate(self, x0, currents, pack=None):
        """Like ``simulate_partial`` but raises SingularityError on saturation."""
        states, v, sens_p, sens_n, n_done, flag = self.simulate_partial(x0, currents, pack)
        if flag:
            electrode = "positive" if flag == 1 else "negative"
            raise SingularityError(
                f"{electrode} surface concentration saturated at step {n_done}"
            )
        return states, v, sens_p, sens_n


_MODEL_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def discrete_model(params: CellParameters, dt, T) -> DiscreteModel:
    """Cached ZOH discretization; safe under concurrent readers."""
    key = (params.fingerprint(), float(dt), float(T))
    model = _MODEL_CACHE.get(key)
    if model is None:
        with _CACHE_LOCK:
            model = _MODEL_CACHE.get(key)
            if model is None:
                model = DiscreteModel(params, dt, T)
                _MODEL_CACHE[key] = model
    return model


def exchange_current_density(c_se, electrode: ElectrodeParameters, T, params: CellParameters):
    """Arrhenius-scaled exchange current density at one electrode surface."""
    if not 0.0 < c_se < electrode.c_max:
        raise SingularityError(
            f"surface concentration {c_se} outside (0, {electrode.c_max})"
        )
    if T <= 0:
        raise DomainError("temperature must be positive")
    return (
        arrhenius_factor(electrode, T, params)
        * params.faraday
        * electrode.k
        * math.sqrt(c_se * (electrode.c_max - c_se) * electrode.c_e)
    )


def kinetic_overpotential(current, i0, electrode: ElectrodeParameters, params: CellParameters):
    """Linearized Butler-Volmer overpotential at the solid-electrolyte interface."""
    if i0 <= 0:
        raise SingularityError(f"exchange current density must be positive, got {i0}")
    return params.gas_constant * params.T0 * (-electrode.J * current) / (params.faraday * i0)


def terminal_voltage(state: CellState, current, params: CellParameters, T=298.15):
    """Algebraic terminal-voltage map evaluated at the given state and current."""
    i0_p = exchange_current_density(state.c_se_p, params.positive, T, params)
    i0_n = exchange_current_density(state.c_se_n, params.negative, T, params)
    eta_p = kinetic_overpotential(current, i0_p, params.positive, params)
    eta_n = kinetic_overpotential(current, i0_n, params.negative, params)
    u_p = float(params.positive.ocp(state.c_se_p / params.positive.c_max))
    u_n = float(params.negative.ocp(state.c_se_n / params.negative.c_max))
    phi_ion = -params.electrolyte_R_ion * current
    return (
        u_p - u_n - eta_p + eta_n + state.phi_diff_state + phi_ion - current * params.R_c
    )


def init_state(soc0, params: CellParameters) -> CellState:
    """Equilibrium state at the given SoC: uniform particles, zero current."""
    if not 0.0 <= soc0 <= 1.0:
        raise DomainError(f"soc0 must lie in [0, 1], got {soc0}")
    x = np.zeros(N_STATES)
    for base, e in ((IDX_P, params.positive), (IDX_N, params.negative)):
        c_eq = e.stoich_at_soc(soc0) * e.c_max
        x[base:base + 3] = c_eq  # surf and both bulk shells
        x[base + 3] = 0.0
    state = CellState.from_vector(x, 0.0)
    state.v = terminal_voltage(state, 0.0, params, params.T_ref)
    return state


def step(state: CellState, current, dt, params: CellParameters, T=298.15) -> CellState:
    """One ZOH step; voltage recomputed algebraically at the new state."""
    model = discrete_model(params, dt, T)
    states, v, _, _ = model.simulate(state.to_vector(), np.array([float(current)]))
    return CellState.from_vector(states[0], v[0])


def soc(state: CellState, params: CellParameters):
    """SoC from the volume-weighted mean negative-electrode stoichiometry."""
    shells = np.array([state.c_b1_n, state.c_b2_n, state.c_se_n - state.c_d_n])
    x_mean = float(SHELL_WEIGHTS @ shells) / params.negative.c_max
    return params.negative.soc_from_stoich(x_mean)


def soc_of_states(states, params: CellParameters):
    """Vectorized SoC over an (n, 9) internal state array."""
    x_mean = (
        states[:, IDX_N + 1] * SHELL_WEIGHTS[0]
        + states[:, IDX_N + 2] * SHELL_WEIGHTS[1]
        + states[:, IDX_N] * SHELL_WEIGHTS[2]
    ) / params.negative.c_max
    return params.negative.soc_from_stoich(x_mean)


@dataclasses.dataclass
class SimulationResult:
    """Per-step trajectory of a simulated profile.

    ``states`` is the internal (n, 9) array; ``limit_low``/``limit_high``
    annotate voltage-limit crossings without halting the run.
    """

    profile: ExcitationProfile
    states: np.ndarray
    v: np.ndarray
    sens_p: np.ndarray
    sens_n: np.ndarray
    soc: np.ndarray
    limit_low: np.ndarray
    limit_high: np.ndarray

    @property
    def t(self):
        return self.profile.times

    @property
    def c_se_p(self):
        return self.states[:, IDX_P] + self.states[:, IDX_P + 3]

    @property
    def c_se_n(self):
        return self.states[:, IDX_N] + self.states[:, IDX_N + 3]

    def state_at(self, i) -> CellState:
        return CellState.from_vector(self.states[i], self.v[i])


def simulate_profile(
    profile: ExcitationProfile,
    soc0,
    params: CellParameters,
    v_limits=(2.8, 4.2),
) -> SimulationResult:
    """Simulate a full profile from equilibrium at ``soc0``.

    Voltage-limit crossings are flagged, not fatal; concentration
    saturation raises SingularityError.
    """
    model = discrete_model(params, profile.dt, profile.temperature)
    x0 = init_state(soc0, params).to_vector()
    states, v, sens_p, sens_n = model.simulate(x0, profile.currents)
    return SimulationResult(
        profile=profile,
        states=states,
        v=v,
        sens_p=sens_p,
        sens_n=sens_n,
        soc=soc_of_states(states, params),
        limit_low=v < v_limits[0],
        limit_high=v > v_limits[1],
    )
