"""Cell parameter containers, open-circuit-potential tables, and config I/O.

Parameter values shipped in ``data/cell_default.json`` describe a generic
30 Ah NMC/graphite cell assembled from open single-particle-model
literature. They are calibrated for plausible terminal behaviour, not
measured on any specific cell.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, LoadError

GAS_CONSTANT = 8.314  # J mol^-1 K^-1
FARADAY = 96485.0  # C mol^-1

# Volume fractions of the three equal-thickness spherical shells,
# innermost first. Used for volume-weighted mean concentrations.
SHELL_WEIGHTS = np.array([1.0, 7.0, 19.0]) / 27.0


class OcpTable:
    """Open-circuit potential vs. stoichiometry, monotone-cubic interpolated.

    The table must be strictly monotone in stoichiometry; both NMC and
    graphite tables shipped with the package are decreasing.
    """

    def __init__(self, x, v, name=""):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 4:
            raise LoadError(f"OCP table {name!r} needs >= 4 (x, V) rows")
        if np.any(np.diff(x) <= 0):
            raise LoadError(f"OCP table {name!r}: stoichiometry not strictly increasing")
        dv = np.diff(v)
        if np.all(dv < 0):
            self.increasing = False
        elif np.all(dv > 0):
            self.increasing = True
        else:
            raise LoadError(f"OCP table {name!r}: potential not strictly monotone")
        self.x = x
        self.v = v
        self.name = name
        self._pchip = PchipInterpolator(x, v, extrapolate=True)
        self._deriv = self._pchip.derivative()

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        try:
            raw = np.loadtxt(path, delimiter=",", comments="#", skiprows=1)
        except (OSError, ValueError) as exc:
            raise LoadError(f"cannot read OCP table {path}: {exc}") from exc
        if raw.ndim != 2 or raw.shape[1] != 2:
            raise LoadError(f"OCP table {path}: expected two columns (stoichiometry, volts)")
        return cls(raw[:, 0], raw[:, 1], name=path.stem)

    def __call__(self, x):
        return self._pchip(x)

    def derivative(self, x):
        return self._deriv(x)

    def coefficients(self):
        """Breakpoints and piecewise-cubic coefficients for the compiled kernel."""
        return np.ascontiguousarray(self._pchip.x), np.ascontiguousarray(self._pchip.c)

    def table_bytes(self):
        return self.x.tobytes() + self.v.tobytes()


@dataclasses.dataclass(frozen=True)
class DiffusionDynamics:
    """Coefficients of the per-electrode linear concentration dynamics.

    ``rate_per_s`` is the normalized solid diffusivity D/R^2 of the
    three-shell spherical particle. The surface lag state adds a fast
    boundary-layer correction on top of the outer shell: it relaxes to
    ``-lag_gain * I`` (anode) / ``+lag_gain * I`` (cathode) with time
    constant ``lag_tau_s``.
    """

    rate_per_s: float
    lag_gain: float  # mol m^-3 A^-1
    lag_tau_s: float

    def __post_init__(self):
        if self.rate_per_s <= 0 or self.lag_tau_s <= 0 or self.lag_gain < 0:
            raise DomainError("diffusion dynamics coefficients must be positive")


@dataclasses.dataclass(frozen=True)
class ElectrodeParameters:
    k: float  # rate constant, m^2.5 mol^-0.5 s^-1
    c_max: float  # mol m^-3
    c_e: float  # mol m^-3
    J: float  # intercalation-current-density coefficient, m^-2 (signed)
    E_io: float  # activation energy, J mol^-1
    ocp: OcpTable
    stoich_bounds: tuple  # (x at 0% SoC, x at 100% SoC)
    diffusion: DiffusionDynamics

    def __post_init__(self):
        if self.k <= 0 or self.c_max <= 0 or self.c_e <= 0:
            raise DomainError("k, c_max, c_e must be positive")
        x0, x100 = self.stoich_bounds
        if not (0.0 <= x0 <= 1.0 and 0.0 <= x100 <= 1.0) or x0 == x100:
            raise DomainError(f"stoichiometry window ({x0}, {x100}) outside [0, 1]")

    @property
    def discharges_filling(self):
        """True if discharge raises this electrode's stoichiometry (cathode)."""
        x0, x100 = self.stoich_bounds
        return x0 > x100

    def stoich_at_soc(self, soc):
        x0, x100 = self.stoich_bounds
        return x0 + soc * (x100 - x0)

    def soc_from_stoich(self, x):
        x0, x100 = self.stoich_bounds
        return (x - x0) / (x100 - x0)


@dataclasses.dataclass(frozen=True)
class CellParameters:
    positive: ElectrodeParameters
    negative: ElectrodeParameters
    R_c: float  # ohm, lumped collector/contact resistance
    capacity: float  # Ah
    T_ref: float  # K
    T0: float  # K, overpotential prefactor temperature
    electrolyte_R_ion: float  # ohm
    electrolyte_diff_gain: float  # V A^-1, steady-state diffusion-overpotential gain
    electrolyte_diff_tau: float  # s
    sigma_y: float  # V, output noise std
    gas_constant: float = GAS_CONSTANT
    faraday: float = FARADAY

    def __post_init__(self):
        if self.capacity <= 0:
            raise DomainError("capacity must be positive")
        if self.R_c < 0 or self.electrolyte_R_ion < 0:
            raise DomainError("resistances must be non-negative")
        if self.sigma_y <= 0:
            raise DomainError("sigma_y must be positive")
        if self.T_ref <= 0 or self.T0 <= 0:
            raise DomainError("temperatures must be positive")
        if not (self.negative.stoich_bounds[1] > self.negative.stoich_bounds[0]):
            raise DomainError("anode window must increase from 0% to 100% SoC")
        if not (self.positive.stoich_bounds[1] < self.positive.stoich_bounds[0]):
            raise DomainError("cathode window must decrease from 0% to 100% SoC")

    def electrode(self, which):
        if which in ("p", "positive"):
            return self.positive
        if which in ("n", "negative"):
            return self.negative
        raise DomainError(f"unknown electrode {which!r}")

    def fingerprint(self):
        """Stable hash of every numeric field and both OCP tables."""
        h = hashlib.sha256()
        for e in (self.positive, self.negative):
            h.update(
                np.array(
                    [e.k, e.c_max, e.c_e, e.J, e.E_io, *e.stoich_bounds,
                     e.diffusion.rate_per_s, e.diffusion.lag_gain, e.diffusion.lag_tau_s]
                ).tobytes()
            )
            h.update(e.ocp.table_bytes())
        h.update(
            np.array(
                [self.R_c, self.capacity, self.T_ref, self.T0, self.electrolyte_R_ion,
                 self.electrolyte_diff_gain, self.electrolyte_diff_tau, self.sigma_y,
                 self.gas_constant, self.faraday]
            ).tobytes()
        )
        return h.hexdigest()[:16]


def _electrode_from_dict(d, base_dir, name):
    ocp_path = Path(d["ocp_table_csv"])
    if not ocp_path.is_absolute():
        ocp_path = base_dir / ocp_path
    return ElectrodeParameters(
        k=float(d["k_m2.5_mol-0.5_s-1"]),
        c_max=float(d["c_max_mol_m-3"]),
        c_e=float(d["c_e_mol_m-3"]),
        J=float(d["J_m-2"]),
        E_io=float(d["E_io_J_mol-1"]),
        ocp=OcpTable.from_csv(ocp_path),
        stoich_bounds=(float(d["stoich_at_0pct"]), float(d["stoich_at_100pct"])),
        diffusion=DiffusionDynamics(
            rate_per_s=float(d["diffusion_rate_s-1"]),
            lag_gain=float(d["surface_lag_gain_mol_m-3_A-1"]),
            lag_tau_s=float(d["surface_lag_tau_s"]),
        ),
    )


def load_cell_parameters(path):
    """Load ``CellParameters`` from a JSON config (units are in the key names)."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"cell parameter file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"malformed JSON in {path}: {exc}") from exc
    try:
        return CellParameters(
            positive=_electrode_from_dict(cfg["positive"], path.parent, "positive"),
            negative=_electrode_from_dict(cfg["negative"], path.parent, "negative"),
            R_c=float(cfg["R_c_ohm"]),
            capacity=float(cfg["capacity_Ah"]),
            T_ref=float(cfg["T_ref_K"]),
            T0=float(cfg["T0_K"]),
            electrolyte_R_ion=float(cfg["electrolyte_R_ion_ohm"]),
            electrolyte_diff_gain=float(cfg["electrolyte_diff_gain_V_A-1"]),
            electrolyte_diff_tau=float(cfg["electrolyte_diff_tau_s"]),
            sigma_y=float(cfg["sigma_y_V"]),
        )
    except KeyError as exc:
        raise LoadError(f"missing field {exc} in {path}") from exc


def default_cell_parameters():
    """The bundled 30 Ah NMC/graphite parameter set."""
    with resources.as_file(resources.files("celloed.data") / "cell_default.json") as p:
        return load_cell_parameters(p)


def data_file(name):
    """Absolute path of a bundled data file."""
    with resources.as_file(resources.files("celloed.data") / name) as p:
        return Path(p)
