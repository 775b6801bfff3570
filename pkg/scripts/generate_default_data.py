"""Regenerate the bundled data files in src/celloed/data/.

OCP curves are sampled from closed-form fits of NMC and graphite
half-cell potentials of the kind published with open single-particle-model
parameter sets; the cathode curve adds an end-of-discharge knee so the
full-cell voltage dives near 0% SoC. The drive cycle is a synthetic
mixed-rate, discharge-biased urban profile. None of these are measured
data; they define the package's default cell, nothing more.
"""

import json
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "celloed" / "data"


def ocp_cathode(y):
    u = (
        -0.8090 * y
        + 4.4875
        - 0.0428 * np.tanh(18.5138 * (y - 0.5542))
        - 17.7326 * np.tanh(15.7890 * (y - 0.3117))
        + 17.5842 * np.tanh(15.9308 * (y - 0.3120))
    )
    # end-of-discharge knee: steep drop as the cathode fills
    u = u - 1.04 * np.exp(31.0 * (y - 1.0))
    return u


def ocp_anode(x):
    u = (
        1.9793 * np.exp(-39.3631 * x)
        + 0.2482
        - 0.0909 * np.tanh(29.8538 * (x - 0.1234))
        - 0.04478 * np.tanh(14.9159 * (x - 0.2769))
        - 0.0205 * np.tanh(30.4444 * (x - 0.6103))
    )
    # end-of-charge knee: the potential dives toward the plating regime as
    # the particle approaches full lithiation, so the full-cell voltage
    # announces the anode capacity wall before the model saturates
    u = u - 0.9 * np.exp(70.0 * (x - 1.0))
    return u


def strictly_decreasing(v, eps=2e-6):
    """Clamp tiny fit wiggles so the table is strictly decreasing."""
    out = v.copy()
    for i in range(1, len(out)):
        if out[i] >= out[i - 1] - eps:
            out[i] = out[i - 1] - eps
    return out


def write_table(path, x, v):
    with open(path, "w") as f:
        f.write("stoichiometry,ocp_V\n")
        for xi, vi in zip(x, v):
            f.write(f"{xi:.6f},{vi:.8f}\n")


def drive_cycle(rng, n=1530):
    """Synthetic urban cycle: idle / accelerate / cruise / regen segments."""
    out = np.zeros(n)
    t = 0
    while t < n:
        kind = rng.choice(["idle", "accel", "cruise", "regen"], p=[0.2, 0.35, 0.3, 0.15])
        length = int(rng.integers(5, 40))
        seg = min(length, n - t)
        if kind == "idle":
            level = rng.uniform(0.0, 2.0)
        elif kind == "accel":
            level = rng.uniform(40.0, 130.0)
        elif kind == "cruise":
            level = rng.uniform(8.0, 35.0)
        else:
            level = -rng.uniform(15.0, 70.0)
        ramp = np.linspace(out[t - 1] if t else 0.0, level, min(4, seg))
        out[t:t + len(ramp)] = ramp
        out[t + len(ramp):t + seg] = level + rng.normal(0.0, 1.5, max(0, seg - len(ramp)))
        t += seg
    return np.clip(out, -90.0, 140.0)


def main():
    DATA.mkdir(parents=True, exist_ok=True)

    y = np.linspace(0.005, 1.0, 240)
    write_table(DATA / "ocp_cathode_nmc.csv", y, strictly_decreasing(ocp_cathode(y)))
    x = np.linspace(0.001, 0.995, 240)
    write_table(DATA / "ocp_anode_graphite.csv", x, strictly_decreasing(ocp_anode(x)))

    rng = np.random.default_rng(20240817)
    cyc = drive_cycle(rng)
    with open(DATA / "drive_cycle_urban_1530s.csv", "w") as f:
        f.write("t_s,current_A\n")
        for i, c in enumerate(cyc):
            f.write(f"{i},{c:.4f}\n")

    cell = {
        "description": "generic 30 Ah NMC/graphite cell, literature-derived defaults",
        "version": 1,
        "capacity_Ah": 30.0,
        "R_c_ohm": 3.0e-4,
        "T_ref_K": 298.15,
        "T0_K": 298.15,
        "electrolyte_R_ion_ohm": 1.2e-4,
        "electrolyte_diff_gain_V_A-1": 8.0e-5,
        "electrolyte_diff_tau_s": 10.0,
        "sigma_y_V": 0.01,
        "positive": {
            "k_m2.5_mol-0.5_s-1": 2.43e-9,
            "c_max_mol_m-3": 63104.0,
            "c_e_mol_m-3": 1000.0,
            "J_m-2": -0.33,
            "E_io_J_mol-1": 30000.0,
            "stoich_at_0pct": 0.95,
            "stoich_at_100pct": 0.39,
            "diffusion_rate_s-1": 1.0e-3,
            "surface_lag_gain_mol_m-3_A-1": 4.0,
            "surface_lag_tau_s": 20.0,
            "ocp_table_csv": "ocp_cathode_nmc.csv",
        },
        "negative": {
            "k_m2.5_mol-0.5_s-1": 1.85e-9,
            "c_max_mol_m-3": 33133.0,
            "c_e_mol_m-3": 1000.0,
            "J_m-2": 0.33,
            "E_io_J_mol-1": 30000.0,
            "stoich_at_0pct": 0.12,
            "stoich_at_100pct": 0.93,
            "diffusion_rate_s-1": 4.0e-4,
            "surface_lag_gain_mol_m-3_A-1": 2.2,
            "surface_lag_tau_s": 15.0,
            "ocp_table_csv": "ocp_anode_graphite.csv",
        },
    }
    (DATA / "cell_default.json").write_text(json.dumps(cell, indent=2) + "\n")
    print(f"wrote data files to {DATA}")


if __name__ == "__main__":
    main()
