"""NumPy fallback for the simulation hot loop.

Semantics match ``_core`` exactly: state recursion stepped in a Python
loop, voltage/sensitivity algebra vectorized afterwards. Selected by
``celloed._kernel`` when the compiled extension is unavailable or the
``CELLOED_PURE_PYTHON`` environment variable is set.
"""

import numpy as np

NAME = "pure"

# pack indices (kept in sync with celloed.model)
_I0K_P, _I0K_N, _CMAX_P, _CMAX_N, _ETA_P, _ETA_N, _R_INST, _KP, _KN = range(9)


def _ocp_eval(xs, coeffs, q):
    idx = np.clip(np.searchsorted(xs, q, side="right") - 1, 0, len(xs) - 2)
    dx = q - xs[idx]
    c = coeffs[:, idx]
    return ((c[0] * dx + c[1]) * dx + c[2]) * dx + c[3]


def simulate(ad, bd, x0, currents, pack, xp_x, xp_c, xn_x, xn_c,
             states, v, sens_p, sens_n):
    """Fill the output arrays; returns (n_done, flag).

    flag 0: completed; 1/2: positive/negative surface concentration
    saturated at step ``n_done`` (outputs valid before that step only).
    """
    n = len(currents)
    x = x0.copy()
    for k in range(n):
        x = ad @ x + bd * currents[k]
        states[k] = x

    c_p = states[:, 0] + states[:, 3]
    c_n = states[:, 4] + states[:, 7]
    bad_p = (c_p <= 0.0) | (c_p >= pack[_CMAX_P])
    bad_n = (c_n <= 0.0) | (c_n >= pack[_CMAX_N])
    n_done, flag = n, 0
    if bad_p.any() or bad_n.any():
        first_p = int(np.argmax(bad_p)) if bad_p.any() else n
        first_n = int(np.argmax(bad_n)) if bad_n.any() else n
        n_done = min(first_p, first_n)
        flag = 1 if first_p <= first_n else 2
    m = n_done

    i0p = pack[_I0K_P] * np.sqrt(c_p[:m] * (pack[_CMAX_P] - c_p[:m]))
    i0n = pack[_I0K_N] * np.sqrt(c_n[:m] * (pack[_CMAX_N] - c_n[:m]))
    eta_p = pack[_ETA_P] * currents[:m] / i0p
    eta_n = pack[_ETA_N] * currents[:m] / i0n
    u_p = _ocp_eval(xp_x, xp_c, c_p[:m] / pack[_CMAX_P])
    u_n = _ocp_eval(xn_x, xn_c, c_n[:m] / pack[_CMAX_N])
    v[:m] = (
        u_p - u_n - eta_p + eta_n + states[:m, 8] - pack[_R_INST] * currents[:m]
    )
    sens_p[:m] = eta_p / pack[_KP]
    sens_n[:m] = -eta_n / pack[_KN]
    return n_done, flag
