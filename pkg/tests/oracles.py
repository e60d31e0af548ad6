"""Independent reference implementations used to check the package.

Everything here is written directly from the model equations, without
importing the package's optimized paths, so agreement is meaningful.
"""

import numba
import numpy as np


def saturate(a, v, vmin, vmax):
    """Velocity flow clamped at the range ends (elementwise)."""
    a = np.asarray(a, dtype=np.float64)
    out = np.where((v <= vmin) & (a < 0), 0.0, a)
    return np.where((v >= vmax) & (out > 0), 0.0, out)


def dot_flow_matrix(z, p, cand_a, cand_b, params_a, params_b):
    """Matrix of p . f(z, u_a, u_b) over control candidates.

    cand_a: (n, 2) rows (accel, steer) for agent A; cand_b: (m, 2).
    Returns (n, m).
    """
    dx, dy, dtheta, v_a, v_b = z
    aa = cand_a[:, 0][:, None]
    da = cand_a[:, 1][:, None]
    ab = cand_b[:, 0][None, :]
    db = cand_b[:, 1][None, :]
    w_a = (v_a / params_a.wheelbase) * np.tan(da)
    w_b = (v_b / params_b.wheelbase) * np.tan(db)
    f0 = -v_a + v_b * np.cos(dtheta) + w_a * dy
    f1 = v_b * np.sin(dtheta) - w_a * dx
    f2 = w_b - w_a
    f3 = saturate(aa, v_a, *params_a.velocity)
    f4 = saturate(ab, v_b, *params_b.velocity)
    return p[0] * f0 + p[1] * f1 + p[2] * f2 + p[3] * f3 + p[4] * f4


def control_grid(accel, steer, n=21):
    """All (accel, steer) combinations on an n x n interval grid."""
    a = np.linspace(accel[0], accel[1], n)
    d = np.linspace(steer[0], steer[1], n)
    aa, dd = np.meshgrid(a, d, indexing="ij")
    return np.column_stack([aa.ravel(), dd.ravel()])


def game_value(matrix, role_a, role_b):
    """Sequential game value with A over rows, B over columns, B second."""
    inner = matrix.max(axis=1) if role_b == "max" else matrix.min(axis=1)
    return inner.max() if role_a == "max" else inner.min()


def braking_distance(v, accel_max):
    """Minimum stopping gap for initial speed v under |a| <= accel_max."""
    return v * v / (2.0 * accel_max)


@numba.njit(cache=True)
def rss_gap_simulation(v_a, v_b, b_a, b_b, dt=1e-6):
    """Worst gap closure during simultaneous braking, by fine stepping.

    Semi-implicit Euler on the two braking vehicles (velocity clamped at
    standstill), no closed-form kinematics involved; used as the
    independent check of the analytic critical gap.
    """
    t_end = max(v_a / abs(b_a), v_b / abs(b_b))
    n = int(np.ceil(t_end / dt)) + 1
    x_a = 0.0
    x_b = 0.0
    worst = 0.0
    for _ in range(n):
        v_a = max(0.0, v_a + b_a * dt)
        v_b = max(0.0, v_b + b_b * dt)
        x_a += v_a * dt
        x_b += v_b * dt
        if x_a - x_b > worst:
            worst = x_a - x_b
    return worst
