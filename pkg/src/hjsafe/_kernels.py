"""Fused Euler substep for the 5-D two-car model.

One pass per node computes the one-sided differences, the extremized
Hamiltonian from per-velocity-row interval tables, the per-node
dissipation, and the frozen update.  Writes are node-independent, so the
result is bitwise identical at any thread count.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True, fastmath=False)
def two_car_substep(
    V, out, h, x0, x1, cth, sth, va, vb,
    tanlo_a, tanhi_a, alo_a, ahi_a, wmax_a, amax_a, vla,
    tanlo_b, tanhi_b, alo_b, ahi_b, wmax_b, amax_b, vlb,
    sgn_a, sgn_b, dt,
):
    n0, n1, n2, n3, n4 = V.shape
    for i0 in prange(n0):
        for i1 in range(n1):
            for i2 in range(n2):
                for i3 in range(n3):
                    for i4 in range(n4):
                        c = V[i0, i1, i2, i3, i4]

                        # one-sided differences; dims 0,1,3,4 use linear
                        # ghost extrapolation, dim 2 wraps
                        if i0 == 0:
                            vm = 2.0 * c - V[i0 + 1, i1, i2, i3, i4]
                        else:
                            vm = V[i0 - 1, i1, i2, i3, i4]
                        if i0 == n0 - 1:
                            vp = 2.0 * c - V[i0 - 1, i1, i2, i3, i4]
                        else:
                            vp = V[i0 + 1, i1, i2, i3, i4]
                        pl0 = (c - vm) / h[0]
                        pr0 = (vp - c) / h[0]

                        if i1 == 0:
                            vm = 2.0 * c - V[i0, i1 + 1, i2, i3, i4]
                        else:
                            vm = V[i0, i1 - 1, i2, i3, i4]
                        if i1 == n1 - 1:
                            vp = 2.0 * c - V[i0, i1 - 1, i2, i3, i4]
                        else:
                            vp = V[i0, i1 + 1, i2, i3, i4]
                        pl1 = (c - vm) / h[1]
                        pr1 = (vp - c) / h[1]

                        vm = V[i0, i1, n2 - 1 if i2 == 0 else i2 - 1, i3, i4]
                        vp = V[i0, i1, 0 if i2 == n2 - 1 else i2 + 1, i3, i4]
                        pl2 = (c - vm) / h[2]
                        pr2 = (vp - c) / h[2]

                        if i3 == 0:
                            vm = 2.0 * c - V[i0, i1, i2, i3 + 1, i4]
                        else:
                            vm = V[i0, i1, i2, i3 - 1, i4]
                        if i3 == n3 - 1:
                            vp = 2.0 * c - V[i0, i1, i2, i3 - 1, i4]
                        else:
                            vp = V[i0, i1, i2, i3 + 1, i4]
                        pl3 = (c - vm) / h[3]
                        pr3 = (vp - c) / h[3]

                        if i4 == 0:
                            vm = 2.0 * c - V[i0, i1, i2, i3, i4 + 1]
                        else:
                            vm = V[i0, i1, i2, i3, i4 - 1]
                        if i4 == n4 - 1:
                            vp = 2.0 * c - V[i0, i1, i2, i3, i4 - 1]
                        else:
                            vp = V[i0, i1, i2, i3, i4 + 1]
                        pl4 = (c - vm) / h[4]
                        pr4 = (vp - c) / h[4]

                        p0 = 0.5 * (pl0 + pr0)
                        p1 = 0.5 * (pl1 + pr1)
                        p2 = 0.5 * (pl2 + pr2)
                        p3 = 0.5 * (pl3 + pr3)
                        p4 = 0.5 * (pl4 + pr4)

                        x = x0[i0]
                        y = x1[i1]
                        ct = cth[i2]
                        st = sth[i2]
                        v_a = va[i3]
                        v_b = vb[i4]

                        hg = p0 * (-v_a + v_b * ct) + p1 * (v_b * st)
                        c_da = vla[i3] * (p0 * y - p1 * x - p2)
                        c_db = vlb[i4] * p2

                        u = c_da * tanlo_a[i3]
                        w = c_da * tanhi_a[i3]
                        hg += 0.5 * ((u + w) + sgn_a * abs(w - u))
                        u = p3 * alo_a[i3]
                        w = p3 * ahi_a[i3]
                        hg += 0.5 * ((u + w) + sgn_a * abs(w - u))
                        u = c_db * tanlo_b[i4]
                        w = c_db * tanhi_b[i4]
                        hg += 0.5 * ((u + w) + sgn_b * abs(w - u))
                        u = p4 * alo_b[i4]
                        w = p4 * ahi_b[i4]
                        hg += 0.5 * ((u + w) + sgn_b * abs(w - u))

                        w_a = wmax_a[i3]
                        w_b = wmax_b[i4]
                        s0 = abs(-v_a + v_b * ct) + w_a * abs(y)
                        s1 = abs(v_b * st) + w_a * abs(x)
                        s2 = w_a + w_b
                        hhat = hg + 0.5 * (
                            s0 * (pr0 - pl0)
                            + s1 * (pr1 - pl1)
                            + s2 * (pr2 - pl2)
                            + amax_a[i3] * (pr3 - pl3)
                            + amax_b[i4] * (pr4 - pl4)
                        )
                        if hhat < 0.0:
                            out[i0, i1, i2, i3, i4] = c + dt * hhat
                        else:
                            out[i0, i1, i2, i3, i4] = c
