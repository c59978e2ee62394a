"""Numba inner loops: split-step passes and the marching steady solver.

Field layout is spatial-major with a trailing flat component axis of length
3**n (component index c = sum_i 3**(n-1-i) * s_i, slot states 0=E, 1=P, 2=S).
All kernels are single-threaded; the shift pass runs in descending index
order so it can gather in place (all sources sit at lower indices).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _decode2():
    # per-component slot states and E-flags for n=2
    s1 = np.empty(9, np.int64)
    s2 = np.empty(9, np.int64)
    for c in range(9):
        s1[c] = c // 3
        s2[c] = c % 3
    return s1, s2


@njit(cache=True)
def _decode3():
    s1 = np.empty(27, np.int64)
    s2 = np.empty(27, np.int64)
    s3 = np.empty(27, np.int64)
    for c in range(27):
        s1[c] = c // 9
        s2[c] = (c // 3) % 3
        s3[c] = c % 3
    return s1, s2, s3


# ---------------------------------------------------------------------------
# shift pass: v <- A(Dh(v)), interaction half-phase applied at the source

@njit(cache=True)
def shift_phase_2(v, face1, face2, ph_h, q):
    # v: (N,N,9); face_a: (N+q,3) entering-slot data for the face x_a=0
    n = v.shape[0]
    s1, s2 = _decode2()
    buf = np.empty(9, v.dtype)
    zero = v.dtype.type(0.0)
    for i in range(n - 1, -1, -1):
        for j in range(n - 1, -1, -1):
            for c in range(9):
                si = i - q if s1[c] == 0 else i
                sj = j - q if s2[c] == 0 else j
                if si < 0:
                    buf[c] = face1[sj + q, s2[c]] if s1[c] == 0 else zero
                elif sj < 0:
                    buf[c] = face2[si + q, s1[c]] if s2[c] == 0 else zero
                else:
                    val = v[si, sj, c]
                    if c == 8:
                        val = val * ph_h[si, sj]
                    buf[c] = val
            for c in range(9):
                v[i, j, c] = buf[c]


@njit(cache=True)
def shift_phase_2_periodic(v, out, ph_h, q):
    n = v.shape[0]
    s1, s2 = _decode2()
    for i in range(n):
        for j in range(n):
            for c in range(9):
                si = (i - q) % n if s1[c] == 0 else i
                sj = (j - q) % n if s2[c] == 0 else j
                val = v[si, sj, c]
                if c == 8:
                    val = val * ph_h[si, sj]
                out[i, j, c] = val


@njit(cache=True)
def shift_phase_3(v, face1, face2, face3, ph_h, sss_h, q):
    # v: (N,N,N,27); face_a: (N+q,N+q,9) over the two retained coordinates
    n = v.shape[0]
    s1, s2, s3 = _decode3()
    # pair-phase selector: 0 none, 1 (x2,x3), 2 (x1,x3), 3 (x1,x2), 4 triple
    psel = np.zeros(27, np.int64)
    for c in range(27):
        ns = (s1[c] == 2) + (s2[c] == 2) + (s3[c] == 2)
        if ns == 3:
            psel[c] = 4
        elif ns == 2:
            if s1[c] != 2:
                psel[c] = 1
            elif s2[c] != 2:
                psel[c] = 2
            else:
                psel[c] = 3
    buf = np.empty(27, v.dtype)
    zero = v.dtype.type(0.0)
    for i in range(n - 1, -1, -1):
        for j in range(n - 1, -1, -1):
            for k in range(n - 1, -1, -1):
                for c in range(27):
                    si = i - q if s1[c] == 0 else i
                    sj = j - q if s2[c] == 0 else j
                    sk = k - q if s3[c] == 0 else k
                    if si < 0:
                        buf[c] = face1[sj + q, sk + q, 3 * s2[c] + s3[c]] \
                            if s1[c] == 0 else zero
                    elif sj < 0:
                        buf[c] = face2[si + q, sk + q, 3 * s1[c] + s3[c]] \
                            if s2[c] == 0 else zero
                    elif sk < 0:
                        buf[c] = face3[si + q, sj + q, 3 * s1[c] + s2[c]] \
                            if s3[c] == 0 else zero
                    else:
                        val = v[si, sj, sk, c]
                        p = psel[c]
                        if p == 1:
                            val = val * ph_h[sj, sk]
                        elif p == 2:
                            val = val * ph_h[si, sk]
                        elif p == 3:
                            val = val * ph_h[si, sj]
                        elif p == 4:
                            val = val * sss_h[i, j, k]
                        buf[c] = val
                for c in range(27):
                    v[i, j, k, c] = buf[c]


# ---------------------------------------------------------------------------
# local pass: v <- C(Dh(v)), slot-wise 3x3 transform after the half-phase

@njit(cache=True)
def local_phase_2(v, u, ph_h):
    # u: (N,3,3) per-site one-step propagator of the local couplings
    n = v.shape[0]
    buf = np.empty(9, v.dtype)
    for i in range(n):
        for j in range(n):
            for c in range(9):
                buf[c] = v[i, j, c]
            buf[8] = buf[8] * ph_h[i, j]
            # slot 2 (stride 1) with u[j]
            for base in range(0, 9, 3):
                b0 = buf[base]
                b1 = buf[base + 1]
                b2 = buf[base + 2]
                buf[base] = u[j, 0, 0] * b0 + u[j, 0, 1] * b1 + u[j, 0, 2] * b2
                buf[base + 1] = u[j, 1, 0] * b0 + u[j, 1, 1] * b1 + u[j, 1, 2] * b2
                buf[base + 2] = u[j, 2, 0] * b0 + u[j, 2, 1] * b1 + u[j, 2, 2] * b2
            # slot 1 (stride 3) with u[i]
            for lo in range(3):
                b0 = buf[lo]
                b1 = buf[3 + lo]
                b2 = buf[6 + lo]
                buf[lo] = u[i, 0, 0] * b0 + u[i, 0, 1] * b1 + u[i, 0, 2] * b2
                buf[3 + lo] = u[i, 1, 0] * b0 + u[i, 1, 1] * b1 + u[i, 1, 2] * b2
                buf[6 + lo] = u[i, 2, 0] * b0 + u[i, 2, 1] * b1 + u[i, 2, 2] * b2
            for c in range(9):
                v[i, j, c] = buf[c]


@njit(cache=True)
def local_phase_3(v, u, ph_h, sss_h):
    n = v.shape[0]
    buf = np.empty(27, v.dtype)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for c in range(27):
                    buf[c] = v[i, j, k, c]
                t = ph_h[j, k]
                buf[8] = buf[8] * t
                buf[17] = buf[17] * t
                t = ph_h[i, k]
                buf[20] = buf[20] * t
                buf[23] = buf[23] * t
                t = ph_h[i, j]
                buf[24] = buf[24] * t
                buf[25] = buf[25] * t
                buf[26] = buf[26] * sss_h[i, j, k]
                # slot 3 (stride 1) with u[k]
                for base in range(0, 27, 3):
                    b0 = buf[base]
                    b1 = buf[base + 1]
                    b2 = buf[base + 2]
                    buf[base] = u[k, 0, 0] * b0 + u[k, 0, 1] * b1 + u[k, 0, 2] * b2
                    buf[base + 1] = u[k, 1, 0] * b0 + u[k, 1, 1] * b1 + u[k, 1, 2] * b2
                    buf[base + 2] = u[k, 2, 0] * b0 + u[k, 2, 1] * b1 + u[k, 2, 2] * b2
                # slot 2 (stride 3) with u[j]
                for hi in range(0, 27, 9):
                    for lo in range(3):
                        b0 = buf[hi + lo]
                        b1 = buf[hi + 3 + lo]
                        b2 = buf[hi + 6 + lo]
                        buf[hi + lo] = u[j, 0, 0] * b0 + u[j, 0, 1] * b1 + u[j, 0, 2] * b2
                        buf[hi + 3 + lo] = u[j, 1, 0] * b0 + u[j, 1, 1] * b1 + u[j, 1, 2] * b2
                        buf[hi + 6 + lo] = u[j, 2, 0] * b0 + u[j, 2, 1] * b1 + u[j, 2, 2] * b2
                # slot 1 (stride 9) with u[i]
                for lo in range(9):
                    b0 = buf[lo]
                    b1 = buf[9 + lo]
                    b2 = buf[18 + lo]
                    buf[lo] = u[i, 0, 0] * b0 + u[i, 0, 1] * b1 + u[i, 0, 2] * b2
                    buf[9 + lo] = u[i, 1, 0] * b0 + u[i, 1, 1] * b1 + u[i, 1, 2] * b2
                    buf[18 + lo] = u[i, 2, 0] * b0 + u[i, 2, 1] * b1 + u[i, 2, 2] * b2
                for c in range(27):
                    v[i, j, k, c] = buf[c]


# ---------------------------------------------------------------------------
# marching steady solver: implicit upwind sweep, one point solve at a time

@njit(cache=True)
def sweep_2(v, mloc, vpair, face1, face2, cdx):
    """In-place steady sweep of the 9-component system.

    v: (N,N,9) output; mloc: (N,3,3) local generator; vpair: (N,N) pair
    potential; face_a: (N,3) entering-photon data on x_a=0; cdx = c/dx.
    Second-order backward differences, first order on the first interior cell.
    """
    n = v.shape[0]
    s1, s2 = _decode2()
    a = np.empty((9, 9), v.dtype)
    b = np.empty(9, v.dtype)
    for i in range(n):
        for j in range(n):
            for c in range(9):
                for d in range(9):
                    a[c, d] = 0.0
                b[c] = 0.0
            for c in range(9):
                if (i == 0 and s1[c] == 0) or (j == 0 and s2[c] == 0):
                    a[c, c] = 1.0
                    if i == 0 and s1[c] == 0:
                        b[c] = face1[j, s2[c]]
                    else:
                        b[c] = face2[i, s1[c]]
                    continue
                diag = a[c, c]
                if s1[c] == 0:
                    if i >= 2:
                        diag += 1.5 * cdx
                        b[c] += cdx * (2.0 * v[i - 1, j, c] - 0.5 * v[i - 2, j, c])
                    else:
                        diag += cdx
                        b[c] += cdx * v[i - 1, j, c]
                if s2[c] == 0:
                    if j >= 2:
                        diag += 1.5 * cdx
                        b[c] += cdx * (2.0 * v[i, j - 1, c] - 0.5 * v[i, j - 2, c])
                    else:
                        diag += cdx
                        b[c] += cdx * v[i, j - 1, c]
                diag -= mloc[i, s1[c], s1[c]] + mloc[j, s2[c], s2[c]]
                if s1[c] == 2 and s2[c] == 2:
                    diag += 1j * vpair[i, j]
                a[c, c] = diag
                for t in range(3):
                    if t != s1[c]:
                        a[c, 3 * t + s2[c]] -= mloc[i, s1[c], t]
                    if t != s2[c]:
                        a[c, 3 * s1[c] + t] -= mloc[j, s2[c], t]
            x = np.linalg.solve(a, b)
            for c in range(9):
                v[i, j, c] = x[c]


@njit(cache=True)
def sweep_3(v, mloc, vpair, face1, face2, face3, cdx):
    # as sweep_2 for the 27-component system; face_a: (N,N,9)
    n = v.shape[0]
    s1, s2, s3 = _decode3()
    a = np.empty((27, 27), v.dtype)
    b = np.empty(27, v.dtype)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for c in range(27):
                    for d in range(27):
                        a[c, d] = 0.0
                    b[c] = 0.0
                for c in range(27):
                    if ((i == 0 and s1[c] == 0) or (j == 0 and s2[c] == 0)
                            or (k == 0 and s3[c] == 0)):
                        a[c, c] = 1.0
                        if i == 0 and s1[c] == 0:
                            b[c] = face1[j, k, 3 * s2[c] + s3[c]]
                        elif j == 0 and s2[c] == 0:
                            b[c] = face2[i, k, 3 * s1[c] + s3[c]]
                        else:
                            b[c] = face3[i, j, 3 * s1[c] + s2[c]]
                        continue
                    diag = a[c, c]
                    if s1[c] == 0:
                        if i >= 2:
                            diag += 1.5 * cdx
                            b[c] += cdx * (2.0 * v[i - 1, j, k, c] - 0.5 * v[i - 2, j, k, c])
                        else:
                            diag += cdx
                            b[c] += cdx * v[i - 1, j, k, c]
                    if s2[c] == 0:
                        if j >= 2:
                            diag += 1.5 * cdx
                            b[c] += cdx * (2.0 * v[i, j - 1, k, c] - 0.5 * v[i, j - 2, k, c])
                        else:
                            diag += cdx
                            b[c] += cdx * v[i, j - 1, k, c]
                    if s3[c] == 0:
                        if k >= 2:
                            diag += 1.5 * cdx
                            b[c] += cdx * (2.0 * v[i, j, k - 1, c] - 0.5 * v[i, j, k - 2, c])
                        else:
                            diag += cdx
                            b[c] += cdx * v[i, j, k - 1, c]
                    diag -= (mloc[i, s1[c], s1[c]] + mloc[j, s2[c], s2[c]]
                             + mloc[k, s3[c], s3[c]])
                    ns = (s1[c] == 2) + (s2[c] == 2) + (s3[c] == 2)
                    if ns == 3:
                        diag += 2j * (vpair[i, j] + vpair[i, k] + vpair[j, k])
                    elif ns == 2:
                        if s1[c] != 2:
                            diag += 1j * vpair[j, k]
                        elif s2[c] != 2:
                            diag += 1j * vpair[i, k]
                        else:
                            diag += 1j * vpair[i, j]
                    a[c, c] = diag
                    for t in range(3):
                        if t != s1[c]:
                            a[c, 9 * t + 3 * s2[c] + s3[c]] -= mloc[i, s1[c], t]
                        if t != s2[c]:
                            a[c, 9 * s1[c] + 3 * t + s3[c]] -= mloc[j, s2[c], t]
                        if t != s3[c]:
                            a[c, 9 * s1[c] + 3 * s2[c] + t] -= mloc[k, s3[c], t]
                x = np.linalg.solve(a, b)
                for c in range(27):
                    v[i, j, k, c] = x[c]


# ---------------------------------------------------------------------------
# conditional-detection marches: one implicit tau level per call, per-point
# matrices pre-inverted by the caller (they do not change between levels)

@njit(cache=True)
def tau_apply_1(v, rhs, ainv, e_in, cdx):
    """One tau level of the conditional one-photon march, batched.

    v, rhs: (B,N,3); ainv: (N,3,3) inverted level matrices; e_in: (B,)
    boundary amplitudes. rhs carries the tau-history terms on P and S; the
    photon row is quasi-static and assembles its upwind terms from the
    current level, so points march in ascending x.
    """
    nb = v.shape[0]
    n = v.shape[1]
    b = np.empty(3, v.dtype)
    for s in range(nb):
        for i in range(n):
            if i == 0:
                b[0] = e_in[s]
            elif i == 1:
                b[0] = cdx * v[s, 0, 0]
            else:
                b[0] = cdx * (2.0 * v[s, i - 1, 0] - 0.5 * v[s, i - 2, 0])
            b[1] = rhs[s, i, 1]
            b[2] = rhs[s, i, 2]
            for c in range(3):
                acc = ainv[i, c, 0] * b[0]
                acc = acc + ainv[i, c, 1] * b[1]
                acc = acc + ainv[i, c, 2] * b[2]
                v[s, i, c] = acc


@njit(cache=True)
def tau_apply_2(v, rhs, ainv, face1, face2, cdx):
    """One tau level of the conditional two-photon march.

    v, rhs: (N,N,9); ainv: (N,N,9,9); face_a: (N,3) entering-photon data at
    this level. Same row layout as sweep_2: boundary rows read the faces,
    photon slots assemble upwind terms from the current level, pure P/S rows
    read their tau history from rhs.
    """
    n = v.shape[0]
    s1, s2 = _decode2()
    b = np.empty(9, v.dtype)
    out = np.empty(9, v.dtype)
    for i in range(n):
        for j in range(n):
            for c in range(9):
                if i == 0 and s1[c] == 0:
                    b[c] = face1[j, s2[c]]
                elif j == 0 and s2[c] == 0:
                    b[c] = face2[i, s1[c]]
                else:
                    acc = rhs[i, j, c]
                    if s1[c] == 0:
                        if i >= 2:
                            acc = acc + cdx * (2.0 * v[i - 1, j, c]
                                               - 0.5 * v[i - 2, j, c])
                        else:
                            acc = acc + cdx * v[i - 1, j, c]
                    if s2[c] == 0:
                        if j >= 2:
                            acc = acc + cdx * (2.0 * v[i, j - 1, c]
                                               - 0.5 * v[i, j - 2, c])
                        else:
                            acc = acc + cdx * v[i, j - 1, c]
                    b[c] = acc
            for c in range(9):
                acc = ainv[i, j, c, 0] * b[0]
                for d in range(1, 9):
                    acc = acc + ainv[i, j, c, d] * b[d]
                out[c] = acc
            for c in range(9):
                v[i, j, c] = out[c]
