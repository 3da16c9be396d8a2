# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: adaptive Dormand-Prince for constant linear systems
and the on-the-fly Lindblad generator with its RK4 stepper.

Signatures and semantics match :mod:`optocool._fallback` exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, fmax, fmin, pow

cnp.import_array()

# Dormand-Prince 5(4) tableau
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40


cdef inline void _affine(double[:, ::1] A, double[::1] b, double[::1] y, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, n = y.shape[0]
    cdef double s
    for i in range(n):
        s = b[i]
        for j in range(n):
            s += A[i, j] * y[j]
        out[i] = s


def dopri_linear(A, b, y0, double t0, t_out, double rtol, double atol,
                 double h_max, double h_min):
    """Integrate y' = A y + b, landing exactly on every time in ``t_out``.

    Returns ``(Y, status, n_accepted, n_rejected)``; ``status`` is 0 on
    success and 1 if the step size fell below ``h_min``.
    """
    cdef double[:, ::1] Am = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[::1] bm = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[::1] times = np.ascontiguousarray(t_out, dtype=np.float64)
    cdef Py_ssize_t n = Am.shape[0], n_out = times.shape[0]
    Y_arr = np.empty((n_out, n), dtype=np.float64)
    cdef double[:, ::1] Y = Y_arr
    cdef double[::1] y = np.array(y0, dtype=np.float64)
    cdef double[::1] ynew = np.empty(n)
    cdef double[::1] tmp = np.empty(n)
    cdef double[:, ::1] k = np.empty((7, n))
    cdef Py_ssize_t i, idx = 0
    cdef double t = t0, h = h_max, h_try, target, err, sc, e, factor
    cdef bint clipped
    cdef long n_acc = 0, n_rej = 0
    cdef int status = 0

    while idx < n_out and times[idx] <= t:
        Y[idx, :] = y
        idx += 1
    _affine(Am, bm, y, k[0])
    with nogil:
        while idx < n_out:
            target = times[idx]
            h_try = fmin(h, h_max)
            clipped = False
            if t + h_try >= target:
                h_try = target - t
                clipped = True
            for i in range(n):
                tmp[i] = y[i] + h_try * A21 * k[0, i]
            _affine(Am, bm, tmp, k[1])
            for i in range(n):
                tmp[i] = y[i] + h_try * (A31 * k[0, i] + A32 * k[1, i])
            _affine(Am, bm, tmp, k[2])
            for i in range(n):
                tmp[i] = y[i] + h_try * (A41 * k[0, i] + A42 * k[1, i] + A43 * k[2, i])
            _affine(Am, bm, tmp, k[3])
            for i in range(n):
                tmp[i] = y[i] + h_try * (A51 * k[0, i] + A52 * k[1, i] + A53 * k[2, i] + A54 * k[3, i])
            _affine(Am, bm, tmp, k[4])
            for i in range(n):
                tmp[i] = y[i] + h_try * (A61 * k[0, i] + A62 * k[1, i] + A63 * k[2, i]
                                         + A64 * k[3, i] + A65 * k[4, i])
            _affine(Am, bm, tmp, k[5])
            for i in range(n):
                ynew[i] = y[i] + h_try * (B1 * k[0, i] + B3 * k[2, i] + B4 * k[3, i]
                                          + B5 * k[4, i] + B6 * k[5, i])
            _affine(Am, bm, ynew, k[6])
            err = 0.0
            for i in range(n):
                e = h_try * (E1 * k[0, i] + E3 * k[2, i] + E4 * k[3, i] + E5 * k[4, i]
                             + E6 * k[5, i] + E7 * k[6, i])
                sc = atol + rtol * fmax(fabs(y[i]), fabs(ynew[i]))
                err += (e / sc) * (e / sc)
            err = sqrt(err / n)
            if err <= 1.0:
                n_acc += 1
                if clipped:
                    t = target
                else:
                    t += h_try
                for i in range(n):
                    y[i] = ynew[i]
                    k[0, i] = k[6, i]
                if err == 0.0:
                    factor = 5.0
                else:
                    factor = fmin(5.0, fmax(0.2, 0.9 * pow(err, -0.2)))
                if clipped:
                    h = fmax(h, h_try * factor)
                else:
                    h = h_try * factor
                while idx < n_out and times[idx] <= t:
                    for i in range(n):
                        Y[idx, i] = y[i]
                    idx += 1
            else:
                n_rej += 1
                h = h_try * fmax(0.2, 0.9 * pow(err, -0.2))
                if h < h_min:
                    status = 1
                    break
    return Y_arr, status, n_acc, n_rej


cdef class _Layout:
    """Zero-padded (photon, phonon) index layout plus per-index coefficient tables.

    Padding every mode with one empty level on each side turns all neighbour
    accesses into constant strides, so the inner loop has no branches.
    """
    cdef public int da, db, pa, pb, P
    cdef double[::1] energy, damp, sa0, sa1, sb0, sb1
    cdef double[::1] q00, q01, q10, q11  # products sa * sb, hoisted out of the stencil

    def __init__(self, int da, int db, double delta, double kappa, double gamma, double n_th):
        cdef int n, m, p
        self.da, self.db = da, db
        self.pa, self.pb = da + 2, db + 2
        self.P = self.pa * self.pb
        self.energy = np.zeros(self.P)
        self.damp = np.zeros(self.P)
        self.sa0 = np.zeros(self.P)  # sqrt(n)
        self.sa1 = np.zeros(self.P)  # sqrt(n + 1)
        self.sb0 = np.zeros(self.P)  # sqrt(m)
        self.sb1 = np.zeros(self.P)  # sqrt(m + 1)
        for n in range(da):
            for m in range(db):
                p = (n + 1) * self.pb + m + 1
                self.energy[p] = -delta * n + m
                self.damp[p] = 0.5 * (kappa * n + gamma * (n_th + 1.0) * m
                                      + gamma * n_th * ((m + 1.0) if m < db - 1 else 0.0))
                self.sa0[p] = sqrt(n)
                self.sa1[p] = sqrt(n + 1.0)
                self.sb0[p] = sqrt(m)
                self.sb1[p] = sqrt(m + 1.0)
        self.q00 = np.multiply(self.sa0, self.sb0)
        self.q01 = np.multiply(self.sa0, self.sb1)
        self.q10 = np.multiply(self.sa1, self.sb0)
        self.q11 = np.multiply(self.sa1, self.sb1)

    def pad(self, rho):
        out = np.zeros((self.P, self.P), dtype=np.complex128)
        R = np.asarray(rho).reshape(self.da, self.db, self.da, self.db)
        out.reshape(self.pa, self.pb, self.pa, self.pb)[1:-1, 1:-1, 1:-1, 1:-1] = R
        return out

    def unpad(self, padded, out=None):
        N = self.da * self.db
        view = padded.reshape(self.pa, self.pb, self.pa, self.pb)[1:-1, 1:-1, 1:-1, 1:-1]
        if out is None:
            return np.ascontiguousarray(view).reshape(N, N)
        out.reshape(self.da, self.db, self.da, self.db)[...] = view
        return out


cdef void _lindblad(_Layout L, double[:, ::1] R, double[:, ::1] out,
                    double complex G, double kappa, double gamma, double n_th) noexcept nogil:
    # R and out are (P, 2P) real views of complex matrices: column 2j is Re, 2j+1 is Im.
    cdef int n, m, n2
    cdef Py_ssize_t i, j, j0, j1, c, pb = L.pb, s = 2 * L.pb
    cdef double gr = G.real, gi = G.imag
    cdef double l1, l2, l3, l4, w, d, x, y, ar, ai, sr, si, tr, ti, cf
    cdef double e_i, dmp_i, ka_i, gd_i, gu_i
    cdef double g_down = gamma * (n_th + 1.0), g_up = gamma * n_th
    cdef double[::1] energy = L.energy, damp = L.damp
    cdef double[::1] sa0 = L.sa0, sa1 = L.sa1, sb0 = L.sb0, sb1 = L.sb1
    cdef double[::1] q00 = L.q00, q01 = L.q01, q10 = L.q10, q11 = L.q11
    cdef double *r0
    cdef double *r1
    cdef double *r2
    cdef double *r3
    cdef double *r4
    cdef double *rk
    cdef double *rd
    cdef double *ru
    cdef double *o
    for n in range(L.da):
        for m in range(L.db):
            i = (n + 1) * pb + m + 1
            e_i = energy[i]
            dmp_i = damp[i]
            # -i H from the left: G a^dag b, G a^dag b^dag, G* a b, G* a b^dag
            l1 = q01[i]
            l2 = q00[i]
            l3 = q11[i]
            l4 = q10[i]
            ka_i = kappa * sa1[i]
            gd_i = g_down * sb1[i]
            gu_i = g_up * sb0[i]
            r0 = &R[i, 0]
            r1 = &R[i - pb + 1, 0]
            r2 = &R[i - pb - 1, 0]
            r3 = &R[i + pb + 1, 0]
            r4 = &R[i + pb - 1, 0]
            rk = &R[i + pb, 0]
            rd = &R[i + 1, 0]
            ru = &R[i - 1, 0]
            o = &out[i, 0]
            for n2 in range(L.da):
                j0 = (n2 + 1) * pb + 1
                j1 = j0 + L.db
                for j in range(j0, j1):
                    c = 2 * j
                    w = e_i - energy[j]
                    d = dmp_i + damp[j]
                    x = r0[c]
                    y = r0[c + 1]
                    ar = -d * x + w * y
                    ai = -w * x - d * y
                    # left sums weighted by G and by G*
                    sr = l1 * r1[c] + l2 * r2[c]
                    si = l1 * r1[c + 1] + l2 * r2[c + 1]
                    tr = l3 * r3[c] + l4 * r4[c]
                    ti = l3 * r3[c + 1] + l4 * r4[c + 1]
                    # right sums: rho H, again split by G and G*
                    sr = sr - q10[j] * r0[c + s - 2] - q11[j] * r0[c + s + 2]
                    si = si - q10[j] * r0[c + s - 1] - q11[j] * r0[c + s + 3]
                    tr = tr - q00[j] * r0[c - s - 2] - q01[j] * r0[c - s + 2]
                    ti = ti - q00[j] * r0[c - s - 1] - q01[j] * r0[c - s + 3]
                    # -i G (sr + i si) - i G* (tr + i ti)
                    ar = ar + gr * si + gi * sr + gr * ti - gi * tr
                    ai = ai - gr * sr + gi * si - gr * tr - gi * ti
                    cf = ka_i * sa1[j]
                    ar = ar + cf * rk[c + s]
                    ai = ai + cf * rk[c + s + 1]
                    cf = gd_i * sb1[j]
                    ar = ar + cf * rd[c + 2]
                    ai = ai + cf * rd[c + 3]
                    cf = gu_i * sb0[j]
                    ar = ar + cf * ru[c - 2]
                    ai = ai + cf * ru[c - 1]
                    o[c] = ar
                    o[c + 1] = ai


def lindblad_rhs(rho, int dim_a, int dim_b, double delta, double complex G,
                 double kappa, double gamma, double n_th):
    """Apply the linearized Lindblad generator to ``rho`` (photon (x) phonon ordering)."""
    cdef _Layout L = _Layout(dim_a, dim_b, delta, kappa, gamma, n_th)
    R = L.pad(rho)
    out = np.zeros_like(R)
    _lindblad(L, R.view(np.float64), out.view(np.float64), G, kappa, gamma, n_th)
    return L.unpad(out)


def lindblad_rk4(cnp.ndarray rho, int dim_a, int dim_b, double delta, double complex G,
                 double kappa, double gamma, double n_th, double dt, int n_steps):
    """Advance ``rho`` in place by ``n_steps`` classical RK4 steps; returns the trace after each step."""
    cdef _Layout L = _Layout(dim_a, dim_b, delta, kappa, gamma, n_th)
    padded = L.pad(rho)
    cdef double[:, ::1] R = padded.view(np.float64)
    cdef Py_ssize_t P = L.P, i, j, s
    cdef double[:, ::1] k = np.zeros((P, 2 * P))
    cdef double[:, ::1] acc = np.zeros((P, 2 * P))
    cdef double[:, ::1] tmp = np.zeros((P, 2 * P))
    traces = np.empty(n_steps, dtype=np.float64)
    cdef double[::1] tr = traces
    cdef double half = 0.5 * dt, sixth = dt / 6.0, t_sum
    with nogil:
        for s in range(n_steps):
            _lindblad(L, R, k, G, kappa, gamma, n_th)
            for i in range(P):
                for j in range(2 * P):
                    acc[i, j] = k[i, j]
                    tmp[i, j] = R[i, j] + half * k[i, j]
            _lindblad(L, tmp, k, G, kappa, gamma, n_th)
            for i in range(P):
                for j in range(2 * P):
                    acc[i, j] = acc[i, j] + 2.0 * k[i, j]
                    tmp[i, j] = R[i, j] + half * k[i, j]
            _lindblad(L, tmp, k, G, kappa, gamma, n_th)
            for i in range(P):
                for j in range(2 * P):
                    acc[i, j] = acc[i, j] + 2.0 * k[i, j]
                    tmp[i, j] = R[i, j] + dt * k[i, j]
            _lindblad(L, tmp, k, G, kappa, gamma, n_th)
            t_sum = 0.0
            for i in range(P):
                for j in range(2 * P):
                    R[i, j] = R[i, j] + sixth * (acc[i, j] + k[i, j])
                t_sum += R[i, 2 * i]
            tr[s] = t_sum
    L.unpad(padded, out=rho)
    return traces
