"""NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable; every function mirrors the
signature and numerical semantics of its counterpart in ``_kernels.pyx``.
"""
import numpy as np

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


def dopri_linear(A, b, y0, t0, t_out, rtol, atol, h_max, h_min):
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    times = np.ascontiguousarray(t_out, dtype=float)
    n, n_out = A.shape[0], times.shape[0]
    Y = np.empty((n_out, n))
    y = np.array(y0, dtype=float)
    k = np.empty((7, n))
    t, h = float(t0), float(h_max)
    idx = n_acc = n_rej = 0
    status = 0

    while idx < n_out and times[idx] <= t:
        Y[idx] = y
        idx += 1
    k[0] = A @ y + b
    while idx < n_out:
        target = times[idx]
        h_try = min(h, h_max)
        clipped = False
        if t + h_try >= target:
            h_try = target - t
            clipped = True
        for s in range(1, 6):
            tmp = y.copy()
            for c, a in enumerate(_A[s]):
                tmp += h_try * a * k[c]
            k[s] = A @ tmp + b
        ynew = y + h_try * (_B @ k[:6])
        k[6] = A @ ynew + b
        e = h_try * (_E @ k)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = float(np.sqrt(np.mean((e / sc) ** 2)))
        if err <= 1.0:
            n_acc += 1
            t = target if clipped else t + h_try
            y = ynew
            k[0] = k[6]
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = max(h, h_try * factor) if clipped else h_try * factor
            while idx < n_out and times[idx] <= t:
                Y[idx] = y
                idx += 1
        else:
            n_rej += 1
            h = h_try * max(0.2, 0.9 * err ** -0.2)
            if h < h_min:
                status = 1
                break
    return Y, status, n_acc, n_rej


def lindblad_rhs(rho, dim_a, dim_b, delta, G, kappa, gamma, n_th):
    R = np.ascontiguousarray(rho, dtype=complex).reshape(dim_a, dim_b, dim_a, dim_b)
    G = complex(G)
    Gc = G.conjugate()
    sa = np.sqrt(np.arange(dim_a + 1, dtype=float))
    sb = np.sqrt(np.arange(dim_b + 1, dtype=float))
    n = np.arange(dim_a, dtype=float)
    m = np.arange(dim_b, dtype=float)
    up = m + 1.0
    up[-1] = 0.0  # truncated b b^dagger

    energy = -delta * n[:, None] + m[None, :]
    damp = 0.5 * (kappa * n[:, None] + gamma * (n_th + 1.0) * m[None, :] + gamma * n_th * up[None, :])
    Ei = energy[:, :, None, None]
    Ej = energy[None, None, :, :]

    hl = np.zeros_like(R)
    # G a^dag b, G a^dag b^dag, G* a b, G* a b^dag acting from the left
    hl[1:, :-1] += G * (sa[1:dim_a, None] * sb[None, 1:dim_b])[:, :, None, None] * R[:-1, 1:]
    hl[1:, 1:] += G * (sa[1:dim_a, None] * sb[None, 1:dim_b])[:, :, None, None] * R[:-1, :-1]
    hl[:-1, :-1] += Gc * (sa[1:dim_a, None] * sb[None, 1:dim_b])[:, :, None, None] * R[1:, 1:]
    hl[:-1, 1:] += Gc * (sa[1:dim_a, None] * sb[None, 1:dim_b])[:, :, None, None] * R[1:, :-1]

    hr = np.zeros_like(R)
    hr[:, :, :-1, 1:] += G * (sa[None, None, 1:dim_a, None] * sb[None, None, None, 1:dim_b]) * R[:, :, 1:, :-1]
    hr[:, :, :-1, :-1] += G * (sa[None, None, 1:dim_a, None] * sb[None, None, None, 1:dim_b]) * R[:, :, 1:, 1:]
    hr[:, :, 1:, 1:] += Gc * (sa[None, None, 1:dim_a, None] * sb[None, None, None, 1:dim_b]) * R[:, :, :-1, :-1]
    hr[:, :, 1:, :-1] += Gc * (sa[None, None, 1:dim_a, None] * sb[None, None, None, 1:dim_b]) * R[:, :, :-1, 1:]

    out = -1j * ((Ei - Ej) * R + hl - hr)
    out -= (damp[:, :, None, None] + damp[None, None, :, :]) * R
    ka = sa[1:dim_a]
    kb = sb[1:dim_b]
    out[:-1, :, :-1, :] += kappa * (ka[:, None, None, None] * ka[None, None, :, None]) * R[1:, :, 1:, :]
    out[:, :-1, :, :-1] += gamma * (n_th + 1.0) * (kb[None, :, None, None] * kb[None, None, None, :]) * R[:, 1:, :, 1:]
    out[:, 1:, :, 1:] += gamma * n_th * (kb[None, :, None, None] * kb[None, None, None, :]) * R[:, :-1, :, :-1]
    N = dim_a * dim_b
    return out.reshape(N, N)


def lindblad_rk4(rho, dim_a, dim_b, delta, G, kappa, gamma, n_th, dt, n_steps):
    traces = np.empty(n_steps)
    args = (dim_a, dim_b, delta, G, kappa, gamma, n_th)
    for s in range(n_steps):
        k1 = lindblad_rhs(rho, *args)
        k2 = lindblad_rhs(rho + 0.5 * dt * k1, *args)
        k3 = lindblad_rhs(rho + 0.5 * dt * k2, *args)
        k4 = lindblad_rhs(rho + dt * k3, *args)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        traces[s] = np.trace(rho).real
    return traces
