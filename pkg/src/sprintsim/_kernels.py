"""Compiled inner loops for the trajectory and master-equation integrators.

Operators arrive as CSR triplets on a shared sparsity pattern; the generator
is ``dA + eps(t) * dE`` plus ``c2(t) * identity``.  The pulse is described by a
float array ``(shape, amp, inv4s2, t_lo, t_hi)`` with shape 0 = gaussian,
1 = square.
"""

import numpy as np
from numba import njit

N_SUB = 100


@njit(cache=True, nogil=True)
def envelope(t, pulse):
    if t < pulse[3] or t >= pulse[4]:
        return 0.0
    if pulse[0] == 0.0:
        return pulse[1] * np.exp(-t * t * pulse[2])
    return pulse[1]


@njit(cache=True, nogil=True)
def _apply(indptr, indices, dA, dE, eps, c2, x, out):
    for i in range(x.size):
        acc = c2 * x[i]
        for jj in range(indptr[i], indptr[i + 1]):
            acc += (dA[jj] + eps * dE[jj]) * x[indices[jj]]
        out[i] = acc


@njit(cache=True, nogil=True)
def _rk4(x, t, h, indptr, indices, dA, dE, pulse, psi_mode, k1, k2, k3, k4, tmp, out):
    e1 = envelope(t, pulse)
    e2 = envelope(t + 0.5 * h, pulse)
    e3 = envelope(t + h, pulse)
    c1 = -0.5 * e1 * e1 if psi_mode else 0.0
    c2 = -0.5 * e2 * e2 if psi_mode else 0.0
    c3 = -0.5 * e3 * e3 if psi_mode else 0.0
    _apply(indptr, indices, dA, dE, e1, c1, x, k1)
    for i in range(x.size):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _apply(indptr, indices, dA, dE, e2, c2, tmp, k2)
    for i in range(x.size):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _apply(indptr, indices, dA, dE, e2, c2, tmp, k3)
    for i in range(x.size):
        tmp[i] = x[i] + h * k3[i]
    _apply(indptr, indices, dA, dE, e3, c3, tmp, k4)
    for i in range(x.size):
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, nogil=True)
def _norm2(x):
    s = 0.0
    for i in range(x.size):
        s += x[i].real * x[i].real + x[i].imag * x[i].imag
    return s


@njit(cache=True, nogil=True)
def _jump(psi, eps, j_indptr, j_indices, j_data, n_ops, u, weights, out):
    """Pick a jump operator with probability ~ ||L psi||^2 and apply it.

    Block 0 is the transmitted channel, ``eps * 1 + (stored block)``.
    Returns the operator index.
    """
    D = psi.size
    total = 0.0
    for c in range(n_ops):
        s = 0.0
        for i in range(D):
            row = c * D + i
            acc = 0j
            for jj in range(j_indptr[row], j_indptr[row + 1]):
                acc += j_data[jj] * psi[j_indices[jj]]
            if c == 0:
                acc += eps * psi[i]
            s += acc.real * acc.real + acc.imag * acc.imag
        weights[c] = s
        total += s
    target = u * total
    pick = n_ops - 1
    cum = 0.0
    for c in range(n_ops):
        cum += weights[c]
        if target < cum and weights[c] > 0.0:
            pick = c
            break
    while weights[pick] <= 0.0 and pick > 0:
        pick -= 1
    for i in range(D):
        row = pick * D + i
        acc = 0j
        for jj in range(j_indptr[row], j_indptr[row + 1]):
            acc += j_data[jj] * psi[j_indices[jj]]
        if pick == 0:
            acc += eps * psi[i]
        out[i] = acc
    nrm = np.sqrt(_norm2(out))
    for i in range(D):
        out[i] /= nrm
    return pick


@njit(cache=True, nogil=True)
def run_chunk(lo, hi, k0, k1, t0, dt, props, use_props,
              indptr, indices, d0, dg, dE, gvals, pulse,
              j_indptr, j_indices, j_data, n_ops,
              uniforms, psi_all, thresh, u_pos, n_jumps, status,
              out_times, out_ops):
    """Advance trajectories ``lo..hi-1`` over coarse steps ``k0..k1-1``.

    ``props[k - k0]`` is the step propagator when ``use_props``; otherwise one
    RK4 step of size ``dt`` is taken.  Jumps are located by re-integrating the
    step with ``N_SUB`` RK4 sub-steps.  ``status`` is set to 1 when a
    trajectory runs out of pre-drawn uniforms or jump slots.
    """
    D = psi_all.shape[1]
    max_j = out_times.shape[1]
    n_u = uniforms.shape[1]
    dA = np.empty(d0.size, dtype=np.complex128)
    k1v = np.empty(D, dtype=np.complex128)
    k2v = np.empty(D, dtype=np.complex128)
    k3v = np.empty(D, dtype=np.complex128)
    k4v = np.empty(D, dtype=np.complex128)
    tmp = np.empty(D, dtype=np.complex128)
    psi = np.empty(D, dtype=np.complex128)
    cand = np.empty(D, dtype=np.complex128)
    weights = np.empty(n_ops)
    h = dt / N_SUB
    for m in range(lo, hi):
        if status[m] != 0:
            continue
        for jj in range(d0.size):
            dA[jj] = d0[jj] + gvals[m] * dg[jj]
        for i in range(D):
            psi[i] = psi_all[m, i]
        r = thresh[m]
        for k in range(k0, k1):
            t = t0 + k * dt
            if use_props:
                cand[:] = np.dot(props[k - k0], psi)
            else:
                _rk4(psi, t, dt, indptr, indices, dA, dE, pulse, True, k1v, k2v, k3v, k4v, tmp, cand)
            if _norm2(cand) > r:
                psi[:] = cand
                continue
            tt = t
            for s in range(N_SUB):
                prev = _norm2(psi)
                _rk4(psi, tt, h, indptr, indices, dA, dE, pulse, True, k1v, k2v, k3v, k4v, tmp, cand)
                cur = _norm2(cand)
                if cur <= r:
                    frac = (prev - r) / (prev - cur) if prev > cur else 1.0
                    tj = tt + frac * h
                    if n_jumps[m] >= max_j or u_pos[m] + 2 > n_u:
                        status[m] = 1
                        break
                    eps = envelope(tt + h, pulse)
                    op = _jump(cand, eps, j_indptr, j_indices, j_data, n_ops,
                               uniforms[m, u_pos[m]], weights, psi)
                    out_times[m, n_jumps[m]] = tj
                    out_ops[m, n_jumps[m]] = op
                    n_jumps[m] += 1
                    r = uniforms[m, u_pos[m] + 1]
                    u_pos[m] += 2
                else:
                    psi[:] = cand
                tt += h
            if status[m] != 0:
                break
        thresh[m] = r
        for i in range(D):
            psi_all[m, i] = psi[i]


@njit(cache=True, nogil=True)
def run_master(rho, t0, dt, nsteps, indptr, indices, s0, s1, pulse, feats, trace_idx, out_feats):
    """RK4 integration of vec(rho); records ``Re(feats @ rho)`` on every grid point.

    Returns the largest trace deviation from the initial trace.
    """
    n = rho.size
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    nxt = np.empty(n, dtype=np.complex128)
    tr0 = 0.0
    for i in trace_idx:
        tr0 += rho[i].real
    drift = 0.0
    nf = feats.shape[0]
    for f in range(nf):
        acc = 0j
        for i in range(n):
            acc += feats[f, i] * rho[i]
        out_feats[0, f] = acc.real
    for k in range(nsteps):
        t = t0 + k * dt
        _rk4(rho, t, dt, indptr, indices, s0, s1, pulse, False, k1, k2, k3, k4, tmp, nxt)
        rho[:] = nxt
        for f in range(nf):
            acc = 0j
            for i in range(n):
                acc += feats[f, i] * rho[i]
            out_feats[k + 1, f] = acc.real
        tr = 0.0
        for i in trace_idx:
            tr += rho[i].real
        if abs(tr - tr0) > drift:
            drift = abs(tr - tr0)
    return drift
