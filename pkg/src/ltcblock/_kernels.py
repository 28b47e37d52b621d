"""Compiled inner loops for the LTC cell.

Everything here works on materialized parameters (positive tau and weight)
and plain arrays so numba can compile it.  Neuron ids follow the wiring
numbering; ``n_sensory`` is subtracted to get a state index.  Synapses whose
source is sensory read the affine-mapped input feature, the rest read the
presynaptic state from before the current fused step.
"""

import math

import numpy as np
from numba import njit

CLAMP = 1e-12


@njit(cache=True, nogil=True)
def sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def bce(p, y):
    pc = min(max(p, CLAMP), 1.0 - CLAMP)
    return -(y * math.log(pc) + (1.0 - y) * math.log(1.0 - pc))


@njit(cache=True, nogil=True)
def motor_logit(x, out_scale, out_bias, motor0):
    logit = out_bias
    for m in range(out_scale.shape[0]):
        logit += out_scale[m] * x[motor0 + m]
    return logit


@njit(cache=True, nogil=True)
def output_probs(final, out_scale, out_bias, motor0):
    out = np.empty(final.shape[0])
    for b in range(final.shape[0]):
        out[b] = sigmoid(motor_logit(final[b], out_scale, out_bias, motor0))
    return out


@njit(cache=True, nogil=True)
def _map_inputs(row, in_scale, in_bias, mapped):
    for f in range(row.shape[0]):
        mapped[f] = in_scale[f] * row[f] + in_bias[f]


@njit(cache=True, nogil=True)
def _sensory_acts(src, n_sensory, gamma, mu, mapped, acts):
    # sensory activations depend only on the input row, not the state
    for s in range(src.shape[0]):
        if src[s] < n_sensory:
            acts[s] = sigmoid(gamma[s] * mapped[src[s]] + mu[s])


@njit(cache=True, nogil=True)
def _substep(x, out, src, dst, n_sensory, tau, w, gamma, mu, rev, acts, dt, den):
    n = x.shape[0]
    for i in range(n):
        out[i] = x[i]
        den[i] = 1.0 + dt / tau[i]
    for s in range(src.shape[0]):
        j = src[s]
        if j >= n_sensory:
            acts[s] = sigmoid(gamma[s] * x[j - n_sensory] + mu[s])
        g = w[s] * acts[s]
        i = dst[s] - n_sensory
        out[i] += dt * g * rev[s]
        den[i] += dt * g
    for i in range(n):
        out[i] = out[i] / den[i]


@njit(cache=True, nogil=True)
def fused_step_kernel(x, row, src, dst, n_sensory, tau, w, gamma, mu, rev,
                      in_scale, in_bias, dt):
    mapped = np.empty(row.shape[0])
    acts = np.empty(src.shape[0])
    den = np.empty(x.shape[0])
    out = np.empty(x.shape[0])
    _map_inputs(row, in_scale, in_bias, mapped)
    _sensory_acts(src, n_sensory, gamma, mu, mapped, acts)
    _substep(x, out, src, dst, n_sensory, tau, w, gamma, mu, rev, acts, dt, den)
    return out


@njit(cache=True, nogil=True)
def _all_finite(v):
    for k in range(v.shape[0]):
        if not np.isfinite(v[k]):
            return False
    return True


@njit(cache=True, nogil=True)
def forward_kernel(features, x0, src, dst, n_sensory, tau, w, gamma, mu, rev,
                   in_scale, in_bias, unfolds, record):
    """Run every window in ``features`` (B, T, F) through the cell.

    Returns the final states (B, N), the per-row trajectory (B, T, N) when
    ``record`` is set (else an empty array) and, per window, the first
    fused-step index whose state was non-finite (-1 if none).
    """
    B, T, F = features.shape
    N = x0.shape[1]
    S = src.shape[0]
    dt = 1.0 / unfolds
    final = np.empty((B, N))
    traj = np.empty((B if record else 0, T, N))
    bad = np.full(B, -1, dtype=np.int64)
    mapped = np.empty(F)
    acts = np.empty(S)
    den = np.empty(N)
    x = np.empty(N)
    nxt = np.empty(N)
    for b in range(B):
        x[:] = x0[b]
        step = 0
        for t in range(T):
            _map_inputs(features[b, t], in_scale, in_bias, mapped)
            _sensory_acts(src, n_sensory, gamma, mu, mapped, acts)
            for _ in range(unfolds):
                _substep(x, nxt, src, dst, n_sensory, tau, w, gamma, mu, rev, acts, dt, den)
                x[:] = nxt
                if bad[b] < 0 and not _all_finite(x):
                    bad[b] = step
                step += 1
            if record:
                traj[b, t] = x
        final[b] = x
    return final, traj, bad


@njit(cache=True, nogil=True)
def loss_grad_kernel(features, labels, src, dst, n_sensory, tau, w, gamma, mu, rev,
                     in_scale, in_bias, out_scale, out_bias, motor0, unfolds):
    """Per-window loss, probability and gradient w.r.t. materialized params.

    Gradient columns are laid out as tau (N), weight (S), gamma (S), mu (S),
    input_scale (F), input_bias (F), output_scale (M), output_bias (1).
    """
    B, T, F = features.shape
    N = tau.shape[0]
    S = src.shape[0]
    M = out_scale.shape[0]
    dt = 1.0 / unfolds
    steps = T * unfolds
    P = N + 3 * S + 2 * F + M + 1
    o_w = N
    o_g = N + S
    o_mu = N + 2 * S
    o_is = N + 3 * S
    o_ib = o_is + F
    o_os = o_ib + F
    o_ob = o_os + M

    loss = np.empty(B)
    prob = np.empty(B)
    grads = np.zeros((B, P))
    bad = np.full(B, -1, dtype=np.int64)

    xs = np.empty((steps + 1, N))
    mapped_rows = np.empty((T, F))
    acts = np.empty(S)
    den = np.empty(N)
    lam = np.empty(N)
    dx = np.empty(N)
    dmapped = np.empty(F)

    for b in range(B):
        # forward, keeping the state before every fused step
        for i in range(N):
            xs[0, i] = 0.0
        step = 0
        for t in range(T):
            _map_inputs(features[b, t], in_scale, in_bias, mapped_rows[t])
            _sensory_acts(src, n_sensory, gamma, mu, mapped_rows[t], acts)
            for _ in range(unfolds):
                _substep(xs[step], xs[step + 1], src, dst, n_sensory, tau, w, gamma,
                         mu, rev, acts, dt, den)
                if bad[b] < 0 and not _all_finite(xs[step + 1]):
                    bad[b] = step
                step += 1

        logit = motor_logit(xs[steps], out_scale, out_bias, motor0)
        p = sigmoid(logit)
        y = labels[b]
        pc = min(max(p, CLAMP), 1.0 - CLAMP)
        loss[b] = bce(p, y)
        prob[b] = p
        if not np.isfinite(logit):
            if bad[b] < 0:
                bad[b] = steps
            continue
        dlogit = p - y if pc == p else 0.0

        g = grads[b]
        g[o_ob] = dlogit
        for i in range(N):
            lam[i] = 0.0
        for m in range(M):
            g[o_os + m] = dlogit * xs[steps, motor0 + m]
            lam[motor0 + m] = dlogit * out_scale[m]

        # reverse sweep over rows, then over the fused steps inside a row
        step = steps
        for t in range(T - 1, -1, -1):
            mapped = mapped_rows[t]
            for f in range(F):
                dmapped[f] = 0.0
            for _ in range(unfolds):
                step -= 1
                x = xs[step]
                xn = xs[step + 1]
                for i in range(N):
                    den[i] = 1.0 + dt / tau[i]
                for s in range(S):
                    j = src[s]
                    pre = mapped[j] if j < n_sensory else x[j - n_sensory]
                    acts[s] = sigmoid(gamma[s] * pre + mu[s])
                    den[dst[s] - n_sensory] += dt * (w[s] * acts[s])
                for i in range(N):
                    dnum = lam[i] / den[i]
                    dden = -lam[i] * xn[i] / den[i]
                    dx[i] = dnum
                    g[i] += -dden * dt / (tau[i] * tau[i])
                    # stash for the synapse loop
                    lam[i] = dnum
                    den[i] = dden
                for s in range(S):
                    i = dst[s] - n_sensory
                    j = src[s]
                    pre = mapped[j] if j < n_sensory else x[j - n_sensory]
                    a = acts[s]
                    dg = dt * (rev[s] * lam[i] + den[i])
                    g[o_w + s] += dg * a
                    dz = dg * w[s] * a * (1.0 - a)
                    g[o_g + s] += dz * pre
                    g[o_mu + s] += dz
                    dpre = dz * gamma[s]
                    if j < n_sensory:
                        dmapped[j] += dpre
                    else:
                        dx[j - n_sensory] += dpre
                for i in range(N):
                    lam[i] = dx[i]
            row = features[b, t]
            for f in range(F):
                g[o_is + f] += dmapped[f] * row[f]
                g[o_ib + f] += dmapped[f]
    return loss, prob, grads, bad
