"""Pure numpy implementations of the hot kernels.

These mirror ``mical._kernels`` (Cython) argument for argument and are used
when the extension is not built or ``MICAL_BACKEND=python`` is set.
"""

import math

import numpy as np

__all__ = ["chain_forward", "chain_backward", "critic_train", "critic_forward"]


def _lse2(a, b):
    m = a if a > b else b
    if m == -math.inf:
        return -math.inf
    return m + math.log1p(math.exp(-abs(a - b)))


def chain_forward(log_g, log_trans, log_init):
    """Normalized log-domain forward messages on a binary chain.

    log_g: (n, 2) log node potentials; log_trans: (2, 2) indexed
    ``[prev, next]``; log_init: (2,). Returns ``(log_fwd, log_z)`` where each
    row of ``log_fwd`` log-sums to zero and ``log_z[k]`` is the constant
    removed at step ``k``.
    """
    n = log_g.shape[0]
    log_fwd = np.empty((n, 2))
    log_z = np.empty(n)
    a0 = log_init[0] + log_g[0, 0]
    a1 = log_init[1] + log_g[0, 1]
    z = _lse2(a0, a1)
    log_fwd[0] = a0 - z, a1 - z
    log_z[0] = z
    for k in range(1, n):
        p0, p1 = log_fwd[k - 1]
        a0 = log_g[k, 0] + _lse2(p0 + log_trans[0, 0], p1 + log_trans[1, 0])
        a1 = log_g[k, 1] + _lse2(p0 + log_trans[0, 1], p1 + log_trans[1, 1])
        z = _lse2(a0, a1)
        log_fwd[k] = a0 - z, a1 - z
        log_z[k] = z
    return log_fwd, log_z


def chain_backward(log_g, log_trans):
    """Normalized log-domain backward messages; the last one is uniform."""
    n = log_g.shape[0]
    log_bwd = np.empty((n, 2))
    log_z = np.empty(n)
    log_bwd[n - 1] = -np.log(2.0)
    log_z[n - 1] = np.log(2.0)
    for k in range(n - 2, -1, -1):
        q0 = log_g[k + 1, 0] + log_bwd[k + 1, 0]
        q1 = log_g[k + 1, 1] + log_bwd[k + 1, 1]
        b0 = _lse2(log_trans[0, 0] + q0, log_trans[0, 1] + q1)
        b1 = _lse2(log_trans[1, 0] + q0, log_trans[1, 1] + q1)
        z = _lse2(b0, b1)
        log_bwd[k] = b0 - z, b1 - z
        log_z[k] = z
    return log_bwd, log_z


def _forward(z, w1, b1, w2, b2, w3, b3):
    a1 = z @ w1 + b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ w2 + b2
    h2 = np.maximum(a2, 0.0)
    return h2 @ w3 + b3[0], (a1, h1, a2, h2)


def critic_forward(x, y, w1, b1, w2, b2, w3, b3):
    """Critic scores for the aligned pairs ``(x[t], y[t])``."""
    z = np.stack([x, y], axis=1)
    out, _ = _forward(z, w1, b1, w2, b2, w3, b3)
    return out


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def critic_train(x, y, idx, pidx, params, m, v, t0, lr, beta1, beta2, eps):
    """Run ``len(idx)`` Adam ascent steps on the Jensen-Shannon critic objective.

    Row ``s`` of ``idx`` selects the joint pairs ``(x[idx], y[idx])`` and
    row ``s`` of ``pidx`` the product pairs ``(x[idx], y[pidx])``. ``params``
    is ``[w1, b1, w2, b2, w3, b3]``; it and the moment lists ``m``/``v`` are
    updated in place. Returns the final step counter.
    """
    w1, b1, w2, b2, w3, b3 = params
    steps, batch = idx.shape
    t = t0
    for s in range(steps):
        xi = x[idx[s]]
        z = np.empty((2 * batch, 2))
        z[:batch, 0] = xi
        z[:batch, 1] = y[idx[s]]
        z[batch:, 0] = xi
        z[batch:, 1] = y[pidx[s]]
        out, (a1, h1, a2, h2) = _forward(z, w1, b1, w2, b2, w3, b3)

        # descent direction on -(E_P[-softplus(-T)] - E_Q[softplus(T)])
        go = np.empty(2 * batch)
        go[:batch] = -_sigmoid(-out[:batch]) / batch
        go[batch:] = _sigmoid(out[batch:]) / batch

        g_w3 = h2.T @ go
        g_b3 = np.array([go.sum()])
        d2 = np.outer(go, w3) * (a2 > 0.0)
        g_w2 = h1.T @ d2
        g_b2 = d2.sum(axis=0)
        d1 = (d2 @ w2.T) * (a1 > 0.0)
        g_w1 = z.T @ d1
        g_b1 = d1.sum(axis=0)

        t += 1
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        for p, g, mm, vv in zip(params, (g_w1, g_b1, g_w2, g_b2, g_w3, g_b3), m, v):
            mm *= beta1
            mm += (1.0 - beta1) * g
            vv *= beta2
            vv += (1.0 - beta2) * g * g
            p -= lr * (mm / c1) / (np.sqrt(vv / c2) + eps)
    return t
