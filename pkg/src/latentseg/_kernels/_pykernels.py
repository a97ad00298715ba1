"""Reference numpy implementation of the training kernels.

The compiled module ``_ckernels`` exposes the same four functions with the
same semantics; this module is used when the extension is not built.
"""
import numpy as np

EPS = 1e-12


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax_cce_batch(X, y, W, b, cw):
    """Weighted CCE summed over rows, and the gradient of that sum w.r.t. W, b."""
    P = _softmax(X @ W.T + b)
    n = X.shape[0]
    rows = np.arange(n)
    wy = cw[y]
    loss = float(np.sum(wy * -np.log(np.clip(P[rows, y], EPS, 1.0 - EPS))))
    G = P.copy()
    G[rows, y] -= 1.0
    G *= wy[:, None]
    return loss, G.T @ X, G.sum(axis=0)


def splc_batch(X, y, v, b, tau, flipped):
    """SPLC loss summed over rows, gradient of the sum, and count of corrected positives.

    A positive row takes the negative-label loss when ``p <= tau`` or when its
    ``flipped`` entry is set. ``tau < 0`` disables correction (plain BCE).
    """
    p = _sigmoid(X @ v + b)
    pc = np.clip(p, EPS, 1.0 - EPS)
    pos = y == 1
    corrected = pos & ((p <= tau) | (flipped != 0))
    keep = pos & ~corrected
    losses = np.where(keep, -np.log(pc), -np.log(1.0 - pc))
    dz = np.where(keep, p - 1.0, p)
    return float(losses.sum()), X.T @ dz, float(dz.sum()), int(corrected.sum())


def softmax_epoch(X, y, W, b, cw, order, batch_size, lr, l2):
    """One pass of minibatch gradient descent on the mean weighted CCE, in place."""
    total = 0.0
    n = order.shape[0]
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        loss, gW, gb = softmax_cce_batch(X[idx], y[idx], W, b, cw)
        total += loss
        m = idx.shape[0]
        gW = gW / m
        if l2:
            gW = gW + l2 * W
        W -= lr * gW
        b -= lr * (gb / m)
    return total


def splc_epoch(X, y, v, b, order, batch_size, lr, l2, tau, flipped, sticky):
    """One pass of minibatch descent on the mean SPLC loss; ``b`` is a length-1 array.

    With ``sticky`` set, positives found corrected are marked in ``flipped``.
    """
    total = 0.0
    n = order.shape[0]
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yb = y[idx]
        loss, gv, gb, _ = splc_batch(X[idx], yb, v, b[0], tau, flipped[idx])
        if sticky and tau >= 0:
            p = _sigmoid(X[idx] @ v + b[0])
            hit = idx[(yb == 1) & (p <= tau)]
            flipped[hit] = 1
        total += loss
        m = idx.shape[0]
        gv = gv / m
        if l2:
            gv = gv + l2 * v
        v -= lr * gv
        b[0] -= lr * (gb / m)
    return total
