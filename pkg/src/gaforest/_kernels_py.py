"""Pure numpy implementations of the hot loops.

Same signatures as the compiled ``_kernels`` extension; :mod:`gaforest._backend`
picks one at import time.

Node layout for one tree of depth d (N = 2**d - 1 internal nodes): breadth-first,
node n has children 2n+1 (left) and 2n+2 (right); the mass array holds all
2N+1 nodes so leaves occupy indices N..2N.
"""
import numpy as np

NAME = "python"


def _sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def tree_forward(act, biases, leaves, alpha):
    """Soft routing for a batch of trees.

    act: (B, T, N), biases: (T, N), leaves: (T, N+1, C).
    Returns per-tree outputs (B, T, C), left proportions (B, T, N) and the
    mass reaching every node (B, T, 2N+1).
    """
    batch, n_trees, n_nodes = act.shape
    z = alpha * (act - biases)
    dec = _sigmoid(z)
    right = _sigmoid(-z)
    mass = np.empty((batch, n_trees, 2 * n_nodes + 1))
    mass[..., 0] = 1.0
    lo = 0
    width = 1
    while lo < n_nodes:
        hi = lo + width
        parent = mass[..., lo:hi]
        mass[..., 2 * lo + 1:2 * hi + 1:2] = parent * dec[..., lo:hi]
        mass[..., 2 * lo + 2:2 * hi + 2:2] = parent * right[..., lo:hi]
        lo = hi
        width *= 2
    out = np.einsum("btl,tlc->btc", mass[..., n_nodes:], leaves)
    return out, dec, mass


def tree_backward(g_out, dec, mass, leaves, alpha):
    """Gradients wrt activations (B, T, N) and leaves (T, N+1, C)."""
    batch, n_trees, n_nodes = dec.shape
    g_leaves = np.einsum("btl,btc->tlc", mass[..., n_nodes:], g_out)
    g_mass = np.empty_like(mass)
    g_mass[..., n_nodes:] = np.einsum("btc,tlc->btl", g_out, leaves)
    g_dec = np.empty_like(dec)
    width = (n_nodes + 1) // 2
    hi = n_nodes
    while hi > 0:
        lo = hi - width
        gl = g_mass[..., 2 * lo + 1:2 * hi + 1:2]
        gr = g_mass[..., 2 * lo + 2:2 * hi + 2:2]
        d = dec[..., lo:hi]
        g_mass[..., lo:hi] = d * gl + (1.0 - d) * gr
        g_dec[..., lo:hi] = mass[..., lo:hi] * (gl - gr)
        hi = lo
        width //= 2
    g_act = g_dec * (alpha * dec * (1.0 - dec))
    return g_act, g_leaves


def _round_robin(n):
    """Pairings that cover every unordered pair of n items once (circle method)."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for k in range(m // 2):
            p, q = players[k], players[m - 1 - k]
            if p >= 0 and q >= 0:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_sweeps(rows, tol, max_sweeps):
    """One-sided Jacobi orthogonalisation of the rows of ``rows`` (in place).

    Disjoint pairs of a round are rotated together.  Returns the number of
    sweeps performed; the row norms are then the singular values.
    """
    k = rows.shape[0]
    if k < 2:
        return 0
    schedule = _round_robin(k)
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p, q in schedule:
            ap, aq = rows[p], rows[q]
            alpha = np.einsum("ij,ij->i", ap, ap)
            beta = np.einsum("ij,ij->i", aq, aq)
            gamma = np.einsum("ij,ij->i", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            p, q, alpha, beta, gamma = p[active], q[active], alpha[active], beta[active], gamma[active]
            # a tiny gamma sends zeta to inf, which correctly gives t = 0
            with np.errstate(over="ignore"):
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
            t[zeta == 0.0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ap, aq = rows[p], rows[q]
            rows[p] = c[:, None] * ap - s[:, None] * aq
            rows[q] = s[:, None] * ap + c[:, None] * aq
        if not rotated:
            return sweep
    return max_sweeps
