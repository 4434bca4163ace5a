"""Independent reference computations used as test oracles.

Nothing here imports the solvers under test; each routine takes the
slow, obvious route.
"""
from __future__ import annotations

import bisect
import itertools

import numpy as np
from scipy.optimize import linprog


def kl(p, q) -> float:
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    total = 0.0
    for pi, qi in zip(p, q):
        if pi == 0:
            continue
        if qi == 0:
            return np.inf
        total += pi * np.log(pi / qi)
    return total


def _kl_rows(c, Q):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(c > 0, c * np.log(c / Q), 0.0)
    return np.where(np.all(Q[:, c > 0] > 0, axis=1), terms.sum(axis=1), np.inf)


def _ray_boundary(c, theta, radius, iters=56):
    """Boundary point of the KL ball (clipped to the simplex) along each angle."""
    e1 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
    e2 = np.array([1.0, 1.0, -2.0]) / np.sqrt(6.0)
    d = np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2
    with np.errstate(divide="ignore", invalid="ignore"):
        limits = np.where(d < 0, c / -d, np.inf)
    t_hi = limits.min(axis=1)
    Q_hi = c + t_hi[:, None] * d
    Q_hi = np.clip(Q_hi, 0.0, None)
    inside = _kl_rows(c, Q_hi) <= radius
    lo = np.zeros(len(theta))
    hi = t_hi.copy()
    for _ in range(iters):  # bisection keeps lo feasible
        mid = 0.5 * (lo + hi)
        ok = _kl_rows(c, np.clip(c + mid[:, None] * d, 0.0, None)) <= radius
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    t = np.where(inside, t_hi, lo)
    return np.clip(c + t[:, None] * d, 0.0, None)


def kl_ball_grid_max(center, v, radius, n=1000, levels=8):
    """Maximise q.v over the KL ball on the 2-simplex.

    The ball is convex and contains its centre, so its boundary is traced by
    rays from the centre. The angle is searched on a grid that is refined
    tenfold around the incumbent at each level; the boundary point along
    each ray comes from bisection.
    """
    c = np.asarray(center, float)
    v = np.asarray(v, float)
    assert c.shape == (3,)
    lo, hi = 0.0, 2.0 * np.pi
    best_val, best_q = -np.inf, None
    for _ in range(levels):
        theta = np.linspace(lo, hi, n)
        Q = _ray_boundary(c, theta, radius)
        vals = Q @ v
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_q = float(vals[k]), Q[k]
        width = 10 * (hi - lo) / n
        lo, hi = theta[k] - width, theta[k] + width
    return best_q, best_val


def l1_ball_lp_max(center, v, radius):
    """``max q.v`` s.t. ``|q - c|_1 <= r`` on the simplex, as an LP in (q, t)."""
    c = np.asarray(center, float)
    v = np.asarray(v, float)
    d = len(c)
    # variables: q (d), t (d) with t >= |q - c|
    obj = np.concatenate([-v, np.zeros(d)])
    eye = np.eye(d)
    A_ub = np.block([[eye, -eye], [-eye, -eye], [np.zeros((1, d)), np.ones((1, d))]])
    b_ub = np.concatenate([c, -c, [radius]])
    A_eq = np.concatenate([np.ones(d), np.zeros(d)])[None, :]
    res = linprog(obj, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (2 * d), method="highs")
    assert res.status == 0
    return res.x[:d], -res.fun


def all_policy_gains(P, R):
    """Gain of every deterministic policy by batched stationary-law solves."""
    S, A, _ = P.shape
    policies = np.array(list(itertools.product(range(A), repeat=S)))
    rows = np.arange(S)
    Ppi = P[rows, policies]  # (n, S, S)
    rpi = R[rows, policies]
    # nu (I - P + 1 1^T) = 1^T
    M = np.eye(S) - Ppi + 1.0
    nu = np.linalg.solve(np.transpose(M, (0, 2, 1)), np.ones((len(policies), S, 1)))[..., 0]
    return policies, np.einsum("ns,ns->n", nu, rpi)


def hitting_times_vi(P, target, tol=1e-12, max_iter=10**7):
    """Minimal expected hitting times of ``target`` by plain value iteration."""
    S = P.shape[0]
    h = np.zeros(S)
    for _ in range(max_iter):
        new = 1.0 + (P @ h).min(axis=1)
        new[target] = 0.0
        if np.max(np.abs(new - h)) <= tol:
            return new
        h = new
    raise RuntimeError("hitting-time VI did not converge")


def chain_hitting_direct(P, target):
    """Expected hitting times of ``target`` in a chain: solve (I - P_sub) h = 1."""
    S = P.shape[0]
    others = [s for s in range(S) if s != target]
    h = np.zeros(S)
    h[others] = np.linalg.solve(np.eye(S - 1) - P[np.ix_(others, others)], np.ones(S - 1))
    return h


def simulate_chain_rewards(P, r, n_steps, rng, s0=0):
    """Rewards along a sampled path of the chain ``(P, r)``."""
    cdf = np.cumsum(P, axis=1)
    u = rng.random(n_steps)
    out = np.empty(n_steps)
    s = s0
    cdf_l = cdf.tolist()
    r_l = list(r)
    last = P.shape[0] - 1
    for i in range(n_steps):
        out[i] = r_l[s]
        s = min(bisect.bisect_right(cdf_l[s], u[i]), last)
    return out


def batch_means_se(x, n_batches=100):
    """Standard error of the mean of a correlated series by batch means."""
    b = np.array_split(np.asarray(x), n_batches)
    means = np.array([c.mean() for c in b])
    return means.std(ddof=1) / np.sqrt(n_batches)
