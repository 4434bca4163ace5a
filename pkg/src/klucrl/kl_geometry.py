"""KL divergence, linear maximisation over KL and L1 balls, confidence radii.

The KL-ball maximiser is vectorised over rows so extended value iteration
can solve every state-action pair of a sweep in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import kl_div

from .errors import DomainError, NumericalFailure

MAX_ROOT_ITER = 200
_TINY = 1e-300


def kl_divergence(p, q) -> float:
    """KL(p, q) in nats; ``inf`` when p puts mass where q has none."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    # kl_div terms are non-negative up to rounding of x log(x/y) - x + y
    return max(0.0, float(np.sum(kl_div(p, q))))


@dataclass(frozen=True)
class KlBall:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if np.any(c < 0) or abs(c.sum() - 1.0) > 1e-12:
            raise DomainError("KlBall center must lie on the simplex")
        if not self.radius >= 0:
            raise DomainError("KlBall radius must be non-negative")
        object.__setattr__(self, "center", c)

    def contains(self, q, tol: float = 0.0) -> bool:
        return kl_divergence(self.center, q) <= self.radius + tol

    def maximize(self, v, tol: float = 1e-10):
        return max_expectation_kl_ball(self.center, v, self.radius, tol)


def _dual(p, w, x):
    """Dual function of the KL-ball problem and its derivative in ``log x``.

    ``w = v - max_support(v) <= 0`` on the support and the multiplier is
    ``nu = max_support(v) + x``. With ``z = -w / x`` the tilted law has
    ``f = sum p log(1 + z) + log sum p / (1 + z)`` nats of KL from ``p``.
    """
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        z = np.where(p > 0, -w / x[:, None], 0.0)
        a1 = (p / (1.0 + z)).sum(axis=1)
        a2 = (p / (1.0 + z) ** 2).sum(axis=1)
        s = (p * z / (1.0 + z)).sum(axis=1)
        # log(1 - s) == log(a1); take whichever side is not a small difference
        tail = np.where(s < 0.5, np.log1p(-np.minimum(s, 0.5)), np.log(a1))
    f = (p * np.log1p(z)).sum(axis=1) + tail
    return f, a1 - a2 / a1


def _solve_dual(p, w, radius, tol_f):
    """Find ``x > 0`` with ``f(x) = radius`` for every row (f decreases in x)."""
    n = p.shape[0]
    mean = (p * w).sum(axis=1)
    var = (p * (w - mean[:, None]) ** 2).sum(axis=1)
    spread = -np.where(p > 0, w, 0.0).min(axis=1)
    # f ~ var / (2 (nu - mean)^2) for large nu
    x = np.maximum(np.sqrt(var) / np.sqrt(2.0 * radius) + mean, 1e-3 * spread)
    x = np.maximum(x, _TINY)
    lo = np.full(n, -np.inf)  # bracket in y = log x
    hi = np.full(n, np.inf)
    y = np.log(x)
    y_floor = math.log(_TINY)
    done = np.zeros(n, dtype=bool)
    for _ in range(MAX_ROOT_ITER):
        f, dfy = _dual(p, w, np.exp(y))
        g = f - radius
        # at the floor the remaining budget is below double resolution
        done = (np.abs(g) <= tol_f * np.maximum(1.0, radius)) | ((y <= y_floor) & (g <= 0))
        if done.all():
            return np.exp(y)
        lo = np.where(g > 0, y, lo)
        hi = np.where(g <= 0, y, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = y - g / dfy
        ok = np.isfinite(step) & (step > lo) & (step < hi)
        both = np.isfinite(lo) & np.isfinite(hi)
        fallback = np.where(both, 0.5 * (lo + hi), np.where(np.isfinite(lo), lo + 2.0, hi - 2.0))
        y_new = np.maximum(np.where(ok, step, fallback), y_floor)
        y = np.where(done, y, y_new)
        if np.all(done | (both & (hi - lo < 1e-15 * np.maximum(1.0, np.abs(hi))))):
            return np.exp(y)
    raise NumericalFailure("KL-ball dual root-finding failed to converge")


def max_expectation_kl_ball_batch(centers, v, radii, tol: float = 1e-10):
    """Row-wise ``max q.v`` subject to ``KL(center, q) <= radius``.

    ``centers`` is (n, d), ``v`` is (d,) or (n, d), ``radii`` broadcast to (n,).
    Rows with an all-zero center are unconstrained and put all mass on
    argmax v. Returns ``(q, values)``.
    """
    p = np.atleast_2d(np.asarray(centers, dtype=float))
    n, d = p.shape
    v = np.broadcast_to(np.asarray(v, dtype=float), (n, d))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (n,))
    if np.any(radii < 0):
        raise DomainError("radius must be non-negative")
    support = p > 0
    empty = ~support.any(axis=1)
    top = np.argmax(v, axis=1)  # lowest index among maximisers
    vmax = v[np.arange(n), top]
    vmax_supp = np.where(support, v, -np.inf).max(axis=1)
    q = p.copy()

    flat_supp = np.where(support, v, vmax_supp[:, None]).min(axis=1) >= vmax_supp
    # support already holds the global max with nothing to reweight, or no budget
    trivial = empty | (radii == 0) | (flat_supp & (vmax_supp >= vmax))
    outside = ~trivial & (vmax > vmax_supp)  # argmax v lies off the support
    w = np.where(support, v - np.where(np.isfinite(vmax_supp), vmax_supp, 0.0)[:, None], 0.0)

    x = np.empty(n)
    promote = np.zeros(n, dtype=bool)
    if outside.any():
        gap = (vmax - vmax_supp)[outside]
        f_at_top, _ = _dual(p[outside], w[outside], gap)
        promote[np.flatnonzero(outside)[f_at_top < radii[outside]]] = True
        x[outside] = gap
    solve = ~trivial & ~promote
    if solve.any():
        x[solve] = _solve_dual(p[solve], w[solve], radii[solve], tol_f=1e-14)

    live = ~trivial
    if live.any():
        d_ = np.where(support[live], x[live][:, None] - w[live], np.inf)
        # dividing by the smallest denominator first keeps p / d finite
        tilt = p[live] * (d_.min(axis=1, keepdims=True) / d_)
        q[live] = tilt / tilt.sum(axis=1, keepdims=True)
    if promote.any():
        f_top, _ = _dual(p[promote], w[promote], x[promote])
        mass = -np.expm1(f_top - radii[promote])
        rows = np.flatnonzero(promote)
        q[rows] *= (1.0 - mass)[:, None]
        q[rows, top[rows]] += mass
    if empty.any():
        rows = np.flatnonzero(empty)
        q[rows] = 0.0
        q[rows, top[rows]] = 1.0
    values = (q * v).sum(axis=1)
    return q, values


def max_expectation_kl_ball(center, v, radius: float, tol: float = 1e-10):
    """Maximise ``q.v`` over ``{q : KL(center, q) <= radius}``; returns ``(q, value)``."""
    if tol <= 0:
        raise DomainError("tol must be positive")
    q, val = max_expectation_kl_ball_batch(np.asarray(center, dtype=float)[None, :],
                                           np.asarray(v, dtype=float), [radius], tol)
    return q[0], float(val[0])


def kkt_residual(center, v, q) -> float:
    """Stationarity residual of an interior maximiser.

    On the support ``v_i = nu - lam p_i / q_i``; ``(nu, lam)`` are fitted by
    least squares and the worst misfit is returned.
    """
    p = np.asarray(center, dtype=float)
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    s = p > 0
    # stationarity: v_i + lam p_i/q_i = nu for all i in the support
    ratio = p[s] / q[s]
    A = np.column_stack([np.ones(s.sum()), -ratio])
    coef, *_ = np.linalg.lstsq(A, v[s], rcond=None)
    return float(np.max(np.abs(A @ coef - v[s])))


def max_expectation_l1_ball_batch(centers, v, radii):
    """Row-wise ``max q.v`` subject to ``||q - center||_1 <= radius``."""
    p = np.atleast_2d(np.asarray(centers, dtype=float))
    n, d = p.shape
    v = np.broadcast_to(np.asarray(v, dtype=float), (n, d))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (n,))
    if np.any(radii < 0) or np.any(radii > 2 + 1e-12):
        raise DomainError("L1 radius must lie in [0, 2]")
    order = np.argsort(-v, axis=1, kind="stable")
    rows = np.arange(n)
    best = order[:, 0]
    q = p.copy()
    q[rows, best] = np.minimum(1.0, p[rows, best] + radii / 2.0)
    excess = q.sum(axis=1) - 1.0
    for j in range(d - 1, 0, -1):
        idx = order[:, j]
        take = np.minimum(q[rows, idx], np.maximum(excess, 0.0))
        q[rows, idx] -= take
        excess -= take
    return q, (q * v).sum(axis=1)


def max_expectation_l1_ball(center, v, radius_l1: float):
    q, val = max_expectation_l1_ball_batch(np.asarray(center, dtype=float)[None, :],
                                           np.asarray(v, dtype=float), [radius_l1])
    return q[0], float(val[0])


@dataclass(frozen=True)
class ConfidenceConstants:
    n_states: int
    n_actions: int
    horizon: float
    delta: float
    B: float
    G: float
    C_p: float
    C_mu: float


def confidence_constants(S: int, A: int, T: float, delta: float) -> ConfidenceConstants:
    if T < 3:
        raise DomainError(f"horizon T={T} must be at least 3")
    if not 0 < delta <= 1:
        raise DomainError(f"delta={delta} must lie in (0, 1]")
    if S < 1 or A < 1:
        raise DomainError("S and A must be positive")
    logT = math.log(T)
    B = math.log(2 * math.e * S * S * A * logT / delta)
    G = B + 1.0 / logT
    C_p = S * (B + math.log(G) * (1.0 + 1.0 / G))
    C_mu = math.log(4 * S * A * logT / delta) / 1.99
    assert C_p <= 4 * S * B, "coarse bound C_p <= 4 S B violated"
    return ConfidenceConstants(S, A, T, delta, B, G, C_p, C_mu)


def ucrl2_radii(S: int, A: int, t: float, delta: float, n_plus):
    """Transition L1 and reward radii of the UCRL2 baseline at time ``t``."""
    n_plus = np.asarray(n_plus, dtype=float)
    t = max(float(t), 1.0)
    p_rad = np.sqrt(14.0 * S * math.log(2.0 * A * t / delta) / n_plus)
    r_rad = np.sqrt(3.5 * math.log(2.0 * S * A * t / delta) / n_plus)
    return np.minimum(p_rad, 2.0), r_rad
