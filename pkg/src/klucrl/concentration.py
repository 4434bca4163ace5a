"""Transportation-style concentration bounds and an empirical certifier.

Each bound is exposed as a plain function of its ingredients. The
:func:`inequality_scan` harness draws (P, Q, f) triples and counts how often
an inequality fails beyond a relative slack of 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .kl_geometry import confidence_constants, kl_divergence

SLACK = 1e-12

INEQUALITIES = (
    "bernstein_upper",
    "bernstein_lower",
    "transport2",
    "semi_variance_le_variance",
    "semi_variance_upper",
    "refined_pinsker",
)


def expectation(P, f) -> float:
    return float(np.dot(P, f))


def variance(P, f) -> float:
    P = np.asarray(P, dtype=float)
    f = np.asarray(f, dtype=float)
    m = np.dot(P, f)
    return float(np.dot(P, (f - m) ** 2))


def span(f) -> float:
    f = np.asarray(f, dtype=float)
    return float(f.max() - f.min())


def semi_variance(P, Q, f) -> float:
    """Variance of f under P restricted to the points where ``P >= Q``."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    f = np.asarray(f, dtype=float)
    m = np.dot(P, f)
    keep = P >= Q
    return float(np.dot(P[keep], (f[keep] - m) ** 2))


def bernstein_transport_upper(var_P: float, span_f: float, kl: float) -> float:
    if kl == math.inf:
        return math.inf
    return math.sqrt(2.0 * var_P * kl) + (2.0 / 3.0) * span_f * kl


def bernstein_transport_lower(var_P: float, kl: float) -> float:
    if kl == math.inf:
        return math.inf
    return math.sqrt(2.0 * var_P * kl)


def transport2_bound(P, Q, f) -> float:
    """Upper bound on ``E_Q f - E_P f`` in terms of ``KL(P, Q)``; inf unless P << Q."""
    kl = kl_divergence(P, Q)
    if not math.isfinite(kl):
        return math.inf
    root = math.sqrt(semi_variance(P, Q, f)) + math.sqrt(semi_variance(Q, P, f))
    return root * math.sqrt(2.0 * kl) + span(f) * kl


def vcal_upper_bound(P, Q, f) -> float:
    """Right-hand side bounding ``sqrt(semi_variance(P, Q, f))``; needs ``|X| >= 2``."""
    d = len(P)
    if d < 2:
        raise DomainError("alphabet must have at least two points")
    kl = kl_divergence(Q, P)
    if not math.isfinite(kl):
        return math.inf
    return math.sqrt(2.0 * variance(Q, f)) + 3.0 * span(f) * math.sqrt(d * kl)


def refined_pinsker_lhs_rhs(P, Q):
    """``(KL(P, Q), 1/2 sum (P-Q)^2 / max(P, Q))``; the first always dominates."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    diff = P != Q
    rhs = 0.5 * np.sum((P[diff] - Q[diff]) ** 2 / np.maximum(P[diff], Q[diff]))
    return kl_divergence(P, Q), float(rhs)


def empirical_variance_bound(var_true: float, span_f: float, S: int, B: float, N: int) -> float:
    """High-probability bound on the standard deviation under the empirical law."""
    if N < 1:
        raise DomainError("N must be at least 1")
    return math.sqrt(2.0 * var_true) + 6.0 * S * span_f * B / math.sqrt(N)


# -- certification harness ---------------------------------------------------

def _exceeds(lhs: float, rhs: float, slack: float = SLACK) -> tuple[bool, float]:
    """Violation test with relative slack; also returns ``lhs - rhs``."""
    if rhs == math.inf:
        return False, -math.inf
    excess = lhs - rhs
    return excess > slack * max(1.0, abs(lhs), abs(rhs)), excess


def check_triple(P, Q, f) -> dict[str, tuple[bool, float]]:
    """Evaluate every inequality on one triple; ``name -> (violated, lhs - rhs)``.

    Inequalities whose absolute-continuity premise fails are skipped.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    f = np.asarray(f, dtype=float)
    out = {}
    gap = expectation(Q, f) - expectation(P, f)
    var_P = variance(P, f)
    s = span(f)
    kl_QP = kl_divergence(Q, P)
    if math.isfinite(kl_QP):  # Q << P
        out["bernstein_upper"] = _exceeds(gap, bernstein_transport_upper(var_P, s, kl_QP))
        out["bernstein_lower"] = _exceeds(-gap, bernstein_transport_lower(var_P, kl_QP))
    kl_PQ = kl_divergence(P, Q)
    if math.isfinite(kl_PQ):  # P << Q
        out["transport2"] = _exceeds(gap, transport2_bound(P, Q, f))
        lhs, rhs = refined_pinsker_lhs_rhs(P, Q)
        out["refined_pinsker"] = _exceeds(rhs, lhs)
    out["semi_variance_le_variance"] = _exceeds(semi_variance(P, Q, f), var_P)
    if len(P) >= 2:
        out["semi_variance_upper"] = _exceeds(math.sqrt(semi_variance(P, Q, f)),
                                              vcal_upper_bound(P, Q, f))
    return out


@dataclass(frozen=True)
class ScanConfig:
    samples: int = 100_000
    min_dim: int = 2
    max_dim: int = 8
    seed: int = 0
    stress: bool = True
    shards: int = 1


@dataclass
class InequalityStats:
    samples: int = 0
    violations: int = 0
    worst_slack: float = -math.inf

    def add(self, violated: bool, excess: float) -> None:
        self.samples += 1
        self.violations += int(violated)
        self.worst_slack = max(self.worst_slack, excess)

    def merge(self, other: "InequalityStats") -> None:
        self.samples += other.samples
        self.violations += other.violations
        self.worst_slack = max(self.worst_slack, other.worst_slack)


@dataclass
class ViolationReport:
    stats: dict[str, InequalityStats] = field(
        default_factory=lambda: {k: InequalityStats() for k in INEQUALITIES})

    def record(self, results: dict[str, tuple[bool, float]]) -> None:
        for name, (violated, excess) in results.items():
            self.stats[name].add(violated, excess)

    def merge(self, other: "ViolationReport") -> None:
        for name in INEQUALITIES:
            self.stats[name].merge(other.stats[name])

    @property
    def total_violations(self) -> int:
        return sum(s.violations for s in self.stats.values())

    def to_dict(self) -> dict:
        return {name: {"samples": s.samples, "violations": s.violations,
                       "worst_slack": None if s.samples == 0 else s.worst_slack}
                for name, s in self.stats.items()}


def dirichlet_triples(rng: np.random.Generator, n: int, min_dim: int, max_dim: int):
    for _ in range(n):
        d = int(rng.integers(min_dim, max_dim + 1))
        yield rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d)), rng.uniform(0.0, 1.0, d)


def _near_boundary(rng, d, floor):
    x = rng.dirichlet(np.full(d, 0.2))
    k = int(rng.integers(0, d))
    x[k] = 0.0
    x = x / x.sum() * (1.0 - floor)
    x[k] = floor
    return x


def stress_triples(rng: np.random.Generator, min_dim: int, max_dim: int):
    """Point masses, constant f, identical laws and tiny-mass boundary points."""
    for d in range(max(min_dim, 1), max_dim + 1):
        eye = np.eye(d)
        ramp = np.linspace(0.0, 1.0, d)
        for i in range(d):
            for j in range(d):
                yield eye[i], eye[j], ramp
                yield eye[i], eye[j], np.full(d, 0.5)
            u = np.full(d, 1.0 / d)
            yield eye[i], u, ramp
            yield u, eye[i], ramp
        for _ in range(50):
            P = rng.dirichlet(np.ones(d))
            f = rng.uniform(0.0, 1.0, d)
            yield P, P.copy(), f
            yield P, rng.dirichlet(np.ones(d)), np.full(d, rng.uniform())
        for floor in (1e-9, 1e-12, 1e-15):
            for _ in range(20):
                P = _near_boundary(rng, d, floor)
                Q = _near_boundary(rng, d, floor)
                f = rng.uniform(0.0, 1.0, d)
                yield P, Q, f
                yield Q, P, f
                yield P, rng.dirichlet(np.ones(d)), f
                yield rng.dirichlet(np.ones(d)), Q, np.where(rng.random(d) < 0.5, 0.0, 1.0)
                # nearly identical laws
                eps = floor * rng.standard_normal(d)
                R = np.clip(P + eps - eps.mean(), 0.0, None)
                yield P, R / R.sum(), f


SCAN_BLOCK = 1000


def _block_stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, block, 0]))


def _scan_blocks(config: ScanConfig, blocks: range) -> ViolationReport:
    report = ViolationReport()
    for b in blocks:
        n = min(SCAN_BLOCK, config.samples - b * SCAN_BLOCK)
        rng = _block_stream(config.seed, b)
        for triple in dirichlet_triples(rng, n, config.min_dim, config.max_dim):
            report.record(check_triple(*triple))
    return report


def inequality_scan(config: ScanConfig = ScanConfig()) -> ViolationReport:
    """Count inequality violations over Dirichlet samples plus the stress suite.

    Samples come in fixed-size blocks, each drawn from its own counter-based
    stream, and shards own contiguous runs of blocks. The report therefore
    does not depend on how many shards the work is split into.
    """
    n_blocks = -(-config.samples // SCAN_BLOCK)
    shards = max(1, min(config.shards, n_blocks or 1))
    bounds = np.linspace(0, n_blocks, shards + 1).round().astype(int)
    report = ViolationReport()
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        report.merge(_scan_blocks(config, range(lo, hi)))
    if config.stress:
        rng = np.random.Generator(np.random.Philox(key=config.seed, counter=[0, 0, 0, 1]))
        for triple in stress_triples(rng, config.min_dim, config.max_dim):
            report.record(check_triple(*triple))
    return report


@dataclass(frozen=True)
class EmpiricalVarianceReport:
    trials: int
    violations: int
    delta: float

    @property
    def frequency(self) -> float:
        return self.violations / self.trials

    def band(self) -> float:
        """``delta`` plus three binomial standard deviations."""
        return self.delta + 3.0 * math.sqrt(self.delta * (1.0 - self.delta) / self.trials)


def empirical_variance_scan(trials: int = 1000, delta: float = 0.05, seed: int = 0,
                            max_dim: int = 8, n_range=(10, 10_000)) -> EmpiricalVarianceReport:
    """Sample ``N`` points from a random law and test the empirical-variance bound.

    ``B`` is taken from :func:`confidence_constants` with one action and
    horizon ``N``.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    bad = 0
    lo, hi = math.log(n_range[0]), math.log(n_range[1])
    for _ in range(trials):
        S = int(rng.integers(2, max_dim + 1))
        p = rng.dirichlet(np.ones(S))
        f = rng.uniform(0.0, 1.0, S)
        N = int(round(math.exp(rng.uniform(lo, hi))))
        p_hat = rng.multinomial(N, p) / N
        B = confidence_constants(S, 1, max(N, 3), delta).B
        rhs = empirical_variance_bound(variance(p, f), span(f), S, B, N)
        bad += math.sqrt(variance(p_hat, f)) > rhs
    return EmpiricalVarianceReport(trials, bad, delta)
