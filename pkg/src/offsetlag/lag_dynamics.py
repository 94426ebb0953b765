"""Offset-lag recurrences along selection chains.

A host placing against a reference with lag ``L`` ends up with lag
``(1 - alpha*beta) * L + r*tau``, where ``beta`` is the reference's scope
factor (``beta = 1`` for placement on lag). Everything here is real-valued
(double precision); the simulator works in integer chunks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from offsetlag.errors import DomainError


def next_lag_pp_lag(lag_ref: float, alpha: float, r: float, tau: float) -> float:
    # int literal keeps Fraction arguments exact
    return (1 - alpha) * lag_ref + r * tau


def next_lag_pp_width(lag_ref: float, beta: float, alpha: float, r: float, tau: float) -> float:
    if not 0 <= beta <= 1:
        raise DomainError(f"scope factor {beta} outside [0, 1]")
    return (1 - alpha * beta) * lag_ref + r * tau


def fixed_point_lag(alpha: float, r: float, tau_s: float) -> float:
    """Stable lag ``r*tau_s/alpha`` of placement on lag.

    ``alpha = 1`` is accepted as the degenerate one-step case.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"placement coefficient must lie in (0, 1], got {alpha}")
    return r * tau_s / alpha


def mean_width_required(alpha: float, r: float, tau_s: float) -> float:
    """Average buffer width a stable width-based placement needs."""
    return fixed_point_lag(alpha, r, tau_s)


def setup_time_for_width(mean_width: float, alpha: float, r: float = 1.0) -> float:
    """Inverse of :func:`mean_width_required`: the setup time a width sustains."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"placement coefficient must lie in (0, 1], got {alpha}")
    if r <= 0:
        raise DomainError("rate must be positive")
    return alpha * mean_width / r


def chain_drift(avg_width: float, avg_tau: float, alpha: float, r: float) -> float:
    """Expected lag change per hop, ``r*tau - alpha*W``.

    Positive drift means lags grow along selection chains.
    """
    return r * avg_tau - alpha * avg_width


@dataclass(frozen=True)
class LagBounds:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise DomainError("lower bound above upper bound")

    def contains(self, lag: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= lag <= self.upper + slack


def lemma1_bounds(alpha: float, omega: float, r: float, tau_s: float) -> LagBounds:
    """Limit-lag sandwich when every scope factor is at least ``omega``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"placement coefficient must lie in (0, 1), got {alpha}")
    if not 0.0 <= omega <= 1.0:
        raise DomainError(f"omega must lie in [0, 1], got {omega}")
    lower = r * tau_s / alpha
    upper = math.inf if omega == 0 else r * tau_s / (alpha * omega)
    return LagBounds(lower, upper)


@dataclass(frozen=True)
class ChainSpec:
    """A selection chain listed from the tracker outwards.

    ``betas[k]`` and ``taus[k]`` belong to hop ``k + 1``: the reference's
    scope factor and the placing host's setup time. A scalar ``taus``
    means a constant setup time.
    """

    initial_lag: float
    betas: Sequence[float]
    taus: Union[float, Sequence[float]]
    alpha: float
    rate: float

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b.ndim != 1:
            raise DomainError("betas must be one-dimensional")
        if b.size and (b.min() < 0.0 or b.max() > 1.0):
            raise DomainError("scope factors must lie in [0, 1]")
        if not np.isscalar(self.taus) and len(self.taus) != b.size:
            raise DomainError("taus and betas differ in length")

    def tau_array(self) -> np.ndarray:
        n = len(self.betas)
        if np.isscalar(self.taus):
            return np.full(n, float(self.taus))
        return np.asarray(self.taus, dtype=float)


LOG_SPACE_HOPS = 10_000


def chain_lag(spec: ChainSpec) -> float:
    """Closed product-sum form of the lag at the end of the chain.

    ``W0 * prod_k c_k + r * sum_k tau_k * prod_{j>k} c_j`` with
    ``c_k = 1 - alpha*beta_k``. Products of the tail factors are
    accumulated right to left; beyond ``LOG_SPACE_HOPS`` hops they are
    accumulated as sums of logs to stay clear of underflow.
    """
    betas = np.asarray(spec.betas, dtype=float)
    taus = spec.tau_array()
    n = betas.size
    if n == 0:
        return float(spec.initial_lag)
    c = 1.0 - spec.alpha * betas
    if n <= LOG_SPACE_HOPS:
        total = 0.0
        tail = 1.0
        for ck, tk in zip(reversed(c.tolist()), reversed(taus.tolist())):
            total += tk * tail
            tail *= ck
        return float(spec.initial_lag * tail + spec.rate * total)
    with np.errstate(divide="ignore"):
        logc = np.log(c)
    # suffix[k] = sum_{j>k} log c_j
    suffix = np.concatenate((np.cumsum(logc[::-1])[::-1][1:], [0.0]))
    full = suffix[0] + logc[0]
    terms = taus * np.exp(suffix)
    return float(spec.initial_lag * math.exp(full) + spec.rate * math.fsum(terms))


def fold_chain(spec: ChainSpec) -> np.ndarray:
    """Lag after each hop, by iterating the one-hop recurrence."""
    betas = np.asarray(spec.betas, dtype=float).tolist()
    taus = spec.tau_array().tolist()
    out = []
    lag = float(spec.initial_lag)
    a, r = spec.alpha, spec.rate
    for b, tau in zip(betas, taus):
        lag = (1.0 - a * b) * lag + r * tau
        out.append(lag)
    return np.array(out, dtype=float)


BetaRule = Callable[[np.ndarray], np.ndarray]


def harmonic(i: np.ndarray) -> np.ndarray:
    """``beta_i = 1/i`` for hop ``i >= 1``."""
    return 1.0 / i


def constant(omega: float) -> BetaRule:
    def rule(i: np.ndarray) -> np.ndarray:
        return np.full(i.shape, float(omega))
    return rule


def parse_beta_rule(text: str) -> BetaRule:
    """``const:<omega>``, ``harmonic`` or ``file:<path>`` (one beta per line)."""
    if text == "harmonic":
        return harmonic
    kind, _, arg = text.partition(":")
    if kind == "const":
        try:
            omega = float(arg)
        except ValueError as exc:
            raise DomainError(f"bad constant in beta rule {text!r}") from exc
        if not 0.0 <= omega <= 1.0:
            raise DomainError(f"constant beta {omega} outside [0, 1]")
        return constant(omega)
    if kind == "file":
        try:
            values = np.loadtxt(arg, dtype=float, ndmin=1)
        except (OSError, ValueError) as exc:
            raise DomainError(f"cannot read beta file {arg!r}: {exc}") from exc
        if values.size == 0 or values.min() < 0.0 or values.max() > 1.0:
            raise DomainError(f"beta file {arg!r} must hold values in [0, 1]")

        def rule(i: np.ndarray) -> np.ndarray:
            # cycle through the file when the probe outruns it
            return values[(i.astype(np.int64) - 1) % values.size]
        return rule
    raise DomainError(f"unknown beta rule {text!r}")


def divergence_probe(beta_rule: BetaRule, alpha: float, r: float, tau_s: float, n_hops: int,
                     initial_lag: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Lag of a host at chain depth ``n`` for ``n = 1..n_hops``.

    ``beta_i`` from the rule is the scope factor of the host's ``i``-th
    ancestor counted back from the host, so entry ``n - 1`` equals
    ``chain_lag`` over the chain ``beta_n, ..., beta_1`` listed from the
    tracker outwards:
    ``W0 * prod_{i<=n} c_i + r*tau * sum_{i<=n} prod_{j<i} c_j``.
    Returns ``(betas, lags)``.
    """
    if n_hops < 1:
        raise DomainError("n_hops must be at least 1")
    betas = np.asarray(beta_rule(np.arange(1, n_hops + 1, dtype=float)), dtype=float)
    if betas.min() < 0.0 or betas.max() > 1.0:
        raise DomainError("scope factors must lie in [0, 1]")
    c = 1.0 - alpha * betas
    # prod_{j<i} c_j for i = 1..n
    head = np.concatenate(([1.0], np.cumprod(c[:-1])))
    sums = np.cumsum(head)
    lags = initial_lag * (head * c) + r * tau_s * sums
    return betas, lags


def exceeds_bound(lags: np.ndarray, bound: float) -> Optional[int]:
    """First hop (1-based) whose lag exceeds ``bound``, or None."""
    idx = np.flatnonzero(lags > bound)
    return int(idx[0]) + 1 if idx.size else None


def random_scope_chains(n_chains: int, n_hops: int, omega: float, alpha: float, r: float, tau_s: float,
                        initial_lag: float, rng: np.random.Generator) -> np.ndarray:
    """Lags of ``n_chains`` independent chains with ``beta ~ U[omega, 1]``.

    Returns an ``(n_hops, n_chains)`` array; row ``k`` is the lag after hop
    ``k + 1``.
    """
    out = np.empty((n_hops, n_chains))
    lag = np.full(n_chains, float(initial_lag))
    rt = r * tau_s
    for k in range(n_hops):
        beta = rng.uniform(omega, 1.0, size=n_chains)
        lag = (1.0 - alpha * beta) * lag + rt
        out[k] = lag
    return out
