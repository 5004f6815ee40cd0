"""System parameters for quorum-validated fractional spending.

Validators form a pool of ``n`` nodes of which at most ``f`` may be
corrupted (``n > 8f``).  A payment is vouched for by a small probabilistic
quorum of nominal size ``m < f`` drawn by VRF self-selection out of ``V``
candidate validators.  Because self-selection only hits the nominal size in
expectation, the selection threshold is inflated to target
``k_prime = m / (1 - eta)`` so that at least ``m`` validators are selected
except with a probability bounded by :func:`chernoff_lower_tail`.

Two derived counts drive the protocol:

* ``q``: how many distinct valid ring signatures a proof must carry,
  ``ceil((1 - beta) * m)``.
* ``w``: how many signatures a client waits for before assembling a proof,
  ``floor(m - (1 + gamma) * (f / n) * m)``; the subtracted term budgets for
  selected validators that are corrupted and stay silent.

``k1``/``k2`` (aliases ``s1``/``s2``) bound concurrent spending from one
fund: up to ``k1`` payments validate in parallel, and no more than ``k2``
can ever be accepted, each worth exactly ``balance / s2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

MAX_PER_CANDIDATE = 10**6


class ConfigError(ValueError):
    """Raised when a parameter set is inconsistent or out of range."""


class DomainError(ValueError):
    """Raised when a bound is evaluated outside its domain."""


def _exact(x: float | int | str) -> Fraction:
    # Fraction(str(x)) keeps 0.7 meaning 7/10 instead of the nearest float,
    # so ceil/floor below never flip on representation dust.
    return Fraction(str(x))


@dataclass(frozen=True)
class SystemConfig:
    """Frozen bundle of raw and derived protocol parameters."""

    n: int          # validator pool size
    f: int          # corruption budget, n > 8f
    m: int          # nominal quorum size, m < f
    eta: float      # selection inflation: target k_prime = m / (1 - eta)
    gamma: float    # silence slack multiplier in w
    beta: float     # quorum intersection fraction backing q
    alpha: float    # upper intersection fraction (carried for reporting)
    k1: int         # parallel spending bound (s1)
    k2: int         # total fraction count per fund (s2)
    V: int          # candidate set size per payment, m <= V <= n
    max_out: int    # VRF output range upper bound, >= 10**6 * V
    k_prime: float  # inflated selection target
    q: int          # distinct signatures required by verify
    w: int          # signatures a client waits for

    @property
    def s1(self) -> int:
        return self.k1

    @property
    def s2(self) -> int:
        return self.k2

    def as_dict(self) -> dict:
        """All fields in declared order, for config echo in reports."""
        return {
            "n": self.n, "f": self.f, "m": self.m,
            "eta": self.eta, "gamma": self.gamma,
            "beta": self.beta, "alpha": self.alpha,
            "k1": self.k1, "k2": self.k2,
            "V": self.V, "max_out": self.max_out,
            "k_prime": self.k_prime, "q": self.q, "w": self.w,
        }


def derive_params(
    n: int,
    f: int,
    m: int,
    eta: float,
    gamma: float,
    beta: float,
    alpha: float,
    k1: int,
    k2: int,
    V: int | None = None,
) -> SystemConfig:
    """Validate raw parameters and compute the derived ones.

    Raises:
        ConfigError: if any constraint fails (n > 8f, 1 <= m < f,
            rates in (0, 1), gamma > 0, 1 <= k1 <= k2, m <= V <= n,
            1 <= q <= w).
    """
    if V is None:
        V = n
    for name, value in (("n", n), ("f", f), ("m", m), ("k1", k1), ("k2", k2), ("V", V)):
        if not isinstance(value, int) or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    if n <= 8 * f:
        raise ConfigError(f"need n > 8f, got n={n} f={f}")
    if m >= f:
        raise ConfigError(f"need m < f, got m={m} f={f}")
    for name, value in (("eta", eta), ("beta", beta), ("alpha", alpha)):
        if not 0.0 < value < 1.0:
            raise ConfigError(f"{name} must lie in (0, 1), got {value}")
    if gamma <= 0.0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    if k1 > k2:
        raise ConfigError(f"need k1 <= k2, got k1={k1} k2={k2}")
    if not m <= V <= n:
        raise ConfigError(f"need m <= V <= n, got m={m} V={V} n={n}")

    k_prime_exact = _exact(m) / (1 - _exact(eta))
    q = math.ceil((1 - _exact(beta)) * m)
    w = math.floor(_exact(m) - (1 + _exact(gamma)) * Fraction(f, n) * m)
    if q < 1:
        raise ConfigError(f"derived q={q} < 1; beta too large for m={m}")
    if w < 1:
        raise ConfigError(f"derived w={w} < 1; f/n or gamma too large for m={m}")
    if q > w:
        raise ConfigError(f"derived q={q} > w={w}; shrink beta slack or gamma")

    return SystemConfig(
        n=n, f=f, m=m, eta=eta, gamma=gamma, beta=beta, alpha=alpha,
        k1=k1, k2=k2, V=V, max_out=MAX_PER_CANDIDATE * V,
        k_prime=float(k_prime_exact), q=q, w=w,
    )


def vrf_threshold(cfg: SystemConfig) -> int:
    """Self-selection cutoff: a candidate with VRF output <= threshold is in.

    Returns ``floor(k_prime * max_out / V)`` capped at ``max_out``; the cap
    is the full-selection case ``k_prime >= V`` where every candidate
    qualifies.

    Raises:
        ConfigError: if the floor underflows to zero (max_out too small
            relative to V / k_prime).
    """
    k_prime_exact = _exact(cfg.m) / (1 - _exact(cfg.eta))
    raw = math.floor(k_prime_exact * cfg.max_out / cfg.V)
    if raw < 1:
        raise ConfigError(
            f"threshold underflow: k_prime={cfg.k_prime} max_out={cfg.max_out} V={cfg.V}"
        )
    return min(raw, cfg.max_out)


def chernoff_lower_tail(k: int, eta: float) -> float:
    """Bound on the probability that fewer than ``k`` candidates self-select.

    With the threshold targeting ``k_prime = k / (1 - eta)`` selections in
    expectation, the lower tail ``P(selected <= k)`` is at most
    ``exp(-eta**2 * k / (2 * (1 - eta)))``.

    Raises:
        DomainError: if ``k < 1`` or ``eta`` is outside (0, 1).
    """
    if not isinstance(k, int) or k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    if not 0.0 < eta < 1.0:
        raise DomainError(f"eta must lie in (0, 1), got {eta}")
    return math.exp(-(eta * eta) * k / (2.0 * (1.0 - eta)))
