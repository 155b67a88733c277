"""Parameter records, validated domain types and the package exceptions."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

#: absolute tolerance for probability comparisons
PROB_ATOL = 1e-12


class QuasilabError(Exception):
    """Base class of every error raised by this package."""


class ValidationError(QuasilabError, ValueError):
    """A parameter record or a state violates one of its constraints."""


class GuardError(QuasilabError):
    """An exact enumeration was requested past its size guard."""


class CouplingViolation(QuasilabError, AssertionError):
    """The lower/true/upper sandwich of the coupled chains broke."""


class ConvergenceError(QuasilabError, RuntimeError):
    """An iteration did not converge within its budget.

    The last iterate is kept on ``last`` so callers can inspect it.
    """

    def __init__(self, message, last=None, iterations=None):
        super().__init__(message)
        self.last = last
        self.iterations = iterations


class OptimizationError(QuasilabError, RuntimeError):
    """No feasible point was found by a variational solver."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the sharp-peak Wright-Fisher model.

    ``a`` (limit of ``ell * q``) and ``alpha`` (limit of ``m / ell``) are
    stored next to the finite-size values because experiments move along the
    asymptotic regime at fixed ``(a, alpha)``.  ``alpha`` may be ``math.inf``.
    """

    ell: int
    m: int
    kappa: int = 2
    q: float = 0.01
    sigma: float = 2.0
    K: int = 0
    a: Optional[float] = None
    alpha: Optional[float] = None

    @classmethod
    def from_regime(cls, a, alpha, ell, kappa=2, sigma=2.0, K=0):
        """Build finite-size parameters with ``q = a / ell`` and ``m = round(alpha * ell)``."""
        if not math.isfinite(alpha):
            raise ValidationError("alpha = inf has no finite population size")
        m = max(1, int(round(alpha * ell)))
        return cls(ell=ell, m=m, kappa=kappa, q=a / ell, sigma=sigma, K=K, a=a, alpha=alpha)

    @property
    def effective_a(self) -> float:
        """``a`` if given, else the finite-size value ``ell * q``."""
        return self.a if self.a is not None else self.ell * self.q

    @property
    def a_mismatch(self) -> Optional[float]:
        """Diagnostic ``|ell * q - a|``; ``None`` when ``a`` is not set."""
        if self.a is None:
            return None
        return abs(self.ell * self.q - self.a)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def validate(params: ModelParams, allow_zero_q: bool = False) -> ModelParams:
    """Check every constraint of ``params`` and return it unchanged.

    ``allow_zero_q`` admits the mutation-free chain ``q = 0``, used as a
    degenerate control case by the experiment harness.

    Raises
    ------
    ValidationError
        Listing every violated constraint.
    """
    p = params
    problems = []
    for name in ("ell", "m", "kappa", "K"):
        value = getattr(p, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            problems.append(f"{name} must be an integer, got {value!r}")
    if problems:
        raise ValidationError("; ".join(problems))
    if p.ell < 1:
        problems.append(f"ell={p.ell} must be positive")
    if p.m < 1:
        problems.append(f"m={p.m} must be positive")
    if p.kappa < 2:
        problems.append(f"kappa={p.kappa} must be at least 2")
    if not (0.0 < p.q or (allow_zero_q and p.q == 0.0)):
        problems.append(f"q={p.q} must be positive")
    if p.kappa >= 2 and p.q >= 1.0 - 1.0 / p.kappa:
        problems.append(f"q={p.q} violates q < 1 - 1/kappa = {1.0 - 1.0 / p.kappa:g} (q >= 1-1/kappa)")
    if not p.sigma > 1.0:
        problems.append(f"sigma={p.sigma} must exceed 1")
    if p.K < 0:
        problems.append(f"K={p.K} must be non-negative")
    if p.K > p.ell:
        problems.append(f"K={p.K} must not exceed ell={p.ell}")
    if p.a is not None and not p.a > 0:
        problems.append(f"a={p.a} must be positive")
    if p.alpha is not None and not p.alpha > 0:
        problems.append(f"alpha={p.alpha} must be positive (inf allowed)")
    if problems:
        raise ValidationError("; ".join(problems))
    return params


def l1_norm(v) -> float:
    """``|v|_1 = sum_i |v_i|``."""
    return float(np.abs(np.asarray(v, dtype=float)).sum())


def as_simplex_point(r, K=None, atol=PROB_ATOL) -> np.ndarray:
    """Return ``r`` as a float vector of the set D = {r >= 0, sum(r) <= 1}."""
    r = np.array(r, dtype=float, ndmin=1)
    if r.ndim != 1:
        raise ValidationError("a simplex point is a vector")
    if K is not None and r.shape[0] != K + 1:
        raise ValidationError(f"expected {K + 1} coordinates, got {r.shape[0]}")
    if np.any(r < -atol) or r.sum() > 1.0 + atol or not np.all(np.isfinite(r)):
        raise ValidationError(f"{r} is outside D (r_k >= 0, sum <= 1)")
    return np.clip(r, 0.0, None)


def as_class_vector(z, m, K=None) -> np.ndarray:
    """Return ``z`` as an integer vector of the set {z >= 0, sum(z) <= m}."""
    z = np.array(z, dtype=np.int64, ndmin=1)
    if K is not None and z.shape[0] != K + 1:
        raise ValidationError(f"expected {K + 1} classes, got {z.shape[0]}")
    if np.any(z < 0) or z.sum() > m:
        raise ValidationError(f"{z} is not a class vector with total <= {m}")
    return z


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Independent stream for one replica.

    The stream is seeded with the entropy pair ``(seed, replica)`` hashed by
    ``numpy.random.SeedSequence``, so it depends only on the master seed and
    the replica index, not on execution order.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica)]))
