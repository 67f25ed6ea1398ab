"""Seedable random streams and the samplers built on them.

Every stochastic routine takes a :class:`numpy.random.Generator`. Streams are
derived from ``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`
spawn keys, so replicate ``r`` of a bootstrap or simulation batch always sees
the same variates no matter which worker runs it or in what order.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .exceptions import InvalidProbability, InvalidShape, NonPositiveArgument

_CLAMP_TOL = 1e-9


def make_rng(seed: int = 0, stream: int | tuple[int, ...] = ()) -> np.random.Generator:
    """Return the generator for ``(seed, stream)``.

    ``stream`` may be an int or a tuple of ints for nested streams, e.g.
    ``(replicate, method_index)``.
    """
    if isinstance(stream, (int, np.integer)):
        stream = (int(stream),)
    if int(seed) < 0 or any(int(s) < 0 for s in stream):
        raise ValueError("seed and stream ids must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def check_random_state(random_state) -> np.random.Generator:
    """Coerce ``None``/int/Generator into a Generator (sklearn convention)."""
    if random_state is None:
        return make_rng(0)
    if isinstance(random_state, np.random.Generator):
        return random_state
    if isinstance(random_state, (int, np.integer)):
        return make_rng(int(random_state))
    raise TypeError(f"cannot build a Generator from {random_state!r}")


def clean_probability(p: float) -> float:
    """Clamp ``p`` into [0, 1] when it is within 1e-9; larger violations raise."""
    p = float(p)
    if not np.isfinite(p) or p < -_CLAMP_TOL or p > 1 + _CLAMP_TOL:
        raise InvalidProbability(f"probability {p!r} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def clean_probability_vector(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise InvalidProbability("probability vector must be one-dimensional and non-empty")
    if not np.all(np.isfinite(probs)) or np.any(probs < -_CLAMP_TOL):
        raise InvalidProbability(f"invalid probability vector {probs!r}")
    total = probs.sum()
    if abs(total - 1.0) > _CLAMP_TOL:
        raise InvalidProbability(f"probabilities sum to {total!r}, not 1")
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def sample_binomial(n: int, p: float, rng: np.random.Generator) -> int:
    if n < 0:
        raise ValueError("n must be non-negative")
    return int(rng.binomial(int(n), clean_probability(p)))


def sample_multinomial(n: int, probs, rng: np.random.Generator) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be non-negative")
    probs = clean_probability_vector(probs)
    return rng.multinomial(int(n), probs).astype(np.int64)


def sample_beta(a: float, b: float, rng: np.random.Generator, size=None):
    if not (a > 0 and b > 0):
        raise InvalidShape(f"beta shapes must be positive, got ({a}, {b})")
    return rng.beta(a, b, size=size)


def gl1_quantile(u, eta: float):
    """Inverse CDF of the type-I generalized logistic, F(x) = (1 + e^-x)^-eta."""
    if not eta > 0:
        raise InvalidShape(f"eta must be positive, got {eta}")
    u = np.asarray(u, dtype=float)
    # u^(-1/eta) - 1 computed as expm1 for accuracy near u = 1
    return -np.log(np.expm1(-np.log(u) / eta))


def gl1_cdf(x, eta: float):
    return np.exp(-eta * np.log1p(np.exp(-np.asarray(x, dtype=float))))


def sample_gl1(eta: float, rng: np.random.Generator, size=None):
    if not eta > 0:
        raise InvalidShape(f"eta must be positive, got {eta}")
    u = rng.random(size)
    # guard against u == 0 (probability 2^-53)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    out = gl1_quantile(u, eta)
    return float(out) if size is None else out


def sample_normal(mu: float, sigma: float, rng: np.random.Generator, size=None):
    if not sigma > 0:
        raise InvalidShape(f"sigma must be positive, got {sigma}")
    return rng.normal(mu, sigma, size=size)


def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise NonPositiveArgument(f"log_gamma needs x > 0, got {x!r}")
    out = gammaln(arr)
    return float(out) if np.ndim(out) == 0 else out
