"""Normal mixtures, posterior model probabilities and model averaging.

Every posterior for the overall effect in this package is a finite mixture
of normals: conditional on a heterogeneity value the effect posterior is
normal, so integrating over a quadrature grid (and over models) only adds
components.  Distribution functions are therefore evaluated analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

from .errors import InputError, NumericalError

__all__ = [
    "NormalMixture",
    "ModelAverage",
    "mixture_pdf",
    "mixture_cdf",
    "mixture_quantile",
    "shortest_interval",
    "equal_tailed_interval",
    "model_posterior_probs",
    "bayes_factor",
    "average",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class NormalMixture:
    """Weighted set of normal components ``(weight, mean, sd)``."""

    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        s = np.atleast_1d(np.asarray(self.sds, dtype=float))
        if not (w.shape == m.shape == s.shape) or w.ndim != 1 or w.size == 0:
            raise InputError("weights, means and sds must be equal-length non-empty vectors")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise InputError(f"mixture weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        if not np.all(np.isfinite(m)) or not np.all((s > 0) & np.isfinite(s)):
            raise InputError("component means must be finite and sds positive")
        for name, arr in (("weights", w), ("means", m), ("sds", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def normal(cls, mean: float = 0.0, sd: float = 1.0) -> "NormalMixture":
        return cls(np.array([1.0]), np.array([mean]), np.array([sd]))

    @classmethod
    def combine(cls, mixtures: Sequence["NormalMixture"], probs: Sequence[float]) -> "NormalMixture":
        """Flatten ``sum_i probs[i] * mixtures[i]`` into one mixture."""
        probs = np.asarray(probs, dtype=float)
        weights = np.concatenate([p * m.weights for p, m in zip(probs, mixtures)])
        # renormalise away accumulated rounding only
        weights = weights / weights.sum()
        return cls(
            weights,
            np.concatenate([m.means for m in mixtures]),
            np.concatenate([m.sds for m in mixtures]),
        )

    def __len__(self):
        return self.weights.size

    @cached_property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    @cached_property
    def sd(self) -> float:
        second = np.dot(self.weights, self.sds**2 + self.means**2)
        return float(math.sqrt(max(second - self.mean**2, 0.0)))

    def pruned(self, mass: float = 1e-12) -> "NormalMixture":
        """Drop the lightest components whose total weight is at most ``mass``."""
        order = np.argsort(self.weights, kind="stable")
        cum = np.cumsum(self.weights[order])
        drop = order[cum <= mass]
        if drop.size == 0:
            return self
        keep = np.ones(self.weights.size, dtype=bool)
        keep[drop] = False
        w = self.weights[keep]
        return NormalMixture(w / w.sum(), self.means[keep], self.sds[keep])

    @cached_property
    def _bracket(self) -> tuple[float, float, float, float]:
        span = 10.0 * float(self.sds.max())
        lo = float(self.means.min()) - span
        hi = float(self.means.max()) + span
        f_lo, f_hi = mixture_cdf(self, [lo, hi])
        return lo, hi, float(f_lo), float(f_hi)

    def pdf(self, x):
        return mixture_pdf(self, x)

    def cdf(self, x):
        return mixture_cdf(self, x)

    def quantile(self, p: float) -> float:
        return mixture_quantile(self, p)

    def median(self) -> float:
        return mixture_quantile(self, 0.5)

    def shortest_interval(self, level: float = 0.95) -> tuple[float, float]:
        return shortest_interval(self, level)


def mixture_pdf(m: NormalMixture, x):
    x = np.asarray(x, dtype=float)
    z = (x[..., None] - m.means) / m.sds
    out = (np.exp(-0.5 * z * z) * _INV_SQRT_2PI / m.sds) @ m.weights
    return float(out) if out.ndim == 0 else out


def mixture_cdf(m: NormalMixture, x):
    x = np.asarray(x, dtype=float)
    out = ndtr((x[..., None] - m.means) / m.sds) @ m.weights
    return float(out) if out.ndim == 0 else out


def _cdf_pdf(m: NormalMixture, x: float) -> tuple[float, float]:
    z = (x - m.means) / m.sds
    cdf = float(ndtr(z) @ m.weights)
    pdf = float((np.exp(-0.5 * z * z) / m.sds) @ m.weights) * _INV_SQRT_2PI
    return cdf, pdf


def mixture_quantile(m: NormalMixture, p: float, tol: float = 1e-10, x0: float | None = None) -> float:
    """Inverse CDF by safeguarded Newton iteration inside a bracket.

    The bracket starts at ten component sds beyond the extreme means and is
    widened (at most ten doublings) if it does not enclose ``p``.  ``x0`` is
    an optional starting point.
    """
    if not 0 < p < 1:
        raise InputError(f"quantile probability must lie in (0, 1), got {p}")
    lo, hi, f_lo, f_hi = m._bracket
    for _ in range(10):
        if f_lo < p < f_hi:
            break
        if f_lo >= p:
            lo -= hi - lo
        if f_hi <= p:
            hi += hi - lo
        f_lo, f_hi = mixture_cdf(m, [lo, hi])
    else:
        raise NumericalError(f"could not bracket quantile {p} within 10 doublings")

    if x0 is None:
        x0 = m.mean + m.sd * float(ndtri(p))
    x = min(max(x0, lo), hi)
    for _ in range(200):
        f, d = _cdf_pdf(m, x)
        f -= p
        if f > 0:
            hi = x
        else:
            lo = x
        step = f / d if d > 0 else math.inf
        if abs(f) < tol and abs(step) < 1e-12 * (1.0 + abs(x)):
            return x
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if hi - lo < 1e-15 * (1.0 + abs(x)):
            break
        x = x_new
    if abs(mixture_cdf(m, x) - p) < tol:
        return x
    raise NumericalError(f"quantile iteration did not converge for p={p}")


def equal_tailed_interval(m: NormalMixture, level: float = 0.95) -> tuple[float, float]:
    if not 0 < level < 1:
        raise InputError(f"level must lie in (0, 1), got {level}")
    a = (1 - level) / 2
    return mixture_quantile(m, a), mixture_quantile(m, 1 - a)


def shortest_interval(m: NormalMixture, level: float = 0.95, min_p: float = 0.001,
                      tol: float = 1e-8) -> tuple[float, float]:
    """Narrowest single interval holding ``level`` posterior mass.

    The left endpoint ranges over
    ``[quantile(min_p), quantile(1 - level - min_p)]``, keeping the right
    endpoint away from probability one where it would be unbounded; a
    64-point scan picks the starting bracket and golden-section search
    refines it, so multimodal mixtures do not trap the search in a poor
    local minimum near the bracket ends.
    """
    if not 0 < level < 1:
        raise InputError(f"level must lie in (0, 1), got {level}")
    min_p = min(min_p, 0.5 * (1 - level))
    lower = mixture_quantile(m, min_p)
    upper = mixture_quantile(m, 1 - level - min_p)

    last = [None]

    def right_end(left):
        pr = level + mixture_cdf(m, left)
        if pr >= 1.0 - 1e-12:
            return math.inf
        last[0] = mixture_quantile(m, pr, x0=last[0])
        return last[0]

    def width(left):
        return right_end(left) - left

    grid = np.linspace(lower, upper, 64)
    widths = np.array([width(x) for x in grid])
    i = int(np.argmin(widths))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = width(c), width(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = width(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = width(d)
    left = 0.5 * (a + b)
    if width(left) > widths[i]:
        left = float(grid[i])
    return float(left), float(right_end(left))


def model_posterior_probs(log_marginals: Sequence[float], priors: Sequence[float]) -> np.ndarray:
    """Posterior model probabilities, normalised in log space.

    Models with zero prior probability get posterior zero; their log
    marginal may be ``nan`` (never computed).
    """
    priors = np.asarray(priors, dtype=float)
    lm = np.asarray(log_marginals, dtype=float)
    if priors.shape != lm.shape:
        raise InputError("log_marginals and priors differ in length")
    if np.any(priors < 0) or not np.all(np.isfinite(priors)):
        raise InputError("prior model probabilities must be non-negative")
    if not np.any(priors > 0):
        raise InputError("all prior model probabilities are zero")
    if abs(priors.sum() - 1.0) > 1e-10:
        raise InputError(f"prior model probabilities must sum to 1 (sum={priors.sum()!r})")
    active = priors > 0
    if not np.all(np.isfinite(lm[active])):
        raise InputError("log marginal likelihoods must be finite")
    logpost = np.full(lm.shape, -np.inf)
    logpost[active] = lm[active] + np.log(priors[active])
    return np.exp(logpost - logsumexp(logpost[active]))


def bayes_factor(log_marginal_a: float, log_marginal_b: float) -> float:
    return math.exp(log_marginal_a - log_marginal_b)


@dataclass(frozen=True, eq=False)
class ModelAverage:
    model_ids: tuple
    prior_probs: np.ndarray
    log_marginals: np.ndarray
    posterior_probs: np.ndarray
    mixture: NormalMixture
    # number of pooled components contributed by each model, in model order
    component_counts: tuple[int, ...]
    bayes_factors: dict = field(default_factory=dict)

    def model_mass(self) -> np.ndarray:
        """Pooled-mixture weight mass attributed to each model."""
        edges = np.concatenate([[0], np.cumsum(self.component_counts)])
        return np.array([self.mixture.weights[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])

    def summary(self, level: float = 0.95) -> tuple[float, float, float]:
        """Median and shortest interval (log scale)."""
        lo, hi = self.mixture.shortest_interval(level)
        return self.mixture.median(), lo, hi


def average(fits, priors: Sequence[float]) -> ModelAverage:
    """Combine model fits into the model-averaged target-effect posterior.

    ``fits`` are objects with ``id``, ``log_marginal`` and
    ``target_mu_posterior``.  A fit may be ``None`` where its prior is zero.
    """
    fits = list(fits)
    priors = np.asarray(priors, dtype=float)
    if len(fits) != priors.size:
        raise InputError("number of fits and prior probabilities differ")
    for f, p in zip(fits, priors):
        if p > 0 and f is None:
            raise InputError("a model with positive prior probability was not fitted")
    lm = np.array([f.log_marginal if f is not None else np.nan for f in fits])
    post = model_posterior_probs(lm, priors)
    active = [i for i, p in enumerate(priors) if p > 0]
    mixture = NormalMixture.combine([fits[i].target_mu_posterior for i in active],
                                    post[active])
    ids = tuple(f.id if f is not None else None for f in fits)
    factors = {}
    for i in active:
        for j in active:
            if i != j:
                factors[f"{ids[i]}:{ids[j]}"] = bayes_factor(lm[i], lm[j])
    counts = tuple(len(f.target_mu_posterior) if p > 0 else 0 for f, p in zip(fits, priors))
    return ModelAverage(
        model_ids=ids,
        prior_probs=priors,
        log_marginals=lm,
        posterior_probs=post,
        mixture=mixture,
        component_counts=counts,
        bayes_factors=factors,
    )
