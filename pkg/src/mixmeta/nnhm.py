"""Normal-normal hierarchical model in its marginal form.

Each estimate is modelled as ``y_i ~ N(mu, s_i^2 + tau^2)``.  Given ``tau``
the normal effect prior is conjugate, so the effect posterior and the
evidence ``p(y | tau)`` are closed-form; ``tau`` is integrated out by
composite Simpson quadrature on a uniform grid that is refined by doubling
until the log marginal likelihood settles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import logsumexp, ndtri

from .effect_size import Dataset
from .errors import InputError, NumericalError
from .mixture import NormalMixture

__all__ = [
    "EffectPrior",
    "HalfNormal",
    "Tabulated",
    "HierarchicalPrior",
    "TauGrid",
    "NNHMFit",
    "simpson_weights",
    "conditional_mu_posterior",
    "build_tau_grid",
    "fit",
    "posterior_as_prior",
    "tau_prior_from_posterior",
]

LOG_2PI = math.log(2.0 * math.pi)

GRID_START = 256
GRID_CAP = 8192
GRID_TOL = 1e-6
# upper end of the tau grid for continuous priors
TAU_MAX_QUANTILE = 0.99995


@dataclass(frozen=True)
class EffectPrior:
    """Normal prior for the overall effect (log-OR scale)."""

    mean: float = 0.0
    sd: float = 2.0

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise InputError("effect prior mean must be finite")
        if not (math.isfinite(self.sd) and self.sd > 0):
            raise InputError("effect prior sd must be finite and positive")


@dataclass(frozen=True)
class HalfNormal:
    scale: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise InputError("half-normal scale must be finite and positive")

    def pdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        dens = 2.0 / (self.scale * math.sqrt(2.0 * math.pi)) * np.exp(-0.5 * (tau / self.scale) ** 2)
        return np.where(tau >= 0, dens, 0.0)

    def quantile(self, p: float) -> float:
        return self.scale * float(ndtri(0.5 + 0.5 * p))

    @property
    def tau_max(self) -> float:
        return self.quantile(TAU_MAX_QUANTILE)

    def sample(self, rng: np.random.Generator, size=None):
        return np.abs(rng.normal(0.0, self.scale, size))


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Heterogeneity density tabulated on a uniform grid.

    The support must hold an odd number of equally spaced points (so that
    Simpson's rule applies) or a single point, which denotes a point mass.
    """

    support: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.support, dtype=float))
        d = np.atleast_1d(np.asarray(self.density, dtype=float))
        if t.shape != d.shape or t.ndim != 1 or t.size == 0:
            raise InputError("support and density must be equal-length vectors")
        if np.any(t < 0) or np.any(d < 0) or not np.all(np.isfinite(d)):
            raise InputError("support and density values must be non-negative")
        if t.size > 1:
            if t.size % 2 == 0:
                raise InputError("tabulated support needs an odd number of points")
            h = np.diff(t)
            if np.any(h <= 0) or np.ptp(h) > 1e-9 * h.mean():
                raise InputError("tabulated support must be uniform and ascending")
            total = float(simpson_weights(t) @ d)
            if abs(total - 1.0) > 1e-6:
                raise InputError(f"tabulated density integrates to {total}, not 1")
        for name, arr in (("support", t), ("density", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def point_mass(cls, tau: float = 0.0) -> "Tabulated":
        return cls(np.array([tau]), np.array([1.0]))

    @property
    def is_point_mass(self) -> bool:
        return self.support.size == 1

    @property
    def tau_max(self) -> float:
        return float(self.support[-1])

    def pdf(self, tau):
        tau = np.asarray(tau, dtype=float)
        interp = PchipInterpolator(self.support, self.density, extrapolate=False)
        out = np.nan_to_num(interp(tau), nan=0.0)
        return np.clip(out, 0.0, None)


HeterogeneityPrior = Union[HalfNormal, Tabulated]


@dataclass(frozen=True, eq=False)
class HierarchicalPrior:
    """Joint prior ``p(mu, tau)`` as a discrete tau distribution with normal
    conditionals ``mu | tau``; typically a previous posterior."""

    tau_support: np.ndarray
    tau_weights: np.ndarray
    mu_mean: np.ndarray
    mu_sd: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(a, dtype=float)) for a in
                  (self.tau_support, self.tau_weights, self.mu_mean, self.mu_sd)]
        if len({a.shape for a in arrays}) != 1:
            raise InputError("hierarchical prior arrays differ in shape")
        t, w, m, s = arrays
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise InputError("tau weights must be non-negative and sum to 1")
        if np.any(t < 0) or not np.all((s > 0) & np.isfinite(s)):
            raise InputError("tau support must be non-negative and mu sds positive")
        for name, arr in zip(("tau_support", "tau_weights", "mu_mean", "mu_sd"), arrays):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def mu_marginal(self) -> NormalMixture:
        return NormalMixture(self.tau_weights, self.mu_mean, self.mu_sd)


@dataclass(frozen=True, eq=False)
class TauGrid:
    """Quadrature nodes with the prior mass attached to each node."""

    points: np.ndarray
    log_mass: np.ndarray


@dataclass(frozen=True, eq=False)
class NNHMFit:
    log_marginal: float
    tau_grid: np.ndarray
    tau_posterior_weights: np.ndarray
    conditional_mean: np.ndarray
    conditional_sd: np.ndarray
    mu_posterior: NormalMixture

    @property
    def conditional_mu(self) -> np.ndarray:
        """Per-grid-point ``(mean, sd)`` pairs of ``mu | tau, y``."""
        return np.column_stack([self.conditional_mean, self.conditional_sd])

    @property
    def tau_posterior(self) -> Tabulated:
        return tau_prior_from_posterior(self)


def simpson_weights(points: np.ndarray) -> np.ndarray:
    """Composite Simpson weights for a uniform grid with an odd point count."""
    n = points.size
    if n == 1:
        return np.ones(1)
    h = (points[-1] - points[0]) / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def _prior_on_grid(prior: HeterogeneityPrior, n_intervals: int) -> TauGrid:
    if isinstance(prior, Tabulated) and prior.is_point_mass:
        return TauGrid(prior.support.copy(), np.zeros(1))
    if isinstance(prior, Tabulated) and prior.tau_max == 0:
        raise InputError("tabulated support collapses to zero")
    points = np.linspace(0.0, prior.tau_max, n_intervals + 1)
    mass = simpson_weights(points) * prior.pdf(points)
    if isinstance(prior, Tabulated):
        # interpolated densities are renormalised onto the new grid
        mass = mass / mass.sum()
    with np.errstate(divide="ignore"):
        return TauGrid(points, np.log(mass))


def _evidence(y, se, tau, mean, sd):
    """Conjugate update of ``mu ~ N(mean, sd^2)`` given data and tau.

    ``tau``, ``mean`` and ``sd`` broadcast against each other; the study
    axis is appended last.  Returns posterior mean, posterior sd and
    ``log p(y | tau)``, the multivariate normal density with covariance
    ``diag(s^2 + tau^2) + sd^2 11'`` reduced via Sherman-Morrison.
    """
    tau, mean, sd = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (tau, mean, sd)))
    v = se**2 + tau[..., None] ** 2
    w = 1.0 / v
    r = y - mean[..., None]
    a = w.sum(-1)
    b = (w * r).sum(-1)
    c = (w * r * r).sum(-1)
    prec = 1.0 / sd**2 + a
    log_ev = -0.5 * (y.size * LOG_2PI + np.log(v).sum(-1) + np.log1p(sd**2 * a) + c - b * b / prec)
    return mean + b / prec, 1.0 / np.sqrt(prec), log_ev


def conditional_mu_posterior(data: Dataset, prior: EffectPrior, tau):
    """Posterior ``(mean, sd)`` of the effect at fixed ``tau`` and ``log p(y | tau)``.

    ``tau`` may be a scalar or an array of heterogeneity values.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InputError("tau must be non-negative")
    mean, sd, log_ev = _evidence(data.y, data.se, tau, prior.mean, prior.sd)
    if tau.ndim == 0:
        return float(mean), float(sd), float(log_ev)
    return mean, sd, log_ev


def _log_marginal(data: Dataset, effect_prior: EffectPrior, grid: TauGrid) -> float:
    _, _, log_ev = _evidence(data.y, data.se, grid.points, effect_prior.mean, effect_prior.sd)
    return float(logsumexp(grid.log_mass + log_ev))


def refine(evaluate, start: int, cap: int, tol: float):
    """Double the interval count from ``start`` until successive values of
    ``evaluate(n)[0]`` differ by less than ``tol``; return the finer result."""
    n = start
    prev = evaluate(n)
    delta = math.inf
    while n < cap:
        n *= 2
        cur = evaluate(n)
        delta = abs(cur[0] - prev[0])
        if delta < tol:
            return cur
        prev = cur
    raise NumericalError(f"tau grid did not converge at {cap} intervals (last delta {delta:.3g})")


def build_tau_grid(prior: HeterogeneityPrior, data: Dataset,
                   effect_prior: EffectPrior = EffectPrior()) -> TauGrid:
    """Uniform Simpson grid on ``[0, tau_max]`` refined until the log
    marginal likelihood of ``data`` changes by less than 1e-6."""
    if isinstance(prior, Tabulated) and prior.is_point_mass:
        return _prior_on_grid(prior, 0)

    def evaluate(n):
        grid = _prior_on_grid(prior, n)
        return _log_marginal(data, effect_prior, grid), grid

    return refine(evaluate, GRID_START, GRID_CAP, GRID_TOL)[1]


def _assemble(log_mass, mean, sd, log_ev) -> tuple[float, np.ndarray, NormalMixture]:
    log_joint = log_mass + log_ev
    log_marginal = float(logsumexp(log_joint))
    weights = np.exp(log_joint - log_marginal)
    weights = weights / weights.sum()
    return log_marginal, weights, NormalMixture(weights, mean, sd)


def fit(data: Dataset, effect_prior: EffectPrior | HierarchicalPrior,
        tau_prior: HeterogeneityPrior | None = None) -> NNHMFit:
    """Fit the marginal NNHM to ``data``.

    Either pass a normal ``EffectPrior`` together with a heterogeneity prior,
    or a ``HierarchicalPrior`` alone (whose tau support is used as-is).
    """
    if not isinstance(data, Dataset) or data.k < 1:
        raise InputError("fit needs a non-empty Dataset")
    if isinstance(effect_prior, HierarchicalPrior):
        if tau_prior is not None:
            raise InputError("a hierarchical prior already carries its tau distribution")
        with np.errstate(divide="ignore"):
            log_mass = np.log(effect_prior.tau_weights)
        points = effect_prior.tau_support
        mean, sd, log_ev = _evidence(data.y, data.se, points, effect_prior.mu_mean, effect_prior.mu_sd)
    elif isinstance(effect_prior, EffectPrior):
        if tau_prior is None:
            raise InputError("a heterogeneity prior is required with a normal effect prior")
        grid = build_tau_grid(tau_prior, data, effect_prior)
        log_mass, points = grid.log_mass, grid.points
        mean, sd, log_ev = _evidence(data.y, data.se, points, effect_prior.mean, effect_prior.sd)
    else:
        raise InputError(f"unsupported effect prior {type(effect_prior).__name__}")
    log_marginal, weights, mixture = _assemble(log_mass, mean, sd, log_ev)
    return NNHMFit(
        log_marginal=log_marginal,
        tau_grid=np.asarray(points, dtype=float),
        tau_posterior_weights=weights,
        conditional_mean=mean,
        conditional_sd=sd,
        mu_posterior=mixture,
    )


def posterior_as_prior(fit: NNHMFit) -> HierarchicalPrior:
    return HierarchicalPrior(fit.tau_grid, fit.tau_posterior_weights,
                             fit.conditional_mean, fit.conditional_sd)


def tau_prior_from_posterior(fit: NNHMFit) -> Tabulated:
    """The fit's marginal tau posterior as a tabulated density."""
    if fit.tau_grid.size == 1:
        return Tabulated.point_mass(float(fit.tau_grid[0]))
    q = simpson_weights(fit.tau_grid)
    density = fit.tau_posterior_weights / q
    density = density / float(q @ density)
    return Tabulated(fit.tau_grid, density)
