import math

import numpy as np
import pytest
from scipy import stats

from mixmeta import nnhm
from mixmeta.effect_size import Dataset
from mixmeta.errors import InputError, NumericalError
from mixmeta.nnhm import (
    EffectPrior,
    HalfNormal,
    HierarchicalPrior,
    Tabulated,
    build_tau_grid,
    conditional_mu_posterior,
    fit,
    posterior_as_prior,
    simpson_weights,
    tau_prior_from_posterior,
)

VAGUE = EffectPrior(0.0, 2.0)
TAU = HalfNormal(0.5)


def toy(y, se, group="g"):
    return Dataset.from_arrays(y, se, group_label=group)


def test_single_study_conjugate_update():
    mean, sd, _ = conditional_mu_posterior(toy([0.5], [0.4]), VAGUE, 0.0)
    prec = 1 / 4 + 1 / 0.16
    assert mean == pytest.approx(0.5 / 0.16 / prec, abs=1e-12)
    assert round(mean, 5) == 0.48077
    assert round(sd, 5) == 0.39223


def test_flat_prior_limit():
    data = toy([0.1, -0.4, 0.9], [0.3, 0.5, 0.8])
    tau = 0.2
    w = 1 / (data.se**2 + tau**2)
    mean, _, _ = conditional_mu_posterior(data, EffectPrior(0.0, 1e6), tau)
    assert mean == pytest.approx(float(w @ data.y / w.sum()), abs=1e-6)


def test_agreeing_inputs_give_exact_mean():
    mean, _, _ = conditional_mu_posterior(toy([0.3, 0.3], [0.2, 0.2]), EffectPrior(0.3, 1.0), 0.1)
    assert mean == 0.3


def test_evidence_matches_dense_multivariate_normal():
    data = toy([0.1, -0.4, 0.9, 0.2], [0.3, 0.5, 0.8, 0.25])
    prior = EffectPrior(0.2, 1.5)
    for tau in (0.0, 0.3, 1.1):
        cov = np.diag(data.se**2 + tau**2) + prior.sd**2
        expected = stats.multivariate_normal(np.full(data.k, prior.mean), cov).logpdf(data.y)
        assert conditional_mu_posterior(data, prior, tau)[2] == pytest.approx(expected, abs=1e-10)


def test_negative_tau_rejected():
    with pytest.raises(InputError):
        conditional_mu_posterior(toy([0.1], [0.2]), VAGUE, -0.1)


def test_half_normal_upper_bound():
    assert TAU.tau_max == pytest.approx(0.5 * stats.norm.ppf(1 - 0.00005 / 2), rel=1e-12)
    assert round(TAU.tau_max, 2) == 2.03
    grid = build_tau_grid(TAU, toy([0.1, 0.4], [0.3, 0.3]))
    assert grid.points[0] == 0.0
    assert grid.points[-1] == pytest.approx(TAU.tau_max)
    assert (grid.points.size - 1) % 256 == 0


def test_half_normal_density_integrates_to_one():
    x = np.linspace(0, TAU.tau_max, 4097)
    assert simpson_weights(x) @ TAU.pdf(x) == pytest.approx(1.0, abs=1e-4)
    assert TAU.pdf(0.0) == pytest.approx(2 / (0.5 * math.sqrt(2 * math.pi)))


def test_tabulated_support_bound():
    support = np.linspace(0, 1.2, 13)
    prior = Tabulated(support, np.full(13, 1 / 1.2))
    assert prior.tau_max == 1.2
    grid = build_tau_grid(prior, toy([0.1], [0.3]))
    assert grid.points[-1] == pytest.approx(1.2)


def test_point_mass_grid():
    grid = build_tau_grid(Tabulated.point_mass(0.0), toy([0.1], [0.3]))
    assert grid.points.tolist() == [0.0]
    assert np.exp(grid.log_mass).tolist() == [1.0]


def test_tabulated_uniform_is_valid():
    prior = Tabulated(np.linspace(0, 1, 11), np.ones(11))
    assert prior.pdf(0.5) == pytest.approx(1.0)


@pytest.mark.parametrize("support,density", [
    (np.linspace(0, 1, 12), np.ones(12)),          # even point count
    (np.linspace(0, 1, 11), np.full(11, 2.0)),     # integrates to 2
    (np.linspace(0, 1, 11), -np.ones(11)),         # negative density
    (np.linspace(-1, 1, 11), np.full(11, 0.5)),    # negative support
])
def test_tabulated_validation(support, density):
    with pytest.raises(InputError):
        Tabulated(support, density)


def test_grid_cap_reported():
    with pytest.raises(NumericalError, match="last delta"):
        nnhm.refine(lambda n: (1.0 / n, None), 4, 16, 1e-12)


def test_k1_point_mass_marginal_closed_form():
    data = toy([0.7], [0.35])
    f = fit(data, VAGUE, Tabulated.point_mass(0.0))
    expected = stats.norm.logpdf(0.7, 0.0, math.sqrt(0.35**2 + 4.0))
    assert f.log_marginal == pytest.approx(expected, abs=1e-12)
    mean, sd, _ = conditional_mu_posterior(data, VAGUE, 0.0)
    x = np.linspace(-1, 2, 31)
    assert np.max(np.abs(f.mu_posterior.cdf(x) - stats.norm.cdf(x, mean, sd))) < 1e-10


def test_fit_invariants(migraine):
    _, _, adolescents, _ = migraine
    f = fit(adolescents, VAGUE, TAU)
    assert f.tau_posterior_weights.sum() == pytest.approx(1.0, abs=1e-10)
    assert len(f.mu_posterior) == f.tau_grid.size
    lo, hi = f.mu_posterior.quantile(1e-9), f.mu_posterior.quantile(1 - 1e-9)
    x = np.linspace(lo, hi, 20001)
    assert simpson_weights(x) @ f.mu_posterior.pdf(x) == pytest.approx(1.0, abs=1e-6)


def test_refinement_is_converged(migraine):
    _, _, adolescents, _ = migraine
    f = fit(adolescents, VAGUE, TAU)
    n = f.tau_grid.size - 1
    finer = nnhm._prior_on_grid(TAU, 2 * n)
    lm = nnhm._log_marginal(adolescents, VAGUE, finer)
    assert abs(lm - f.log_marginal) < 1e-6
    mean, sd, log_ev = nnhm._evidence(adolescents.y, adolescents.se, finer.points, 0.0, 2.0)
    _, _, mix = nnhm._assemble(finer.log_mass, mean, sd, log_ev)
    assert abs(mix.median() - f.mu_posterior.median()) < 1e-6


def test_fit_rejects_mixed_pathways(migraine):
    _, _, adolescents, _ = migraine
    f = fit(adolescents, VAGUE, TAU)
    with pytest.raises(InputError):
        fit(adolescents, posterior_as_prior(f), TAU)
    with pytest.raises(InputError):
        fit(adolescents, VAGUE)


def test_uninformative_study_is_ignored(migraine):
    _, _, adolescents, _ = migraine
    base = fit(adolescents, VAGUE, TAU).mu_posterior.median()
    extra = adolescents.concat(toy([3.0], [100.0], "adolescents"))
    assert abs(fit(extra, VAGUE, TAU).mu_posterior.median() - base) < 1e-4


def test_conflict_lowers_marginal():
    se = np.array([0.3, 0.4, 0.5])
    grid = nnhm._prior_on_grid(TAU, 256)
    values = [nnhm._log_marginal(toy(np.full(3, shift), se), VAGUE, grid) for shift in (0, 1, 2, 4, 8)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_posterior_as_prior_transfers(migraine):
    _, _, adolescents, _ = migraine
    f = fit(adolescents, VAGUE, TAU)
    prior = posterior_as_prior(f)
    assert np.array_equal(prior.tau_weights, f.tau_posterior_weights)
    x = np.linspace(-0.5, 1.0, 301)
    assert np.max(np.abs(prior.mu_marginal.pdf(x) - f.mu_posterior.pdf(x))) < 1e-12


def test_posterior_as_prior_uniform_weights():
    n = 5
    hp = HierarchicalPrior(np.linspace(0, 1, n), np.full(n, 1 / n), np.zeros(n), np.ones(n))
    f = fit(toy([0.0], [1e3]), hp)  # nearly uninformative data keeps weights uniform
    assert np.allclose(posterior_as_prior(f).tau_weights, 1 / n, atol=1e-6)


def test_hierarchical_prior_validation():
    with pytest.raises(InputError):
        HierarchicalPrior(np.array([0.0, 1.0]), np.array([0.5, 0.6]), np.zeros(2), np.ones(2))
    with pytest.raises(InputError):
        HierarchicalPrior(np.array([0.0, 1.0]), np.array([0.5, 0.5]), np.zeros(2), np.array([1.0, 0.0]))


def test_empty_dataset_rejected():
    with pytest.raises((InputError, TypeError)):
        fit(None, VAGUE, TAU)


def test_tau_prior_from_posterior(migraine):
    _, _, adolescents, _ = migraine
    f = fit(adolescents, VAGUE, TAU)
    prior = tau_prior_from_posterior(f)
    assert simpson_weights(prior.support) @ prior.density == pytest.approx(1.0, abs=1e-6)
    assert prior.tau_max == pytest.approx(f.tau_grid[-1])
    point = fit(toy([0.2], [0.3]), VAGUE, Tabulated.point_mass(0.0))
    assert tau_prior_from_posterior(point).is_point_mass


def test_adolescent_and_adult_fits(migraine, transplant):
    _, _, adolescents, _ = migraine
    m = fit(adolescents, VAGUE, TAU).mu_posterior
    lo, hi = m.shortest_interval(0.95)
    assert np.exp([m.median(), lo, hi]) == pytest.approx([1.350, 1.069, 1.711], rel=0.02)
    _, _, adults, _ = transplant
    a = fit(adults, VAGUE, TAU).mu_posterior
    assert a.mean == pytest.approx(-0.266, abs=0.005)
    assert a.sd == pytest.approx(0.109, abs=0.005)
