import math

import numpy as np
import pytest

from oracles import mixture_divergence_mp
from robust_evt.asymptotics import (
    InfeasibleMixtureError,
    ShapeKind,
    alpha_for_gamma_star,
    choose_alpha,
    feasible_mixture_weight,
    gamma_star,
    lower_envelope,
    mixture_divergence,
    mixture_mass,
    normalizing_constant,
    tail_index_estimate,
    upper_envelope,
)
from robust_evt.divergence import DivergenceSpec, lambert_w
from robust_evt.gev import GevParams, gev_quantile, gev_tail
from robust_evt.worstcase import worst_case_tail

FRECHET_GRID = np.logspace(2, 6, 40)
SHAPE_MODELS = [GevParams(1 / 3), GevParams(0.0), GevParams(-1 / 3)]


def wc_slope(model, alpha, delta, grid=FRECHET_GRID):
    spec = DivergenceSpec(alpha, delta)
    return tail_index_estimate(lambda x: worst_case_tail(x, model, spec), grid)


# --- shape classification ------------------------------------------------


def test_gamma_star_finite():
    shape = gamma_star(2.0, 0.1072)
    assert shape.kind is ShapeKind.FINITE
    assert shape.gamma_star == pytest.approx(0.2144, abs=1e-12)


def test_gamma_star_kl_cases():
    gumbel = gamma_star(1.0, 0.0)
    assert gumbel.kind is ShapeKind.KL_OVER_GUMBEL and gumbel.gamma_star == 1.0
    frechet = gamma_star(1.0, 1 / 3)
    assert frechet.kind is ShapeKind.KL_LOGARITHMIC and frechet.gamma_star is None
    assert not frechet.has_domain_of_attraction
    assert gamma_star(1.0, -0.2).kind is ShapeKind.KL_LOGARITHMIC


def test_gamma_star_weibull_stays_negative():
    assert gamma_star(3.0, -0.3).gamma_star == pytest.approx(-0.45)


def test_gamma_star_rejects_small_alpha():
    with pytest.raises(ValueError):
        gamma_star(0.5, 0.1)


def test_choose_alpha_examples():
    assert choose_alpha(0.1072, 0.1072) == pytest.approx(2.0, abs=1e-15)
    assert choose_alpha(1.0, 1e6) == pytest.approx(1.000001, rel=1e-12)


@pytest.mark.parametrize("gamma0", [0.0, -0.1])
def test_choose_alpha_rejects_non_frechet(gamma0):
    with pytest.raises(ValueError, match="gamma0 > 0"):
        choose_alpha(gamma0, 0.1)


def test_choose_alpha_rejects_nonpositive_epsilon():
    with pytest.raises(ValueError):
        choose_alpha(0.2, 0.0)


def test_gamma_star_round_trip():
    rng = np.random.default_rng(7)
    for g0, eps in zip(rng.uniform(0.01, 2.0, 100), rng.uniform(1e-3, 5.0, 100)):
        alpha = choose_alpha(g0, eps)
        assert alpha > 1
        assert gamma_star(alpha, g0).gamma_star == pytest.approx(g0 + eps, rel=1e-12, abs=1e-12)


def test_alpha_for_gamma_star():
    alpha = alpha_for_gamma_star(0.4, 1.0)
    assert alpha == pytest.approx(1 / 0.6)
    assert gamma_star(alpha, 0.4).gamma_star == pytest.approx(1.0)
    with pytest.raises(ValueError):
        alpha_for_gamma_star(1.2, 1.0)
    with pytest.raises(ValueError):
        alpha_for_gamma_star(-0.1, 1.0)


# --- tail index --------------------------------------------------------


def test_tail_index_exact_pareto():
    assert tail_index_estimate(lambda x: x**-3.0, FRECHET_GRID) == pytest.approx(-3.0, abs=1e-10)


def test_tail_index_rejects_bad_grid():
    with pytest.raises(ValueError):
        tail_index_estimate(lambda x: 1 / x, [1.0, 3.0, 2.0])


def test_tail_index_underflow_is_degenerate():
    with pytest.raises(FloatingPointError):
        tail_index_estimate(lambda x: math.exp(-x), np.linspace(1.0, 2000.0, 40))


def test_tail_index_worst_case_alpha5():
    expected = -1 / (5 / 4 * (1 / 3))
    assert wc_slope(GevParams(1 / 3), 5.0, 0.1) == pytest.approx(expected, rel=0.1)


def test_tail_index_kl_over_gumbel():
    grid = np.logspace(1, math.log10(40.0), 40)
    assert wc_slope(GevParams(0.0), 1.0, 0.1, grid) == pytest.approx(-1.0, rel=0.1)


@pytest.mark.parametrize("gamma_ref", [0.25, 1 / 3, 0.5])
@pytest.mark.parametrize("alpha", [1.5, 2.0, 5.0])
def test_frechet_worst_case_index(gamma_ref, alpha):
    expected = -(alpha - 1) / (alpha * gamma_ref)
    slopes = [wc_slope(GevParams(gamma_ref), alpha, delta) for delta in (0.05, 0.5)]
    for s in slopes:
        assert s == pytest.approx(expected, rel=0.1)
    assert abs(slopes[0] / slopes[1] - 1) < 0.03


@pytest.mark.parametrize("gamma_ref", [-0.25, -1 / 3, -0.5])
@pytest.mark.parametrize("alpha", [2.0, 5.0])
def test_weibull_worst_case_endpoint_exponent(gamma_ref, alpha):
    model = GevParams(gamma_ref)
    endpoint = -1 / gamma_ref
    spec = DivergenceSpec(alpha, 0.1)
    eps = np.logspace(-6, -2, 40)
    tails = [worst_case_tail(endpoint - e, model, spec) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(tails), 1)[0]
    assert slope == pytest.approx(-(alpha - 1) / (alpha * gamma_ref), rel=0.1)


def test_kl_frechet_has_no_power_decay():
    model, spec = GevParams(1 / 3), DivergenceSpec(1.0, 0.1)
    xs = 10.0 ** np.arange(3, 10)
    tails = np.array([worst_case_tail(x, model, spec) for x in xs])
    assert np.all(tails * np.log(xs) ** 3 > 0.1)
    for s in (0.01, 0.1, 0.5):
        assert np.all(np.diff(tails * xs**s) > 0)


# --- envelopes ---------------------------------------------------------


def test_upper_envelope_alpha2_closed_form():
    model, spec = GevParams(0.2), DivergenceSpec(2.0, 0.3)
    for x in (5.0, 50.0, 500.0):
        assert upper_envelope(x, model, spec) == pytest.approx(
            math.sqrt(spec.delta_bar * gev_tail(x, model)), rel=1e-12
        )


def test_upper_envelope_kl_lambert():
    model, spec = GevParams(0.0), DivergenceSpec(1.0, 0.1)
    x = float(gev_quantile(1 - 1e-6, model))
    a = float(gev_tail(x, model))
    y = 0.1 / a
    assert upper_envelope(x, model, spec) == pytest.approx(y / lambert_w(y) * a, rel=1e-10)


def test_upper_envelope_zero_radius_is_reference():
    model = GevParams(0.1)
    assert upper_envelope(10.0, model, DivergenceSpec(1.0, 0.0)) == pytest.approx(gev_tail(10.0, model))


def test_upper_envelope_rejects_tail_outside_unit_interval():
    with pytest.raises(ValueError):
        upper_envelope(-5.0, GevParams(1 / 3), DivergenceSpec(2.0, 0.1))


@pytest.mark.parametrize("model", SHAPE_MODELS)
@pytest.mark.parametrize("alpha", [1.0, 5.0])
def test_upper_envelope_dominates_worst_case(model, alpha):
    spec = DivergenceSpec(alpha, 0.1)
    xs = gev_quantile(1 - np.logspace(-2, -12, 50), model)
    for x in xs:
        assert upper_envelope(x, model, spec) >= worst_case_tail(x, model, spec) * (1 - 1e-12)


def test_normalizing_constant_gives_probability():
    for alpha in (1.5, 2.0, 5.0):
        c = normalizing_constant(alpha)
        assert mixture_mass(c, alpha) == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(ValueError):
        normalizing_constant(1.0)


@pytest.mark.parametrize(
    "alpha,a,c",
    [(2.0, 0.3, 1.174034073125073), (1.0, 0.3, 1.174034073125073), (1.0, 0.3, 1.0), (5.0, 0.1, 2.0)],
)
def test_mixture_divergence_matches_mpmath(alpha, a, c):
    got = mixture_divergence(GevParams(1 / 3), DivergenceSpec(alpha, 0.1), a, c)
    assert got == pytest.approx(mixture_divergence_mp(a, c, alpha), rel=1e-6)


def test_mixture_divergence_is_model_free_and_zero_at_a0():
    spec = DivergenceSpec(2.0, 0.1)
    values = [mixture_divergence(m, spec, 0.2, 1.0) for m in SHAPE_MODELS]
    assert max(values) - min(values) == 0.0
    assert mixture_divergence(GevParams(0.0), spec, 0.0, 1.0) == 0.0


def test_feasible_weight_lies_inside_ball():
    spec = DivergenceSpec(2.0, 0.1)
    c = normalizing_constant(2.0)
    a = feasible_mixture_weight(GevParams(1 / 3), spec, c)
    assert 0 < a < 1
    assert mixture_divergence(GevParams(1 / 3), spec, a, c) <= spec.delta
    assert mixture_divergence(GevParams(1 / 3), spec, a / 0.95, c) == pytest.approx(spec.delta, rel=1e-6)


@pytest.mark.parametrize("alpha", [2.0, 1.0])
def test_lower_envelope_below_worst_case(alpha):
    model, spec = GevParams(1 / 3), DivergenceSpec(alpha, 0.1)
    c = normalizing_constant(alpha) if alpha > 1 else 1.0
    a = feasible_mixture_weight(model, spec, c)
    for x in np.logspace(2, 6, 30):
        assert lower_envelope(x, model, spec, a, c) <= worst_case_tail(x, model, spec)


def test_lower_envelope_vanishes_with_weight():
    model, spec = GevParams(1 / 3), DivergenceSpec(2.0, 0.1)
    vals = [lower_envelope(1e3, model, spec, a, 1.0) for a in (1e-2, 1e-4, 1e-8)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-12


def test_lower_envelope_rejects_infeasible_mixture():
    model, spec = GevParams(1 / 3), DivergenceSpec(2.0, 0.01)
    with pytest.raises(InfeasibleMixtureError):
        lower_envelope(1e3, model, spec, 0.9, normalizing_constant(2.0))


def test_lower_envelope_validates_inputs():
    spec = DivergenceSpec(2.0, 0.1)
    with pytest.raises(ValueError):
        lower_envelope(1e3, GevParams(1 / 3), spec, 1.5, 1.0)
    with pytest.raises(ValueError):
        lower_envelope(1e3, GevParams(1 / 3), spec, 0.5, -1.0)
