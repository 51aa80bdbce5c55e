import json
import math

import numpy as np
import pytest

from hazsieve.core import constant_model, evaluate, gauss_legendre
from hazsieve.errors import (
    BoundViolation,
    DimensionMismatch,
    InvalidConfig,
    NonPositiveModel,
)
from hazsieve.risk import (
    bernstein_tail_check,
    l2mu_distance_sq,
    martingale_term,
)
from hazsieve.rng import uniform_block
from hazsieve.simulate import (
    CENSORED_SURVIVAL,
    COX_PROCESS,
    MARKOV_TRANSITION,
    ScenarioConfig,
    _invert_cumulative,
    aalen_truth,
    censoring_model,
    constant_censoring,
    constant_truth,
    cox_truth,
    cumulative_hazard,
    no_censoring,
    proportional_censoring,
    scenario_mu,
    scenario_truth,
    separable_truth,
    simulate_scenario,
    single_index_truth,
    truth_from_descriptor,
)

V2 = (0.6, 0.8)  # unit vector for d = 2 index families


def _survival(n, seed, truth, censoring=None, d=0):
    return ScenarioConfig(
        kind=CENSORED_SURVIVAL, d=d, n=n, seed=seed, truth=truth, censoring=censoring
    )


# ---------------------------------------------------------------------------
# truth families
# ---------------------------------------------------------------------------


def test_cumulative_hazard_matches_quadrature():
    cases = [
        (0, constant_truth(1.7)),
        (2, separable_truth()),
        (2, single_index_truth(V2)),
        (2, cox_truth((0.3, -0.2), scale=0.8, decay=1.3)),
        (2, cox_truth((0.3, -0.2), scale=0.8, decay=0.0)),
        (2, aalen_truth((0.4, 0.1), scale=0.9, decay=0.7)),
        (2, aalen_truth((0.4, 0.1), scale=0.9, decay=0.0)),
    ]
    z, w = gauss_legendre(24)
    for d, desc in cases:
        model = truth_from_descriptor(d, desc)
        cum = cumulative_hazard(d, desc)
        x = np.full((24, d), 0.37)
        for t_end in (0.2, 0.55, 1.0):
            half = 0.5 * t_end
            nodes = half + half * z
            quad = half * float(np.dot(w, model.values(nodes, x)))
            got = float(cum(np.asarray([t_end]), x[:1])[0])
            assert got == pytest.approx(quad, abs=1e-12), desc


def test_sup_bounds_dominate_grid_and_are_near_tight():
    grid = np.linspace(0.0, 1.0, 21)
    for d, desc, tight in [
        (0, constant_truth(2.5), True),
        (2, separable_truth(), True),
        (2, single_index_truth(V2), True),
        (2, cox_truth((0.3, -0.2), scale=0.8), True),
        (2, aalen_truth((0.4, 0.1), scale=0.9), True),
    ]:
        model = truth_from_descriptor(d, desc)
        sup = model.sup_bound()
        best = 0.0
        for t in grid:
            if d == 0:
                vals = model.values(np.asarray([t]), np.zeros((1, 0)))
            else:
                xa, xb = np.meshgrid(grid, grid)
                xs = np.column_stack([xa.ravel(), xb.ravel()])
                vals = model.values(np.full(len(xs), t), xs)
            assert vals.min() >= -1e-15
            assert vals.max() <= sup + 1e-12
            best = max(best, float(vals.max()))
        if tight:
            assert best >= 0.9 * sup


def test_truth_descriptor_validation():
    with pytest.raises(InvalidConfig):
        truth_from_descriptor(1, {"family": "nope"})
    with pytest.raises(InvalidConfig):
        truth_from_descriptor(0, constant_truth(-1.0))
    with pytest.raises(DimensionMismatch):
        truth_from_descriptor(2, single_index_truth((1.0,)))
    with pytest.raises(InvalidConfig):
        truth_from_descriptor(2, single_index_truth((0.9, 0.9)))  # not unit
    with pytest.raises(InvalidConfig):
        # baseline 0.1 e^{-1} cannot cover an index entry of -0.5
        truth_from_descriptor(1, aalen_truth((-0.5,), scale=0.1, decay=1.0))
    declared = dict(constant_truth(1.0), sup=3.0)
    assert truth_from_descriptor(0, declared).sup_bound() == 3.0


def test_single_index_link_is_not_constant():
    model = truth_from_descriptor(2, single_index_truth(V2))
    us = np.linspace(0.0, 1.0, 9)
    xs = np.column_stack([us, np.zeros(9)])  # sweep along the index direction
    vals = model.values(np.full(9, 0.3), xs)
    assert np.ptp(vals) > 0.1


def test_scenario_config_validation_and_round_trip():
    cfg = ScenarioConfig(
        kind=CENSORED_SURVIVAL,
        d=2,
        n=12,
        seed=9,
        truth=separable_truth(),
        censoring=constant_censoring(0.5),
    )
    obj = json.loads(json.dumps(cfg.to_obj()))
    assert obj["sup_bound"] == 1.0
    assert ScenarioConfig.from_obj(obj) == cfg

    mk = ScenarioConfig(
        kind=MARKOV_TRANSITION, d=1, n=5, seed=1, truth=separable_truth(), return_intensity=2.0
    )
    assert ScenarioConfig.from_obj(json.loads(json.dumps(mk.to_obj()))) == mk

    with pytest.raises(InvalidConfig):
        ScenarioConfig(kind="weird", d=1, n=5, seed=0, truth=constant_truth(1.0))
    with pytest.raises(InvalidConfig):
        ScenarioConfig(kind=COX_PROCESS, d=1, n=0, seed=0, truth=constant_truth(1.0))
    with pytest.raises(InvalidConfig):
        ScenarioConfig(
            kind=COX_PROCESS, d=1, n=5, seed=0, truth=constant_truth(1.0),
            censoring=no_censoring(),
        )
    with pytest.raises(InvalidConfig):
        ScenarioConfig(
            kind=COX_PROCESS, d=1, n=5, seed=0, truth=constant_truth(1.0),
            return_intensity=1.0,
        )
    with pytest.raises(InvalidConfig):
        _survival(5, 0, constant_truth(1.0), censoring={"kind": "constant", "rate": -1.0})


# ---------------------------------------------------------------------------
# hazard inversion
# ---------------------------------------------------------------------------


def test_invert_cumulative_constant_is_exact():
    lam = 1.3
    cum = lambda t, x: lam * np.asarray(t)
    targets = np.asarray([0.1, 0.9, 1.2, 5.0])
    xs = np.zeros((4, 0))
    roots = _invert_cumulative(cum, xs, targets)
    want = targets / lam
    finite = want <= 1.0
    np.testing.assert_allclose(roots[finite], want[finite], atol=1e-12)
    assert np.isinf(roots[~finite]).all()


def test_invert_cumulative_flat_stretch_is_an_error():
    cum = lambda t, x: np.minimum(np.asarray(t, dtype=float), 0.3)
    fn = lambda t, x: (np.asarray(t) < 0.3).astype(float)
    xs = np.zeros((1, 1))
    ok = _invert_cumulative(cum, xs, np.asarray([0.2]), check_fn=fn)
    assert ok[0] == pytest.approx(0.2, abs=1e-12)
    with pytest.raises(NonPositiveModel):
        _invert_cumulative(cum, xs, np.asarray([0.3]), check_fn=fn)


# ---------------------------------------------------------------------------
# censored survival
# ---------------------------------------------------------------------------


def test_survival_observed_event_probability():
    lam, mu = 1.0, 1.0
    n = 100_000
    cfg = _survival(n, 42, constant_truth(lam), constant_censoring(mu))
    data = simulate_scenario(cfg)
    p_hat = sum(1 for r in data.records if r.events) / n
    p = lam / (lam + mu) * (1.0 - math.exp(-(lam + mu)))
    se = math.sqrt(p * (1.0 - p) / n)
    assert abs(p_hat - p) <= 4.0 * se


def test_survival_at_risk_mass_mean():
    lam, n = 2.0, 100_000
    data = simulate_scenario(_survival(n, 7, constant_truth(lam)))
    masses = np.asarray([r.at_risk.mass() for r in data.records])
    want = (1.0 - math.exp(-lam)) / lam
    se = masses.std(ddof=1) / math.sqrt(n)
    assert abs(masses.mean() - want) <= 4.0 * se


def test_survival_event_times_invert_the_hazard():
    lam, n = 1.5, 200
    cfg = _survival(n, 3, constant_truth(lam))
    data = simulate_scenario(cfg)
    u = uniform_block(cfg.seed, np.arange(n, dtype=np.int64), 2)
    expected = -np.log(u[:, 0]) / lam
    for rec, want in zip(data.records, expected):
        if want <= 1.0:
            assert rec.events[0] == pytest.approx(want, abs=1e-12)
            assert rec.at_risk.mass() == pytest.approx(want, abs=1e-12)
        else:
            assert rec.events == ()
            assert rec.at_risk.mass() == 1.0


def test_survival_zero_truth_never_fires():
    data = simulate_scenario(_survival(200, 11, constant_truth(0.0)))
    assert all(r.events == () for r in data.records)
    assert all(r.at_risk.mass() == 1.0 for r in data.records)


def test_survival_closed_form_mu_matches_monte_carlo():
    lam, mu, n = 1.0, 1.0, 100_000
    cfg = _survival(n, 23, constant_truth(lam), constant_censoring(mu))
    data = simulate_scenario(cfg)
    y_half = np.asarray([r.at_risk.value(0.5) for r in data.records])
    p = math.exp(-(lam + mu) * 0.5)
    se = math.sqrt(p * (1.0 - p) / n)
    assert abs(y_half.mean() - p) <= 4.0 * se

    mu_measure = scenario_mu(cfg)
    got = mu_measure.survivor(np.asarray([0.5]), np.zeros((1, 0)))[0]
    assert got == pytest.approx(p, rel=1e-12)


def test_proportional_censoring_model_and_mu():
    cfg = _survival(50, 5, separable_truth(), proportional_censoring(0.5), d=1)
    gamma = censoring_model(cfg)
    truth = scenario_truth(cfg)
    t, x = 0.4, (0.3,)
    assert evaluate(gamma, t, x) == pytest.approx(0.5 * evaluate(truth, t, x), rel=1e-14)
    mu_measure = scenario_mu(cfg)
    cum = cumulative_hazard(1, separable_truth())
    want = math.exp(-1.5 * float(cum(np.asarray([t]), np.asarray([x]))[0]))
    got = float(mu_measure.survivor(np.asarray([t]), np.asarray([x]))[0])
    assert got == pytest.approx(want, rel=1e-12)
    assert censoring_model(_survival(5, 0, constant_truth(1.0))) is None


# ---------------------------------------------------------------------------
# Cox process
# ---------------------------------------------------------------------------


def test_cox_mean_count_constant():
    lam, n = 1.0, 100_000
    cfg = ScenarioConfig(kind=COX_PROCESS, d=0, n=n, seed=19, truth=constant_truth(lam))
    data = simulate_scenario(cfg)
    counts = np.asarray([len(r.events) for r in data.records], dtype=float)
    se = counts.std(ddof=1) / math.sqrt(n)
    assert abs(counts.mean() - lam) <= 4.0 * se
    assert all(r.at_risk.mass() == 1.0 for r in data.records)
    mu_measure = scenario_mu(cfg)
    assert mu_measure.survivor(np.asarray([0.7]), np.zeros((1, 0)))[0] == 1.0


def test_cox_mean_count_affine_covariate():
    n = 100_000
    cfg = ScenarioConfig(
        kind=COX_PROCESS, d=1, n=n, seed=29,
        truth=aalen_truth((1.0,), scale=1.0, decay=0.0),  # intensity 1 + x
    )
    data = simulate_scenario(cfg)
    counts = np.asarray([len(r.events) for r in data.records], dtype=float)
    se = counts.std(ddof=1) / math.sqrt(n)
    assert abs(counts.mean() - 1.5) <= 4.0 * se


def test_cox_zero_truth_and_event_ordering():
    cfg = ScenarioConfig(kind=COX_PROCESS, d=0, n=300, seed=3, truth=constant_truth(0.0))
    assert all(r.events == () for r in simulate_scenario(cfg).records)
    busy = simulate_scenario(
        ScenarioConfig(kind=COX_PROCESS, d=0, n=2000, seed=13, truth=constant_truth(3.0))
    )
    assert max(len(r.events) for r in busy.records) >= 2
    for r in busy.records:
        assert all(a < b for a, b in zip(r.events, r.events[1:]))


def test_cox_declared_bound_violation():
    lying = dict(constant_truth(2.0), sup=1.0)
    cfg = ScenarioConfig(kind=COX_PROCESS, d=0, n=50, seed=1, truth=lying)
    with pytest.raises(BoundViolation):
        simulate_scenario(cfg)


# ---------------------------------------------------------------------------
# two-state transitions
# ---------------------------------------------------------------------------


def test_markov_absorbing_reduces_to_survival():
    lam, n = 2.0, 10_000
    cfg = ScenarioConfig(kind=MARKOV_TRANSITION, d=0, n=n, seed=17, truth=constant_truth(lam))
    data = simulate_scenario(cfg)
    p_hat = sum(1 for r in data.records if r.events) / n
    p = 1.0 - math.exp(-lam)
    se = math.sqrt(p * (1.0 - p) / n)
    assert abs(p_hat - p) <= 4.0 * se
    for r in data.records:
        assert len(r.events) <= 1
        if r.events:
            # at risk exactly while in state 1, i.e. up to the transition
            assert r.at_risk.mass() == pytest.approx(r.events[0], abs=1e-12)
        else:
            assert r.at_risk.mass() == 1.0


def test_markov_zero_truth_stays_at_risk():
    cfg = ScenarioConfig(kind=MARKOV_TRANSITION, d=0, n=100, seed=2, truth=constant_truth(0.0))
    for r in simulate_scenario(cfg).records:
        assert r.events == ()
        assert r.at_risk.mass() == 1.0


def test_markov_returns_allow_repeat_events():
    cfg = ScenarioConfig(
        kind=MARKOV_TRANSITION, d=0, n=10_000, seed=31,
        truth=constant_truth(3.0), return_intensity=3.0,
    )
    data = simulate_scenario(cfg)
    assert max(len(r.events) for r in data.records) >= 2
    for r in data.records:
        piece_ends = [iv.end for iv, _ in r.at_risk.pieces]
        for s in r.events:  # every event closes an at-risk stretch
            assert any(abs(s - e) <= 1e-15 for e in piece_ends)
        assert r.at_risk.mass() <= 1.0 + 1e-12
    assert scenario_mu(cfg) is None


# ---------------------------------------------------------------------------
# cross-cutting invariants
# ---------------------------------------------------------------------------


def test_determinism_and_prefix_stability():
    big = _survival(40, 99, separable_truth(), constant_censoring(0.3), d=2)
    once = simulate_scenario(big)
    again = simulate_scenario(big)
    assert once == again
    small = simulate_scenario(
        _survival(25, 99, separable_truth(), constant_censoring(0.3), d=2)
    )
    assert small.records == once.records[:25]  # per-record streams never interact


def test_martingale_term_centers_at_zero():
    cfg = _survival(50, 0, constant_truth(1.2), constant_censoring(0.5))
    truth = scenario_truth(cfg)
    test_model = constant_model(0.7, 0)
    from dataclasses import replace

    zs = []
    for rep in range(200):
        data = simulate_scenario(replace(cfg, seed=1000 + rep))
        zs.append(martingale_term(data, test_model, truth))
    zs = np.asarray(zs)
    assert abs(zs.mean()) <= 4.0 * zs.std(ddof=1) / math.sqrt(len(zs))


def test_closed_form_mu_agrees_with_empirical_mu():
    from hazsieve.core import EmpiricalMu

    cfg = _survival(20_000, 8, separable_truth(), constant_censoring(0.4), d=1)
    data = simulate_scenario(cfg)
    a = truth_from_descriptor(1, separable_truth())
    b = constant_model(0.8, 1)
    closed = l2mu_distance_sq(scenario_mu(cfg), a, b)
    empirical = l2mu_distance_sq(EmpiricalMu(data), a, b)
    assert abs(closed - empirical) <= 6e-3


def test_bernstein_tail_check_runs_end_to_end():
    cfg = ScenarioConfig(kind=COX_PROCESS, d=0, n=15, seed=5, truth=constant_truth(1.0))
    rows = bernstein_tail_check(cfg, constant_model(0.6, 0), [0.2, 0.6, 1.2], 150, seed=77)
    assert len(rows) == 3
    bounds = [r.bound for r in rows]
    assert all(b1 > b2 for b1, b2 in zip(bounds, bounds[1:]))
    for row in rows:
        assert 0.0 <= row.mc_tail <= 1.0
        assert row.mc_tail <= row.bound + 4.0 * row.mc_se + 0.05
