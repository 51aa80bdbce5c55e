import logging
import math

import numpy as np
import pytest

from hazsieve.core import ClosedForm, evaluate
from hazsieve.erm import fit
from hazsieve.errors import CapExceeded, DimensionMismatch, InvalidConfig
from hazsieve.sieves import ModelCollection, SieveSpec, build_collection
from hazsieve.simulate import COX_PROCESS, ScenarioConfig, simulate_scenario, single_index_truth
from hazsieve.risk import empirical_risk
from hazsieve.single_index import (
    SingleIndexModel,
    SphereNet,
    _ProjectedBasisCache,
    affine_to_unit,
    build_net,
    build_sim_dictionary,
    covering_radius,
    default_delta,
    member_risks,
    probe_directions,
    project_dataset,
)


def test_half_circle_grid_size_and_covering():
    net = build_net(2, 0.1, cap=100)
    assert net.size == math.ceil(math.pi / (2.0 * math.asin(0.05))) + 1 == 33
    pts = np.asarray(net.points)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
    assert (pts[:, -1] >= 0.0).all()
    assert covering_radius(pts, probe_directions(2)) <= 0.1 + 1e-12


def test_coarse_net_is_a_single_point():
    net = build_net(2, 2.0, cap=100)
    assert net.size == 1
    assert build_net(3, 1.5, cap=100).size == 1


def test_hemisphere_net_size_slope():
    # covering numbers scale like 1/delta^{d-1}; d = 3 gives slope -2
    deltas = [0.4, 0.2, 0.1, 0.05]
    sizes = [build_net(3, delta, cap=20_000).size for delta in deltas]
    slope = np.polyfit(np.log(deltas), np.log(sizes), 1)[0]
    assert -2.6 <= slope <= -1.4
    for delta, size in zip(deltas, sizes):
        net = build_net(3, delta, cap=20_000)
        assert covering_radius(np.asarray(net.points), probe_directions(3)) <= delta + 1e-12
        assert size == net.size


def test_higher_dimension_net_is_probe_verified():
    net = build_net(4, 0.8, cap=5_000)
    pts = np.asarray(net.points)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
    assert (pts[:, -1] >= 0.0).all()
    assert covering_radius(pts, probe_directions(4)) <= 0.8 + 1e-12


def test_build_net_guards():
    with pytest.raises(CapExceeded) as info:
        build_net(3, 0.05, cap=100)
    assert info.value.cap == 100
    assert info.value.required > 100
    with pytest.raises(InvalidConfig):
        build_net(1, 0.5, cap=10)
    with pytest.raises(InvalidConfig):
        build_net(2, 0.0, cap=10)
    with pytest.raises(InvalidConfig):
        build_net(2, 0.5, cap=0)


def test_sphere_net_validation_and_round_trip():
    net = build_net(2, 0.8, cap=50)
    again = SphereNet.from_obj(net.to_obj())
    assert again == net
    with pytest.raises(InvalidConfig):
        SphereNet(d=2, delta=0.5, points=((0.5, 0.5),))  # not unit
    with pytest.raises(InvalidConfig):
        SphereNet(d=2, delta=0.5, points=((0.0, -1.0),))  # wrong hemisphere
    with pytest.raises(DimensionMismatch):
        SphereNet(d=3, delta=0.5, points=((1.0, 0.0),))


def test_default_delta():
    assert default_delta(100) == pytest.approx(1.0 / math.sqrt(100 * math.log(100)))
    with pytest.raises(InvalidConfig):
        default_delta(1)


def test_project_dataset_affine_arithmetic():
    cfg = ScenarioConfig(
        kind=COX_PROCESS, d=2, n=20, seed=4, truth=single_index_truth((0.6, 0.8))
    )
    data = simulate_scenario(cfg)
    v = (1.0 / math.sqrt(2.0),) * 2
    projected = project_dataset(data, v)
    assert projected.d == 1
    for rec, orig in zip(projected.records, data.records):
        u = v[0] * orig.x[0] + v[1] * orig.x[1]
        want = (u + math.sqrt(2.0)) / (2.0 * math.sqrt(2.0))
        assert rec.x[0] == pytest.approx(want, abs=1e-15)
        assert rec.events == orig.events
        assert rec.at_risk == orig.at_risk
    # the worked example: x = (0.5, 0.5) projects to 1/sqrt(2), squeezed to 0.75
    assert affine_to_unit(1.0 / math.sqrt(2.0), 2) == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        project_dataset(data, (1.0,))
    with pytest.raises(InvalidConfig):
        project_dataset(data, (0.5, 0.5))


def test_wrapped_model_matches_inner_composition():
    inner = ClosedForm(
        fn=lambda t, x: 0.5 + x[:, 0] ** 2 + 0.25 * np.asarray(t), d=1,
        description="quadratic link",
    )
    v = (0.6, 0.8)
    model = SingleIndexModel(v=v, inner=inner)
    assert model.d == 2
    rng = np.random.default_rng(5)
    for _ in range(50):
        t = float(rng.uniform())
        x = tuple(rng.uniform(size=2))
        u = v[0] * x[0] + v[1] * x[1]
        want = evaluate(inner, t, (affine_to_unit(u, 2),))
        assert abs(evaluate(model, t, x) - want) <= 1e-14
    with pytest.raises(InvalidConfig):
        SingleIndexModel(v=(0.5, 0.5), inner=inner)
    with pytest.raises(InvalidConfig):
        SingleIndexModel(v=(0.6, 0.8), inner=ClosedForm(fn=lambda t, x: t, d=2))


def test_build_sim_dictionary_product_and_skip(caplog):
    cfg = ScenarioConfig(
        kind=COX_PROCESS, d=2, n=300, seed=12, truth=single_index_truth((0.6, 0.8))
    )
    training = simulate_scenario(cfg)
    net = build_net(2, 1.2, cap=10)
    collection = build_collection(16, 1, clip=2.0)
    dictionary = build_sim_dictionary(training, net, collection)
    assert len(dictionary) == net.size * len(collection.specs)
    directions = {m.v for m in dictionary}
    assert directions == set(net.points)
    for member in dictionary:
        assert member.d == 2
        val = evaluate(member, 0.4, (0.3, 0.9))
        assert 0.0 <= val <= 2.0  # clip carries through the wrapper

    lone = ModelCollection(specs=(collection.specs[0],), n=16)
    single = build_sim_dictionary(training, build_net(2, 2.0, cap=4), lone)
    assert len(single) == 1

    # an oversized span cannot be fitted; the entry is skipped with a warning
    huge = ModelCollection(
        specs=(collection.specs[0], SieveSpec(family="pp", d=1, m=(10, 10), l=(1, 1), clip=2.0)),
        n=16,
    )
    with caplog.at_level(logging.WARNING, logger="hazsieve.single_index"):
        reduced = build_sim_dictionary(training, build_net(2, 2.0, cap=4), huge)
    assert len(reduced) == 1
    assert any("skipping index fit" in rec.message for rec in caplog.records)

    with pytest.raises(InvalidConfig):
        build_sim_dictionary(training, net, build_collection(16, 2))
    with pytest.raises(DimensionMismatch):
        build_sim_dictionary(training, build_net(3, 1.0, cap=500), collection)


def test_sim_fit_tracks_an_index_truth():
    # with the true direction in the net, the wrapped 2-d fit should beat a
    # deliberately wrong direction at recovering the intensity
    v0 = (0.6, 0.8)
    cfg = ScenarioConfig(kind=COX_PROCESS, d=2, n=2_000, seed=3, truth=single_index_truth(v0))
    data = simulate_scenario(cfg)
    spec = SieveSpec(family="pp", d=1, m=(1, 2), l=(1, 1), clip=2.5)
    fit_true = fit(project_dataset(data, v0), spec)
    wrong = (1.0, 0.0)
    fit_wrong = fit(project_dataset(data, wrong), spec)
    truth = ScenarioConfig(
        kind=COX_PROCESS, d=2, n=10, seed=0, truth=single_index_truth(v0)
    )
    from hazsieve.risk import l2mu_distance_sq
    from hazsieve.simulate import scenario_mu, scenario_truth

    mu = scenario_mu(truth)
    alpha0 = scenario_truth(truth)
    err_true = l2mu_distance_sq(mu, SingleIndexModel(v=v0, inner=fit_true.model), alpha0)
    err_wrong = l2mu_distance_sq(mu, SingleIndexModel(v=wrong, inner=fit_wrong.model), alpha0)
    assert err_true < err_wrong


def test_batched_dictionary_matches_per_spec_fits():
    # the shared-basis path must reproduce fitting each projected dataset
    # separately, float for float, including every diagnostic
    cfg = ScenarioConfig(
        kind=COX_PROCESS, d=2, n=160, seed=21, truth=single_index_truth((0.6, 0.8))
    )
    data = simulate_scenario(cfg)
    net = build_net(2, 0.9, cap=16)
    specs = list(build_collection(160, 1, clip=0.8).specs)
    specs.append(SieveSpec(family="haar", d=1, m=(1, 2), l=(1, 1), clip=0.8))
    collection = ModelCollection(specs=tuple(specs), n=160)

    dictionary = build_sim_dictionary(data, net, collection, quad_nodes=3)
    assert len(dictionary) == net.size * len(specs)
    k = 0
    clipped_seen = False
    for v in net.points:
        projected = project_dataset(data, v)
        for spec in specs:
            member = dictionary[k]
            assert member.v == v
            reference = fit(projected, spec, quad_nodes=3)
            inner = member.inner.inner
            np.testing.assert_array_equal(inner.coefficients, reference.coefficients)
            assert member.inner.upper == spec.clip
            clipped_seen = clipped_seen or reference.clipped
            k += 1

    risks = member_risks(data, dictionary, quad_nodes=3)
    expected = [empirical_risk(data, m, 3) for m in dictionary]
    np.testing.assert_array_equal(risks, np.asarray(expected))
    assert clipped_seen  # clip = 0.8 is tight enough to engage somewhere


def test_batched_fit_diagnostics_match():
    cfg = ScenarioConfig(
        kind=COX_PROCESS, d=3, n=90, seed=5, truth=single_index_truth((1 / 3, 2 / 3, 2 / 3))
    )
    data = simulate_scenario(cfg)
    v = (0.0, 0.6, 0.8)
    spec = SieveSpec(family="pp", d=1, m=(2, 3), l=(1, 1), clip=1.5)
    batch = _ProjectedBasisCache(data, 4, with_gram=True)
    got = batch.fit_spec(spec, batch.direction(v), 0.0, None)
    want = fit(project_dataset(data, v), spec, quad_nodes=4)
    np.testing.assert_array_equal(got.coefficients, want.coefficients)
    assert got.achieved_risk == want.achieved_risk
    assert got.rho_certificate == want.rho_certificate
    assert got.gram_condition == want.gram_condition
    assert got.ridge_used == want.ridge_used
    assert got.clipped == want.clipped
    # high resolution on 90 records leaves empty cells; the ridge retry and
    # its condition bookkeeping must agree with the reference path too
    wide = SieveSpec(family="pp", d=1, m=(4, 4), l=(1, 1), clip=1.5)
    got_w = batch.fit_spec(wide, batch.direction(v), 0.0, None)
    want_w = fit(project_dataset(data, v), wide, quad_nodes=4)
    np.testing.assert_array_equal(got_w.coefficients, want_w.coefficients)
    assert got_w.ridge_used == want_w.ridge_used
    assert got_w.gram_condition == want_w.gram_condition


def test_member_risks_generic_fallback():
    cfg = ScenarioConfig(
        kind=COX_PROCESS, d=2, n=80, seed=9, truth=single_index_truth((0.6, 0.8))
    )
    data = simulate_scenario(cfg)
    flat = ClosedForm(fn=lambda t, x: 0.4 + 0.0 * t, d=2, sup=0.4)
    net = build_net(2, 2.0, cap=4)
    members = list(build_sim_dictionary(data, net, build_collection(16, 1, clip=2.0)))
    members.append(flat)
    risks = member_risks(data, members)
    for m, r in zip(members, risks):
        assert r == empirical_risk(data, m)
