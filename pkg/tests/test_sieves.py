import math

import numpy as np
import pytest

from hazsieve.core import gauss_legendre
from hazsieve.errors import CapExceeded, InvalidConfig, InvalidSpec
from hazsieve.sieves import (
    HaarAxis,
    PolyAxis,
    SieveExpansion,
    SieveSpec,
    TensorBasis,
    basis_functions,
    build_collection,
    l2_project,
    l2_projection_error,
    legendre_orthonormal,
    linf_index_bound,
)


def axis_gram(axis, quad_nodes):
    z, gw = gauss_legendre(quad_nodes)
    edges = np.arange(axis.cells + 1) / axis.cells
    mid, half = 0.5 * (edges[:-1] + edges[1:]), 0.5 / axis.cells
    u = (mid[:, None] + half * z[None, :]).ravel()
    w = np.tile(gw * half, axis.cells)
    dense = axis.eval_dense(u)
    return dense.T @ (dense * w[:, None])


def dense_tensor_eval(basis, t, x):
    idx, val = basis.eval_sparse(t, x)
    out = np.zeros((t.shape[0], basis.dimension))
    np.add.at(out, (np.arange(t.shape[0])[:, None], idx), val)
    return out


def test_legendre_orthonormal_recurrence_matches_numpy():
    rng = np.random.default_rng(0)
    s = rng.uniform(0.0, 1.0, size=50)
    vals = legendre_orthonormal(s, 5)
    for p in range(6):
        want = math.sqrt(2 * p + 1) * np.polynomial.legendre.Legendre.basis(p)(2 * s - 1)
        np.testing.assert_allclose(vals[:, p], want, atol=1e-12)


def test_poly_axis_orthonormal():
    for m, l in [(0, 0), (0, 3), (1, 2), (2, 1), (3, 0)]:
        axis = PolyAxis(m, l)
        np.testing.assert_allclose(axis_gram(axis, l + 1), np.eye(axis.size), atol=1e-12)


def test_haar_axis_orthonormal():
    # every Haar function up to level m-1 is constant on the 2^-m cells
    for m in range(4):
        axis = HaarAxis(m)
        np.testing.assert_allclose(axis_gram(axis, 2), np.eye(axis.size), atol=1e-12)


def test_eval_one_matches_dense_columns():
    rng = np.random.default_rng(1)
    u = rng.uniform(0.01, 0.99, size=200)
    for axis in (PolyAxis(2, 2), HaarAxis(3)):
        dense = axis.eval_dense(u)
        for j in range(axis.size):
            np.testing.assert_allclose(axis.eval_one(j, u), dense[:, j], atol=1e-12)


def test_axis_evaluation_at_the_right_edge():
    # u = 1 must fall in the last cell, not out of range
    axis = PolyAxis(1, 1)
    idx, val = axis.eval_sparse(np.asarray([1.0]))
    assert idx[0, 0] == 2
    np.testing.assert_allclose(val[0], [math.sqrt(2), math.sqrt(6)])
    h = HaarAxis(2)
    _, hv = h.eval_sparse(np.asarray([1.0]))
    assert np.all(np.isfinite(hv))


def test_tensor_layout_matches_enumerated_functions():
    rng = np.random.default_rng(2)
    for spec in (
        SieveSpec("pp", 1, (1, 1), (2, 1), 5.0),
        SieveSpec("haar", 2, (1, 2, 0), (1, 1, 1), 5.0),
    ):
        theta = rng.normal(size=spec.dimension)
        model = SieveExpansion(spec, theta)
        funcs = basis_functions(spec)
        t = rng.uniform(0.01, 0.99, size=64)
        x = rng.uniform(0.01, 0.99, size=(64, spec.d))
        brute = sum(theta[f.index] * f(t, x) for f in funcs)
        np.testing.assert_allclose(model.values(t, x), brute, atol=1e-12)


def test_full_tensor_gram_is_identity():
    for spec, qn in (
        (SieveSpec("pp", 1, (1, 0), (1, 2), 1.0), 3),
        (SieveSpec("haar", 1, (2, 1), (1, 1), 1.0), 2),
    ):
        basis = TensorBasis(spec)
        nodes, weights = [], []
        for axis in basis.axes:
            z, gw = gauss_legendre(qn)
            edges = np.arange(axis.cells + 1) / axis.cells
            mid, half = 0.5 * (edges[:-1] + edges[1:]), 0.5 / axis.cells
            nodes.append((mid[:, None] + half * z[None, :]).ravel())
            weights.append(np.tile(gw * half, axis.cells))
        tt, xx = np.meshgrid(nodes[0], nodes[1], indexing="ij")
        ww = np.outer(weights[0], weights[1]).ravel()
        mat = dense_tensor_eval(basis, tt.ravel(), xx.ravel()[:, None])
        gram = mat.T @ (mat * ww[:, None])
        np.testing.assert_allclose(gram, np.eye(spec.dimension), atol=1e-12)


def test_expansion_breakpoints_and_boundary_value():
    spec = SieveSpec("pp", 1, (2, 1), (1, 1), 1.0)
    model = SieveExpansion(spec, np.zeros(spec.dimension))
    np.testing.assert_allclose(model.time_breakpoints(), [0.25, 0.5, 0.75])
    np.testing.assert_allclose(model.axis_breakpoints(1), [0.5])

    # value at t=1 comes from the last cell evaluated at its right corner
    spec0 = SieveSpec("pp", 0, (1,), (1,), 1.0)
    a, b = 0.7, -0.2
    model0 = SieveExpansion(spec0, np.asarray([0.0, 0.0, a, b]))
    want = a * math.sqrt(2) + b * math.sqrt(6)
    assert model0.evaluate(1.0, ()) == pytest.approx(want, abs=1e-14)
    # interior dyadic points belong to the cell on their right
    model_left = SieveExpansion(spec0, np.asarray([1.0, 0.0, 0.0, 0.0]))
    assert model_left.evaluate(0.5, ()) == 0.0
    assert model_left.evaluate(0.5 - 1e-9, ()) == pytest.approx(math.sqrt(2))


def test_expansion_validates_coefficients():
    spec = SieveSpec("pp", 0, (1,), (1,), 1.0)
    with pytest.raises(InvalidSpec):
        SieveExpansion(spec, np.zeros(3))
    model = SieveExpansion(spec, np.zeros(4))
    with pytest.raises(ValueError):
        model.coefficients[0] = 1.0


def test_l2_project_recovers_span_members():
    rng = np.random.default_rng(3)
    for spec in (
        SieveSpec("pp", 1, (1, 1), (2, 1), 1.0),
        SieveSpec("haar", 1, (2, 1), (1, 1), 1.0),
    ):
        theta = rng.normal(size=spec.dimension)
        model = SieveExpansion(spec, theta)
        back = l2_project(spec, model.values, quad_nodes=4)
        np.testing.assert_allclose(back, theta, atol=1e-12)


def test_l2_project_hand_values():
    # f(t) = t against {1, sqrt(3)(2t-1)}: coefficients 1/2 and 1/(2 sqrt(3))
    spec = SieveSpec("pp", 0, (0,), (1,), 1.0)
    coef = l2_project(spec, lambda t, x: t, quad_nodes=4)
    np.testing.assert_allclose(coef, [0.5, 0.5 / math.sqrt(3)], atol=1e-15)


def test_l2_projection_error_hand_value():
    # best constant for f(t) = t is 1/2; the L2 error is sqrt(1/12)
    got = l2_projection_error(SieveSpec("haar", 0, (0,), (1,), 1.0), lambda t, x: t, 4)
    assert got == pytest.approx(math.sqrt(1.0 / 12.0), abs=1e-13)
    inspan = l2_projection_error(SieveSpec("pp", 0, (0,), (1,), 1.0), lambda t, x: t, 4)
    assert inspan < 1e-13


def test_projection_error_decays_like_h_squared():
    f = lambda t, x: np.sin(2 * np.pi * t)
    errs = [
        l2_projection_error(SieveSpec("pp", 0, (m,), (1,), 1.0), f, 8) for m in range(1, 5)
    ]
    for a, b in zip(errs[:-1], errs[1:]):
        assert 0.15 < b / a < 0.4  # piecewise linear: halving h divides the error by ~4


def test_l2_project_rejects_thin_quadrature():
    spec = SieveSpec("pp", 0, (1,), (2,), 1.0)
    with pytest.raises(InvalidConfig):
        l2_project(spec, lambda t, x: t, quad_nodes=2)


def test_build_collection_enumerates_admissible_resolutions():
    col = build_collection(16, d=1)
    assert len(col.specs) == 9  # 2^m <= 16^(1/2) = 4 per axis
    assert [s.m for s in col.specs] == [
        (0, 0), (0, 1), (0, 2),
        (1, 0), (1, 1), (1, 2),
        (2, 0), (2, 1), (2, 2),
    ]
    assert all(s.family == "pp" and s.l == (1, 1) and s.clip == 1.0 for s in col.specs)

    # 2^(2*2) = 16 > 15 so resolution 2 is out
    assert len(build_collection(15, d=1).specs) == 4
    assert len(build_collection(2, d=0, family="haar").specs) == 2
    with pytest.raises(InvalidConfig):
        build_collection(1, d=1)


def test_linf_index_bound_values():
    assert linf_index_bound(SieveSpec("pp", 1, (2, 3), (1, 1), 1.0)) == pytest.approx(6.0)
    assert linf_index_bound(SieveSpec("haar", 1, (2, 3), (1, 1), 1.0)) == 1.0


def test_linf_index_bound_dominates_brute_force():
    # the index is sup_(t,x) |psi(t,x)|_2 / sqrt(D); grids include cell corners
    for spec in (
        SieveSpec("pp", 1, (1, 1), (1, 1), 1.0),
        SieveSpec("pp", 1, (0, 2), (2, 1), 1.0),
        SieveSpec("haar", 1, (2, 2), (1, 1), 1.0),
    ):
        basis = TensorBasis(spec)
        u = np.linspace(0.0, 1.0, 65)
        tt, xx = np.meshgrid(u, u, indexing="ij")
        mat = dense_tensor_eval(basis, tt.ravel(), xx.ravel()[:, None])
        index = float(np.max(np.linalg.norm(mat, axis=1))) / math.sqrt(spec.dimension)
        assert index <= linf_index_bound(spec) + 1e-9
        if spec.family == "haar":
            # one wavelet per level is alive everywhere: |psi|_2^2 telescopes to D
            assert index == pytest.approx(1.0, abs=1e-12)
        if spec.family == "pp" and spec.l == (1, 1):
            assert index == pytest.approx(2.0, abs=1e-9)


def test_cap_exceeded_carries_sizes():
    spec = SieveSpec("pp", 0, (21,), (1,), 1.0)
    with pytest.raises(CapExceeded) as e:
        basis_functions(spec)
    assert e.value.required == spec.dimension
    assert e.value.cap == 10**6
    with pytest.raises(CapExceeded):
        l2_project(spec, lambda t, x: t, quad_nodes=4)


def test_spec_validation_and_json_round_trip():
    with pytest.raises(InvalidSpec):
        SieveSpec("haar", 0, (1,), (2,), 1.0)
    with pytest.raises(InvalidSpec):
        SieveSpec("pp", 0, (-1,), (1,), 1.0)
    with pytest.raises(InvalidSpec):
        SieveSpec("pp", 0, (1,), (1,), 0.0)
    with pytest.raises(InvalidSpec):
        SieveSpec("pp", 1, (1,), (1,), 1.0)
    with pytest.raises(InvalidSpec):
        SieveSpec("spline", 0, (1,), (1,), 1.0)

    spec = SieveSpec("pp", 2, (1, 0, 2), (1, 3, 0), 2.5)
    assert SieveSpec.from_obj(spec.to_obj()) == spec
    assert spec.dimension == (2 * 2) * (1 * 4) * (4 * 1)
    with pytest.raises(InvalidSpec):
        SieveSpec.from_obj({"family": "pp"})
