"""Tensor-product sieves on [0,1]^{d+1}.

Two families:

* "pp"   piecewise polynomials: per dyadic cell, shifted Legendre polynomials
         orthonormalized against Lebesgue measure, degree l_i per axis;
* "haar" Haar wavelets: scaling function plus wavelet levels 0..m_i-1 per
         axis (2^{m_i} functions per axis, one vanishing moment).

Axis 0 is time, axes 1..d are covariates.  A spec with resolution vector m
and degree vector l spans D_m = prod 2^{m_i} (l_i+1) functions for "pp" and
prod 2^{m_i} for "haar"; the basis is orthonormal in L2(Lebesgue), which the
tests verify by quadrature.  Coefficient vectors are laid out canonically as
the row-major ravel over per-axis indices (per-axis index = cell*(l+1)+degree
for "pp", wavelet index 0 / 2^j + k for "haar").
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .core import IntensityModel, gauss_legendre
from .errors import CapExceeded, InvalidConfig, InvalidSpec

SPAN_CAP = 10**6

PIECEWISE_POLY = "pp"
HAAR = "haar"


# ---------------------------------------------------------------------------
# spec and collection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SieveSpec:
    """Description of one tensor-product basis."""

    family: str
    d: int
    m: tuple[int, ...]
    l: tuple[int, ...]
    clip: float

    def __post_init__(self):
        if self.family not in (PIECEWISE_POLY, HAAR):
            raise InvalidSpec(f"unknown family {self.family!r}")
        if self.d < 0:
            raise InvalidSpec("covariate dimension must be >= 0")
        k = self.d + 1
        if len(self.m) != k or len(self.l) != k:
            raise InvalidSpec(f"m and l must have length d+1 = {k}, got {self.m} / {self.l}")
        if any(mi < 0 for mi in self.m):
            raise InvalidSpec("resolutions must be nonnegative")
        if self.family == HAAR and any(li != 1 for li in self.l):
            raise InvalidSpec("the Haar family has one vanishing moment; l must be all ones")
        if self.family == PIECEWISE_POLY and any(li < 0 for li in self.l):
            raise InvalidSpec("degrees must be nonnegative")
        if not (self.clip > 0.0 and math.isfinite(self.clip)):
            raise InvalidSpec(f"clip bound must be positive and finite, got {self.clip}")

    @property
    def axis_sizes(self) -> tuple[int, ...]:
        if self.family == PIECEWISE_POLY:
            return tuple(2**mi * (li + 1) for mi, li in zip(self.m, self.l))
        return tuple(2**mi for mi in self.m)

    @property
    def dimension(self) -> int:
        out = 1
        for s in self.axis_sizes:
            out *= s
        return out

    def to_obj(self) -> dict:
        return {
            "family": self.family,
            "d": self.d,
            "m": list(self.m),
            "l": list(self.l),
            "clip": self.clip,
        }

    @staticmethod
    def from_obj(obj: dict) -> "SieveSpec":
        try:
            return SieveSpec(
                family=str(obj["family"]),
                d=int(obj["d"]),
                m=tuple(int(v) for v in obj["m"]),
                l=tuple(int(v) for v in obj["l"]),
                clip=float(obj["clip"]),
            )
        except KeyError as e:
            raise InvalidSpec(f"sieve spec JSON missing field {e}") from e


@dataclass(frozen=True)
class ModelCollection:
    """All resolution vectors admissible at sample size n."""

    specs: tuple[SieveSpec, ...]
    n: int


def build_collection(
    n: int,
    d: int,
    family: str = PIECEWISE_POLY,
    l: Sequence[int] | None = None,
    clip: float = 1.0,
) -> ModelCollection:
    """Every m in N^{d+1} with 2^{m_i} <= n^{1/(d+1)}, in lexicographic order."""
    if n < 2:
        raise InvalidConfig(f"collection needs n >= 2, got {n}")
    k = d + 1
    mmax = 0
    while 2 ** ((mmax + 1) * k) <= n:
        mmax += 1
    ls = tuple(l) if l is not None else tuple([1] * k)
    specs = tuple(
        SieveSpec(family=family, d=d, m=mv, l=ls, clip=clip)
        for mv in itertools.product(range(mmax + 1), repeat=k)
    )
    return ModelCollection(specs=specs, n=n)


def linf_index_bound(spec: SieveSpec) -> float:
    """Upper bound on the sup-norm/coefficient index of the span.

    Piecewise polynomials: (prod (l_i+1)(2l_i+1))^{1/2}.  Haar: 1.0 -- the
    span equals the piecewise constants on the finest dyadic grid, whose
    normalized cell indicators have pairwise disjoint supports, and the index
    is the infimum over orthonormal bases of the span.
    """
    if spec.family == HAAR:
        return 1.0
    out = 1.0
    for li in spec.l:
        out *= (li + 1) * (2 * li + 1)
    return math.sqrt(out)


# ---------------------------------------------------------------------------
# one-dimensional axis bases
# ---------------------------------------------------------------------------


def legendre_orthonormal(s: np.ndarray, lmax: int) -> np.ndarray:
    """(k, lmax+1) values at s in [0,1] of the shifted Legendre system.

    Row p is sqrt(2p+1) P_p(2s-1): orthonormal on [0,1] under Lebesgue.
    """
    s = np.asarray(s, dtype=np.float64)
    z = 2.0 * s - 1.0
    out = np.empty(s.shape + (lmax + 1,))
    out[..., 0] = 1.0
    if lmax >= 1:
        out[..., 1] = z
    for p in range(1, lmax):
        out[..., p + 1] = ((2 * p + 1) * z * out[..., p] - p * out[..., p - 1]) / (p + 1)
    scale = np.sqrt(2.0 * np.arange(lmax + 1) + 1.0)
    return out * scale


class PolyAxis:
    """Per-cell shifted Legendre system at dyadic resolution m, degree l."""

    def __init__(self, m: int, l: int):
        self.m = m
        self.l = l
        self.cells = 2**m
        self.size = self.cells * (l + 1)
        self.scale = math.sqrt(self.cells)
        self.nnz = l + 1

    @property
    def breakpoints(self) -> np.ndarray:
        return np.arange(1, self.cells) / self.cells

    def locate(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=np.float64)
        c = np.clip(np.floor(u * self.cells).astype(np.int64), 0, self.cells - 1)
        return c, u * self.cells - c

    def eval_sparse(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Indices and values of the l+1 functions alive at each point."""
        c, s = self.locate(u)
        idx = c[:, None] * (self.l + 1) + np.arange(self.l + 1)[None, :]
        val = self.scale * legendre_orthonormal(s, self.l)
        return idx, val

    def eval_dense(self, u: np.ndarray) -> np.ndarray:
        idx, val = self.eval_sparse(u)
        out = np.zeros((u.shape[0], self.size))
        np.put_along_axis(out, idx, val, axis=1)
        return out

    def eval_one(self, j: int, u: np.ndarray) -> np.ndarray:
        cell, p = divmod(j, self.l + 1)
        u = np.asarray(u, dtype=np.float64)
        lo, hi = cell / self.cells, (cell + 1) / self.cells
        inside = (u >= lo) & (u <= hi)
        s = np.clip(u * self.cells - cell, 0.0, 1.0)
        vals = self.scale * legendre_orthonormal(s, self.l)[..., p]
        return np.where(inside, vals, 0.0)

    def support(self, j: int) -> tuple[float, float]:
        cell = j // (self.l + 1)
        return cell / self.cells, (cell + 1) / self.cells

    def function_breakpoints(self, j: int) -> np.ndarray:
        return np.asarray(self.support(j))


class HaarAxis:
    """Haar system up to level m: scaling function + wavelet levels 0..m-1."""

    def __init__(self, m: int):
        self.m = m
        self.size = 2**m
        self.cells = 2**m
        self.nnz = m + 1

    @property
    def breakpoints(self) -> np.ndarray:
        return np.arange(1, self.cells) / self.cells

    def eval_sparse(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=np.float64)
        k = u.shape[0]
        idx = np.zeros((k, self.m + 1), dtype=np.int64)
        val = np.zeros((k, self.m + 1))
        val[:, 0] = 1.0
        for j in range(self.m):
            nj = 2**j
            kj = np.clip(np.floor(u * nj).astype(np.int64), 0, nj - 1)
            frac = u * nj - kj
            sign = np.where(frac < 0.5, 1.0, -1.0)
            idx[:, j + 1] = nj + kj
            val[:, j + 1] = sign * math.sqrt(nj)
        return idx, val

    def eval_dense(self, u: np.ndarray) -> np.ndarray:
        idx, val = self.eval_sparse(u)
        out = np.zeros((u.shape[0], self.size))
        np.put_along_axis(out, idx, val, axis=1)
        return out

    def eval_one(self, j: int, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if j == 0:
            return np.ones_like(u)
        level = j.bit_length() - 1
        k = j - 2**level
        nj = 2**level
        lo, hi = k / nj, (k + 1) / nj
        inside = (u >= lo) & (u <= hi)
        frac = np.clip(u * nj - k, 0.0, 1.0)
        sign = np.where(frac < 0.5, 1.0, -1.0)
        return np.where(inside, sign * math.sqrt(nj), 0.0)

    def support(self, j: int) -> tuple[float, float]:
        if j == 0:
            return 0.0, 1.0
        level = j.bit_length() - 1
        k = j - 2**level
        nj = 2**level
        return k / nj, (k + 1) / nj

    def function_breakpoints(self, j: int) -> np.ndarray:
        lo, hi = self.support(j)
        return np.asarray([lo, 0.5 * (lo + hi), hi])


def make_axes(spec: SieveSpec) -> list[PolyAxis | HaarAxis]:
    if spec.family == PIECEWISE_POLY:
        return [PolyAxis(mi, li) for mi, li in zip(spec.m, spec.l)]
    return [HaarAxis(mi) for mi in spec.m]


class TensorBasis:
    """Product basis over the d+1 axes with the canonical ravel layout."""

    def __init__(self, spec: SieveSpec):
        self.spec = spec
        self.axes = make_axes(spec)
        self.sizes = spec.axis_sizes
        self.dimension = spec.dimension

    def eval_sparse(self, t: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat indices/values of every basis function alive at each (t, x)."""
        coords = [np.asarray(t, dtype=np.float64)] + [x[:, i] for i in range(self.spec.d)]
        idx = np.zeros((coords[0].shape[0], 1), dtype=np.int64)
        val = np.ones((coords[0].shape[0], 1))
        for axis, u, size in zip(self.axes, coords, self.sizes):
            ia, va = axis.eval_sparse(u)
            idx = (idx[:, :, None] * size + ia[:, None, :]).reshape(idx.shape[0], -1)
            val = (val[:, :, None] * va[:, None, :]).reshape(val.shape[0], -1)
        return idx, val


# ---------------------------------------------------------------------------
# the expansion model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SieveExpansion(IntensityModel):
    """Linear combination of the tensor basis with the canonical layout."""

    spec: SieveSpec
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.ascontiguousarray(np.asarray(self.coefficients, dtype=np.float64))
        if coef.shape != (self.spec.dimension,):
            raise InvalidSpec(
                f"coefficient vector has shape {coef.shape}, spec needs ({self.spec.dimension},)"
            )
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    @property
    def d(self) -> int:  # type: ignore[override]
        return self.spec.d

    @cached_property
    def _basis(self) -> TensorBasis:
        return TensorBasis(self.spec)

    def values(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        idx, val = self._basis.eval_sparse(np.asarray(t, dtype=np.float64), np.asarray(x))
        return np.sum(np.take(self.coefficients, idx) * val, axis=1)

    def time_breakpoints(self) -> np.ndarray:
        return self._basis.axes[0].breakpoints

    def axis_breakpoints(self, axis: int) -> np.ndarray:
        return self._basis.axes[axis].breakpoints


# ---------------------------------------------------------------------------
# enumerated basis functions (test/verification surface)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisFunction:
    """One member of the tensor basis with its declared geometry."""

    index: int
    axis_indices: tuple[int, ...]
    support: tuple[tuple[float, float], ...]
    axis_breakpoints: tuple[tuple[float, ...], ...]
    _axes: tuple

    def __call__(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = self._axes[0].eval_one(self.axis_indices[0], t)
        for k, axis in enumerate(self._axes[1:]):
            out = out * axis.eval_one(self.axis_indices[k + 1], x[:, k])
        return out


def basis_functions(spec: SieveSpec, cap: int = SPAN_CAP) -> tuple[BasisFunction, ...]:
    """The D_m basis functions with supports and per-axis breakpoints."""
    if spec.dimension > cap:
        raise CapExceeded(
            f"basis of dimension {spec.dimension} exceeds the cap {cap}",
            required=spec.dimension,
            cap=cap,
        )
    axes = tuple(make_axes(spec))
    sizes = spec.axis_sizes
    out = []
    for flat in range(spec.dimension):
        ai = np.unravel_index(flat, sizes)
        out.append(
            BasisFunction(
                index=flat,
                axis_indices=tuple(int(v) for v in ai),
                support=tuple(axes[k].support(int(ai[k])) for k in range(len(axes))),
                axis_breakpoints=tuple(
                    tuple(float(b) for b in axes[k].function_breakpoints(int(ai[k])))
                    for k in range(len(axes))
                ),
                _axes=axes,
            )
        )
    return tuple(out)


# ---------------------------------------------------------------------------
# L2 projection (bias studies)
# ---------------------------------------------------------------------------


def _axis_quadrature(axis, quad_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0,1] subdivided at the axis's dyadic cells."""
    z, gw = gauss_legendre(quad_nodes)
    cells = axis.cells
    edges = np.arange(cells + 1) / cells
    half = 0.5 / cells
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half * z[None, :]).ravel()
    weights = np.tile(gw * half, cells)
    return nodes, weights


def l2_project(
    spec: SieveSpec,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    quad_nodes: int,
) -> np.ndarray:
    """Lebesgue-L2 projection coefficients of f onto the span, canonical layout.

    f must accept (t, x) arrays like an intensity model.  Per-cell tensor
    Gauss-Legendre quadrature; quad_nodes is per axis per cell.
    """
    lmax = max(spec.l) if spec.family == PIECEWISE_POLY else 1
    if quad_nodes < lmax + 1:
        raise InvalidConfig(
            f"quad_nodes = {quad_nodes} too small for degree {lmax}; need >= {lmax + 1}"
        )
    if spec.dimension > SPAN_CAP:
        raise CapExceeded(
            f"projection dimension {spec.dimension} exceeds the cap {SPAN_CAP}",
            required=spec.dimension,
            cap=SPAN_CAP,
        )
    basis = TensorBasis(spec)
    axes = basis.axes
    nodes, weights, mats = [], [], []
    for axis in axes:
        u, w = _axis_quadrature(axis, quad_nodes)
        nodes.append(u)
        weights.append(w)
        mats.append(axis.eval_dense(u) * w[:, None])
    grids = np.meshgrid(*nodes, indexing="ij")
    tg = grids[0].ravel()
    xg = (
        np.stack([g.ravel() for g in grids[1:]], axis=1)
        if spec.d > 0
        else np.zeros((tg.shape[0], 0))
    )
    fv = np.asarray(f(tg, xg), dtype=np.float64).reshape([len(u) for u in nodes])
    coef = fv
    for mat in mats:
        coef = np.tensordot(coef, mat, axes=([0], [0]))
    return coef.ravel()


def l2_projection_error(
    spec: SieveSpec,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    quad_nodes: int,
) -> float:
    """L2(Lebesgue) distance from f to its projection onto the span.

    Integrates the squared residual pointwise rather than using Pythagoras,
    which cancels catastrophically when f is close to the span.
    """
    coef = l2_project(spec, f, quad_nodes)
    basis = TensorBasis(spec)
    nodes, weights = [], []
    for axis in basis.axes:
        u, w = _axis_quadrature(axis, quad_nodes)
        nodes.append(u)
        weights.append(w)
    grids = np.meshgrid(*nodes, indexing="ij")
    tg = grids[0].ravel()
    xg = (
        np.stack([g.ravel() for g in grids[1:]], axis=1)
        if spec.d > 0
        else np.zeros((tg.shape[0], 0))
    )
    fv = np.asarray(f(tg, xg), dtype=np.float64)
    idx, val = basis.eval_sparse(tg, xg)
    resid = fv - np.sum(np.take(coef, idx) * val, axis=1)
    wflat = weights[0]
    for w in weights[1:]:
        wflat = np.multiply.outer(wflat, w)
    return math.sqrt(max(float(np.dot(wflat.ravel(), resid * resid)), 0.0))
