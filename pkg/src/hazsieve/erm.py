"""Empirical risk minimization over a tensor sieve.

For alpha = sum_lambda theta_lambda psi_lambda the empirical risk is the
quadratic theta' G theta - 2 theta' c with

    G[l, l'] = (1/n) sum_i int psi_l psi_l' (t, X_i) Y^i(t) dt
    c[l]     = (1/n) sum_i sum_{events s} psi_l(s, X_i)

Piecewise-polynomial sieves make G block diagonal: every basis function lives
on one tensor cell, and a sample point only touches the cell containing it.
Assembly therefore factorizes per record into (per-time-cell Gram of the time
polynomials against Y^i) x (rank-one outer product of the covariate basis at
X_i), accumulated per joint cell. Haar sieves overlap across scales, so they
assemble into a general sparse matrix instead.

The solver clips the minimizer pointwise to [0, clip] rather than solving the
sup-norm-constrained program; the realized risk slack of that shortcut is
reported per fit as rho_certificate = risk(clipped) - risk(unclipped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import DEFAULT_QUAD_NODES, Clipped, Dataset, IntensityModel
from .errors import CapExceeded, EmptyDataset, InvalidConfig, SingularGram
from .risk import empirical_risk
from .sieves import (
    PIECEWISE_POLY,
    SPAN_CAP,
    SieveExpansion,
    SieveSpec,
    TensorBasis,
)

COND_RIDGE_TRIGGER = 1e12
RIDGE_SCALE = 1e-10
RESIDUAL_TOL = 1e-8
DENSE_COND_LIMIT = 4096


@dataclass(frozen=True)
class ErmFit:
    """An ERM solution with its diagnostics.

    rho_certificate = achieved_risk - empirical risk of the unclipped
    minimizer; it upper-bounds the slack relative to the clipped span and is
    exactly 0.0 whenever the solution never leaves [0, clip].
    """

    spec: SieveSpec
    coefficients: np.ndarray
    gram_condition: float
    achieved_risk: float
    rho_certificate: float
    clipped: bool
    ridge_used: float = 0.0

    @cached_property
    def model(self) -> IntensityModel:
        return Clipped(SieveExpansion(self.spec, self.coefficients), 0.0, self.spec.clip)

    def to_obj(self) -> dict:
        return {
            "spec": self.spec.to_obj(),
            "coefficients": [float(v) for v in self.coefficients],
            "gram_condition": self.gram_condition,
            "achieved_risk": self.achieved_risk,
            "rho_certificate": self.rho_certificate,
            "clipped": self.clipped,
            "ridge_used": self.ridge_used,
        }

    @staticmethod
    def from_obj(obj: dict) -> "ErmFit":
        return ErmFit(
            spec=SieveSpec.from_obj(obj["spec"]),
            coefficients=np.asarray(obj["coefficients"], dtype=np.float64),
            gram_condition=float(obj["gram_condition"]),
            achieved_risk=float(obj["achieved_risk"]),
            rho_certificate=float(obj["rho_certificate"]),
            clipped=bool(obj["clipped"]),
            ridge_used=float(obj.get("ridge_used", 0.0)),
        )


def _check_fit_inputs(data: Dataset, spec: SieveSpec) -> None:
    if data.n == 0:
        raise EmptyDataset("cannot fit on an empty dataset")
    if spec.d != data.d:
        raise InvalidConfig(f"spec dimension {spec.d} does not match data dimension {data.d}")
    if spec.dimension > SPAN_CAP:
        raise CapExceeded(
            f"sieve dimension {spec.dimension} exceeds the cap {SPAN_CAP}",
            required=spec.dimension,
            cap=SPAN_CAP,
        )


def _moment_vector(data: Dataset, basis: TensorBasis) -> np.ndarray:
    out = np.zeros(basis.dimension)
    if data.event_times.size:
        idx, val = basis.eval_sparse(data.event_times, data.xmat[data.event_rec])
        np.add.at(out, idx.ravel(), val.ravel())
        out /= data.n
    return out


def _pp_blocks(
    data: Dataset, spec: SieveSpec, quad_nodes: int
) -> tuple[np.ndarray, np.ndarray]:
    """Joint-cell Gram blocks and their global index map, canonical layout.

    Returns (glob, blocks): glob[cc] holds the flat coefficient indices of
    joint cell cc (time cell major, covariate cells minor), blocks[cc] the
    corresponding R x R Gram block, R = prod (l_i + 1).
    """
    basis = TensorBasis(spec)
    taxis = basis.axes[0]
    n = data.n
    cells_t, rt = taxis.cells, taxis.nnz

    grid = data.node_grid(taxis.breakpoints, quad_nodes)
    idx_t, val_t = taxis.eval_sparse(grid.t)
    key = grid.rec * cells_t + idx_t[:, 0] // rt
    tg = np.zeros((n * cells_t, rt, rt))
    for p in range(rt):
        for q in range(p, rt):
            acc = np.bincount(key, weights=grid.w * val_t[:, p] * val_t[:, q],
                              minlength=n * cells_t)
            tg[:, p, q] = acc
            if q != p:
                tg[:, q, p] = acc

    # rank-one covariate part per record, plus the flattened x-cell index
    xv = np.ones((n, 1))
    ccell = np.zeros(n, dtype=np.int64)
    ncx, rx = 1, 1
    globx = np.zeros((1, 1), dtype=np.int64)
    for k, axis in enumerate(basis.axes[1:]):
        idx_k, val_k = axis.eval_sparse(data.xmat[:, k])
        ck = idx_k[:, 0] // axis.nnz
        xv = (xv[:, :, None] * val_k[:, None, :]).reshape(n, -1)
        ccell = ccell * axis.cells + ck
        ax_glob = (np.arange(axis.cells)[:, None] * axis.nnz
                   + np.arange(axis.nnz)[None, :])
        globx = (globx[:, None, :, None] * axis.size
                 + ax_glob[None, :, None, :]).reshape(ncx * axis.cells, rx * axis.nnz)
        ncx *= axis.cells
        rx *= axis.nnz

    r_full = rt * rx
    xout = (xv[:, :, None] * xv[:, None, :]).reshape(n, rx * rx)
    tgr = tg.reshape(n, cells_t, rt * rt)
    blocks = np.zeros((cells_t, ncx, r_full, r_full))
    for e in range(ncx):
        members = np.flatnonzero(ccell == e)
        if members.size == 0:
            continue
        sub = np.einsum("ics,iz->csz", tgr[members], xout[members])
        sub = sub.reshape(cells_t, rt, rt, rx, rx).transpose(0, 1, 3, 2, 4)
        blocks[:, e] = sub.reshape(cells_t, r_full, r_full)
    blocks = blocks.reshape(cells_t * ncx, r_full, r_full) / n

    size_x_total = 1
    for axis in basis.axes[1:]:
        size_x_total *= axis.size
    t_glob = np.arange(cells_t)[:, None] * rt + np.arange(rt)[None, :]
    glob = (t_glob[:, None, :, None] * size_x_total + globx[None, :, None, :])
    glob = glob.reshape(cells_t * ncx, r_full)
    return glob, blocks


def _haar_gram(data: Dataset, spec: SieveSpec, quad_nodes: int) -> sp.csr_matrix:
    basis = TensorBasis(spec)
    grid = data.node_grid(basis.axes[0].breakpoints, quad_nodes)
    idx, val = basis.eval_sparse(grid.t, data.xmat[grid.rec])
    r = idx.shape[1]
    d_full = basis.dimension
    gram = sp.csr_matrix((d_full, d_full))
    chunk = max(1, (1 << 22) // (r * r))
    for s in range(0, grid.size, chunk):
        sl = slice(s, min(s + chunk, grid.size))
        k = idx[sl].shape[0]
        rows = np.broadcast_to(idx[sl][:, :, None], (k, r, r)).ravel()
        cols = np.broadcast_to(idx[sl][:, None, :], (k, r, r)).ravel()
        vals = (grid.w[sl, None, None] * val[sl][:, :, None] * val[sl][:, None, :]).ravel()
        gram = gram + sp.coo_matrix((vals, (rows, cols)), shape=(d_full, d_full)).tocsr()
    return gram / data.n


def assemble_system(
    data: Dataset, spec: SieveSpec, quad_nodes: int = DEFAULT_QUAD_NODES
) -> tuple[sp.csr_matrix, np.ndarray]:
    """The normal-equation pieces (G, c) of the empirical risk quadratic.

    G is exactly symmetric (each entry computed once and mirrored) and
    positive semidefinite up to roundoff; storage is sparse.
    """
    _check_fit_inputs(data, spec)
    basis = TensorBasis(spec)
    moment = _moment_vector(data, basis)
    if spec.family == PIECEWISE_POLY:
        glob, blocks = _pp_blocks(data, spec, quad_nodes)
        live = np.flatnonzero(np.any(blocks != 0.0, axis=(1, 2)))
        r = glob.shape[1]
        rows = np.broadcast_to(glob[live][:, :, None], (live.size, r, r)).ravel()
        cols = np.broadcast_to(glob[live][:, None, :], (live.size, r, r)).ravel()
        gram = sp.coo_matrix(
            (blocks[live].ravel(), (rows, cols)), shape=(spec.dimension, spec.dimension)
        ).tocsr()
    else:
        gram = _haar_gram(data, spec, quad_nodes)
    upper = sp.triu(gram, k=0)
    gram = upper + sp.triu(gram, k=1).T
    return gram.tocsr(), moment


def _condition_number(eigs: np.ndarray) -> float:
    lmin = float(eigs.min())
    lmax = float(eigs.max())
    if lmin <= 0.0:
        return math.inf
    return lmax / lmin


def _sparse_condition(gram: sp.csr_matrix) -> float:
    if gram.shape[0] <= DENSE_COND_LIMIT:
        return _condition_number(np.linalg.eigvalsh(gram.toarray()))
    try:
        top = float(spla.eigsh(gram, k=1, which="LA", return_eigenvectors=False)[0])
        bottom = float(spla.eigsh(gram, k=1, sigma=0.0, return_eigenvectors=False)[0])
    except Exception:
        return math.inf
    if bottom <= 0.0:
        return math.inf
    return top / bottom


def fit(
    data: Dataset,
    spec: SieveSpec,
    ridge: float = 0.0,
    rho: float | None = None,
    quad_nodes: int = DEFAULT_QUAD_NODES,
) -> ErmFit:
    """Minimize the empirical risk over the sieve, clip to [0, clip], certify.

    Solves (G + ridge I) theta = c. With ridge = 0 and a Gram condition above
    1e12 the solve retries once with ridge = 1e-10 trace(G) / D_m (empty cells
    make G rank deficient; the ridge picks the zero solution there without
    disturbing populated cells). rho > 0 is the caller's slack budget; it is
    validated but not enforced, the realized slack being reported as
    rho_certificate.
    """
    _check_fit_inputs(data, spec)
    if ridge < 0.0:
        raise InvalidConfig(f"ridge must be nonnegative, got {ridge}")
    if rho is None:
        rho = 1.0 / data.n
    if not rho > 0.0:
        raise InvalidConfig(f"rho must be positive, got {rho}")

    basis = TensorBasis(spec)
    moment = _moment_vector(data, basis)
    theta = np.zeros(spec.dimension)

    if spec.family == PIECEWISE_POLY:
        glob, blocks = _pp_blocks(data, spec, quad_nodes)
        eigs = np.linalg.eigvalsh(blocks)
        cond = _condition_number(eigs)
        trace = float(np.trace(blocks, axis1=1, axis2=2).sum())
        ridge_eff = ridge
        if ridge == 0.0 and cond > COND_RIDGE_TRIGGER:
            ridge_eff = RIDGE_SCALE * trace / spec.dimension
        if trace > 0.0 or moment.any():
            eye = np.eye(blocks.shape[1])
            lhs = blocks + ridge_eff * eye
            mblk = moment[glob]
            try:
                theta_blk = np.linalg.solve(lhs, mblk[:, :, None])[:, :, 0]
            except np.linalg.LinAlgError as e:
                raise SingularGram(f"normal equations singular for spec {spec}") from e
            resid = np.abs(np.einsum("bij,bj->bi", lhs, theta_blk) - mblk).max()
            if resid > RESIDUAL_TOL * (1.0 + np.abs(moment).max(initial=0.0)):
                raise SingularGram(
                    f"normal-equation residual {resid} too large for spec {spec}"
                )
            theta[glob.ravel()] = theta_blk.ravel()
    else:
        gram, moment = assemble_system(data, spec, quad_nodes)
        cond = _sparse_condition(gram)
        trace = float(gram.diagonal().sum())
        ridge_eff = ridge
        if ridge == 0.0 and cond > COND_RIDGE_TRIGGER:
            ridge_eff = RIDGE_SCALE * trace / spec.dimension
        if trace > 0.0 or moment.any():
            lhs = (gram + ridge_eff * sp.identity(spec.dimension, format="csr")).tocsc()
            try:
                theta = np.asarray(spla.spsolve(lhs, moment)).ravel()
            except Exception as e:
                raise SingularGram(f"normal equations singular for spec {spec}") from e
            if not np.all(np.isfinite(theta)):
                raise SingularGram(f"normal equations singular for spec {spec}")
            resid = np.abs(lhs @ theta - moment).max()
            if resid > RESIDUAL_TOL * (1.0 + np.abs(moment).max(initial=0.0)):
                raise SingularGram(
                    f"normal-equation residual {resid} too large for spec {spec}"
                )

    raw = SieveExpansion(spec, theta)
    grid = data.node_grid(basis.axes[0].breakpoints, quad_nodes)
    probe_vals = raw.values(grid.t, data.xmat[grid.rec])
    if data.event_times.size:
        probe_vals = np.concatenate(
            [probe_vals, raw.values(data.event_times, data.xmat[data.event_rec])]
        )
    was_clipped = bool(probe_vals.size and
                       (probe_vals.min(initial=0.0) < 0.0
                        or probe_vals.max(initial=0.0) > spec.clip))

    clipped_model = Clipped(raw, 0.0, spec.clip)
    achieved = empirical_risk(data, clipped_model, quad_nodes)
    unclipped = empirical_risk(data, raw, quad_nodes)
    return ErmFit(
        spec=spec,
        coefficients=theta,
        gram_condition=float(cond),
        achieved_risk=achieved,
        rho_certificate=achieved - unclipped,
        clipped=was_clipped,
        ridge_used=float(ridge_eff),
    )
