"""Risk functionals and probabilistic diagnostics.

The estimation loss for a candidate intensity alpha is

    l_alpha(data_i) = int alpha(t, X_i)^2 Y^i(t) dt - 2 sum_{events s} alpha(s, X_i)

so P_n(l_alpha) = |alpha|_n^2 - 2/n sum_i sum_events alpha, where |.|_n is the
empirical norm. Against the truth alpha_0 the excess risk P(l_alpha) -
P(l_{alpha_0}) equals the squared L2 distance under the reference measure
d mu = E[Y(t)|X=x] dt P_X(dx), which is what the diagnostic helpers verify on
simulated data. The martingale term Z_n and the Jacod log-likelihood ratio
live here as well, with Monte-Carlo checkers for the Bernstein tail bound.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    DEFAULT_QUAD_NODES,
    ClosedFormMu,
    Dataset,
    EmpiricalMu,
    IntensityModel,
    MuMeasure,
    _clean_breakpoints,
    gauss_legendre,
)
from .errors import (
    DimensionMismatch,
    EmptyDataset,
    InvalidConfig,
    NonPositiveModel,
)
from .rng import derive_seed, uniform_block


def _check(data: Dataset, *models: IntensityModel) -> None:
    if data.n == 0:
        raise EmptyDataset("risk functionals need at least one record")
    for m in models:
        if m.d != data.d:
            raise DimensionMismatch(f"model dimension {m.d} does not match data dimension {data.d}")


def joint_time_breakpoints(*models: IntensityModel) -> np.ndarray:
    parts = [m.time_breakpoints() for m in models]
    return _clean_breakpoints(np.concatenate(parts) if parts else None)


def _event_values(data: Dataset, model: IntensityModel) -> np.ndarray:
    if data.event_times.size == 0:
        return np.zeros(0)
    return model.values(data.event_times, data.xmat[data.event_rec])


# ---------------------------------------------------------------------------
# empirical risk and norm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskReport:
    empirical_risk: float
    empirical_norm_sq: float
    n: int


def empirical_norm_sq(
    data: Dataset, model: IntensityModel, quad_nodes: int = DEFAULT_QUAD_NODES
) -> float:
    """(1/n) sum_i int alpha(t, X_i)^2 Y^i(t) dt."""
    _check(data, model)
    grid = data.node_grid(joint_time_breakpoints(model), quad_nodes)
    vals = model.values(grid.t, data.xmat[grid.rec])
    return float(np.dot(grid.w, vals * vals)) / data.n


def empirical_risk(
    data: Dataset, model: IntensityModel, quad_nodes: int = DEFAULT_QUAD_NODES
) -> float:
    """P_n(l_alpha) = empirical_norm_sq - (2/n) sum_i sum_events alpha(s, X_i)."""
    _check(data, model)
    norm_sq = empirical_norm_sq(data, model, quad_nodes)
    return norm_sq - 2.0 * float(_event_values(data, model).sum()) / data.n


def per_record_loss(
    data: Dataset, model: IntensityModel, quad_nodes: int = DEFAULT_QUAD_NODES
) -> np.ndarray:
    """Loss contribution of each record; mean equals empirical_risk."""
    _check(data, model)
    grid = data.node_grid(joint_time_breakpoints(model), quad_nodes)
    vals = model.values(grid.t, data.xmat[grid.rec])
    out = np.bincount(grid.rec, weights=grid.w * vals * vals, minlength=data.n)
    if data.event_times.size:
        out -= 2.0 * np.bincount(
            data.event_rec, weights=_event_values(data, model), minlength=data.n
        )
    return out


def risk_report(
    data: Dataset, model: IntensityModel, quad_nodes: int = DEFAULT_QUAD_NODES
) -> RiskReport:
    return RiskReport(
        empirical_risk=empirical_risk(data, model, quad_nodes),
        empirical_norm_sq=empirical_norm_sq(data, model, quad_nodes),
        n=data.n,
    )


# ---------------------------------------------------------------------------
# L2(mu) distance
# ---------------------------------------------------------------------------


def _segment_nodes(bp: np.ndarray, quad_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [0,1] split at bp."""
    z, gw = gauss_legendre(quad_nodes)
    edges = np.concatenate([[0.0], bp, [1.0]])
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * z[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def l2mu_distance_sq(
    mu: MuMeasure,
    a: IntensityModel,
    b: IntensityModel,
    quad_nodes: int = DEFAULT_QUAD_NODES,
    mc_draws: int = 4096,
    seed: int = 0,
) -> float:
    """|a - b|^2 under mu.

    Empirical mu: exact quadrature over the at-risk pieces of its dataset.
    Closed-form mu: composite quadrature in time crossed with a covariate
    grid (d <= 1) or seeded uniform Monte Carlo weighted by the covariate
    density (d >= 2, deterministic given the seed).
    """
    if quad_nodes < 1:
        raise InvalidConfig(f"quad_nodes must be positive, got {quad_nodes}")
    if mc_draws < 1:
        raise InvalidConfig(f"mc_draws must be positive, got {mc_draws}")
    if a.d != b.d or a.d != mu.d:
        raise DimensionMismatch(
            f"dimension mismatch: mu has d={mu.d}, models have d={a.d} and d={b.d}"
        )
    bp = joint_time_breakpoints(a, b)
    if isinstance(mu, EmpiricalMu):
        data = mu.data
        if data.n == 0:
            raise EmptyDataset("empirical measure over an empty dataset")
        grid = data.node_grid(bp, quad_nodes)
        xs = data.xmat[grid.rec]
        diff = a.values(grid.t, xs) - b.values(grid.t, xs)
        return float(np.dot(grid.w, diff * diff)) / data.n

    tn, tw = _segment_nodes(bp, quad_nodes)
    d = mu.d
    if d == 0:
        x0 = np.zeros((tn.shape[0], 0))
        diff = a.values(tn, x0) - b.values(tn, x0)
        surv = np.asarray(mu.survivor(tn, x0), dtype=np.float64)
        return float(np.dot(tw, diff * diff * surv))
    if d == 1:
        ncells = max(1, -(-mc_draws // quad_nodes))
        xbp = _clean_breakpoints(
            np.concatenate([a.axis_breakpoints(1), b.axis_breakpoints(1),
                            np.linspace(0.0, 1.0, ncells + 1)])
        )
        xn, xw = _segment_nodes(xbp, quad_nodes)
        tt = np.repeat(tn, xn.shape[0])
        xx = np.tile(xn, tn.shape[0])[:, None]
        diff = a.values(tt, xx) - b.values(tt, xx)
        surv = np.asarray(mu.survivor(tt, xx), dtype=np.float64)
        dens = np.asarray(mu.density(xn[:, None]), dtype=np.float64)
        ww = np.repeat(tw, xn.shape[0]) * np.tile(xw * dens, tn.shape[0])
        return float(np.dot(ww, diff * diff * surv))
    draws = uniform_block(seed, np.arange(mc_draws, dtype=np.uint64), d)
    dens = np.asarray(mu.density(draws), dtype=np.float64)
    tt = np.tile(tn, mc_draws)
    xx = np.repeat(draws, tn.shape[0], axis=0)
    diff = a.values(tt, xx) - b.values(tt, xx)
    surv = np.asarray(mu.survivor(tt, xx), dtype=np.float64)
    per_draw = (diff * diff * surv).reshape(mc_draws, tn.shape[0]) @ tw
    return float(np.mean(per_draw * dens))


class ExcessRiskCheck(NamedTuple):
    lhs: float
    rhs: float


def excess_risk_check(
    mu: MuMeasure,
    model: IntensityModel,
    truth: IntensityModel,
    eval_data: Dataset,
    quad_nodes: int = DEFAULT_QUAD_NODES,
    mc_draws: int = 4096,
    seed: int = 0,
) -> ExcessRiskCheck:
    """Monte-Carlo check of: excess risk of alpha equals |alpha - alpha_0|^2_mu.

    lhs estimates P(l_alpha) - P(l_{alpha_0}) by the empirical risk difference
    on held-out data; rhs is the squared distance under mu. The caller decides
    the tolerance from the Monte-Carlo error (see excess_risk_se).
    """
    if eval_data.n == 0:
        raise EmptyDataset("excess risk check needs held-out records")
    lhs = empirical_risk(eval_data, model, quad_nodes) - empirical_risk(
        eval_data, truth, quad_nodes
    )
    rhs = l2mu_distance_sq(mu, model, truth, quad_nodes, mc_draws, seed)
    return ExcessRiskCheck(lhs=lhs, rhs=rhs)


def excess_risk_se(
    eval_data: Dataset,
    model: IntensityModel,
    truth: IntensityModel,
    quad_nodes: int = DEFAULT_QUAD_NODES,
) -> float:
    """Standard error of the lhs estimate in excess_risk_check."""
    diff = per_record_loss(eval_data, model, quad_nodes) - per_record_loss(
        eval_data, truth, quad_nodes
    )
    if diff.shape[0] < 2:
        raise EmptyDataset("standard error needs at least two records")
    return float(np.std(diff, ddof=1)) / math.sqrt(diff.shape[0])


# ---------------------------------------------------------------------------
# martingale term and Bernstein check
# ---------------------------------------------------------------------------


def martingale_term(
    data: Dataset,
    model: IntensityModel,
    truth: IntensityModel,
    quad_nodes: int = DEFAULT_QUAD_NODES,
) -> float:
    """Z_n(alpha) = n^{-1/2} sum_i [sum_events alpha(s,X_i) - int alpha alpha_0 Y^i dt]."""
    _check(data, model, truth)
    grid = data.node_grid(joint_time_breakpoints(model, truth), quad_nodes)
    xs = data.xmat[grid.rec]
    integral = float(np.dot(grid.w, model.values(grid.t, xs) * truth.values(grid.t, xs)))
    events = float(_event_values(data, model).sum())
    return (events - integral) / math.sqrt(data.n)


def predictable_variation(
    data: Dataset,
    model: IntensityModel,
    truth: IntensityModel,
    quad_nodes: int = DEFAULT_QUAD_NODES,
) -> float:
    """<Z_n>(alpha) = (1/n) sum_i int alpha^2 alpha_0 Y^i dt."""
    _check(data, model, truth)
    grid = data.node_grid(joint_time_breakpoints(model, truth), quad_nodes)
    xs = data.xmat[grid.rec]
    av = model.values(grid.t, xs)
    return float(np.dot(grid.w, av * av * truth.values(grid.t, xs))) / data.n


class BernsteinRow(NamedTuple):
    z: float
    mc_tail: float
    mc_se: float
    bound: float


def bernstein_tail_check(
    config,
    model: IntensityModel,
    z_grid: Sequence[float],
    replicates: int,
    seed: int,
) -> tuple[BernsteinRow, ...]:
    """Monte-Carlo tail of Z_n(alpha) against the Bernstein bound.

    For each z the tail P[Z_n > z, <Z_n> <= delta^2] is estimated over fresh
    simulated datasets, with the envelope delta^2 = |alpha_0|_inf |alpha|_inf^2
    (always >= <Z_n>, so the conditioning event is certain); the bound is
    exp(-z^2 / (2 (delta^2 + z |alpha|_inf / (3 sqrt(n))))).
    """
    if replicates < 100:
        raise InvalidConfig(f"need at least 100 replicates for a meaningful tail, got {replicates}")
    from .simulate import scenario_truth, simulate_scenario

    truth = scenario_truth(config)
    sup0 = truth.sup_bound()
    supa = model.sup_bound()
    if sup0 is None or supa is None:
        raise InvalidConfig("Bernstein check needs declared sup bounds on truth and model")
    delta_sq = sup0 * supa * supa
    zs = np.empty(replicates)
    vs = np.empty(replicates)
    for r in range(replicates):
        data = simulate_scenario(replace(config, seed=derive_seed(seed, "bernstein", r)))
        zs[r] = martingale_term(data, model, truth)
        vs[r] = predictable_variation(data, model, truth)
    rows = []
    sqrt_n = math.sqrt(config.n)
    for z in z_grid:
        z = float(z)
        hits = (zs > z) & (vs <= delta_sq)
        p = float(np.mean(hits))
        se = math.sqrt(p * (1.0 - p) / replicates)
        bound = math.exp(-z * z / (2.0 * (delta_sq + z * supa / (3.0 * sqrt_n))))
        rows.append(BernsteinRow(z=z, mc_tail=p, mc_se=se, bound=bound))
    return tuple(rows)


def bernstein_rows_to_csv(rows: Sequence[BernsteinRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["z", "mc_tail", "mc_se", "bound"])
    for r in rows:
        writer.writerow([format(v, ".17g") for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Jacod log-likelihood ratio
# ---------------------------------------------------------------------------


def _require_positive(name: str, vals: np.ndarray, t: np.ndarray, xs: np.ndarray) -> None:
    bad = np.flatnonzero(vals <= 0.0)
    if bad.size:
        i = int(bad[0])
        raise NonPositiveModel(
            f"model {name} is not strictly positive: value {vals[i]} at "
            f"t={t[i]}, x={xs[i].tolist()}",
            t=float(t[i]),
            x=tuple(float(v) for v in xs[i]),
        )


def log_likelihood_ratio(
    data: Dataset,
    a: IntensityModel,
    b: IntensityModel,
    quad_nodes: int = DEFAULT_QUAD_NODES,
) -> float:
    """sum_i [sum_events log(a/b)(s, X_i) - int (a - b)(t, X_i) Y^i(t) dt].

    Both models must be strictly positive at every event point and quadrature
    node; a violation raises an error naming the offending point.
    """
    _check(data, a, b)
    grid = data.node_grid(joint_time_breakpoints(a, b), quad_nodes)
    xs = data.xmat[grid.rec]
    av = a.values(grid.t, xs)
    bv = b.values(grid.t, xs)
    _require_positive("a", av, grid.t, xs)
    _require_positive("b", bv, grid.t, xs)
    integral = float(np.dot(grid.w, av - bv))
    if data.event_times.size:
        xe = data.xmat[data.event_rec]
        ae = a.values(data.event_times, xe)
        be = b.values(data.event_times, xe)
        _require_positive("a", ae, data.event_times, xe)
        _require_positive("b", be, data.event_times, xe)
        logs = float(np.sum(np.log(ae / be)))
    else:
        logs = 0.0
    return logs - integral
