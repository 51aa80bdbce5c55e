"""Single-index dictionary members: sphere nets, projections, wrapped fits.

A direction v on the half-unit sphere turns a d-covariate dataset into a
1-covariate one through the fixed affine squeeze u -> (u + sqrt(d)) / (2
sqrt(d)), which maps every possible projection v.x of the unit cube into
[0,1].  Two-covariate sieve fits on the squeezed data are then wrapped so
they evaluate on the original cube as if v were the true index.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DEFAULT_QUAD_NODES, Clipped, Dataset, IntensityModel, PathRecord
from .erm import COND_RIDGE_TRIGGER, RESIDUAL_TOL, RIDGE_SCALE, ErmFit, fit
from .errors import (
    CapExceeded,
    DimensionMismatch,
    HazSieveError,
    InvalidConfig,
    SingularGram,
)
from .risk import empirical_risk
from .rng import normal_pairs
from .sieves import (
    PIECEWISE_POLY,
    SPAN_CAP,
    ModelCollection,
    PolyAxis,
    SieveExpansion,
    SieveSpec,
)

logger = logging.getLogger(__name__)

PROBE_COUNT = 100_000
PROBE_SEED = 271828
# any single half-sphere point covers within sqrt(2) (pole to equator chord)
_POLE_RADIUS = math.sqrt(2.0)


def default_delta(n: int) -> float:
    """Net resolution matched to the estimation error at sample size n."""
    if n < 2:
        raise InvalidConfig(f"need n >= 2 for a net resolution, got {n}")
    return 1.0 / math.sqrt(n * math.log(n))


@dataclass(frozen=True)
class SphereNet:
    """Finite delta-covering of the half-unit sphere {|v| = 1, v_d >= 0}."""

    d: int
    delta: float
    points: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if self.d < 2:
            raise InvalidConfig(f"sphere nets need d >= 2, got {self.d}")
        if not (self.delta > 0.0):
            raise InvalidConfig(f"net resolution must be positive, got {self.delta}")
        if not self.points:
            raise InvalidConfig("a net needs at least one point")
        for p in self.points:
            if len(p) != self.d:
                raise DimensionMismatch(f"net point {p} does not have dimension {self.d}")
            norm = math.sqrt(sum(v * v for v in p))
            if abs(norm - 1.0) > 1e-12:
                raise InvalidConfig(f"net point {p} has norm {norm}, expected 1")
            if p[-1] < 0.0:
                raise InvalidConfig(f"net point {p} is on the wrong hemisphere")

    @property
    def size(self) -> int:
        return len(self.points)

    def to_obj(self) -> dict:
        return {
            "d": self.d,
            "delta": self.delta,
            "points": [list(p) for p in self.points],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "SphereNet":
        return cls(
            d=int(obj["d"]),
            delta=float(obj["delta"]),
            points=tuple(tuple(float(v) for v in p) for p in obj["points"]),
        )


def probe_directions(d: int, count: int = PROBE_COUNT, seed: int = PROBE_SEED) -> np.ndarray:
    """Seeded quasi-uniform directions on the half sphere, for covering checks."""
    z = normal_pairs(seed, np.arange(count, dtype=np.int64), d)
    norms = np.linalg.norm(z, axis=1)
    z[norms < 1e-12] = np.eye(d)[-1]  # freak all-zero rows fall back to the pole
    norms = np.maximum(np.linalg.norm(z, axis=1), 1e-300)
    z /= norms[:, None]
    z[:, -1] = np.abs(z[:, -1])
    return z


def covering_radius(points: np.ndarray, probes: np.ndarray) -> float:
    """max over probes of the distance to the nearest net point."""
    pts = np.asarray(points, dtype=np.float64)
    worst = 0.0
    chunk = max(1, (1 << 22) // max(pts.shape[0], 1))
    for lo in range(0, probes.shape[0], chunk):
        dots = probes[lo : lo + chunk] @ pts.T
        # |p - v|^2 = 2 - 2 p.v for unit vectors
        nearest = 2.0 - 2.0 * dots.max(axis=1)
        worst = max(worst, float(nearest.max()))
    return math.sqrt(max(worst, 0.0))


def _angular_grid(delta: float) -> np.ndarray:
    # adjacent chord 2 sin(theta/2) <= delta fixes the spacing on [0, pi]
    k = math.ceil(math.pi / (2.0 * math.asin(min(delta, 2.0) / 2.0)))
    theta = np.linspace(0.0, math.pi, k + 1)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _fibonacci_hemisphere(count: int) -> np.ndarray:
    i = np.arange(count, dtype=np.float64) + 0.5
    z = i / count
    r = np.sqrt(1.0 - z * z)
    golden = 0.5 * (1.0 + math.sqrt(5.0))
    phi = 2.0 * math.pi * i / (golden * golden)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


_PLASTIC_CACHE: dict[int, np.ndarray] = {}


def _plastic_alphas(d: int) -> np.ndarray:
    # inverse powers of the unique real root of x^{d+1} = x + 1
    if d not in _PLASTIC_CACHE:
        root = 1.5
        for _ in range(80):
            root = (1.0 + root) ** (1.0 / (d + 1))
        _PLASTIC_CACHE[d] = np.asarray([root ** -(j + 1) for j in range(d)])
    return _PLASTIC_CACHE[d]


def _quasi_hemisphere(d: int, count: int) -> np.ndarray:
    """Low-discrepancy directions for d >= 4 via normal-quantile mapping."""
    from scipy.special import ndtri

    alphas = _plastic_alphas(d)
    i = np.arange(1, count + 1, dtype=np.float64)
    u = np.mod(0.5 + i[:, None] * alphas[None, :], 1.0)
    z = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    norms = np.maximum(np.linalg.norm(z, axis=1), 1e-300)
    z /= norms[:, None]
    z[:, -1] = np.abs(z[:, -1])
    return z


def _normalize_rows(pts: np.ndarray) -> np.ndarray:
    pts = pts / np.linalg.norm(pts, axis=1)[:, None]
    pts[:, -1] = np.maximum(pts[:, -1], 0.0)  # clear -0.0 after rounding
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def build_net(d: int, delta: float, cap: int) -> SphereNet:
    """Deterministic delta-net of the half sphere, probe-verified.

    d = 2 uses the exact angular grid; higher dimensions place spiral or
    low-discrepancy points and grow the count until the seeded probe set
    confirms the covering radius.
    """
    if d < 2:
        raise InvalidConfig(f"nets are defined for d >= 2, got {d}")
    if not (delta > 0.0):
        raise InvalidConfig(f"net resolution must be positive, got {delta}")
    if cap < 1:
        raise InvalidConfig(f"net size cap must be >= 1, got {cap}")
    probes = probe_directions(d)

    if delta >= _POLE_RADIUS:
        pole = tuple(0.0 for _ in range(d - 1)) + (1.0,)
        net = SphereNet(d=d, delta=delta, points=(pole,))
        assert covering_radius(np.asarray(net.points), probes) <= delta + 1e-12
        return net

    if d == 2:
        pts = _angular_grid(delta)
        if pts.shape[0] > cap:
            raise CapExceeded(
                f"a {delta}-net of the half circle needs {pts.shape[0]} points, cap is {cap}",
                required=pts.shape[0],
                cap=cap,
            )
        pts = _normalize_rows(pts)
        radius = covering_radius(pts, probes)
        if radius > delta + 1e-12:
            raise InvalidConfig(f"angular grid failed its covering check: {radius} > {delta}")
        return SphereNet(d=2, delta=delta, points=tuple(tuple(p) for p in pts))

    count = max(2, math.ceil((2.5 if d == 3 else 2.0**d) / delta ** (d - 1)))
    while True:
        if count > cap:
            raise CapExceeded(
                f"a {delta}-net of the half sphere in dimension {d} needs about "
                f"{count} points, cap is {cap}",
                required=count,
                cap=cap,
            )
        pts = _fibonacci_hemisphere(count) if d == 3 else _quasi_hemisphere(d, count)
        pts = _normalize_rows(pts)
        if covering_radius(pts, probes) <= delta + 1e-12:
            return SphereNet(d=d, delta=delta, points=tuple(tuple(p) for p in pts))
        count = math.ceil(count * 1.5)


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------


def affine_to_unit(u, d: int):
    """The fixed squeeze of projections v.x into [0,1]: (u + sqrt(d)) / (2 sqrt(d))."""
    root = math.sqrt(d)
    return (u + root) / (2.0 * root)


def project_dataset(data: Dataset, v: Sequence[float]) -> Dataset:
    """Replace each covariate vector by the squeezed scalar projection on v."""
    va = np.asarray(v, dtype=np.float64)
    if va.shape != (data.d,):
        raise DimensionMismatch(f"index has shape {va.shape}, data dimension is {data.d}")
    norm = float(np.linalg.norm(va))
    if abs(norm - 1.0) > 1e-12:
        raise InvalidConfig(f"index must be a unit vector, |v| = {norm}")
    z = np.clip(affine_to_unit(data.xmat @ va, data.d), 0.0, 1.0)
    records = tuple(
        PathRecord(id=rec.id, x=(float(z[k]),), events=rec.events, at_risk=rec.at_risk)
        for k, rec in enumerate(data.records)
    )
    return Dataset(d=1, records=records)


@dataclass(frozen=True)
class SingleIndexModel(IntensityModel):
    """A 2-dimensional fit riding a fixed index direction.

    values(t, x) = inner(t, affine(v.x)); the inner model lives on [0,1]^2.
    """

    v: tuple[float, ...]
    inner: IntensityModel

    def __post_init__(self):
        if self.inner.d != 1:
            raise InvalidConfig(f"inner model must take one covariate, has d = {self.inner.d}")
        norm = math.sqrt(sum(c * c for c in self.v))
        if abs(norm - 1.0) > 1e-12:
            raise InvalidConfig(f"index must be a unit vector, |v| = {norm}")

    @property
    def d(self) -> int:  # type: ignore[override]
        return len(self.v)

    def values(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        u = x @ np.asarray(self.v)
        z = np.clip(affine_to_unit(u, len(self.v)), 0.0, 1.0)
        return self.inner.values(t, z[:, None])

    def time_breakpoints(self) -> np.ndarray:
        return self.inner.time_breakpoints()

    def sup_bound(self) -> float | None:
        return self.inner.sup_bound()


class _ProjectedBasisCache:
    """Shared basis state for sieve work on many projections of one dataset.

    A direction only moves the covariate coordinate, so everything tied to the
    time axis -- quadrature grid, basis values on it and at event times, and
    the per-record time Gram used by assembly -- is computed once per
    (resolution, degree) and reused across directions. Covariate bases are
    evaluated once per record and gathered onto grids; both the basis
    recurrence and the projection are elementwise in the point, so the gather
    reproduces the node-by-node evaluation float for float.
    """

    def __init__(self, data: Dataset, quad_nodes: int, with_gram: bool):
        self.data = data
        self.quad = quad_nodes
        self.with_gram = with_gram
        self._tstates: dict[tuple[int, int], dict] = {}
        self._globs: dict[tuple, np.ndarray] = {}

    def tstate(self, mt: int, lt: int) -> dict:
        st = self._tstates.get((mt, lt))
        if st is None:
            axis = PolyAxis(mt, lt)
            grid = self.data.node_grid(axis.breakpoints, self.quad)
            idx_t, val_t = axis.eval_sparse(grid.t)
            ev = self.data.event_times
            if ev.size:
                idx_te, val_te = axis.eval_sparse(ev)
            else:
                idx_te = np.zeros((0, axis.nnz), dtype=np.int64)
                val_te = np.zeros((0, axis.nnz))
            st = {"axis": axis, "grid": grid, "idx_t": idx_t, "val_t": val_t,
                  "idx_te": idx_te, "val_te": val_te}
            if self.with_gram:
                n, rt, cells = self.data.n, axis.nnz, axis.cells
                key = grid.rec * cells + idx_t[:, 0] // rt
                tg = np.zeros((n * cells, rt, rt))
                for p in range(rt):
                    for q in range(p, rt):
                        acc = np.bincount(key, weights=grid.w * val_t[:, p] * val_t[:, q],
                                          minlength=n * cells)
                        tg[:, p, q] = acc
                        if q != p:
                            tg[:, q, p] = acc
                st["tgr"] = tg.reshape(n, cells, rt * rt)
            self._tstates[(mt, lt)] = st
        return st

    def direction(self, v: Sequence[float]) -> dict:
        # same squeeze as project_dataset; row-wise, so gathers stay exact
        va = np.asarray(v, dtype=np.float64)
        z = np.clip(affine_to_unit(self.data.xmat @ va, self.data.d), 0.0, 1.0)
        return {"z": z, "x": {}}

    def xstate(self, dstate: dict, mx: int, lx: int) -> dict:
        st = dstate["x"].get((mx, lx))
        if st is None:
            axis = PolyAxis(mx, lx)
            idx_k, val_k = axis.eval_sparse(dstate["z"])
            erec = self.data.event_rec
            st = {"axis": axis, "idx_k": idx_k, "val_k": val_k,
                  "idx_ke": idx_k[erec], "val_ke": val_k[erec]}
            if self.with_gram:
                st["ck"] = idx_k[:, 0] // axis.nnz
                st["xout"] = (val_k[:, :, None] * val_k[:, None, :]).reshape(self.data.n, -1)
            dstate["x"][(mx, lx)] = st
        return st

    def raw_values(self, theta: np.ndarray, ts: dict, xs: dict) -> tuple[np.ndarray, np.ndarray]:
        """Expansion values on the quadrature grid and at event times."""
        size_x = xs["axis"].size
        grid = ts["grid"]
        rec = grid.rec
        idx = (ts["idx_t"][:, :, None] * size_x + xs["idx_k"][rec][:, None, :]).reshape(grid.size, -1)
        val = (ts["val_t"][:, :, None] * xs["val_k"][rec][:, None, :]).reshape(grid.size, -1)
        vgrid = np.sum(np.take(theta, idx) * val, axis=1)
        nev = self.data.event_times.size
        if nev:
            idx_e = (ts["idx_te"][:, :, None] * size_x + xs["idx_ke"][:, None, :]).reshape(nev, -1)
            val_e = (ts["val_te"][:, :, None] * xs["val_ke"][:, None, :]).reshape(nev, -1)
            vev = np.sum(np.take(theta, idx_e) * val_e, axis=1)
        else:
            vev = np.zeros(0)
        return vgrid, vev

    def _glob(self, spec: SieveSpec) -> np.ndarray:
        g = self._globs.get((spec.m, spec.l))
        if g is None:
            taxis = PolyAxis(spec.m[0], spec.l[0])
            xaxis = PolyAxis(spec.m[1], spec.l[1])
            ax_glob = (np.arange(xaxis.cells)[:, None] * xaxis.nnz
                       + np.arange(xaxis.nnz)[None, :])
            t_glob = np.arange(taxis.cells)[:, None] * taxis.nnz + np.arange(taxis.nnz)[None, :]
            g = (t_glob[:, None, :, None] * xaxis.size + ax_glob[None, :, None, :])
            g = g.reshape(taxis.cells * xaxis.cells, taxis.nnz * xaxis.nnz)
            self._globs[(spec.m, spec.l)] = g
        return g

    def risk_from_values(self, grid, vgrid: np.ndarray, vev: np.ndarray) -> float:
        n = self.data.n
        norm_sq = float(np.dot(grid.w, vgrid * vgrid)) / n
        return norm_sq - 2.0 * float(vev.sum()) / n

    def fit_spec(self, spec: SieveSpec, dstate: dict, ridge: float, rho: float | None) -> ErmFit:
        """Same solve, diagnostics, and floats as erm.fit on the projected data."""
        if spec.dimension > SPAN_CAP:
            raise CapExceeded(
                f"sieve dimension {spec.dimension} exceeds the cap {SPAN_CAP}",
                required=spec.dimension,
                cap=SPAN_CAP,
            )
        if ridge < 0.0:
            raise InvalidConfig(f"ridge must be nonnegative, got {ridge}")
        if rho is None:
            rho = 1.0 / self.data.n
        if not rho > 0.0:
            raise InvalidConfig(f"rho must be positive, got {rho}")
        n = self.data.n
        ts = self.tstate(spec.m[0], spec.l[0])
        xs = self.xstate(dstate, spec.m[1], spec.l[1])
        taxis, xaxis = ts["axis"], xs["axis"]
        rt, rx = taxis.nnz, xaxis.nnz
        cells_t, ncx = taxis.cells, xaxis.cells
        r_full = rt * rx

        if self.data.event_times.size:
            nev = self.data.event_times.size
            idx_e = (ts["idx_te"][:, :, None] * xaxis.size + xs["idx_ke"][:, None, :]).reshape(nev, -1)
            val_e = (ts["val_te"][:, :, None] * xs["val_ke"][:, None, :]).reshape(nev, -1)
            moment = np.bincount(idx_e.ravel(), weights=val_e.ravel(), minlength=spec.dimension)
            moment /= n
        else:
            moment = np.zeros(spec.dimension)

        tgr, xout, ccell = ts["tgr"], xs["xout"], xs["ck"]
        blocks = np.zeros((cells_t, ncx, r_full, r_full))
        for e in range(ncx):
            members = np.flatnonzero(ccell == e)
            if members.size == 0:
                continue
            sub = np.einsum("ics,iz->csz", tgr[members], xout[members])
            sub = sub.reshape(cells_t, rt, rt, rx, rx).transpose(0, 1, 3, 2, 4)
            blocks[:, e] = sub.reshape(cells_t, r_full, r_full)
        blocks = blocks.reshape(cells_t * ncx, r_full, r_full) / n

        eigs = np.linalg.eigvalsh(blocks)
        lmin, lmax = float(eigs.min()), float(eigs.max())
        cond = math.inf if lmin <= 0.0 else lmax / lmin
        trace = float(np.trace(blocks, axis1=1, axis2=2).sum())
        ridge_eff = ridge
        if ridge == 0.0 and cond > COND_RIDGE_TRIGGER:
            ridge_eff = RIDGE_SCALE * trace / spec.dimension
        theta = np.zeros(spec.dimension)
        if trace > 0.0 or moment.any():
            glob = self._glob(spec)
            lhs = blocks + ridge_eff * np.eye(r_full)
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

        vgrid, vev = self.raw_values(theta, ts, xs)
        probe = np.concatenate([vgrid, vev]) if vev.size else vgrid
        was_clipped = bool(probe.size and
                           (probe.min(initial=0.0) < 0.0
                            or probe.max(initial=0.0) > spec.clip))
        achieved = self.risk_from_values(
            ts["grid"], np.clip(vgrid, 0.0, spec.clip), np.clip(vev, 0.0, spec.clip))
        unclipped = self.risk_from_values(ts["grid"], vgrid, vev)
        return ErmFit(
            spec=spec,
            coefficients=theta,
            gram_condition=float(cond),
            achieved_risk=achieved,
            rho_certificate=achieved - unclipped,
            clipped=was_clipped,
            ridge_used=float(ridge_eff),
        )


def build_sim_dictionary(
    training: Dataset,
    net: SphereNet,
    sim_collection: ModelCollection,
    ridge: float = 0.0,
    rho: float | None = None,
    quad_nodes: int | None = None,
) -> tuple[SingleIndexModel, ...]:
    """One wrapped fit per (sieve, direction) pair; failed fits are skipped.

    Piecewise-polynomial sieves go through a batched path that shares the
    direction-independent half of the assembly across the net; it produces
    the same fits as fitting each projected dataset separately.
    """
    if training.d != net.d:
        raise DimensionMismatch(f"net dimension {net.d} does not match data dimension {training.d}")
    bad = [s for s in sim_collection.specs if s.d != 1]
    if bad:
        raise InvalidConfig(f"index fits need 1-covariate sieves, got d = {bad[0].d}")
    kwargs = {} if quad_nodes is None else {"quad_nodes": quad_nodes}
    batch = _ProjectedBasisCache(
        training, DEFAULT_QUAD_NODES if quad_nodes is None else quad_nodes, with_gram=True
    )
    out: list[SingleIndexModel] = []
    for v in net.points:
        dstate = batch.direction(v)
        projected = None
        for spec in sim_collection.specs:
            try:
                if spec.family == PIECEWISE_POLY:
                    fitted: ErmFit = batch.fit_spec(spec, dstate, ridge, rho)
                else:
                    if projected is None:
                        projected = project_dataset(training, v)
                    fitted = fit(projected, spec, ridge=ridge, rho=rho, **kwargs)
            except HazSieveError as err:
                logger.warning("skipping index fit m=%s v=%s: %s", spec.m, v, err)
                continue
            out.append(SingleIndexModel(v=v, inner=fitted.model))
    return tuple(out)


def _sim_member_parts(member: IntensityModel):
    """(v, spec, theta) when the member is a wrapped clipped pp expansion."""
    if not isinstance(member, SingleIndexModel):
        return None
    inner = member.inner
    if not (isinstance(inner, Clipped) and isinstance(inner.inner, SieveExpansion)):
        return None
    spec = inner.inner.spec
    if spec.family != PIECEWISE_POLY or spec.d != 1:
        return None
    if inner.lower != 0.0 or inner.upper != spec.clip:
        return None
    return member.v, spec, inner.inner.coefficients


def member_risks(
    data: Dataset, members: Sequence[IntensityModel], quad_nodes: int = DEFAULT_QUAD_NODES
) -> np.ndarray:
    """Empirical risk of each dictionary member on one dataset.

    Matches [empirical_risk(data, m, quad_nodes) for m in members] exactly;
    wrapped single-index fits are routed through shared basis values, one
    direction and time resolution at a time, instead of one full quadrature
    pass per member.
    """
    risks = np.empty(len(members))
    batch = _ProjectedBasisCache(data, quad_nodes, with_gram=False)
    dstates: dict[tuple[float, ...], dict] = {}
    for k, member in enumerate(members):
        parts = _sim_member_parts(member)
        if parts is None or len(parts[0]) != data.d:
            risks[k] = empirical_risk(data, member, quad_nodes)
            continue
        v, spec, theta = parts
        dstate = dstates.get(v)
        if dstate is None:
            dstate = dstates[v] = batch.direction(v)
        ts = batch.tstate(spec.m[0], spec.l[0])
        xs = batch.xstate(dstate, spec.m[1], spec.l[1])
        vgrid, vev = batch.raw_values(theta, ts, xs)
        risks[k] = batch.risk_from_values(
            ts["grid"], np.clip(vgrid, 0.0, spec.clip), np.clip(vev, 0.0, spec.clip))
    return risks
