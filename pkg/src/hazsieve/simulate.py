"""Seeded simulators for three marked-counting observation schemes.

Censored survival draws (T, C) by inverting cumulative hazards at unit
exponential targets; Cox processes and two-state transition chains are
generated by thinning homogeneous proposals against the declared intensity
bound.  All randomness is counter-based: record i reads the uniform stream
(seed, i, .), columns 0..d-1 hold its covariates and later columns are
consumed sequentially by that record alone, so chunked or parallel generation
reproduces the serial output exactly.

Draw layout per record, after the d covariate columns:
  censored survival   column d -> Exp(1) target for the event time,
                      column d+1 -> Exp(1) target for the censoring time
  Cox process         columns d+2j / d+2j+1 -> j-th proposal gap / acceptance
  two-state chain     consumed in order; a state-1 step takes two columns
                      (gap, acceptance), a state-2 sojourn takes one (gap)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Any, Callable, Mapping

import numpy as np

from .core import ClosedForm, ClosedFormMu, Dataset, PathRecord, StepFunction
from .errors import BoundViolation, DimensionMismatch, InvalidConfig, NonPositiveModel
from .rng import uniform01, uniform_block

CENSORED_SURVIVAL = "censored_survival"
COX_PROCESS = "cox_process"
MARKOV_TRANSITION = "markov_transition"
KINDS = (CENSORED_SURVIVAL, COX_PROCESS, MARKOV_TRANSITION)

CONSTANT = "constant"
SEPARABLE = "smooth_separable"
SINGLE_INDEX = "single_index"
COX_FORM = "cox_form"
AALEN_FORM = "aalen_form"
TRUTH_FAMILIES = (CONSTANT, SEPARABLE, SINGLE_INDEX, COX_FORM, AALEN_FORM)

# relative slack when checking proposals against the declared bound
_BOUND_SLACK = 1e-9
_BISECT_ITERS = 60


# ---------------------------------------------------------------------------
# truth descriptors
# ---------------------------------------------------------------------------


def constant_truth(level: float) -> dict:
    return {"family": CONSTANT, "level": float(level)}


def separable_truth() -> dict:
    """exp(-t) (1 + sum_i x_i) / (1 + d); sup norm 1 for every d."""
    return {"family": SEPARABLE}


def single_index_truth(index) -> dict:
    """(1 + sin(pi v.x)) exp(-t) with a declared unit index v."""
    return {"family": SINGLE_INDEX, "index": [float(v) for v in index]}


def cox_truth(index, scale: float = 1.0, decay: float = 1.0) -> dict:
    """scale exp(-decay t) exp(v.x): multiplicative covariate effect."""
    return {
        "family": COX_FORM,
        "index": [float(v) for v in index],
        "scale": float(scale),
        "decay": float(decay),
    }


def aalen_truth(index, scale: float = 1.0, decay: float = 1.0) -> dict:
    """scale exp(-decay t) + v.x: additive covariate effect."""
    return {
        "family": AALEN_FORM,
        "index": [float(v) for v in index],
        "scale": float(scale),
        "decay": float(decay),
    }


def _index_vector(desc: Mapping, d: int) -> np.ndarray:
    v = np.asarray(desc.get("index", ()), dtype=np.float64)
    if v.shape != (d,):
        raise DimensionMismatch(
            f"truth family {desc.get('family')} needs an index of length {d}, got shape {v.shape}"
        )
    if not np.isfinite(v).all():
        raise InvalidConfig("index vector has non-finite entries")
    return v


def _materialize(d: int, desc: Mapping) -> SimpleNamespace:
    """Value/cumulative-hazard/sup closures for a named truth family."""
    if not isinstance(desc, Mapping) or "family" not in desc:
        raise InvalidConfig(f"truth descriptor must be a mapping with a 'family' key, got {desc!r}")
    family = desc["family"]
    if family not in TRUTH_FAMILIES:
        raise InvalidConfig(f"unknown truth family {family!r}; known: {TRUTH_FAMILIES}")
    if d < 0:
        raise InvalidConfig(f"covariate dimension must be >= 0, got {d}")

    if family == CONSTANT:
        level = float(desc["level"])
        if not (level >= 0.0 and math.isfinite(level)):
            raise InvalidConfig(f"constant level must be finite and >= 0, got {level}")

        def fn(t, x, c=level):
            return np.full(np.shape(t)[0], c)

        def cum(t, x, c=level):
            return c * np.asarray(t, dtype=np.float64)

        sup = level
        text = f"constant intensity {level:g}"

    elif family == SEPARABLE:
        norm = 1.0 + d

        def fn(t, x, norm=norm):
            return np.exp(-np.asarray(t)) * (1.0 + x.sum(axis=1)) / norm

        def cum(t, x, norm=norm):
            return -np.expm1(-np.asarray(t)) * (1.0 + x.sum(axis=1)) / norm

        sup = 1.0
        text = f"exp(-t) (1 + sum x) / {norm:g}"

    elif family == SINGLE_INDEX:
        v = _index_vector(desc, d)
        nrm = float(np.linalg.norm(v))
        if abs(nrm - 1.0) > 1e-9:
            raise InvalidConfig(f"single-index direction must be a unit vector, |v| = {nrm}")

        def fn(t, x, v=v):
            return (1.0 + np.sin(np.pi * (x @ v))) * np.exp(-np.asarray(t))

        def cum(t, x, v=v):
            return (1.0 + np.sin(np.pi * (x @ v))) * -np.expm1(-np.asarray(t))

        sup = 2.0
        text = f"(1 + sin(pi v.x)) exp(-t), v = {v.tolist()}"

    elif family == COX_FORM:
        v = _index_vector(desc, d)
        scale = float(desc.get("scale", 1.0))
        decay = float(desc.get("decay", 1.0))
        if scale < 0.0 or decay < 0.0:
            raise InvalidConfig(f"scale and decay must be >= 0, got {scale}, {decay}")

        def fn(t, x, v=v, s=scale, r=decay):
            return s * np.exp(-r * np.asarray(t)) * np.exp(x @ v)

        if decay > 0.0:

            def cum(t, x, v=v, s=scale, r=decay):
                return (s / r) * -np.expm1(-r * np.asarray(t)) * np.exp(x @ v)

        else:

            def cum(t, x, v=v, s=scale):
                return s * np.asarray(t, dtype=np.float64) * np.exp(x @ v)

        sup = scale * math.exp(float(np.clip(v, 0.0, None).sum()))
        text = f"{scale:g} exp(-{decay:g} t) exp(v.x), v = {v.tolist()}"

    else:  # AALEN_FORM
        v = _index_vector(desc, d)
        scale = float(desc.get("scale", 1.0))
        decay = float(desc.get("decay", 1.0))
        if scale < 0.0 or decay < 0.0:
            raise InvalidConfig(f"scale and decay must be >= 0, got {scale}, {decay}")
        floor = scale * math.exp(-decay) + float(np.clip(v, None, 0.0).sum())
        if floor < 0.0:
            raise InvalidConfig(
                f"additive family dips to {floor} < 0 on the unit cube; "
                "shrink negative index entries or raise the baseline"
            )

        def fn(t, x, v=v, s=scale, r=decay):
            return s * np.exp(-r * np.asarray(t)) + x @ v

        if decay > 0.0:

            def cum(t, x, v=v, s=scale, r=decay):
                t = np.asarray(t, dtype=np.float64)
                return (s / r) * -np.expm1(-r * t) + t * (x @ v)

        else:

            def cum(t, x, v=v, s=scale):
                return (s + x @ v) * np.asarray(t, dtype=np.float64)

        sup = scale + float(np.clip(v, 0.0, None).sum())
        text = f"{scale:g} exp(-{decay:g} t) + v.x, v = {v.tolist()}"

    if "sup" in desc:
        declared = float(desc["sup"])
        if not (declared >= 0.0 and math.isfinite(declared)):
            raise InvalidConfig(f"declared sup bound must be finite and >= 0, got {declared}")
        sup = declared
    return SimpleNamespace(fn=fn, cum=cum, sup=sup, text=text)


def truth_from_descriptor(d: int, desc: Mapping) -> ClosedForm:
    mat = _materialize(d, desc)
    return ClosedForm(fn=mat.fn, d=d, description=mat.text, sup=mat.sup)


def cumulative_hazard(d: int, desc: Mapping) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Closed-form t -> integral of the named intensity from 0 to t."""
    return _materialize(d, desc).cum


# ---------------------------------------------------------------------------
# censoring descriptors (censored-survival scenarios only)
# ---------------------------------------------------------------------------


def no_censoring() -> dict:
    return {"kind": "none"}


def constant_censoring(rate: float) -> dict:
    return {"kind": "constant", "rate": float(rate)}


def proportional_censoring(factor: float) -> dict:
    """Censoring hazard = factor * truth; keeps the same support."""
    return {"kind": "proportional", "factor": float(factor)}


def _check_censoring(desc: Mapping) -> None:
    kind = desc.get("kind")
    if kind == "none":
        return
    if kind == "constant":
        rate = float(desc["rate"])
        if not (rate >= 0.0 and math.isfinite(rate)):
            raise InvalidConfig(f"censoring rate must be finite and >= 0, got {rate}")
        return
    if kind == "proportional":
        factor = float(desc["factor"])
        if not (factor >= 0.0 and math.isfinite(factor)):
            raise InvalidConfig(f"censoring factor must be finite and >= 0, got {factor}")
        return
    raise InvalidConfig(f"unknown censoring kind {kind!r}; known: none, constant, proportional")


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a simulator needs: scheme, truth, covariate law, size, seed."""

    kind: str
    d: int
    n: int
    seed: int
    truth: Mapping[str, Any]
    censoring: Mapping[str, Any] | None = None
    return_intensity: float = 0.0
    covariates: str = "uniform"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown scenario kind {self.kind!r}; known: {KINDS}")
        if not (isinstance(self.n, int) and self.n >= 1):
            raise InvalidConfig(f"n must be a positive integer, got {self.n!r}")
        if not (isinstance(self.d, int) and self.d >= 0):
            raise InvalidConfig(f"d must be a nonnegative integer, got {self.d!r}")
        if self.covariates != "uniform":
            raise InvalidConfig(f"only the uniform covariate law is shipped, got {self.covariates!r}")
        _materialize(self.d, self.truth)  # validates the descriptor
        if self.censoring is not None:
            if self.kind != CENSORED_SURVIVAL:
                raise InvalidConfig("censoring only applies to censored-survival scenarios")
            _check_censoring(self.censoring)
        if self.return_intensity != 0.0:
            if self.kind != MARKOV_TRANSITION:
                raise InvalidConfig("return_intensity only applies to two-state scenarios")
            if not (self.return_intensity >= 0.0 and math.isfinite(self.return_intensity)):
                raise InvalidConfig(f"return intensity must be finite and >= 0, got {self.return_intensity}")

    def to_obj(self) -> dict:
        obj = {
            "kind": self.kind,
            "d": self.d,
            "n": self.n,
            "seed": self.seed,
            "truth": dict(self.truth),
            "covariates": self.covariates,
            "sup_bound": truth_from_descriptor(self.d, self.truth).sup_bound(),
        }
        if self.censoring is not None:
            obj["censoring"] = dict(self.censoring)
        if self.kind == MARKOV_TRANSITION:
            obj["return_intensity"] = self.return_intensity
        return obj

    @classmethod
    def from_obj(cls, obj: Mapping) -> "ScenarioConfig":
        return cls(
            kind=obj["kind"],
            d=int(obj["d"]),
            n=int(obj["n"]),
            seed=int(obj["seed"]),
            truth=dict(obj["truth"]),
            censoring=dict(obj["censoring"]) if obj.get("censoring") is not None else None,
            return_intensity=float(obj.get("return_intensity", 0.0)),
            covariates=obj.get("covariates", "uniform"),
        )


def scenario_truth(config: ScenarioConfig) -> ClosedForm:
    return truth_from_descriptor(config.d, config.truth)


def censoring_model(config: ScenarioConfig) -> ClosedForm | None:
    """The censoring hazard as a model, or None when nothing is censored."""
    desc = config.censoring
    if config.kind != CENSORED_SURVIVAL or desc is None or desc["kind"] == "none":
        return None
    if desc["kind"] == "constant":
        rate = float(desc["rate"])
        return ClosedForm(
            fn=lambda t, x, c=rate: np.full(np.shape(t)[0], c),
            d=config.d,
            description=f"constant censoring {rate:g}",
            sup=rate,
        )
    factor = float(desc["factor"])
    mat = _materialize(config.d, config.truth)
    return ClosedForm(
        fn=lambda t, x, c=factor, f=mat.fn: c * f(t, x),
        d=config.d,
        description=f"{factor:g} x ({mat.text})",
        sup=factor * mat.sup,
    )


def _censoring_cumulative(config: ScenarioConfig) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    desc = config.censoring
    if desc is None or desc["kind"] == "none":
        return lambda t, x: np.zeros(np.shape(t)[0])
    if desc["kind"] == "constant":
        rate = float(desc["rate"])
        return lambda t, x, c=rate: c * np.asarray(t, dtype=np.float64)
    factor = float(desc["factor"])
    cum = cumulative_hazard(config.d, config.truth)
    return lambda t, x, c=factor, g=cum: c * g(t, x)


def scenario_mu(config: ScenarioConfig) -> ClosedFormMu | None:
    """Closed-form reference measure, or None when only simulation knows it."""
    density = lambda x: np.ones(np.shape(x)[0])  # noqa: E731 - uniform law
    if config.kind == COX_PROCESS:
        return ClosedFormMu(
            survivor=lambda t, x: np.ones(np.shape(t)[0]),
            density=density,
            d=config.d,
            description="always at risk, uniform covariates",
        )
    if config.kind == CENSORED_SURVIVAL:
        cum_t = cumulative_hazard(config.d, config.truth)
        cum_c = _censoring_cumulative(config)

        def survivor(t, x, a=cum_t, b=cum_c):
            return np.exp(-(a(t, x) + b(t, x)))

        return ClosedFormMu(
            survivor=survivor,
            density=density,
            d=config.d,
            description="exp(-(event + censoring cumulative hazards)), uniform covariates",
        )
    return None  # state-1 occupancy of the chain has no closed form here


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _invert_cumulative(cum, xs: np.ndarray, targets: np.ndarray, check_fn=None) -> np.ndarray:
    """Smallest t in [0,1] with cum(t, x) >= target; inf when there is none.

    Plain bisection: 60 halvings pin t down to 2^-60, far inside the 1e-12
    contract.  check_fn, when given, is the intensity itself; a zero value at
    the returned root means the cumulative hazard crossed its target on a
    flat stretch, which makes the inverse ill-defined.
    """
    k = targets.shape[0]
    out = np.full(k, np.inf)
    ones = np.ones(k)
    active = np.asarray(cum(ones, xs)) >= targets
    if not active.any():
        return out
    xa = xs[active]
    ta = targets[active]
    lo = np.zeros(ta.shape[0])
    hi = np.ones(ta.shape[0])
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        ge = np.asarray(cum(mid, xa)) >= ta
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    if check_fn is not None:
        vals = np.asarray(check_fn(hi, xa))
        flat = np.flatnonzero(vals <= 0.0)
        if flat.size:
            i = int(flat[0])
            raise NonPositiveModel(
                "cumulative hazard is flat where its inverse is needed: "
                f"intensity {vals[i]} at t={hi[i]}, x={xa[i].tolist()}",
                t=float(hi[i]),
                x=tuple(float(v) for v in xa[i]),
            )
    out[active] = hi
    return out


def _simulate_censored_survival(config: ScenarioConfig) -> Dataset:
    n, d = config.n, config.d
    mat = _materialize(d, config.truth)
    u = uniform_block(config.seed, np.arange(n, dtype=np.int64), d + 2)
    xs = u[:, :d]
    target_t = -np.log(u[:, d])
    target_c = -np.log(u[:, d + 1])
    t_event = _invert_cumulative(mat.cum, xs, target_t, check_fn=mat.fn)
    desc = config.censoring
    if desc is None or desc["kind"] == "none":
        t_cens = np.full(n, np.inf)
    else:
        t_cens = _invert_cumulative(_censoring_cumulative(config), xs, target_c)
    end = np.minimum(np.minimum(t_event, t_cens), 1.0)
    observed = (t_event <= t_cens) & (t_event <= 1.0)
    records = []
    for i in range(n):
        events = (float(t_event[i]),) if observed[i] else ()
        records.append(
            PathRecord(
                id=i,
                x=tuple(float(v) for v in xs[i]),
                events=events,
                at_risk=StepFunction.indicator(0.0, float(end[i])),
            )
        )
    return Dataset(d=d, records=tuple(records))


def _check_bound(vals: np.ndarray, bound: float, t: np.ndarray, xs: np.ndarray) -> None:
    bad = np.flatnonzero(vals > bound * (1.0 + _BOUND_SLACK))
    if bad.size:
        i = int(bad[0])
        raise BoundViolation(
            f"declared sup bound {bound} exceeded: intensity {vals[i]} at "
            f"t={t[i]}, x={xs[i].tolist()}"
        )


def _simulate_cox_process(config: ScenarioConfig) -> Dataset:
    n, d = config.n, config.d
    truth = scenario_truth(config)
    bound = truth.sup_bound()
    xs = uniform_block(config.seed, np.arange(n, dtype=np.int64), d)
    events: list[list[float]] = [[] for _ in range(n)]
    if bound > 0.0:
        t = np.zeros(n)
        draw = np.full(n, d, dtype=np.int64)
        alive = np.ones(n, dtype=bool)
        while alive.any():
            ia = np.flatnonzero(alive)
            gap_u = uniform01(config.seed, ia, draw[ia])
            acc_u = uniform01(config.seed, ia, draw[ia] + 1)
            draw[ia] += 2
            t[ia] -= np.log(gap_u) / bound
            over = t[ia] > 1.0
            alive[ia[over]] = False
            keep = ia[~over]
            if keep.size == 0:
                continue
            vals = truth.values(t[keep], xs[keep])
            _check_bound(vals, bound, t[keep], xs[keep])
            accepted = keep[acc_u[~over] <= vals / bound]
            for i in accepted:
                events[i].append(float(t[i]))
    full_window = StepFunction.indicator(0.0, 1.0)
    records = tuple(
        PathRecord(id=i, x=tuple(float(v) for v in xs[i]), events=tuple(events[i]), at_risk=full_window)
        for i in range(n)
    )
    return Dataset(d=d, records=records)


def _simulate_markov_transition(config: ScenarioConfig) -> Dataset:
    n, d = config.n, config.d
    truth = scenario_truth(config)
    bound = truth.sup_bound()
    rate_back = config.return_intensity
    xs = uniform_block(config.seed, np.arange(n, dtype=np.int64), d)
    pieces: list[list[tuple[float, float, float]]] = [[] for _ in range(n)]
    events: list[list[float]] = [[] for _ in range(n)]
    if bound == 0.0:
        for i in range(n):
            pieces[i].append((0.0, 1.0, 1.0))  # never leaves state 1
    else:
        t = np.zeros(n)
        enter = np.zeros(n)  # start of the current state-1 stretch
        draw = np.full(n, d, dtype=np.int64)
        state = np.ones(n, dtype=np.int8)
        done = np.zeros(n, dtype=bool)
        while not done.all():
            s1 = np.flatnonzero(~done & (state == 1))
            if s1.size:
                gap_u = uniform01(config.seed, s1, draw[s1])
                acc_u = uniform01(config.seed, s1, draw[s1] + 1)
                draw[s1] += 2
                cand = t[s1] - np.log(gap_u) / bound
                over = cand > 1.0
                for i in s1[over]:
                    pieces[i].append((enter[i], 1.0, 1.0))
                done[s1[over]] = True
                keep = s1[~over]
                if keep.size:
                    tk = cand[~over]
                    vals = truth.values(tk, xs[keep])
                    _check_bound(vals, bound, tk, xs[keep])
                    acc = acc_u[~over] <= vals / bound
                    t[keep] = tk
                    fired = keep[acc]
                    for i, s in zip(fired, tk[acc]):
                        events[i].append(float(s))
                        pieces[i].append((enter[i], float(s), 1.0))
                    state[fired] = 2
            s2 = np.flatnonzero(~done & (state == 2))
            if s2.size:
                if rate_back == 0.0:
                    done[s2] = True  # state 2 is absorbing
                else:
                    gap_u = uniform01(config.seed, s2, draw[s2])
                    draw[s2] += 1
                    cand = t[s2] - np.log(gap_u) / rate_back
                    over = cand > 1.0
                    done[s2[over]] = True
                    keep = s2[~over]
                    t[keep] = cand[~over]
                    enter[keep] = cand[~over]
                    state[keep] = 1
    records = tuple(
        PathRecord(
            id=i,
            x=tuple(float(v) for v in xs[i]),
            events=tuple(events[i]),
            at_risk=StepFunction.from_triples(pieces[i]),
        )
        for i in range(n)
    )
    return Dataset(d=d, records=records)


def simulate_scenario(config: ScenarioConfig) -> Dataset:
    """Generate a dataset for any scenario kind; pure in (config)."""
    if config.kind == CENSORED_SURVIVAL:
        return _simulate_censored_survival(config)
    if config.kind == COX_PROCESS:
        return _simulate_cox_process(config)
    return _simulate_markov_transition(config)
