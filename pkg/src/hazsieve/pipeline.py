"""Two-stage estimation pipeline: split, fit a dictionary, aggregate.

Half the sample fits one ERM per admissible sieve resolution (plus, when
enabled and d >= 2, one per (direction, 1-covariate sieve) pair on
index-projected copies of the data); the held-out half scores every member
and sets the Gibbs weights. Repeating over several independent splits and
averaging the aggregates removes the split artifact. ``rate_study`` reruns
the pipeline over a grid of sample sizes and seeds and summarizes how the
squared error decays.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .aggregation import AggregateFit, aggregate_from_risks, default_temperature, jackknife
from .core import Clipped, Dataset, EmpiricalMu, IntensityModel
from .erm import fit
from .errors import HazSieveError, InvalidConfig, NoUsableFits
from .rng import derive_seed, permutation
from .risk import l2mu_distance_sq
from .sieves import SieveExpansion, build_collection
from .simulate import ScenarioConfig, scenario_mu, scenario_truth, simulate_scenario
from .single_index import (
    SingleIndexModel,
    build_net,
    build_sim_dictionary,
    default_delta,
    member_risks,
)

logger = logging.getLogger(__name__)

MU_SAMPLE_FACTOR = 10


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one estimation run depends on.

    ``scenario.n`` is the total sample; the pipeline splits it into equal
    training and learning halves, so it must be even. ``temperature``
    defaults to 4 clip^2 and ``net_delta`` to 1/sqrt(n log n) at the
    half-sample size. The ``eval_*`` fields only steer the final
    distance-to-truth computation, never the fits.
    """

    scenario: ScenarioConfig
    family: str = "pp"
    l: tuple[int, ...] | None = None
    clip: float = 1.0
    temperature: float | None = None
    jackknife_splits: int = 1
    split_seeds: tuple[int, ...] | None = None
    ridge: float = 0.0
    rho: float | None = None
    sim_enabled: bool = False
    net_delta: float | None = None
    net_cap: int = 4096
    quad_nodes: int = 8
    eval_quad_nodes: int = 8
    eval_mc_draws: int = 4096
    eval_seed: int = 0
    report_members: bool = False

    def __post_init__(self):
        if self.scenario.n < 2 or self.scenario.n % 2 != 0:
            raise InvalidConfig(
                f"the pipeline splits the sample in half; need an even total >= 2, got {self.scenario.n}"
            )
        if self.jackknife_splits < 1:
            raise InvalidConfig(f"need at least one split, got {self.jackknife_splits}")
        if self.split_seeds is not None:
            seeds = tuple(int(s) for s in self.split_seeds)
            if len(seeds) != self.jackknife_splits:
                raise InvalidConfig(
                    f"split_seeds must list one seed per split, got {len(seeds)} for {self.jackknife_splits}"
                )
            object.__setattr__(self, "split_seeds", seeds)
        if self.l is not None:
            object.__setattr__(self, "l", tuple(int(v) for v in self.l))
        if not (self.clip > 0.0 and math.isfinite(self.clip)):
            raise InvalidConfig(f"clip bound must be positive and finite, got {self.clip}")
        if self.temperature is not None and not self.temperature > 0.0:
            raise InvalidConfig(f"temperature must be positive, got {self.temperature}")
        if self.net_delta is not None and not self.net_delta > 0.0:
            raise InvalidConfig(f"net resolution must be positive, got {self.net_delta}")
        if self.net_cap < 1:
            raise InvalidConfig(f"net cap must be positive, got {self.net_cap}")
        for name in ("quad_nodes", "eval_quad_nodes", "eval_mc_draws"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be positive, got {getattr(self, name)}")

    def to_obj(self) -> dict:
        return {
            "scenario": self.scenario.to_obj(),
            "family": self.family,
            "l": None if self.l is None else list(self.l),
            "clip": self.clip,
            "temperature": self.temperature,
            "jackknife_splits": self.jackknife_splits,
            "split_seeds": None if self.split_seeds is None else list(self.split_seeds),
            "ridge": self.ridge,
            "rho": self.rho,
            "sim_enabled": self.sim_enabled,
            "net_delta": self.net_delta,
            "net_cap": self.net_cap,
            "quad_nodes": self.quad_nodes,
            "eval_quad_nodes": self.eval_quad_nodes,
            "eval_mc_draws": self.eval_mc_draws,
            "eval_seed": self.eval_seed,
            "report_members": self.report_members,
        }

    @staticmethod
    def from_obj(obj: Mapping) -> "PipelineConfig":
        if "scenario" not in obj:
            raise InvalidConfig("pipeline config needs a 'scenario' entry")

        def opt(key, conv, default=None):
            val = obj.get(key)
            return default if val is None else conv(val)

        return PipelineConfig(
            scenario=ScenarioConfig.from_obj(obj["scenario"]),
            family=str(obj.get("family", "pp")),
            l=opt("l", lambda v: tuple(int(i) for i in v)),
            clip=float(obj.get("clip", 1.0)),
            temperature=opt("temperature", float),
            jackknife_splits=int(obj.get("jackknife_splits", 1)),
            split_seeds=opt("split_seeds", lambda v: tuple(int(i) for i in v)),
            ridge=float(obj.get("ridge", 0.0)),
            rho=opt("rho", float),
            sim_enabled=bool(obj.get("sim_enabled", False)),
            net_delta=opt("net_delta", float),
            net_cap=int(obj.get("net_cap", 4096)),
            quad_nodes=int(obj.get("quad_nodes", 8)),
            eval_quad_nodes=int(obj.get("eval_quad_nodes", 8)),
            eval_mc_draws=int(obj.get("eval_mc_draws", 4096)),
            eval_seed=int(obj.get("eval_seed", 0)),
            report_members=bool(obj.get("report_members", False)),
        )


def split_indices(seed: int, total: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation of range(total), cut in half: (training, learning)."""
    if total < 2 or total % 2 != 0:
        raise InvalidConfig(f"need an even total >= 2 to split, got {total}")
    perm = permutation(seed, total)
    half = total // 2
    return perm[:half], perm[half:]


def member_provenance(model: IntensityModel) -> dict:
    """Where a dictionary member came from: its sieve spec, plus the
    direction for index models."""
    out: dict = {}
    inner = model
    if isinstance(inner, SingleIndexModel):
        out["kind"] = "single_index"
        out["v"] = [float(c) for c in inner.v]
        inner = inner.inner
    else:
        out["kind"] = "sieve"
    if isinstance(inner, Clipped):
        inner = inner.inner
    if isinstance(inner, SieveExpansion):
        out.update(inner.spec.to_obj())
    return out


def _fit_dictionary(
    training: Dataset,
    config: PipelineConfig,
    collection,
    net,
    sim_collection,
) -> list[IntensityModel]:
    members: list[IntensityModel] = []
    for spec in collection.specs:
        try:
            f = fit(training, spec, ridge=config.ridge, rho=config.rho,
                    quad_nodes=config.quad_nodes)
        except HazSieveError as err:
            logger.warning("skipping sieve fit m=%s: %s", spec.m, err)
            continue
        members.append(f.model)
    if net is not None:
        members.extend(
            build_sim_dictionary(training, net, sim_collection,
                                 ridge=config.ridge, rho=config.rho,
                                 quad_nodes=config.quad_nodes)
        )
    return members


def evaluation_mu(scenario: ScenarioConfig):
    """The scenario's closed-form measure, or an empirical stand-in.

    The stand-in is built from a fresh simulation ten times the scenario
    size under a seed derived from the scenario's, so it never reuses the
    estimation sample.
    """
    mu = scenario_mu(scenario)
    if mu is not None:
        return mu, "closed_form"
    fresh = simulate_scenario(
        replace(scenario, n=MU_SAMPLE_FACTOR * scenario.n,
                seed=derive_seed(scenario.seed, "mu"))
    )
    return EmpiricalMu(fresh), "empirical"


def run_pipeline(config: PipelineConfig) -> tuple[IntensityModel, dict]:
    """Simulate, split, fit, aggregate; return the estimate and a report.

    The report is JSON-ready: the resolved configuration, per-split member
    provenance with learning risks and weights, and the squared L2(mu)
    distance between the estimate and the scenario truth.
    """
    data = simulate_scenario(config.scenario)
    half = data.n // 2
    temperature = (config.temperature if config.temperature is not None
                   else default_temperature(config.clip))
    collection = build_collection(half, data.d, config.family, config.l, config.clip)

    net = None
    sim_collection = None
    if config.sim_enabled and data.d >= 2:
        delta = config.net_delta if config.net_delta is not None else default_delta(half)
        net = build_net(data.d, delta, config.net_cap)
        lpair = None if config.l is None else (config.l[0], config.l[1])
        sim_collection = build_collection(half, 1, config.family, lpair, config.clip)

    from . import dataio  # local import: dataio pulls in model types, not the pipeline

    aggregates: list[AggregateFit] = []
    split_reports: list[dict] = []
    for j in range(config.jackknife_splits):
        sseed = (config.split_seeds[j] if config.split_seeds is not None
                 else derive_seed(config.scenario.seed, "split", j))
        train_idx, learn_idx = split_indices(sseed, data.n)
        training = data.subset(train_idx)
        learning = data.subset(learn_idx)
        members = _fit_dictionary(training, config, collection, net, sim_collection)
        if not members:
            raise NoUsableFits(f"every dictionary fit failed on split {j}")
        risks = member_risks(learning, members, config.quad_nodes)
        agg = aggregate_from_risks(members, risks, learning.n, temperature)
        aggregates.append(agg)
        entries = []
        for k, member in enumerate(members):
            entry = member_provenance(member)
            entry["learning_risk"] = float(agg.learning_risks[k])
            entry["weight"] = float(agg.weights[k])
            if config.report_members:
                entry["model"] = dataio.model_to_obj(member)
            entries.append(entry)
        split_reports.append({
            "split_seed": int(sseed),
            "dictionary_size": len(members),
            "members": entries,
        })

    model = jackknife(aggregates)
    truth = scenario_truth(config.scenario)
    mu, mu_kind = evaluation_mu(config.scenario)
    distance = l2mu_distance_sq(
        mu, model, truth,
        quad_nodes=config.eval_quad_nodes,
        mc_draws=config.eval_mc_draws,
        seed=config.eval_seed,
    )
    report = {
        "config": config.to_obj(),
        "n_total": data.n,
        "n_train": half,
        "n_learn": data.n - half,
        "temperature": temperature,
        "net_size": 0 if net is None else net.size,
        "splits": split_reports,
        "mu": mu_kind,
        "l2_mu_distance": float(distance),
    }
    return model, report


# ---------------------------------------------------------------------------
# Rate study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateStudy:
    """Squared errors over a (sample size, seed) grid.

    Rows hold (total sample size, seed, squared L2(mu) distance) in the
    order they were produced: sizes outer, seeds inner.
    """

    rows: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if not self.rows:
            raise InvalidConfig("a rate study needs at least one row")

    def medians(self) -> tuple[tuple[int, float], ...]:
        """Per-size median risk, ascending in size."""
        sizes = sorted({n for n, _, _ in self.rows})
        out = []
        for n in sizes:
            risks = [r for nn, _, r in self.rows if nn == n]
            out.append((n, float(np.median(risks))))
        return tuple(out)

    def slope(self) -> float:
        """Least-squares slope of log median risk against log size."""
        med = self.medians()
        if len(med) < 2:
            raise InvalidConfig("need at least two sample sizes for a slope")
        if any(r <= 0.0 for _, r in med):
            raise InvalidConfig("median risks must be positive to take logs")
        ln = np.log([n for n, _ in med])
        lr = np.log([r for _, r in med])
        return float(np.polyfit(ln, lr, 1)[0])

    def rows_csv(self) -> str:
        lines = ["n,seed,risk"]
        lines.extend(f"{n},{seed},{risk:.17g}" for n, seed, risk in self.rows)
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        lines = ["n,median_risk"]
        lines.extend(f"{n},{med:.17g}" for n, med in self.medians())
        lines.append(f"slope,{self.slope():.17g}")
        return "\n".join(lines) + "\n"


def rate_study(
    template: PipelineConfig,
    n_grid: Sequence[int],
    seeds: Sequence[int],
) -> RateStudy:
    """Rerun the pipeline across sample sizes and seeds.

    Each run replaces the template scenario's total size and seed; nothing
    else varies, so the rows are directly comparable.
    """
    sizes = [int(n) for n in n_grid]
    if len(sizes) < 3:
        raise InvalidConfig(f"a rate study needs at least three sample sizes, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidConfig("sample sizes must be strictly increasing")
    if len(seeds) == 0:
        raise InvalidConfig("a rate study needs at least one seed")
    rows = []
    for n in sizes:
        for seed in seeds:
            cfg = replace(
                template,
                scenario=replace(template.scenario, n=n, seed=int(seed)),
            )
            _, report = run_pipeline(cfg)
            rows.append((n, int(seed), report["l2_mu_distance"]))
            logger.info("rate study n=%d seed=%d risk=%.6g", n, seed, rows[-1][2])
    return RateStudy(rows=tuple(rows))
