"""Command line interface.

Subcommands:

* ``simulate``: draw a dataset from a scenario config.
* ``fit``: one sieve ERM fit on a stored dataset.
* ``aggregate``: the full split/fit/aggregate pipeline, with figures.
* ``evaluate``: distance of a stored model to a scenario's truth.
* ``rate-study``: pipeline over a sample-size grid, with rate figure.

Every command reads ``--config`` (a JSON file) and writes its outputs into
``--out``. Reruns with the same config and seed reproduce every output byte
for byte; to keep that true the numerical kernels always run single
threaded, and ``--threads`` only caps worker processes (of which there are
currently none). Relative paths inside a config resolve against the config
file's directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

_COMMANDS = (
    ("simulate", "draw a dataset from a scenario config"),
    ("fit", "run one sieve ERM fit on a dataset"),
    ("aggregate", "run the split/fit/aggregate pipeline"),
    ("evaluate", "measure a saved model against a scenario's truth"),
    ("rate-study", "rerun the pipeline over a sample-size grid"),
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazsieve",
        description="Estimate event intensities under a multiplicative at-risk model.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, text in _COMMANDS:
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, type=Path, help="JSON config file")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the seed the config supplies")
        p.add_argument("--threads", type=int, default=1,
                       help="worker process cap; numerics always run single threaded")
    return parser


def _resolve(config_path: Path, entry: str) -> Path:
    p = Path(entry)
    return p if p.is_absolute() else config_path.parent / p


def _cmd_simulate(args) -> None:
    from dataclasses import replace

    from . import dataio
    from .simulate import ScenarioConfig, simulate_scenario

    scenario = ScenarioConfig.from_obj(dataio.read_json(args.config))
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    data = simulate_scenario(scenario)
    args.out.mkdir(parents=True, exist_ok=True)
    dataio.write_dataset(args.out / "dataset.ndjson", data)
    dataio.write_scenario(args.out / "scenario.json", scenario)
    events = sum(len(r.events) for r in data.records)
    print(f"simulate: {data.n} records, {events} events, d={data.d} -> {args.out}")


def _cmd_fit(args) -> None:
    from . import dataio
    from .erm import fit
    from .sieves import SieveSpec

    obj = dataio.read_json(args.config)
    data = dataio.read_dataset(_resolve(args.config, obj["dataset"]), d=obj.get("d"))
    spec = SieveSpec.from_obj(obj["spec"])
    rho = obj.get("rho")
    result = fit(
        data, spec,
        ridge=float(obj.get("ridge", 0.0)),
        rho=None if rho is None else float(rho),
        quad_nodes=int(obj.get("quad_nodes", 8)),
    )
    args.out.mkdir(parents=True, exist_ok=True)
    dataio.write_json(args.out / "fit.json", dataio.erm_fit_to_obj(result))
    dataio.write_model(args.out / "model.json", result.model)
    print(f"fit: m={list(spec.m)} risk={result.achieved_risk:.6g} "
          f"condition={result.gram_condition:.3g} -> {args.out}")


def _cmd_aggregate(args) -> None:
    from dataclasses import replace

    from . import dataio, figures
    from .pipeline import PipelineConfig, run_pipeline

    cfg = PipelineConfig.from_obj(dataio.read_json(args.config))
    if args.seed is not None:
        cfg = replace(cfg, scenario=replace(cfg.scenario, seed=args.seed))
    model, report = run_pipeline(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    dataio.write_model(args.out / "model.json", model)
    dataio.write_json(args.out / "report.json", report)
    figures.weights_figure(report, args.out / "weights.png")
    figures.surface_figure(model, args.out / "surface.png")
    sizes = [s["dictionary_size"] for s in report["splits"]]
    print(f"aggregate: dictionary sizes {sizes}, "
          f"l2(mu) distance {report['l2_mu_distance']:.6g} -> {args.out}")


def _cmd_evaluate(args) -> None:
    from . import dataio
    from .pipeline import evaluation_mu
    from .risk import empirical_risk, l2mu_distance_sq
    from .simulate import ScenarioConfig, scenario_truth

    obj = dataio.read_json(args.config)
    model = dataio.read_model(_resolve(args.config, obj["model"]))
    entry = obj["scenario"]
    if isinstance(entry, str):
        entry = dataio.read_json(_resolve(args.config, entry))
    scenario = ScenarioConfig.from_obj(entry)
    seed = args.seed if args.seed is not None else int(obj.get("seed", 0))
    truth = scenario_truth(scenario)
    mu, mu_kind = evaluation_mu(scenario)
    distance = l2mu_distance_sq(
        mu, model, truth,
        quad_nodes=int(obj.get("quad_nodes", 8)),
        mc_draws=int(obj.get("mc_draws", 4096)),
        seed=seed,
    )
    out_obj = {
        "l2_mu_distance": float(distance),
        "mu": mu_kind,
        "seed": seed,
        "scenario": scenario.to_obj(),
    }
    if obj.get("dataset") is not None:
        data = dataio.read_dataset(_resolve(args.config, obj["dataset"]), d=obj.get("d"))
        out_obj["empirical_risk"] = float(empirical_risk(data, model))
        out_obj["evaluated_records"] = data.n
    args.out.mkdir(parents=True, exist_ok=True)
    dataio.write_json(args.out / "evaluation.json", out_obj)
    print(f"evaluate: l2(mu) distance {distance:.6g} ({mu_kind} mu) -> {args.out}")


def _cmd_rate_study(args) -> None:
    from dataclasses import replace

    from . import dataio, figures
    from .pipeline import PipelineConfig, rate_study

    obj = dataio.read_json(args.config)
    template = PipelineConfig.from_obj(obj["pipeline"])
    if args.seed is not None:
        template = replace(template, scenario=replace(template.scenario, seed=args.seed))
    study = rate_study(template, obj["n_grid"], obj["seeds"])
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "rates.csv").write_text(study.rows_csv())
    (args.out / "summary.csv").write_text(study.summary_csv())
    figures.rate_figure(study, args.out / "rate.png")
    print(f"rate-study: {len(study.rows)} runs, slope {study.slope():.4f} -> {args.out}")


_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "aggregate": _cmd_aggregate,
    "evaluate": _cmd_evaluate,
    "rate-study": _cmd_rate_study,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    from .errors import HazSieveError

    try:
        _HANDLERS[args.command](args)
    except (HazSieveError, OSError, KeyError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
