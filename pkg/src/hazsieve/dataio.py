"""File formats: newline-delimited datasets, scenario sidecars, model JSON.

Dataset lines are assembled by hand so every float carries 17 significant
digits, which round-trips float64 exactly; loading therefore reproduces the
in-memory dataset bit for bit and repeated writes are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .aggregation import AggregateFit
from .core import Clipped, Dataset, IntensityModel, Mixture, PathRecord, StepFunction
from .erm import ErmFit
from .errors import EmptyDataset, InvalidConfig
from .sieves import SieveExpansion, SieveSpec
from .simulate import ScenarioConfig


def _f(v: float) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def record_to_line(rec: PathRecord) -> str:
    xs = ",".join(_f(v) for v in rec.x)
    events = ",".join(_f(s) for s in rec.events)
    pieces = ",".join(
        f'{{"start":{_f(iv.start)},"end":{_f(iv.end)},"value":{_f(val)}}}'
        for iv, val in rec.at_risk.pieces
    )
    return f'{{"id":{rec.id},"x":[{xs}],"events":[{events}],"at_risk":[{pieces}]}}'


def record_from_line(line: str) -> PathRecord:
    obj = json.loads(line)
    return PathRecord(
        id=int(obj["id"]),
        x=tuple(float(v) for v in obj["x"]),
        events=tuple(float(s) for s in obj["events"]),
        at_risk=StepFunction.from_triples(
            (float(p["start"]), float(p["end"]), float(p["value"])) for p in obj["at_risk"]
        ),
    )


def dump_dataset(data: Dataset) -> str:
    return "".join(record_to_line(rec) + "\n" for rec in data.records)


def load_dataset(text: str, d: int | None = None) -> Dataset:
    records = tuple(record_from_line(line) for line in text.splitlines() if line.strip())
    if not records:
        if d is None:
            raise EmptyDataset("no records in dataset text and no dimension given")
        return Dataset(d=d, records=())
    return Dataset(d=records[0].d if d is None else d, records=records)


def write_dataset(path: str | Path, data: Dataset) -> None:
    Path(path).write_text(dump_dataset(data))


def read_dataset(path: str | Path, d: int | None = None) -> Dataset:
    return load_dataset(Path(path).read_text(), d=d)


# ---------------------------------------------------------------------------
# scenario sidecars
# ---------------------------------------------------------------------------


def write_scenario(path: str | Path, config: ScenarioConfig) -> None:
    Path(path).write_text(json.dumps(config.to_obj(), indent=2, sort_keys=True) + "\n")


def read_scenario(path: str | Path) -> ScenarioConfig:
    return ScenarioConfig.from_obj(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


def model_to_obj(model: IntensityModel) -> dict:
    """JSON-safe descriptor for any model the fitting path can produce."""
    if isinstance(model, Clipped):
        return {
            "type": "clipped",
            "lower": model.lower,
            "upper": model.upper,
            "inner": model_to_obj(model.inner),
        }
    if isinstance(model, SieveExpansion):
        return {
            "type": "sieve",
            "spec": model.spec.to_obj(),
            "coefficients": [float(v) for v in model.coefficients],
        }
    if isinstance(model, Mixture):
        return {
            "type": "mixture",
            "components": [
                {"weight": float(w), "model": model_to_obj(m)} for w, m in model.components
            ],
        }
    from .single_index import SingleIndexModel

    if isinstance(model, SingleIndexModel):
        return {
            "type": "single_index",
            "v": [float(c) for c in model.v],
            "inner": model_to_obj(model.inner),
        }
    raise InvalidConfig(f"model of type {type(model).__name__} has no file descriptor")


def model_from_obj(obj: dict) -> IntensityModel:
    kind = obj.get("type")
    if kind == "clipped":
        return Clipped(
            inner=model_from_obj(obj["inner"]),
            lower=float(obj["lower"]),
            upper=float(obj["upper"]),
        )
    if kind == "sieve":
        return SieveExpansion(
            spec=SieveSpec.from_obj(obj["spec"]),
            coefficients=np.asarray(obj["coefficients"], dtype=np.float64),
        )
    if kind == "mixture":
        return Mixture(
            tuple((float(c["weight"]), model_from_obj(c["model"])) for c in obj["components"])
        )
    if kind == "single_index":
        from .single_index import SingleIndexModel

        return SingleIndexModel(
            v=tuple(float(c) for c in obj["v"]), inner=model_from_obj(obj["inner"])
        )
    raise InvalidConfig(f"unknown model descriptor type {kind!r}")


def write_model(path: str | Path, model: IntensityModel) -> None:
    Path(path).write_text(json.dumps(model_to_obj(model), indent=2) + "\n")


def read_model(path: str | Path) -> IntensityModel:
    return model_from_obj(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# fits and aggregates
# ---------------------------------------------------------------------------


def erm_fit_to_obj(fit: ErmFit) -> dict:
    obj = fit.to_obj()
    obj["type"] = "erm_fit"
    return obj


def erm_fit_from_obj(obj: dict) -> ErmFit:
    return ErmFit.from_obj(obj)


def aggregate_to_obj(fit: AggregateFit) -> dict:
    return {
        "type": "aggregate",
        "temperature": fit.temperature,
        "weights": [float(w) for w in fit.weights],
        "learning_risks": [float(r) for r in fit.learning_risks],
        "members": [model_to_obj(m) for m in fit.dictionary],
    }


def aggregate_from_obj(obj: dict) -> AggregateFit:
    return AggregateFit(
        dictionary=tuple(model_from_obj(m) for m in obj["members"]),
        weights=np.asarray(obj["weights"], dtype=np.float64),
        temperature=float(obj["temperature"]),
        learning_risks=np.asarray(obj["learning_risks"], dtype=np.float64),
    )


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
