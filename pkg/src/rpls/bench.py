"""Repeated self-training experiments and report files.

Every repetition draws one split (seed ``base_seed + r``) that all criteria
and the supervised baseline share, so accuracy differences are paired.
"""

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import selftrain
from .dataset import Dataset, generate_binomial, load_csv, make_split

SCHEMA_VERSION = 1
BASELINE = "supervised"
DEFAULT_RIDGE = 1e-6
FORMATS = ("csv", "curves", "markdown", "json")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CriterionSpec:
    name: str
    label: str = ""
    loop: dict = field(default_factory=dict)

    @property
    def key(self):
        return self.label or self.name


@dataclass(frozen=True)
class ExperimentConfig:
    """Dataset source, split fractions, repetitions and the criteria to compare.

    ``dataset`` is either ``{"csv": path, "label_column": ..., "features": [...]}``
    or ``{"synthetic": {"n_rows": ..., "coefficients": [...], "intercept": ..., "seed": ...}}``.
    ``loop`` holds loop settings shared by all criteria; per-criterion
    entries override them.
    """

    dataset: dict
    criteria: tuple
    unlabeled_fraction: float = 0.8
    test_fraction: float = 0.2
    repetitions: int = 40
    base_seed: int = 0
    loop: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if not self.criteria:
            raise ConfigError("criteria must be non-empty")
        if not 0 <= self.unlabeled_fraction < 1 or not 0 < self.test_fraction < 1:
            raise ConfigError("fractions must satisfy 0 <= unlabeled < 1 and 0 < test < 1")
        if ("csv" in self.dataset) == ("synthetic" in self.dataset):
            raise ConfigError("dataset needs exactly one of 'csv' or 'synthetic'")
        specs = []
        for c in self.criteria:
            spec = CriterionSpec(c) if isinstance(c, str) else c
            if isinstance(spec, dict):
                spec = CriterionSpec(spec["name"], spec.get("label", ""), dict(spec.get("loop", {})))
            try:
                self.loop_config(spec)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"criterion {spec.key!r}: {exc}") from None
            specs.append(spec)
        keys = [s.key for s in specs]
        if len(set(keys)) != len(keys) or BASELINE in keys:
            raise ConfigError("criterion labels must be unique and differ from 'supervised'")
        object.__setattr__(self, "criteria", tuple(specs))

    def loop_config(self, spec):
        settings = {"ridge": DEFAULT_RIDGE, **self.loop, **spec.loop, "criterion": spec.name}
        return selftrain.LoopConfig.from_dict(settings)

    def load_data(self):
        src = self.dataset
        if "csv" in src:
            data = load_csv(src["csv"], src.get("label_column", "label"), src.get("class_levels"))
            if src.get("features"):
                missing = [f for f in src["features"] if f not in data.feature_names]
                if missing:
                    raise ConfigError(f"features {missing} not in {list(data.feature_names)}")
                cols = [data.feature_names.index(f) for f in src["features"]]
                data = Dataset(data.features[:, cols], data.labels, tuple(src["features"]),
                               data.class_count, data.class_levels)
            return data
        syn = src["synthetic"]
        return generate_binomial(syn["n_rows"], syn["coefficients"], syn.get("intercept", 0.0), syn.get("seed", 0))

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "dataset": self.dataset,
            "criteria": [{"name": c.name, "label": c.label, "loop": c.loop} for c in self.criteria],
            "unlabeled_fraction": self.unlabeled_fraction,
            "test_fraction": self.test_fraction,
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "loop": self.loop,
        }

    @classmethod
    def from_dict(cls, d):
        known = {"schema_version", "dataset", "criteria", "unlabeled_fraction", "test_fraction",
                 "repetitions", "base_seed", "loop"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "dataset" not in d or "criteria" not in d:
            raise ConfigError("config needs 'dataset' and 'criteria'")
        args = {k: d[k] for k in known if k in d}
        args["criteria"] = tuple(args["criteria"])
        try:
            return cls(**args)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path):
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(d)


@dataclass
class BenchReport:
    """One cell per (criterion, repetition); failed cells carry ``error`` instead of accuracy."""

    cells: list
    config: dict

    def criteria(self):
        seen = []
        for c in self.cells:
            if c["criterion"] not in seen:
                seen.append(c["criterion"])
        return seen

    def summary(self):
        rows = []
        for name in self.criteria():
            acc = [c["accuracy"] for c in self.cells if c["criterion"] == name and c.get("error") is None]
            mean = float(np.mean(acc)) if acc else math.nan
            sd = float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0
            rows.append({"criterion": name, "mean": mean, "sd": sd, "n": len(acc)})
        return rows

    def mean(self, name):
        return next(r["mean"] for r in self.summary() if r["criterion"] == name)

    def paired(self, name, other=BASELINE):
        """Per-repetition accuracy differences ``name - other`` over repetitions where both ran."""
        a = {c["repetition"]: c["accuracy"] for c in self.cells if c["criterion"] == name and c.get("error") is None}
        b = {c["repetition"]: c["accuracy"] for c in self.cells if c["criterion"] == other and c.get("error") is None}
        return [a[r] - b[r] for r in sorted(set(a) & set(b))]

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "config": self.config, "cells": self.cells,
                "summary": self.summary()}

    @classmethod
    def from_dict(cls, d):
        return cls(cells=d["cells"], config=d["config"])

    def __eq__(self, other):
        if not isinstance(other, BenchReport):
            return NotImplemented
        return json.dumps(self.to_dict(), sort_keys=True) == json.dumps(other.to_dict(), sort_keys=True)


def _cell(name, rep, trace, data, split):
    metrics = selftrain.evaluate(trace, data, split)
    cell = {
        "criterion": name,
        "repetition": rep,
        "accuracy": metrics["test_accuracy"],
        "rounds": metrics["rounds"],
        "pseudo_label_error": metrics["pseudo_label_error"],
        "curve": [r["test_accuracy"] for r in trace.rounds] + [metrics["test_accuracy"]],
        "error": None,
    }
    if trace.failure:
        cell["error"] = f"{trace.failure['error']}: {trace.failure['message']}"
    return cell


def _run_repetition(args):
    config_dict, rep = args
    config = ExperimentConfig.from_dict(config_dict)
    data = config.load_data()
    seed = config.base_seed + rep
    split = make_split(data, config.unlabeled_fraction, config.test_fraction, seed=seed)
    ridge = config.loop.get("ridge", DEFAULT_RIDGE)
    cells = [_cell(BASELINE, rep, selftrain.supervised(data, split, ridge), data, split)]
    for spec in config.criteria:
        loop = config.loop_config(spec)
        loop = selftrain.LoopConfig.from_dict({**loop.to_dict(), "seed": seed})
        try:
            trace = selftrain.run(data, split, loop)
            cells.append(_cell(spec.key, rep, trace, data, split))
        except Exception as exc:  # a failing cell must not stop the sweep
            cells.append({"criterion": spec.key, "repetition": rep, "accuracy": None, "rounds": 0,
                          "pseudo_label_error": None, "curve": [], "error": f"{type(exc).__name__}: {exc}"})
    return cells


def worker_count(requested=None):
    env = os.environ.get("RPLS_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    n = cap if requested is None else min(requested, cap)
    return max(1, n)


def run_experiment(config, workers=None):
    """Run all repetitions (in worker processes when more than one worker is allowed)."""
    config.load_data()
    payload = config.to_dict()
    jobs = [(payload, r) for r in range(config.repetitions)]
    n = min(worker_count(workers), len(jobs))
    if n == 1:
        results = [_run_repetition(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_repetition, jobs))
    order = [BASELINE] + [c.key for c in config.criteria]
    cells = [c for rep in results for c in rep]
    cells.sort(key=lambda c: (order.index(c["criterion"]), c["repetition"]))
    return BenchReport(cells, payload)


def render(report, fmt):
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt == "markdown":
        lines = ["| criterion | mean | sd | n |", "|---|---|---|---|"]
        for r in report.summary():
            lines.append(f"| {r['criterion']} | {r['mean']:.4f} | {r['sd']:.4f} | {r['n']} |")
        return "\n".join(lines) + "\n"
    if fmt not in ("csv", "curves"):
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["criterion", "repetition", "round", "accuracy"])
    for c in report.cells:
        if fmt == "csv":
            acc = "" if c["accuracy"] is None else repr(c["accuracy"])
            writer.writerow([c["criterion"], c["repetition"], c["rounds"], acc])
        else:
            for t, acc in enumerate(c["curve"]):
                writer.writerow([c["criterion"], c["repetition"], t, "" if acc is None else repr(acc)])
    return buf.getvalue()


def emit_report(report, fmt, path):
    """Write ``report`` as csv (final accuracy per cell), curves, markdown or json."""
    text = render(report, fmt)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return Path(path)


def load_report(path):
    return BenchReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
