"""Experiment harness: config files in, metrics files out.

Configs are TOML (key-value with nested sections); a ``.json`` file with
the same structure is accepted as an alternative encoding.  Each run
writes one CSV of per-iteration metrics whose bytes depend only on the
config and seeds, plus a JSON summary; reruns are byte-identical.

Times and byte counts are carried as exact rationals internally; the CSV
renders them as shortest-roundtrip floats for plotting, and the summary
keeps the exact "p/q" strings.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .compression import Compressor
from .netsim import NetworkParams, as_fraction
from .objective import Objective
from .topology import ConfusionMatrix, load_matrix, make_matrix
from .trainers import RunMetrics, TrainerConfig, TrainerConfigError, run

OUTPUT_DIR_ENV = "SGDLAB_OUTPUT_DIR"

CSV_COLUMNS = ["iter", "loss", "grad_norm_sq", "sim_time", "bytes", "consensus_dist"]


class ConfigError(ValueError):
    """Invalid experiment configuration; maps to exit code 1."""


@dataclass
class ExperimentConfig:
    objective: Objective
    trainer_template: dict
    seeds: list
    output_dir: Path
    emit: list = field(default_factory=lambda: ["csv", "json"])
    name: str = "experiment"

    def trainer_for_seed(self, seed: int) -> TrainerConfig:
        spec = dict(self.trainer_template)
        spec["seed"] = int(seed)
        return TrainerConfig(**spec)


def _read_config_text(path: Path) -> dict:
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def _build_trainer_template(raw: dict, base_dir: Path) -> dict:
    trainer = raw.get("trainer")
    if not isinstance(trainer, dict):
        raise ConfigError("missing [trainer] section")
    if "algorithm" not in trainer:
        raise ConfigError("[trainer] needs an 'algorithm' key")
    if "T" not in trainer:
        raise ConfigError("[trainer] needs the iteration count 'T'")
    template = {
        "algorithm": trainer["algorithm"],
        "iterations": int(trainer["T"]),
        "n_workers": int(trainer.get("N", 1)),
        "batch_size": int(trainer.get("B", 1)),
        "gamma": trainer.get("gamma", "auto"),
        "sampling_mode": trainer.get("sampling", "without-replacement"),
        "implementation": trainer.get("implementation", ""),
        "collective": trainer.get("collective", ""),
        "avg_every": int(trainer.get("K", 1)),
        "timing": trainer.get("timing", "network"),
        "compute_time": trainer.get("compute_time", 0),
    }
    if "tau" in trainer:
        template["tau_max"] = int(trainer["tau"])
    if "compute_times" in trainer:
        template["compute_times"] = tuple(trainer["compute_times"])
    if "compressor" in trainer:
        template["compressor"] = Compressor.from_config(trainer["compressor"])
    if "confusion" in trainer:
        conf = trainer["confusion"]
        if "file" in conf:
            matrix_path = base_dir / conf["file"]
            if not matrix_path.exists():
                raise ConfigError(f"confusion matrix file {matrix_path} does not exist")
            template["confusion"] = load_matrix(matrix_path)
        else:
            template["confusion"] = make_matrix(
                conf.get("kind", "ring"), int(conf.get("N", template["n_workers"]))
            )
    if "network" in raw:
        net = raw["network"]
        template["network"] = NetworkParams(
            as_fraction(net.get("t_latency", 0)),
            as_fraction(net.get("t_transfer_per_unit", 0)),
            template["n_workers"],
        )
    return template


def load_experiment(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = _read_config_text(path)
    except Exception as exc:  # parse errors carry position info
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if "objective" not in raw:
        raise ConfigError("missing [objective] section")
    try:
        objective = Objective.from_config(raw["objective"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid [objective] section: {exc}") from exc
    template = _build_trainer_template(raw, path.parent)
    exp = raw.get("experiment", {})
    seeds = exp.get("seeds", [template.get("seed", 0) or 0])
    if not seeds:
        raise ConfigError("need at least one seed")
    # input file references resolve against the config; outputs against
    # the working directory, like most command-line tools
    out_path = Path(os.environ.get(OUTPUT_DIR_ENV) or exp.get("output_dir", "out"))
    emit = list(exp.get("emit", ["csv", "json"]))
    for channel in emit:
        if channel not in ("csv", "json", "timeline"):
            raise ConfigError(f"unknown emit channel {channel!r}")
    # constructing a trainer validates the whole combination early
    try:
        ExperimentConfig(
            objective=objective,
            trainer_template=template,
            seeds=[int(s) for s in seeds],
            output_dir=out_path,
            emit=emit,
            name=path.stem,
        ).trainer_for_seed(int(seeds[0]))
    except TrainerConfigError as exc:
        raise ConfigError(f"invalid [trainer] section: {exc}") from exc
    return ExperimentConfig(
        objective=objective,
        trainer_template=template,
        seeds=[int(s) for s in seeds],
        output_dir=out_path,
        emit=emit,
        name=path.stem,
    )


def metrics_csv(metrics: RunMetrics) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for t in range(metrics.iterations):
        writer.writerow(
            [
                t,
                repr(float(metrics.loss[t])),
                repr(float(metrics.grad_norm_sq[t])),
                repr(float(metrics.sim_time[t])),
                repr(float(metrics.bits_sent[t] / 8)),
                repr(float(metrics.consensus[t])),
            ]
        )
    return buf.getvalue()


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every seed, write the artifacts, and return the summary."""
    config.output_dir.mkdir(parents=True, exist_ok=True)
    per_seed = []
    for seed in config.seeds:
        trainer = config.trainer_for_seed(seed)
        metrics = run(trainer, config.objective)
        summary = metrics.summary()
        summary["seed"] = seed
        if "csv" in config.emit:
            csv_path = config.output_dir / f"{config.name}_seed{seed}.csv"
            csv_path.write_text(metrics_csv(metrics))
            summary["csv"] = csv_path.name
        per_seed.append((metrics, summary))
    criteria = [m.criterion for m, _ in per_seed]
    summary = {
        "experiment": config.name,
        "objective": config.objective.to_config(),
        "trainer": _template_echo(config.trainer_template),
        "seeds": config.seeds,
        "runs": [s for _, s in per_seed],
        "mean_criterion": float(np.mean(criteria)),
        "total_bits": str(sum((m.total_bits for m, _ in per_seed), Fraction(0))),
    }
    if "json" in config.emit:
        (config.output_dir / f"{config.name}_summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n"
        )
    if "timeline" in config.emit:
        _emit_timeline(config, per_seed[0][0])
    return summary


def _template_echo(template: dict) -> dict:
    echo = {}
    for key, value in template.items():
        if isinstance(value, Compressor):
            echo[key] = value.to_config()
        elif isinstance(value, ConfusionMatrix):
            echo[key] = {"N": value.size, "rho": value.rho}
        elif isinstance(value, NetworkParams):
            echo[key] = {
                "t_latency": str(value.t_latency),
                "t_transfer_per_unit": str(value.t_transfer_per_unit),
            }
        elif isinstance(value, tuple):
            echo[key] = [str(v) for v in value]
        else:
            echo[key] = value
    return echo


def _emit_timeline(config: ExperimentConfig, metrics: RunMetrics) -> None:
    """Export one representative communication round for plotting."""
    from . import collectives

    template = config.trainer_template
    network = template.get("network")
    n = template.get("n_workers", 1)
    if network is None or n < 2:
        return
    dim = config.objective.dim
    algorithm = template["algorithm"]
    if algorithm in ("dsgd",):
        confusion = template.get("confusion")
        lists = [confusion.neighbors(i) for i in range(n)] if confusion else None
        timeline = collectives.simulate_round(
            collectives.DECENTRALIZED_RING, n, network,
            vector_size=Fraction(dim), neighbor_lists=lists,
        )
    elif algorithm in ("ec-sgd", "asgd"):
        timeline = collectives.simulate_round(
            collectives.PS_SINGLE, n, network, vector_size=Fraction(dim)
        )
    else:
        sizes = [
            Fraction(sl.stop - sl.start)
            for sl in collectives.partition_slices(dim, n)
        ]
        timeline = collectives.simulate_round(
            collectives.RING_PARTITIONED, n, network, part_sizes=sizes
        )
    (config.output_dir / f"{config.name}_round.json").write_text(timeline.to_json() + "\n")
    (config.output_dir / f"{config.name}_round.csv").write_text(timeline.to_csv())


@dataclass
class SummaryTable:
    """Cost/criterion table keyed by the sweep parameters."""

    rows: list = field(default_factory=list)

    def add(self, key: dict, metrics: RunMetrics):
        self.rows.append(
            {
                **key,
                "criterion": metrics.criterion,
                "total_sim_time": str(metrics.total_sim_time),
                "total_bits": str(metrics.total_bits),
                "comm_rounds": metrics.comm_rounds,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.rows, indent=2, sort_keys=True)

    def render(self) -> str:
        if not self.rows:
            return "(empty)"
        headers = list(self.rows[0].keys())
        widths = [
            max(len(h), *(len(str(r.get(h, ""))) for r in self.rows)) for h in headers
        ]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        for row in self.rows:
            lines.append(
                "  ".join(str(row.get(h, "")).ljust(w) for h, w in zip(headers, widths))
            )
        return "\n".join(lines)
