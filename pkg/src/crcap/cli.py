"""Command line front end: ``crcap <subcommand> --config <path> ...``.

Each run writes one CSV per result table plus ``manifest.json`` into the
output directory.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .geometry import ParameterError, SystemParams
from .montecarlo import (
    DEFAULT_SEED,
    DEFAULT_SWEEPS,
    EXPERIMENTS,
    ExperimentConfig,
    Samples,
    resolve_gains,
    run_experiment,
)
from .numerics import DomainError

log = logging.getLogger("crcap")

CONFIG_KEYS = {"experiment", "params", "sweep", "samples", "seed", "output", "calibration"}
THREADS_ENV = "CRCAP_THREADS"


class ConfigError(ValueError):
    """Invalid configuration document; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _object(value, name):
    if not isinstance(value, dict):
        raise ConfigError(name, "must be a JSON object")
    return value


def parse_config(document, experiment=None):
    """Build a validated ExperimentConfig from a JSON document.

    ``document`` may also be a run manifest, in which case its recorded
    configuration is used.  ``experiment`` (from the subcommand) fills in or
    must agree with the document's experiment id.
    """
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document) if document.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError("document", f"malformed JSON ({exc})") from None
    doc = _object(doc, "document")
    if "library_version" in doc and "config" in doc:
        doc = _object(doc["config"], "config")
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown configuration field")

    exp = doc.get("experiment", experiment)
    if exp is None:
        raise ConfigError("experiment", "missing experiment id")
    if experiment is not None and exp != experiment:
        raise ConfigError("experiment", f"document says {exp!r} but the subcommand runs {experiment!r}")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")

    params_doc = _object(doc.get("params", {}), "params")
    known = {f.name for f in fields(SystemParams)}
    for key, value in params_doc.items():
        if key not in known:
            raise ConfigError(f"params.{key}", "unknown parameter")
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"params.{key}", "must be a number")
    try:
        params = SystemParams(**{k: (None if v is None else float(v)) for k, v in params_doc.items()})
    except ParameterError as exc:
        raise ConfigError(f"params.{exc.field}", str(exc).split(": ", 1)[-1]) from None

    sweep_doc = _object(doc.get("sweep", DEFAULT_SWEEPS[exp]), "sweep")
    sweep = {}
    for axis, values in sweep_doc.items():
        if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
        ):
            raise ConfigError(f"sweep.{axis}", "must be a list of numbers")
        sweep[axis] = [float(v) for v in values]

    samples_doc = _object(doc.get("samples", {}), "samples")
    known = {f.name for f in fields(Samples)}
    for key in samples_doc:
        if key not in known:
            raise ConfigError(f"samples.{key}", "unknown sample count")
    seed = doc.get("seed", DEFAULT_SEED)
    output = doc.get("output", "results")
    if not isinstance(output, str):
        raise ConfigError("output", "must be a path string")
    try:
        return ExperimentConfig(
            experiment=exp,
            params=params,
            sweep=sweep,
            samples=Samples(**samples_doc),
            seed=seed,
            output=output,
            calibration=doc.get("calibration", ExperimentConfig.calibration),
        )
    except ParameterError as exc:
        raise ConfigError(exc.field, str(exc).split(": ", 1)[-1]) from None


def serialize_config(config):
    """Plain-JSON form of a config; parse_config inverts it."""
    return {
        "experiment": config.experiment,
        "params": asdict(config.params),
        "sweep": {k: list(v) for k, v in config.sweep.items()},
        "samples": asdict(config.samples),
        "seed": config.seed,
        "output": config.output,
        "calibration": config.calibration,
    }


def format_number(value):
    return format(value, ".12g")


def write_table_csv(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_number(v) for v in row])


def run(config, out_dir=None, threads=1):
    """Calibrate, run the experiment and write CSVs plus the manifest.

    Nothing is left in ``out_dir`` if the experiment fails.  Returns the list
    of written paths.
    """
    out = Path(out_dir if out_dir is not None else config.output)
    start = time.perf_counter()
    base = resolve_gains(config.params, config.seed, config.samples.n_calibration, config.calibration)
    log.info("calibrated A_p=%.6g A_c=%.6g", base.A_p, base.A_c)
    tables = run_experiment(config, workers=threads)
    elapsed = time.perf_counter() - start

    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for table in tables:
            final = out / f"{table.name}.csv"
            tmp = out / f".{table.name}.csv.tmp"
            staged.append((tmp, final))
            write_table_csv(table, tmp)
        manifest = {
            "config": serialize_config(config),
            "library_version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "master_seed": config.seed,
            "elapsed_s": elapsed,
            "threads": threads,
            "calibration": {"basis": config.calibration, "A_p": base.A_p, "A_c": base.A_c},
            "tables": {
                t.name: {"file": f"{t.name}.csv", "rows": len(t.rows), "columns": t.columns,
                         "metadata": t.metadata}
                for t in tables
            },
        }
        tmp = out / ".manifest.json.tmp"
        staged.append((tmp, out / "manifest.json"))
        tmp.write_text(json.dumps(manifest, indent=2, default=float) + "\n", encoding="utf-8")
    except BaseException:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def _threads(value):
    if value is None:
        value = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(value)
    except ValueError:
        raise ConfigError("threads", f"not an integer: {value!r}") from None
    if n < 1:
        raise ConfigError("threads", "must be >= 1")
    return n


SUBCOMMANDS = {
    "low-interference": "low_interference",
    "alpha-pdf": "alpha_pdf",
    "rate-cdf": "rate_cdf",
    "mean-alpha": "mean_alpha",
    "alpha-cdf-drops": "alpha_cdf_drops",
    "rate-loss": "rate_loss",
    "power-sweep": "power_sweep",
    "calibrate": "calibrate",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crcap",
        description="Cognitive-radio capacity statistics under shadowing and fading.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, exp in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {exp} experiment")
        p.add_argument("--config", type=Path, help="JSON config (or a previous manifest.json)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--samples", type=int,
                       help="sample count n (fading draws per drop for alpha-cdf-drops)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    experiment = SUBCOMMANDS[args.command]
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        doc = json.loads(text) if text.strip() else {}
        if isinstance(doc, dict) and "library_version" in doc and "config" in doc:
            doc = doc["config"]
        if isinstance(doc, dict):
            if args.seed is not None:
                doc["seed"] = args.seed
            if args.samples is not None:
                key = "n_fading" if experiment == "alpha_cdf_drops" else "n"
                doc.setdefault("samples", {})[key] = args.samples
            text = json.dumps(doc)
        config = parse_config(text, experiment)
        threads = _threads(args.threads)
        paths = run(config, args.out, threads)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"crcap: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"crcap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
