"""Command-line front end: compile, run and sweep."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from typing import TYPE_CHECKING, Any

import numpy as np
import rich
from rich.logging import RichHandler
from rich.table import Table
from rich.traceback import install

from ._version import __version__
from .config import SweepKind, build_config
from .errors import ParseError, SpikemapError, UsageError
from .experiments import (
    classification_error,
    compile_report,
    depthwise_comparison,
    dumps_report,
    error_vs_timesteps,
    reference_error,
    scaling_table,
    to_csv,
    utilization,
)
from .mapper import build_image, image_tally, load_image, place, write_image
from .model_ir import ResetMode, load_network, lower
from .normalizer import load_batch, normalize
from .partitioner import optimize
from .simulator import edp_proxy, run_mapped

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from .config import RunConfig
    from .mapper import DeploymentImage
    from .model_ir import NetworkSpec
    from .partitioner import Plan

logger = logging.getLogger(__name__)

DEFAULT_T_VALUES = tuple(range(10, 201, 10))


# --- Pipeline -----------------------------------------------------------------------


def _with_soft_reset(network: NetworkSpec) -> NetworkSpec:
    first, *rest = network.layers
    soft = [
        replace(layer, neuron_config=replace(layer.neuron_config, reset_mode=ResetMode.SOFT))
        for layer in rest
    ]
    return network.with_layers([first, *soft])


def prepare_network(cfg: RunConfig) -> NetworkSpec:
    """Load the model and lower it, normalizing it when a calibration batch is given."""
    (model,) = cfg.require("model")
    blob = cfg.require("blob")[0] if cfg.blob is not None else None
    network = load_network(model, blob)
    if cfg.timesteps is not None:
        network = replace(network, timesteps=cfg.timesteps)
    if cfg.soft_reset:
        network = _with_soft_reset(network)
    if cfg.calib is None:
        return lower(network)
    (calib,) = cfg.require("calib")
    network, _ = normalize(network, load_batch(calib, network), cfg.quantization)
    return network


def compile_network(cfg: RunConfig, network: NetworkSpec) -> tuple[Plan, DeploymentImage]:
    """Partition, place and map a lowered integer network."""
    plan = optimize(
        network,
        cfg.beam,
        cfg.alpha,
        sharing=cfg.sharing,
        cost_model=cfg.cost_model,
        chips=cfg.chips,
    )
    placement = place(plan, chips=cfg.chips)
    return plan, build_image(network, plan, placement, cfg.quantization)


def _image(cfg: RunConfig) -> tuple[DeploymentImage, NetworkSpec | None]:
    if cfg.image is not None:
        (path,) = cfg.require("image")
        return load_image(path), None
    network = prepare_network(cfg)
    return compile_network(cfg, network)[1], network


def _input_size(image: DeploymentImage) -> int:
    h, w, c = image.layers[0].shape
    return h * w * c


def _load_labels(path: Path) -> np.ndarray:
    try:
        return np.loadtxt(path, dtype=np.int64, delimiter=",", ndmin=1).reshape(-1)
    except ValueError as e:
        msg = f"Labels in {path} must be comma or newline separated integers: {e}"
        raise ParseError(msg) from e


def _labeled_inputs(cfg: RunConfig, image: DeploymentImage) -> tuple[np.ndarray, np.ndarray]:
    (inputs,) = cfg.require("inputs")
    if cfg.labels is None:
        msg = f"`{cfg.subcommand.value}` needs '--labels' for the input set."
        raise UsageError(msg)
    (labels,) = cfg.require("labels")
    return load_batch(inputs, _input_size(image)), _load_labels(labels)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)


# --- Subcommands --------------------------------------------------------------------


def cmd_compile(cfg: RunConfig) -> dict[str, Any]:
    """Compile a model into a deployment image plus utilization reports."""
    network = prepare_network(cfg)
    plan, image = compile_network(cfg, network)
    report = compile_report(plan, image)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_image(image, cfg.out / f"{image.name}.nfimg.json")
    _write(cfg.out / "report.json", dumps_report(report))
    _write(cfg.out / "report.csv", to_csv(utilization(image_tally(image), plan.constraints)))

    table = Table(title=f"Compiled '{image.name}'")
    for column in ("layer", "grid", "cores", "cost"):
        table.add_column(column)
    for layer in report["layers"]:
        grid = "x".join(map(str, layer["grid"]))
        table.add_row(layer["id"], grid, str(layer["cores"]), f"{layer['cost']['total']:.4f}")
    rich.print(table)
    rich.print(
        f"[green bold]{report['n_cores']}[/] cores on [green bold]{report['n_chips']}[/] chip(s),"
        f" cost {report['cost']['total']:.4f}",
    )
    return report


def cmd_run(cfg: RunConfig) -> dict[str, Any]:
    """Run a labeled input set on a compiled image."""
    image, _ = _image(cfg)
    inputs, labels = _labeled_inputs(cfg, image)
    if labels.size != len(inputs):
        msg = f"Got {labels.size} labels for {len(inputs)} inputs."
        raise UsageError(msg)
    timesteps = image.timesteps if cfg.timesteps is None else cfg.timesteps
    results = [run_mapped(image, frame, timesteps) for frame in inputs]
    predictions = [r.prediction for r in results]

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sample", "prediction", "label"])
    for k, (prediction, label) in enumerate(zip(predictions, labels)):
        writer.writerow([k, "" if prediction is None else prediction, int(label)])

    counters = results[0].counters if results else None
    for result in results[1:]:
        counters = counters + result.counters  # type: ignore[operator]
    reports = [edp_proxy(r.counters, image, timesteps) for r in results]
    energy = float(np.mean([r.energy for r in reports])) if reports else 0.0
    delay = float(np.mean([r.delay for r in reports])) if reports else 0.0
    summary = {
        "energy_proxy": energy,
        "delay_proxy": delay,
        "edp": energy * delay,
        "error": classification_error(predictions, labels),
        "samples": len(results),
        "timesteps": timesteps,
    }

    cfg.out.mkdir(parents=True, exist_ok=True)
    _write(cfg.out / "predictions.csv", buffer.getvalue())
    if counters is not None:
        _write(cfg.out / "counters.json", counters.to_json())
    _write(cfg.out / "edp.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    rich.print(
        f"Error [green bold]{summary['error']:.4f}[/] over {len(results)} sample(s),"
        f" EDP proxy {summary['edp']:.4g}",
    )
    return summary


def cmd_sweep(cfg: RunConfig) -> list[Any]:
    """Error against run length, sharing scaling, or depthwise utilization."""
    match cfg.kind:
        case SweepKind.TIME:
            image, network = _image(cfg)
            inputs, labels = _labeled_inputs(cfg, image)
            t_values = cfg.t_values or DEFAULT_T_VALUES
            rows: list[Any] = error_vs_timesteps(
                image,
                inputs,
                labels,
                t_values,
                workers=cfg.workers,
            )
            if network is not None:
                error = reference_error(network, inputs, labels)
                logger.info("Reference classifier error: %.4f", error)
        case SweepKind.SCALING:
            rows = scaling_table(
                cfg.widths,
                cfg.input_size,
                m=cfg.beam,
                w=cfg.alpha,
                cost_model=cfg.cost_model,
                seed=cfg.seed,
                workers=cfg.workers,
            )
        case SweepKind.DEPTHWISE:
            rows = [
                row
                for channels in sorted(set(cfg.widths))
                for row in depthwise_comparison(
                    cfg.input_size,
                    channels,
                    sharing=cfg.sharing,
                    m=cfg.beam,
                    w=cfg.alpha,
                    cost_model=cfg.cost_model,
                )
            ]
    cfg.out.mkdir(parents=True, exist_ok=True)
    text = to_csv(rows)
    _write(cfg.out / f"sweep_{cfg.kind.value}.csv", text)
    rich.print(text, end="")
    return rows


_COMMANDS = {"compile": cmd_compile, "run": cmd_run, "sweep": cmd_sweep}


# --- Argument parsing ---------------------------------------------------------------


def _common_arguments() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="YAML run file; flags override its keys.")
    parser.add_argument("--model", help="Model manifest (JSON).")
    parser.add_argument("--blob", help="Weight blob; defaults to the manifest's blob path.")
    parser.add_argument("--calib", help="Calibration batch; normalizes the model when given.")
    parser.add_argument("--image", help="Compiled deployment image to use instead of a model.")
    parser.add_argument("--inputs", help="Input batch (little-endian float32, one row per sample).")
    parser.add_argument("--labels", help="Labels, one integer per sample.")
    parser.add_argument("--chips", type=int, help="Chips available to placement (default 1).")
    parser.add_argument("--beam", type=int, help="Beam width M of the partitioner (default 4).")
    parser.add_argument("--alpha", help="Cost weights 'a0,a1,a2,a3' (default 1,1,1,1).")
    parser.add_argument("--sharing", choices=("on", "off"), help="Axon sharing (default on).")
    parser.add_argument(
        "--compression",
        choices=("auto", "sparse", "dense", "runlength"),
        help="Synapse encoding (default auto).",
    )
    parser.add_argument("--timesteps", "-T", type=int, help="Steps to simulate.")
    parser.add_argument("--seed", type=int, help="Seed of random choices (default 0).")
    parser.add_argument("--out", help="Output directory (default ./out).")
    parser.add_argument("--percentile", type=float, help="Calibration percentile (default 99.9).")
    parser.add_argument("--weight-bits", type=int, help="Signed weight bits (default 8).")
    parser.add_argument("--bias-bits", type=int, help="Signed bias bits (default 13).")
    parser.add_argument(
        "--soft-reset",
        action="store_true",
        default=None,
        help="Use soft-reset neurons.",
    )
    parser.add_argument("--workers", type=int, help="Threads for simulations (default 1).")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log progress.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log errors only.")
    return parser


def build_parser() -> argparse.ArgumentParser:
    """The argument parser of the ``spikemap`` command."""
    common = _common_arguments()
    parser = argparse.ArgumentParser(
        prog="spikemap",
        description="Compile spiking neural networks onto neuromorphic cores and simulate them.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    subparsers.add_parser("compile", parents=[common], help="Partition and map a model.")
    subparsers.add_parser("run", parents=[common], help="Run a labeled input set.")
    sweep = subparsers.add_parser("sweep", parents=[common], help="Run a parameter sweep.")
    sweep.add_argument("--kind", choices=[k.value for k in SweepKind], help="Sweep (default time).")
    sweep.add_argument("--widths", help="Comma-separated network widths (default 8,16,32).")
    sweep.add_argument("--input-size", type=int, help="Input height and width (default 16).")
    sweep.add_argument("--t-values", help="Comma-separated run lengths (default 10,20,...,200).")
    return parser


def _setup_logging(*, verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.WARNING
    package_logger = logging.getLogger("spikemap")
    package_logger.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in package_logger.handlers):
        package_logger.addHandler(RichHandler(show_path=False))


_NON_SETTINGS = {"config", "subcommand", "verbose", "quiet"}


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line and return the exit code."""
    args = build_parser().parse_args(argv)
    _setup_logging(verbose=args.verbose, quiet=args.quiet)
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_SETTINGS}
    try:
        cfg = build_config(args.subcommand, overrides, args.config)
        _COMMANDS[args.subcommand](cfg)
    except SpikemapError as e:
        rich.print(f"[red bold]Error[/]: {e}")
        return e.exit_code
    return 0


def cli() -> None:  # pragma: no cover
    """Entry point of the ``spikemap`` command."""
    install()
    sys.exit(main())
