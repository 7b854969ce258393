"""Command-line front end: presets, config files, CSV/SVG emission.

Configuration documents are JSON (the schema is documented in the
README); unknown keys are rejected with their full path so typos never
silently change a run. Output CSVs are locale-independent with a fixed
column order, and a provenance sidecar records the seed, a hash of the
resolved sweep, and library versions.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._pool import block_executor, worker_count
from .model import ModelParams
from .sweep import (
    PRESET_NAMES,
    SweepFailedError,
    SweepResult,
    SweepSpec,
    figure_preset,
    optimal_gamma2,
    run_sweep,
)
from .trajectory import SdeConfig

CSV_METRIC_COLUMNS = (
    "F", "F_mc_stderr", "S0_abs", "S_HD_abs", "S_HD_phase",
    "P0", "P_HD", "F_purity",
)
SIG_DIGITS = 10

__all__ = ["RunConfig", "parse_config", "serialize_config", "execute", "main",
           "ConfigError"]


class ConfigError(ValueError):
    """Malformed configuration; the message carries the key path."""


@dataclass(frozen=True)
class RunConfig:
    preset: str | None = None
    custom: SweepSpec | None = None
    custom_name: str = "custom"
    seed: int = 0
    workers: int | None = None
    out_dir: str = "./out"
    emit_plots: bool = True
    formats: tuple[str, ...] = ("csv", "svg")
    trajectories: int | None = None

    def __post_init__(self):
        if (self.preset is None) == (self.custom is None):
            raise ConfigError("exactly one of 'preset' or 'custom' must be given")
        if self.preset is not None and self.preset not in PRESET_NAMES:
            raise ConfigError(
                f"unknown preset '{self.preset}'; valid: {', '.join(PRESET_NAMES)}"
            )
        bad = set(self.formats) - {"csv", "svg"}
        if bad:
            raise ConfigError(f"unknown formats {sorted(bad)}; valid: csv, svg")

    @property
    def name(self) -> str:
        return self.preset if self.preset is not None else self.custom_name


def _expect(obj, path, typ, type_name):
    if not isinstance(obj, typ) or isinstance(obj, bool) and typ in (int, float):
        raise ConfigError(f"{path}: expected {type_name}, got {type(obj).__name__}")
    return obj


def _check_keys(doc: dict, path: str, allowed: set[str], required: set[str] = frozenset()):
    for key in doc:
        if key not in allowed:
            raise ConfigError(
                f"unknown key '{path}.{key}'" if path else f"unknown key '{key}'"
            )
    for key in required:
        if key not in doc:
            raise ConfigError(f"missing required key '{path + '.' if path else ''}{key}'")


def _parse_model_params(doc: dict, path: str) -> ModelParams:
    fields = {f.name for f in dataclasses.fields(ModelParams)}
    _check_keys(doc, path, fields)
    kwargs = {}
    for key, value in doc.items():
        if key == "dim":
            if value is not None:
                value = _expect(value, f"{path}.{key}", int, "integer")
        else:
            value = float(_expect(value, f"{path}.{key}", (int, float), "number"))
        kwargs[key] = value
    try:
        return ModelParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_sde_config(doc: dict, path: str, seed: int) -> SdeConfig:
    fields = {f.name for f in dataclasses.fields(SdeConfig)}
    _check_keys(doc, path, fields)
    kwargs = dict(doc)
    kwargs.setdefault("seed", seed)
    try:
        return SdeConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_axes(doc, path: str):
    axes = _expect(doc, path, list, "list of [name, grid] pairs")
    out = []
    for i, pair in enumerate(axes):
        p = f"{path}[{i}]"
        pair = _expect(pair, p, list, "[name, grid] pair")
        if len(pair) != 2:
            raise ConfigError(f"{p}: expected [name, grid], got {len(pair)} items")
        name = _expect(pair[0], f"{p}[0]", str, "string")
        grid = _expect(pair[1], f"{p}[1]", list, "list of numbers")
        values = tuple(
            float(_expect(v, f"{p}[1][{j}]", (int, float), "number"))
            for j, v in enumerate(grid)
        )
        out.append((name, values))
    return tuple(out)


def _parse_custom(doc: dict, path: str, seed: int) -> tuple[SweepSpec, str]:
    allowed = {"name", "base", "axes", "n_traj", "n_runs", "cfg", "outputs", "derive_dim"}
    _check_keys(doc, path, allowed, required={"base", "axes"})
    name = doc.get("name", "custom")
    base = _parse_model_params(_expect(doc["base"], f"{path}.base", dict, "object"), f"{path}.base")
    axes = _parse_axes(doc["axes"], f"{path}.axes")
    kwargs = {"base": base, "axes": axes}
    if "n_traj" in doc:
        kwargs["n_traj"] = _expect(doc["n_traj"], f"{path}.n_traj", int, "integer")
    if "n_runs" in doc:
        kwargs["n_runs"] = _expect(doc["n_runs"], f"{path}.n_runs", int, "integer")
    if "outputs" in doc:
        outs = _expect(doc["outputs"], f"{path}.outputs", list, "list of strings")
        kwargs["outputs"] = tuple(_expect(o, f"{path}.outputs", str, "string") for o in outs)
    if "derive_dim" in doc:
        kwargs["derive_dim"] = _expect(doc["derive_dim"], f"{path}.derive_dim", bool, "boolean")
    cfg_doc = doc.get("cfg", {})
    kwargs["cfg"] = _parse_sde_config(
        _expect(cfg_doc, f"{path}.cfg", dict, "object"), f"{path}.cfg", seed
    )
    try:
        return SweepSpec(**kwargs), str(name)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(document: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    allowed = {
        "preset", "custom", "seed", "workers", "out_dir",
        "emit_plots", "formats", "trajectories",
    }
    _check_keys(doc, "", allowed)
    seed = _expect(doc.get("seed", 0), "seed", int, "integer")
    kwargs = {"seed": seed}
    if "preset" in doc:
        kwargs["preset"] = _expect(doc["preset"], "preset", str, "string")
    if "custom" in doc:
        spec, name = _parse_custom(
            _expect(doc["custom"], "custom", dict, "object"), "custom", seed
        )
        kwargs["custom"] = spec
        kwargs["custom_name"] = name
    if "workers" in doc:
        kwargs["workers"] = _expect(doc["workers"], "workers", int, "integer")
    if "out_dir" in doc:
        kwargs["out_dir"] = _expect(doc["out_dir"], "out_dir", str, "string")
    if "emit_plots" in doc:
        kwargs["emit_plots"] = _expect(doc["emit_plots"], "emit_plots", bool, "boolean")
    if "formats" in doc:
        fmts = _expect(doc["formats"], "formats", list, "list of strings")
        kwargs["formats"] = tuple(_expect(f, "formats", str, "string") for f in fmts)
    if "trajectories" in doc:
        kwargs["trajectories"] = _expect(doc["trajectories"], "trajectories", int, "integer")
    return RunConfig(**kwargs)


def serialize_config(config: RunConfig) -> dict:
    """Inverse of parse_config (round-trips through JSON)."""
    out: dict = {"seed": config.seed}
    if config.preset is not None:
        out["preset"] = config.preset
    else:
        spec = config.custom
        out["custom"] = {
            "name": config.custom_name,
            "base": _params_dict(spec.base),
            "axes": [[name, list(values)] for name, values in spec.axes],
            "n_traj": spec.n_traj,
            "n_runs": spec.n_runs,
            "cfg": dataclasses.asdict(spec.cfg),
            "outputs": list(spec.outputs),
            "derive_dim": spec.derive_dim,
        }
    if config.workers is not None:
        out["workers"] = config.workers
    out["out_dir"] = config.out_dir
    out["emit_plots"] = config.emit_plots
    out["formats"] = list(config.formats)
    if config.trajectories is not None:
        out["trajectories"] = config.trajectories
    return out


def _params_dict(params: ModelParams) -> dict:
    return {f.name: getattr(params, f.name) for f in dataclasses.fields(ModelParams)}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, f".{SIG_DIGITS}g")
    return str(value)


def resolve_spec(config: RunConfig) -> SweepSpec:
    """Materialize the sweep this configuration describes."""
    if config.preset is not None:
        spec = figure_preset(config.preset, seed=config.seed)
    else:
        spec = config.custom
        spec = replace(spec, cfg=replace(spec.cfg, seed=config.seed))
    if config.trajectories is not None:
        spec = replace(spec, n_traj=config.trajectories)
    return spec


def write_csv(result: SweepResult, path: Path) -> None:
    """Main results table: axis columns, fixed metric columns, status."""
    names = result.spec.axis_names
    has_runs = result.spec.n_runs > 1
    with path.open("w", newline="") as fh:
        header = list(names) + list(CSV_METRIC_COLUMNS) + ["status"]
        fh.write(",".join(header) + "\n")
        for row in result.rows:
            cells = [_fmt(v) for v in row.point]
            cells += [_fmt(row.metrics.get(c)) for c in CSV_METRIC_COLUMNS]
            cells.append(row.status if row.status == "ok" else row.status.replace(",", ";"))
            fh.write(",".join(cells) + "\n")


def _write_stats_csv(result: SweepResult, path: Path) -> None:
    names = result.spec.axis_names
    with path.open("w", newline="") as fh:
        fh.write(",".join(list(names) + ["mean_F", "std_F", "n_runs"]) + "\n")
        for row in result.rows:
            cells = [_fmt(v) for v in row.point]
            cells += [_fmt(row.metrics.get("mean_F")), _fmt(row.metrics.get("std_F")),
                      str(result.spec.n_runs)]
            fh.write(",".join(cells) + "\n")


def _write_difference_csv(result: SweepResult, path: Path) -> None:
    """For sweeps with a two-value squeezing axis: F(high) - F(low)."""
    names = result.spec.axis_names
    sq = names.index("squeezing")
    lo, hi = sorted(result.spec.axes[sq][1])
    table: dict[tuple, dict[float, dict]] = {}
    for row in result.rows:
        if row.status != "ok":
            continue
        key = tuple(v for i, v in enumerate(row.point) if i != sq)
        table.setdefault(key, {})[row.point[sq]] = row.metrics
    other = [n for i, n in enumerate(names) if i != sq]
    with path.open("w", newline="") as fh:
        fh.write(",".join(other + ["delta_F", "delta_F_stderr"]) + "\n")
        for key in sorted(table):
            pair = table[key]
            if lo not in pair or hi not in pair:
                continue
            delta = pair[hi]["F"] - pair[lo]["F"]
            err = math.hypot(pair[hi]["F_mc_stderr"], pair[lo]["F_mc_stderr"])
            cells = [_fmt(v) for v in key] + [_fmt(delta), _fmt(err)]
            fh.write(",".join(cells) + "\n")


def _write_optima_csv(result: SweepResult, path: Path) -> None:
    names = [n for n in result.spec.axis_names if n != "gamma2"]
    with path.open("w", newline="") as fh:
        fh.write(",".join(names + ["gamma2_opt", "F_opt", "on_boundary"]) + "\n")
        for opt in optimal_gamma2(result, smoothing="local-quadratic"):
            cells = [_fmt(v) for v in opt.slice_values]
            cells += [_fmt(opt.gamma2_opt), _fmt(opt.f_opt), str(opt.on_boundary).lower()]
            fh.write(",".join(cells) + "\n")


def _write_provenance(result: SweepResult, config: RunConfig, path: Path, wall: float):
    spec_doc = serialize_config(config)
    param_hash = hashlib.sha256(
        json.dumps(spec_doc, sort_keys=True).encode()
    ).hexdigest()
    doc = {
        "tool": f"slsync {__version__}",
        "seed": config.seed,
        "run": config.name,
        "parameter_hash": param_hash,
        "numpy_version": np.__version__,
        "python_version": sys.version.split()[0],
        "n_points": len(result.rows),
        "n_failed": sum(1 for r in result.rows if r.status != "ok"),
        "wall_time_s": round(wall, 3),
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def execute(config: RunConfig) -> int:
    """Run the configured sweep and write all requested outputs."""
    t0 = time.perf_counter()
    try:
        spec = resolve_spec(config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = config.name

    def progress(i, total, row):
        point = ", ".join(
            f"{n}={v:g}" for n, v in zip(spec.axis_names, row.point)
        )
        f_txt = _fmt(row.metrics.get("F")) if row.status == "ok" else row.status
        print(f"[{i + 1}/{total}] {point}: F={f_txt}", file=sys.stderr, flush=True)

    try:
        with block_executor(config.workers) as pool:
            result = run_sweep(spec, executor=pool, progress=progress)
    except SweepFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if "csv" in config.formats:
            write_csv(result, out_dir / f"{name}.csv")
            if spec.n_runs > 1:
                _write_stats_csv(result, out_dir / f"{name}_stats.csv")
            sq_axes = dict(spec.axes).get("squeezing")
            if sq_axes is not None and len(sq_axes) == 2:
                _write_difference_csv(result, out_dir / f"{name}_difference.csv")
            if "gamma2" in spec.axis_names and len(spec.axis_names) > 1:
                _write_optima_csv(result, out_dir / f"{name}_optimal_gamma2.csv")
        if config.emit_plots and "svg" in config.formats:
            from .plots import plot_sweep

            plot_sweep(result, out_dir, name, seed=config.seed)
        _write_provenance(result, config, out_dir / f"{name}_provenance.json",
                          time.perf_counter() - t0)
    except OSError as exc:
        print(f"error writing outputs: {exc}", file=sys.stderr)
        return 1
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slsync",
        description="Sweep the monitored Stuart-Landau oscillator and tabulate "
        "synchronization metrics.",
    )
    parser.add_argument("--config", type=str, help="JSON configuration file")
    parser.add_argument("--preset", type=str, help="figure preset name")
    parser.add_argument("--seed", type=int, default=None, help="base RNG seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: CPU count, capped by "
                        "SLSYNC_MAX_WORKERS)")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--no-plots", action="store_true", help="skip SVG emission")
    parser.add_argument("--trajectories", type=int, default=None,
                        help="override trajectories per ensemble")
    parser.add_argument("--list-presets", action="store_true",
                        help="list preset names and exit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    if args.list_presets:
        for name in PRESET_NAMES:
            print(name)
        return 0
    try:
        if args.config:
            config = parse_config(Path(args.config).read_text())
        elif args.preset:
            config = RunConfig(preset=args.preset)
        else:
            print("error: provide --config or --preset (see --help)", file=sys.stderr)
            return 2
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.no_plots:
            overrides["emit_plots"] = False
        if args.trajectories is not None:
            overrides["trajectories"] = args.trajectories
        if overrides:
            config = replace(config, **overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return execute(config)


if __name__ == "__main__":
    sys.exit(main())
