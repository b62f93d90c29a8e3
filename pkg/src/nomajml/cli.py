"""Command-line front end: simulate, bound, complexity, plot.

Configs are single JSON documents (schema below); reproduction presets
ship with the package and are addressed by name. Every simulate/bound
run writes a manifest next to its outputs with the resolved config,
seed, and tool version so the run can be repeated exactly.

Config schema::

    {
      "devices": [{"power_db": 0.0, "sigma2_db": 0.0, "modulation": 4}, ...],
      "antennas": 4,
      "snr_grid_db": {"start": 0.0, "stop": 40.0, "step": 5.0},
      "seed": 12345,
      "stopping": {"min_errors": 400, "max_trials": 10000000},
      "detectors": ["jml", "sic"]
    }

Exit codes: 0 success, 2 invalid input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import (
    NumericError,
    approx_upper_bound,
    bound_by_quadrature,
    build_distance_table,
    upper_bound,
)
from .channel import DeviceConfig, ScenarioConfig
from .constellation import build_psk
from .detectors import complexity_counts
from .montecarlo import (
    DETECTOR_NAMES,
    StoppingRule,
    run_curve,
    transmit_snr_to_noise,
)

SIMULATE_COLUMNS = (
    "snr_db",
    "device",
    "detector",
    "bits",
    "errors",
    "ber",
    "stderr",
    "bound_upper",
    "bound_approx",
)

PRESET_GROUPS = {
    "fig3a": ("fig3a",),
    "fig3b": ("fig3b",),
    "fig3c": ("fig3c_l1", "fig3c_l2", "fig3c_l4", "fig3c_l8"),
    "fig3c_l1": ("fig3c_l1",),
    "fig3c_l2": ("fig3c_l2",),
    "fig3c_l4": ("fig3c_l4",),
    "fig3c_l8": ("fig3c_l8",),
}


class ConfigError(ValueError):
    """Invalid configuration; message starts with the offending field path."""


@dataclass(frozen=True)
class RunSpec:
    """A fully validated run request."""

    scenario: ScenarioConfig
    snr_grid_db: tuple[float, ...]
    seed: int
    stopping: StoppingRule
    detectors: tuple[str, ...]
    source: str
    raw: dict


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}: missing required field")
    return obj[key]


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _reject_unknown(obj: dict, allowed: set[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown field")


def parse_config(raw: dict, source: str) -> RunSpec:
    """Validate a config document and build the run request.

    Raises ConfigError with the offending field path on any violation.
    """
    if not isinstance(raw, dict):
        raise ConfigError("$: config must be a JSON object")
    _reject_unknown(
        raw, {"devices", "antennas", "snr_grid_db", "seed", "stopping", "detectors"}, "$"
    )

    devices_raw = _require(raw, "devices", "$")
    if not isinstance(devices_raw, list) or not devices_raw:
        raise ConfigError("$.devices: expected a non-empty list")
    devices = []
    for i, dev in enumerate(devices_raw):
        path = f"$.devices[{i}]"
        if not isinstance(dev, dict):
            raise ConfigError(f"{path}: expected an object")
        _reject_unknown(dev, {"power_db", "sigma2_db", "modulation"}, path)
        power_db = _as_number(_require(dev, "power_db", path), f"{path}.power_db")
        sigma2_db = _as_number(_require(dev, "sigma2_db", path), f"{path}.sigma2_db")
        modulation = _as_int(_require(dev, "modulation", path), f"{path}.modulation")
        try:
            devices.append(
                DeviceConfig(
                    power=10.0 ** (power_db / 10.0),
                    channel_variance=10.0 ** (sigma2_db / 10.0),
                    modulation_order=modulation,
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    antennas = _as_int(_require(raw, "antennas", "$"), "$.antennas")
    try:
        scenario = ScenarioConfig(devices=tuple(devices), antennas=antennas)
    except ValueError as exc:
        raise ConfigError(f"$.devices: {exc}") from exc

    grid_raw = _require(raw, "snr_grid_db", "$")
    if not isinstance(grid_raw, dict):
        raise ConfigError("$.snr_grid_db: expected an object")
    _reject_unknown(grid_raw, {"start", "stop", "step"}, "$.snr_grid_db")
    start = _as_number(_require(grid_raw, "start", "$.snr_grid_db"), "$.snr_grid_db.start")
    stop_v = _as_number(_require(grid_raw, "stop", "$.snr_grid_db"), "$.snr_grid_db.stop")
    step = _as_number(_require(grid_raw, "step", "$.snr_grid_db"), "$.snr_grid_db.step")
    if step <= 0:
        raise ConfigError("$.snr_grid_db.step: must be positive")
    if stop_v < start:
        raise ConfigError("$.snr_grid_db.stop: must be >= start")
    count = int(np.floor((stop_v - start) / step + 1e-9)) + 1
    grid = tuple(start + i * step for i in range(count))

    seed = _as_int(_require(raw, "seed", "$"), "$.seed")
    if seed < 0:
        raise ConfigError("$.seed: must be >= 0")

    stopping_raw = raw.get("stopping", {})
    if not isinstance(stopping_raw, dict):
        raise ConfigError("$.stopping: expected an object")
    _reject_unknown(stopping_raw, {"min_errors", "max_trials"}, "$.stopping")
    try:
        stopping = StoppingRule(
            min_errors=_as_int(stopping_raw.get("min_errors", 400), "$.stopping.min_errors"),
            max_trials=_as_int(stopping_raw.get("max_trials", 10_000_000), "$.stopping.max_trials"),
        )
    except ValueError as exc:
        raise ConfigError(f"$.stopping: {exc}") from exc

    detectors_raw = raw.get("detectors", list(DETECTOR_NAMES))
    if not isinstance(detectors_raw, list) or not detectors_raw:
        raise ConfigError("$.detectors: expected a non-empty list")
    detectors = []
    for i, det in enumerate(detectors_raw):
        if det not in DETECTOR_NAMES:
            raise ConfigError(
                f"$.detectors[{i}]: expected one of {list(DETECTOR_NAMES)}, got {det!r}"
            )
        detectors.append(det)

    return RunSpec(
        scenario=scenario,
        snr_grid_db=grid,
        seed=seed,
        stopping=stopping,
        detectors=tuple(detectors),
        source=source,
        raw=raw,
    )


def load_config_file(path: str | Path) -> RunSpec:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"$: config file not found: {p}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"$: invalid JSON in {p}: {exc}") from exc
    return parse_config(raw, source=str(p))


def load_preset(name: str) -> RunSpec:
    try:
        text = resources.files("nomajml").joinpath(f"presets/{name}.json").read_text()
    except FileNotFoundError:
        raise ConfigError(f"$: unknown preset {name!r}")
    return parse_config(json.loads(text), source=f"preset:{name}")


def _resolve_specs(args) -> list[tuple[str, RunSpec]]:
    """Expand --preset/--config into (run label, spec) pairs."""
    if bool(args.config) == bool(args.preset):
        raise ConfigError("$: exactly one of --config or --preset is required")
    if args.config:
        spec = load_config_file(args.config)
        pairs = [(Path(args.config).stem, spec)]
    else:
        if args.preset not in PRESET_GROUPS:
            raise ConfigError(
                f"$: unknown preset {args.preset!r}; expected one of {sorted(PRESET_GROUPS)}"
            )
        pairs = [(name, load_preset(name)) for name in PRESET_GROUPS[args.preset]]
    if args.seed is not None:
        pairs = [
            (label, _replace_seed(spec, args.seed)) for label, spec in pairs
        ]
    if args.detectors:
        dets = tuple(args.detectors.split(","))
        for det in dets:
            if det not in DETECTOR_NAMES:
                raise ConfigError(f"$.detectors: unknown detector {det!r}")
        pairs = [
            (label, _replace_detectors(spec, dets)) for label, spec in pairs
        ]
    return pairs


def _replace_seed(spec: RunSpec, seed: int) -> RunSpec:
    raw = dict(spec.raw)
    raw["seed"] = seed
    return parse_config(raw, spec.source)


def _replace_detectors(spec: RunSpec, detectors: tuple[str, ...]) -> RunSpec:
    raw = dict(spec.raw)
    raw["detectors"] = list(detectors)
    return parse_config(raw, spec.source)


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_manifest(
    out_path: Path, spec: RunSpec, command: list[str], started: str, outputs: list[str]
) -> None:
    manifest = {
        "config_path": spec.source,
        "config": spec.raw,
        "command": command,
        "seed": spec.seed,
        "tool_version": __version__,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": outputs,
    }
    out_path.write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_simulate(args) -> int:
    pairs = _resolve_specs(args)
    multi = len(pairs) > 1
    for label, spec in pairs:
        started = datetime.datetime.now(datetime.timezone.utc).isoformat()
        curve = run_curve(
            spec.scenario,
            spec.snr_grid_db,
            spec.stopping,
            spec.seed,
            spec.detectors,
            workers=args.workers,
        )
        base = Path(args.output) if args.output else Path(f"{label}.csv")
        out = base.with_name(f"{base.stem}_{label}{base.suffix}") if multi else base
        out.parent.mkdir(parents=True, exist_ok=True)
        orders = [d.modulation_order for d in spec.scenario.devices]
        with out.open("w", newline="\n", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SIMULATE_COLUMNS)
            for p, point in enumerate(curve.points):
                for det in spec.detectors:
                    for i, cell in enumerate(point.cells[det]):
                        approx = curve.bounds_approx[p, i]
                        writer.writerow(
                            [
                                _fmt(point.transmit_snr_db),
                                i + 1,
                                det,
                                cell.bits_sent,
                                cell.bit_errors,
                                _fmt(cell.ber),
                                _fmt(cell.stderr),
                                _fmt(curve.bounds_upper[p, i]),
                                "" if orders[i] <= 4 else _fmt(approx),
                            ]
                        )
        _write_manifest(
            out.with_suffix(".manifest.json"), spec, sys.argv[1:], started, [str(out)]
        )
        print(f"wrote {out}")
    return 0


def cmd_bound(args) -> int:
    pairs = _resolve_specs(args)
    multi = len(pairs) > 1
    for label, spec in pairs:
        started = datetime.datetime.now(datetime.timezone.utc).isoformat()
        cfg = spec.scenario
        orders = [d.modulation_order for d in cfg.devices]
        alphabets = tuple(build_psk(m, 1.0) for m in orders)
        tables = [
            build_distance_table(i + 1, alphabets) for i in range(cfg.num_devices)
        ]
        base = Path(args.output) if args.output else Path(f"{label}_bounds.csv")
        out = base.with_name(f"{base.stem}_{label}{base.suffix}") if multi else base
        out.parent.mkdir(parents=True, exist_ok=True)
        columns = ["snr_db", "device", "bound_upper", "bound_approx"]
        if args.oracle:
            columns += ["bound_quadrature", "rel_diff"]
        with out.open("w", newline="\n", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for snr in spec.snr_grid_db:
                n0 = transmit_snr_to_noise(cfg, snr)
                zetas = (
                    cfg.with_noise(n0).received_snrs()
                    if n0 > 0
                    else np.full(cfg.num_devices, np.inf)
                )
                for i in range(cfg.num_devices):
                    ub = upper_bound(i + 1, tables[i], zetas, cfg.antennas, alphabets)
                    if orders[i] > 4:
                        approx = _fmt(
                            approx_upper_bound(
                                i + 1, tables[i], zetas, cfg.antennas, alphabets
                            )
                        )
                    else:
                        approx = ""
                        if args.approx:
                            print(
                                f"note: device {i + 1} has modulation order "
                                f"{orders[i]} <= 4; approximate bound undefined",
                                file=sys.stderr,
                            )
                    row = [_fmt(snr), i + 1, _fmt(ub), approx]
                    if args.oracle:
                        quad_val = bound_by_quadrature(
                            i + 1, tables[i], zetas, cfg.antennas, alphabets
                        )
                        rel = abs(ub - quad_val) / quad_val if quad_val > 0 else 0.0
                        row += [_fmt(quad_val), _fmt(rel)]
                    writer.writerow(row)
        _write_manifest(
            out.with_suffix(".manifest.json"), spec, sys.argv[1:], started, [str(out)]
        )
        print(f"wrote {out}")
    return 0


def cmd_complexity(args) -> int:
    orders = args.modulation
    for m in orders:
        if m < 2 or (m & (m - 1)) != 0:
            raise ConfigError(f"$.modulation: {m} is not a power of two >= 2")
    if args.antennas < 1:
        raise ConfigError("$.antennas: must be >= 1")
    rows = []
    for det in ("sic", "jml"):
        c = complexity_counts(det, orders, args.antennas)
        rows.append((det, c.multipliers, c.adders, c.comparators))
    header = ("detector", "multipliers", "adders", "comparators")
    widths = [
        max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))
    ]
    for row in [header, *rows]:
        print("  ".join(str(v).rjust(w) for v, w in zip(row, widths)))
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", newline="\n", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        print(f"wrote {out}")
    return 0


def _read_simulate_csv(path: Path) -> list[dict]:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != SIMULATE_COLUMNS:
                raise ConfigError(
                    f"$: {path}: unexpected columns {reader.fieldnames}; "
                    f"expected {list(SIMULATE_COLUMNS)}"
                )
            rows = list(reader)
    except OSError as exc:
        raise ConfigError(f"$: cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"$: {path}: no data rows")
    parsed = []
    for i, row in enumerate(rows):
        try:
            parsed.append(
                {
                    "snr_db": float(row["snr_db"]),
                    "device": int(row["device"]),
                    "detector": row["detector"],
                    "ber": float(row["ber"]),
                    "bound_upper": float(row["bound_upper"]),
                    "bound_approx": float(row["bound_approx"]) if row["bound_approx"] else None,
                }
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"$: {path} row {i + 2}: {exc}") from exc
    return parsed


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "nomajml"
    import matplotlib.pyplot as plt

    paths = [Path(p) for p in args.csv]
    if len(paths) > 1 and not args.overlay:
        raise ConfigError("$: multiple CSV files require --overlay")
    datasets = [(p, _read_simulate_csv(p)) for p in paths]

    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for file_idx, (path, rows) in enumerate(datasets):
        prefix = f"{path.stem} " if args.overlay and len(datasets) > 1 else ""
        devices = sorted({r["device"] for r in rows})
        for i, dev in enumerate(devices):
            color = colors[(file_idx * len(devices) + i) % len(colors)]
            for det, marker, style in (("jml", "o", "-"), ("sic", "s", ":")):
                pts = [r for r in rows if r["device"] == dev and r["detector"] == det]
                pts.sort(key=lambda r: r["snr_db"])
                if not pts:
                    continue
                xs = [r["snr_db"] for r in pts]
                ys = [max(r["ber"], 0.0) for r in pts]
                ax.semilogy(
                    xs, ys, marker=marker, linestyle=style, color=color,
                    label=f"{prefix}D{dev} {det.upper()}", markersize=4,
                )
            bpts = sorted(
                {(r["snr_db"], r["bound_upper"]) for r in rows if r["device"] == dev}
            )
            ax.semilogy(
                [x for x, _ in bpts], [y for _, y in bpts],
                linestyle="--", color=color, alpha=0.7, label=f"{prefix}D{dev} bound",
            )
    ax.set_xlabel("Transmit SNR (dB)")
    ax.set_ylabel("BER")
    ax.set_ylim(bottom=max(ax.get_ylim()[0], 1e-7))
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    out = Path(args.output) if args.output else paths[0].with_suffix(".svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nomajml",
        description="Uplink SIMO-NOMA multi-user detection: simulation, bounds, plots.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_args(p):
        p.add_argument("--config", help="path to a JSON config file")
        p.add_argument("--preset", help="named preset (fig3a, fig3b, fig3c, fig3c_l4, ...)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--detectors", default=None, help="comma-separated subset of jml,sic"
        )
        p.add_argument("--output", default=None, help="output CSV path")

    sim = sub.add_parser("simulate", help="Monte Carlo BER sweep with attached bounds")
    add_run_args(sim)
    sim.add_argument("--workers", type=int, default=1, help="concurrent batch workers")
    sim.set_defaults(func=cmd_simulate)

    bnd = sub.add_parser("bound", help="evaluate analytical bounds only")
    add_run_args(bnd)
    bnd.add_argument(
        "--oracle",
        action="store_true",
        help="add the numerical-quadrature column and relative difference",
    )
    bnd.add_argument(
        "--approx",
        action="store_true",
        help="warn for devices where the high-SNR approximation is undefined",
    )
    bnd.set_defaults(func=cmd_bound)

    cpx = sub.add_parser("complexity", help="detector operation-count table")
    cpx.add_argument(
        "--modulation",
        "-M",
        type=int,
        nargs="+",
        required=True,
        help="per-device modulation orders",
    )
    cpx.add_argument("--antennas", "-L", type=int, required=True)
    cpx.add_argument("--output", default=None, help="optional CSV path")
    cpx.set_defaults(func=cmd_complexity)

    plo = sub.add_parser("plot", help="render BER curves from simulate CSV output")
    plo.add_argument("csv", nargs="+", help="CSV file(s) produced by simulate")
    plo.add_argument("--output", default=None, help="output SVG path")
    plo.add_argument(
        "--overlay", action="store_true", help="combine multiple CSVs into one chart"
    )
    plo.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
