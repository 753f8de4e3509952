"""Command-line entry point.

Subcommands run the built-in studies (``fig2``, ``fig3``, ``distance``,
``properties``), run or validate a user-supplied JSON config (``run``,
``validate``), and write one CSV plus one SVG per measure into the output
directory.  Exit codes: 0 success, 1 a study's claims deviated (tables are
still written), 2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .experiments import BUILTIN_CONFIGS, ExperimentConfig

_RUNNERS = {
    "fig2": experiments.run_fig2,
    "fig3": experiments.run_fig3,
    "distance": experiments.run_distance_example,
}


class ConfigError(Exception):
    """A user-facing configuration problem; the message names the field."""


def _read_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config file."""
    return config_from_dict(_read_config_file(path))


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.from_dict(data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_set(entry: str) -> tuple[str, object]:
    if "=" not in entry:
        raise ConfigError(f"--set needs KEY=VALUE, got '{entry}'")
    key, raw = entry.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set needs a nonempty key in '{entry}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(data: dict, sets: list[str]) -> dict:
    """Apply ``--set key=value`` pairs (dotted keys reach nested objects)."""
    out = json.loads(json.dumps(data))
    for entry in sets:
        key, value = _parse_set(entry)
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"--set: unknown config section '{p}' in '{key}'")
            node = node[p]
        leaf = parts[-1]
        known_top = {
            "name", "system", "bath", "perturbation", "epsilons", "sweep",
            "unitary_blocks", "measures", "initial_population_a", "initial_coeffs",
            "optimizer", "mto_relation",
        }
        if node is out and leaf not in known_top:
            raise ConfigError(f"--set: unknown config field '{leaf}'")
        node[leaf] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="athermal-markov",
        description="Thermal-channel non-Markovianity studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("fig2", "entanglement response vs bath temperature (2x2)"),
        ("fig3", "correlation and discord response (2x3)"),
        ("distance", "Markovian-family distance counter-example"),
        ("properties", "randomized property suite"),
        ("run", "run a user-supplied config"),
        ("validate", "parse and validate a config without running"),
    ):
        p = sub.add_parser(name, help=text)
        if name in ("run", "validate"):
            p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--out", default="./out", help="output directory (default ./out)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (JSON-parsed value; repeatable)")
        p.add_argument("--grid", type=int, default=None, help="optimizer grid resolution")
        p.add_argument("--tol", type=float, default=None, help="optimizer value tolerance")
        p.add_argument("--seed-list", default=None, help="optimizer seed sequence identifier")
        p.add_argument("--no-svg", action="store_true", help="skip SVG output")
        p.add_argument("--verbose", action="store_true", help="print rows and metadata")
    return parser


def _resolved_config(args) -> ExperimentConfig:
    if args.command in BUILTIN_CONFIGS:
        data = BUILTIN_CONFIGS[args.command]().to_dict()
    else:
        data = _read_config_file(args.config)
    data = apply_overrides(data, args.set)
    if args.grid is not None:
        data.setdefault("optimizer", {})["grid_resolution"] = args.grid
    if args.tol is not None:
        data.setdefault("optimizer", {})["f_tol"] = args.tol
    if args.seed_list is not None:
        data.setdefault("optimizer", {})["seed_sequence"] = args.seed_list
    return config_from_dict(data)


def _print_result(result, verbose: bool):
    for measure in result.measure_names:
        rows = result.rows_for(measure)
        deltas = [r.delta for r in rows]
        print(f"{measure}: {len(rows)} rows, delta range "
              f"[{min(deltas):.3e}, {max(deltas):.3e}]")
    if verbose:
        for r in result.rows:
            print(f"  T={r.control:g} eps={r.epsilon:g} {r.measure}: "
                  f"{r.unperturbed:.6e} -> {r.perturbed:.6e} (delta {r.delta:.3e}) [{r.status}]")
        print(json.dumps(result.metadata, indent=2, default=str))
    for d in result.deviations:
        print(f"deviation: {d}")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            cfg = _resolved_config(args)
            h_sys, h_bath = cfg.build_system(), cfg.build_bath()
            print(f"config '{cfg.name}' valid")
            print(f"dims: system {h_sys.dim}, bath {h_bath.dim}")
            print(f"sweep: {len(cfg.sweep_values)} x {cfg.sweep_variable} in "
                  f"[{min(cfg.sweep_values):g}, {max(cfg.sweep_values):g}]")
            print(f"epsilons: {list(cfg.epsilons)}")
            phases = [list(b.phases) for b in cfg.unitary_blocks]
            print(f"block phases: {phases}")
            print(f"measures: {list(cfg.measures)}")
            return 0

        if args.command == "properties":
            result = experiments.run_property_suite()
            name = "properties"
        else:
            cfg = _resolved_config(args)
            if args.command == "run":
                result = experiments.run_config(cfg)
            else:
                result = _RUNNERS[args.command](cfg)
            name = cfg.name

        written = experiments.write_outputs(result, args.out, name, svg=not args.no_svg)
        _print_result(result, args.verbose)
        for path in written:
            print(f"wrote {path}")
        return 1 if result.deviations else 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def parse_and_dispatch(argv) -> int:
    """Name-stable alias for embedding the CLI."""
    return main(argv)


if __name__ == "__main__":
    raise SystemExit(main())
