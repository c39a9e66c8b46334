"""
Command-line entry point.

``nested-ising run CONFIG`` executes one experiment protocol from a JSON
run configuration and writes ``<outdir>/<experiment>.csv`` plus a
``.meta.json`` sidecar.  The sidecar embeds the effective configuration, so
``nested-ising run <sidecar>`` reproduces the CSV.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema

from . import checks
from .errors import DegenerateFit, NestedIsingError, NumericalFailure
from .experiments import (
    RunSpec,
    SweepResult,
    concurrence_decay,
    cp_trajectory,
    env_size_sweep,
    far_coupling_control,
    gamma_sweep,
    lambda_sweep,
    nu_scaling,
    purity_decay,
)
from .model import (
    KickField,
    QubitLayout,
    TopologyPreset,
    build_preset,
    default_fields,
    describe_presets,
)

OUTDIR_ENV = "NESTED_ISING_OUTDIR"
SECTIONS = ("parameters", "run", "layout", "topology")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


class ConfigError(Exception):
    """Run configuration could not be loaded, validated or built."""


def load_schema() -> dict:
    text = resources.files("nested_ising").joinpath("schemas/run_config.schema.json").read_text()
    return json.loads(text)


# --- configuration -------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _resolve_key(key: str, schema: dict) -> list[str]:
    """Dotted path for an override key; a bare key must name exactly one field."""
    if "." in key:
        return key.split(".")
    if key in schema["properties"]:
        return [key]
    hits = [s for s in SECTIONS if key in schema["properties"][s]["properties"]]
    if len(hits) != 1:
        where = "no section" if not hits else f"sections {hits}"
        raise ConfigError(f"override key {key!r} matches {where}; use a dotted path")
    return [hits[0], key]


def apply_overrides(doc: dict, overrides: Sequence[str], schema: dict) -> tuple[dict, dict]:
    """Return a copy of ``doc`` with ``key=value`` overrides applied, plus the
    resolved ``{dotted.path: value}`` mapping."""
    doc = copy.deepcopy(doc)
    applied = {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path = _resolve_key(key.strip(), schema)
        node = doc
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {part!r} is not a section")
        value = _parse_value(raw)
        node[path[-1]] = value
        applied[".".join(path)] = value
    return doc, applied


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> tuple[dict, dict]:
    """Read a run configuration (or a result sidecar), apply overrides and
    validate it against the schema."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if isinstance(doc, dict) and "run_config" in doc:
        doc = doc["run_config"]
    schema = load_schema()
    doc, applied = apply_overrides(doc, overrides, schema)
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
                 for e in errors]
        raise ConfigError("invalid run config:\n  " + "\n  ".join(lines))
    return doc, applied


def build_run(doc: dict) -> RunSpec:
    """Turn a validated run configuration into a :class:`RunSpec`."""
    params, run, topo = doc.get("parameters", {}), doc["run"], doc["topology"]
    try:
        layout = QubitLayout(**doc["layout"])
        preset = TopologyPreset(topo["preset"], topo.get("variant"), topo.get("nu"),
                                topo.get("seed"))
        fields = default_fields()
        if "central_beta" in params:
            fields["c"] = KickField.tilted(params["central_beta"])
        for name, f in params.get("fields", {}).items():
            fields[name] = KickField(f["bx"], f["by"], f["bz"])
        config = build_preset(preset, layout, J=params.get("J", 1.0),
                              lam=params.get("lambda", 0.01),
                              gamma=params.get("gamma", 0.5), fields=fields)
        t_max = run["t_max"]
        times = run.get("record_times", [t_max])
        if isinstance(times, dict):
            times = range(0, t_max + 1, times["step"])
        default_init = "bell_phi_plus" if layout.n_c == 2 else "sigma_x_plus"
        return RunSpec(config, t_max=t_max, record_times=times,
                       base_seed=run.get("base_seed", 0),
                       n_realizations=run.get("n_realizations", 10),
                       central_init=run.get("central_init", default_init),
                       preset=preset, threads=run.get("threads", 1))
    except (ValueError, NestedIsingError) as exc:
        raise ConfigError(str(exc)) from None


def execute(doc: dict, spec: RunSpec) -> dict[str, SweepResult]:
    """Run the configured protocol; returns ``{file stem: result}``."""
    exp, params = doc["experiment"], doc.get("parameters", {})
    gammas = params.get("gammas", [spec.config.gamma])
    t_fix = params.get("t_fix", spec.t_max)
    try:
        if exp == "purity_decay":
            return {exp: purity_decay(spec, gammas)}
        if exp == "gamma_sweep":
            return {exp: gamma_sweep(spec, t_fix, gammas)}
        if exp == "nu_scaling":
            return {exp: nu_scaling(spec, params.get("nus", [1, 2, 4]),
                                    params.get("gamma_prime", spec.config.gamma),
                                    params.get("topology_seed", 0),
                                    rescale=params.get("rescale_by_nu", False))}
        if exp == "lambda_sweep":
            fit = params.get("fit_range")
            return {exp: lambda_sweep(spec, params.get("lambdas", [spec.config.lam]), gammas,
                                      t_fix, tuple(fit) if fit else None)}
        if exp == "concurrence_decay":
            return {exp: concurrence_decay(spec, gammas)}
        if exp == "cp_trajectory":
            out = cp_trajectory(spec, gammas, tol=params.get("unital_tolerance", 0.02))
            return {exp: out.result, f"{exp}.curves": _curves_result(out)}
        if exp == "far_coupling_control":
            out = far_coupling_control(spec, params.get("epsilon_factor", 0.01), gammas)
            return {exp: _control_result(out)}
        if exp == "env_size_sweep":
            sizes = [tuple(s) for s in params.get("sizes", [[spec.config.layout.n_e,
                                                             spec.config.layout.n_ep]])]
            return {exp: env_size_sweep(spec, sizes, t_fix, gammas)}
    except DegenerateFit:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown experiment {exp!r}")


def _curves_result(out) -> SweepResult:
    rows = [{"curve": name, "parameter": pt.time, "purity": pt.purity,
             "concurrence": pt.concurrence}
            for name, points in (("werner", out.werner), ("dephasing", out.dephasing))
            for pt in points]
    return SweepResult(["curve", "parameter", "purity", "concurrence"], rows,
                       {"schema_version": out.result.metadata["schema_version"],
                        "protocol": "cp_reference_curves"})


def _control_result(out) -> SweepResult:
    rows = ([dict(arm="baseline", **row) for row in out.baseline.rows]
            + [dict(arm="coupled", **row) for row in out.coupled.rows])
    return SweepResult(["arm", *out.baseline.columns], rows, dict(out.coupled.metadata))


def output_dir(cli_value: str | None, doc: dict) -> Path:
    if cli_value:
        return Path(cli_value)
    if "output_dir" in doc:
        return Path(doc["output_dir"])
    return Path(os.environ.get(OUTDIR_ENV, "."))


# --- subcommands ---------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        doc, applied = load_config(args.config, args.override)
        if args.threads is not None:
            doc["run"]["threads"] = args.threads
        spec = build_run(doc)
        results = execute(doc, spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, DegenerateFit) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    outdir = output_dir(args.outdir, doc)
    # thread count never changes the output, so keep it out of the replayable config
    replay = copy.deepcopy(doc)
    replay["run"].pop("threads", None)
    for stem, result in results.items():
        result.metadata.update(run_config=replay, overrides=applied)
        csv_path, _ = result.write(outdir, stem)
        print(csv_path)
    return EXIT_OK


def cmd_list_presets(args) -> int:
    for line in describe_presets():
        print(line)
    return EXIT_OK


def cmd_verify(args) -> int:
    suite = checks.QUICK if args.level == "quick" else checks.FULL
    failures = 0
    for check in suite:
        if check is checks.check_oracle:
            result = check(flip_order=args.flip_gate_order)
        else:
            result = check()
        print(result.line(), flush=True)
        failures += not result.passed
    total = len(suite)
    print(f"{total - failures}/{total} checks passed")
    return EXIT_OK if failures == 0 else EXIT_CONFIG


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nested-ising",
                                     description="Kicked Ising nested-environment decoherence runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config or result sidecar")
    run.add_argument("config")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="replace a config value; dotted paths such as run.t_max "
                          "or bare names that occur in one section")
    run.add_argument("--threads", type=int, default=None,
                     help="cap on worker threads (results do not depend on it)")
    run.add_argument("--outdir", default=None,
                     help=f"output directory (default: config output_dir, then ${OUTDIR_ENV}, then .)")
    run.set_defaults(func=cmd_run)

    lp = sub.add_parser("list-presets", help="list the topology presets")
    lp.set_defaults(func=cmd_list_presets)

    ver = sub.add_parser("verify", help="run the oracle and invariant checks")
    ver.add_argument("level", choices=("quick", "full"), nargs="?", default="quick")
    # test hook: runs the engine with the kick applied before the Ising phase
    ver.add_argument("--flip-gate-order", action="store_true", help=argparse.SUPPRESS)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
