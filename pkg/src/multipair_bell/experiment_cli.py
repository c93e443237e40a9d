"""``multipair-bell`` command line: configured sweeps written as CSV tables.

Usage::

    multipair-bell <command> [--config FILE] [--out PATH] [--check] [--workers N]

Configuration is a JSON object; every flag mirrors a key of the same name
and overrides the file, which overrides the built-in defaults.  Each run also
writes its table to ``cache_dir/<command>.csv`` for the ``summary`` command.

Exit codes: 0 success, 2 configuration error, 3 a check failed under ``--check``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

from .bell_eval import OVER_MODES, OptimizerSpec
from .errors import ConfigurationError, InvalidInputError
from .experiments import COMMANDS, Check, ResultRow, RunConfig, Table, summarize, workers_from_env
from .vote_tally import VoteRule

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 2, 3

_EVEN_M = list(range(2, 201, 2)) + [500, 1000]

DEFAULTS = {
    "fig-ch-scaling": {"values": list(range(1, 25)), "rules": ["majority", "2/3", "3/4", "unanimity"],
                       "over": "alpha_theta"},
    "fig-noise": {"values": list(range(1, 17)), "rules": ["majority", "3/4", "unanimity"], "over": "alpha_theta"},
    "fig-poisson": {"values": [0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0,
                               14.0, 16.0],
                    "rules": ["majority", "unanimity"], "over": "alpha_theta",
                    "options": {"noise_values": [1.0, 2.0, 4.0, 6.0, 8.0, 11.0, 16.0], "noise_over": "alpha"}},
    "fig-efficiency": {"values": [0.7, 0.8, 0.9, 1.0], "rules": ["majority", "unanimity"], "over": "four_angle",
                       "options": {"M_values": [1, 5]}},
    "loss-study": {"values": list(range(2, 21)), "rules": ["majority", "unanimity"], "over": "alpha_theta",
                   "options": {"symmetric_values": list(range(2, 21)), "ternary_conventions": ["none", "postselect"]}},
    "fig-indist": {"values": list(range(1, 17)), "rules": ["majority", "2/3", "3/4", "unanimity"], "over": "alpha",
                   "options": {"noise_values": [2, 4, 6, 8, 10, 12]}},
    "entanglement": {"values": _EVEN_M, "rules": [], "over": "alpha"},
    "summary": {"values": [], "rules": [], "over": "alpha"},
}

RESULT_KEYS = ("values", "rules", "over", "optimizer", "quadrature", "options")
RUN_KEYS = ("out", "cache_dir", "workers", "check")


# --------------------------------------------------------------------------
# configuration


def _expand_values(raw: dict) -> list:
    if "range" in raw:
        start, stop, step = raw["range"]
        if step <= 0:
            raise ConfigurationError("range step must be positive")
        vals, k = [], 0
        while start + k * step <= stop + 1e-12:
            vals.append(round(start + k * step, 12))
            k += 1
        return vals
    return list(raw.get("values", []))


def resolve_config(command: str, file_cfg: dict | None = None, flags: dict | None = None) -> tuple[RunConfig, dict]:
    """Merge defaults, file and flags; return the config and its canonical JSON form."""
    if command not in DEFAULTS:
        raise ConfigurationError(f"unknown command {command!r}; choose from {sorted(DEFAULTS)}")
    merged = copy.deepcopy(DEFAULTS[command])
    merged.setdefault("options", {})
    for layer in (file_cfg or {}, flags or {}):
        for key, value in layer.items():
            if value is None:
                continue
            if key == "command":
                if value != command:
                    raise ConfigurationError(f"config is for command {value!r}, not {command!r}")
                continue
            if key == "options":
                merged["options"].update(value)
            elif key == "range":
                merged["values"] = _expand_values({"range": value})
            elif key in RESULT_KEYS or key in RUN_KEYS:
                merged[key] = value
            else:
                raise ConfigurationError(f"unknown configuration key {key!r}")
    if command not in ("summary",) and not merged["values"]:
        raise ConfigurationError("the sweep range is empty")
    if command not in ("summary", "entanglement") and not merged["rules"]:
        raise ConfigurationError("at least one vote rule is required")
    if merged["over"] not in OVER_MODES:
        raise ConfigurationError(f"over must be one of {OVER_MODES}")
    try:
        for r in merged["rules"]:
            VoteRule.from_name(str(r))
        optimizer = OptimizerSpec(**merged.get("optimizer", {}))
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc
    quad = merged.get("quadrature", {})
    unknown = set(quad) - {"n_beta", "n_theta", "n_phi"}
    if unknown:
        raise ConfigurationError(f"unknown quadrature keys {sorted(unknown)}")
    quadrature = (int(quad.get("n_beta", 24)), quad.get("n_theta"), quad.get("n_phi"))
    workers = merged.get("workers")
    workers = workers_from_env(1) if workers is None else int(workers)
    if workers < 1:
        raise ConfigurationError("workers must be at least 1")
    cfg = RunConfig(
        command=command,
        values=list(merged["values"]),
        rules=[str(r) for r in merged["rules"]],
        over=merged["over"],
        optimizer=optimizer,
        quadrature=quadrature,
        options=dict(merged["options"]),
        out=merged.get("out"),
        cache_dir=merged.get("cache_dir", ".multipair_bell_cache"),
        workers=workers,
        check=bool(merged.get("check", False)),
    )
    canonical = {
        "command": command,
        "values": cfg.values,
        "rules": cfg.rules,
        "over": cfg.over,
        "optimizer": optimizer.as_dict(),
        "quadrature": {"n_beta": quadrature[0], "n_theta": quadrature[1], "n_phi": quadrature[2]},
        "options": cfg.options,
    }
    return cfg, canonical


def config_hash(canonical: dict) -> str:
    return hashlib.sha256(json.dumps(canonical, sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# CSV


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    if hasattr(value, "item"):
        return _cell(value.item())
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True, separators=(",", ":"), default=_json_default)
    return str(value)


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def render_table(table: Table, canonical: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# multipair-bell {table.command}\n")
    buf.write(f"# config_sha256: {config_hash(canonical)}\n")
    buf.write(f"# config: {_json(canonical)}\n")
    buf.write(f"# optimizer: {_json(canonical['optimizer'])}\n")
    buf.write(f"# quadrature: {_json(canonical['quadrature'])}\n")
    for fit in table.fits:
        buf.write(f"# fit: {_json(fit)}\n")
    for chk in table.checks:
        buf.write(f"# check: {'PASS' if chk.passed else 'FAIL'} {chk.name} | {chk.detail}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for r in table.rows:
        base = [r.axis, r.rule, r.kind, r.ch, r.threshold, r.alpha, r.theta, r.flag]
        extras = [r.extra.get(c) for c in table.extra_columns]
        writer.writerow([_cell(v) for v in base + extras] + [_cell(r.provenance)])
    return buf.getvalue()


def _parse_float(text: str):
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path: Path) -> Table:
    """Load a table written by :func:`render_table` (rows, fits and checks)."""
    lines = path.read_text().splitlines()
    fits, checks, command = [], [], path.stem
    body = []
    for line in lines:
        if line.startswith("# multipair-bell "):
            command = line.split(" ", 2)[2]
        elif line.startswith("# fit: "):
            fits.append(json.loads(line[len("# fit: "):]))
        elif line.startswith("# check: "):
            status, rest = line[len("# check: "):].split(" ", 1)
            name, _, detail = rest.partition(" | ")
            checks.append(Check(name, status == "PASS", detail))
        elif not line.startswith("#"):
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    base = header[:8]
    extra_cols = header[8:-1]
    rows = []
    for rec in reader:
        vals = dict(zip(header, rec))
        rows.append(ResultRow(
            axis=float(vals[base[0]]), rule=vals["rule"], kind=vals["kind"],
            ch=_parse_float(vals["ch"]), threshold=_parse_float(vals["threshold"]),
            alpha=_parse_float(vals["alpha"]), theta=_parse_float(vals["theta"]), flag=vals["flag"],
            extra={c: _parse_float(vals[c]) for c in extra_cols},
            provenance=json.loads(vals["provenance"]) if vals["provenance"] else {},
        ))
    return Table(command, base[0], rows, extra_columns=extra_cols, fits=fits, checks=checks)


def load_cached_tables(cache_dir: str) -> dict[str, Table]:
    missing = [c for c in COMMANDS if not (Path(cache_dir) / f"{c}.csv").exists()]
    if missing:
        cmds = "\n".join(f"  multipair-bell {c} --cache-dir {cache_dir}" for c in missing)
        raise ConfigurationError(f"no cached results for {', '.join(missing)} in {cache_dir}; run first:\n{cmds}")
    return {c: read_table(Path(cache_dir) / f"{c}.csv") for c in COMMANDS}


# --------------------------------------------------------------------------
# entry point


def run(command: str, file_cfg: dict | None = None, flags: dict | None = None) -> tuple[Table, str]:
    """Resolve the configuration, run ``command`` and return the table and its CSV text."""
    cfg, canonical = resolve_config(command, file_cfg, flags)
    if command == "summary":
        table = summarize(load_cached_tables(cfg.cache_dir))
    else:
        table = COMMANDS[command](cfg)
    text = render_table(table, canonical)
    if command != "summary":
        cache = Path(cfg.cache_dir)
        cache.mkdir(parents=True, exist_ok=True)
        (cache / f"{command}.csv").write_text(text)
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.out).write_text(text)
    return table, text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multipair-bell", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(DEFAULTS))
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--out", help="write the CSV table here (default: standard output)")
    parser.add_argument("--check", action="store_true", default=None, help="exit with status 3 if a check fails")
    parser.add_argument("--workers", type=int, help="worker processes (env MULTIPAIR_BELL_WORKERS)")
    parser.add_argument("--cache-dir", dest="cache_dir", help="directory of cached tables")
    parser.add_argument("--values", help="comma-separated sweep values")
    parser.add_argument("--rules", help="comma-separated vote rules, e.g. majority,3/4,unanimity")
    parser.add_argument("--over", choices=OVER_MODES, help="parameters to optimise")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_cfg = {}
        if args.config:
            try:
                file_cfg = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
            if not isinstance(file_cfg, dict):
                raise ConfigurationError("the config file must hold a JSON object")
        flags = {
            "out": args.out,
            "check": args.check,
            "workers": args.workers,
            "cache_dir": args.cache_dir,
            "over": args.over,
            "values": [float(v) for v in args.values.split(",")] if args.values else None,
            "rules": args.rules.split(",") if args.rules else None,
        }
        table, text = run(args.command, file_cfg, flags)
    except (ConfigurationError, InvalidInputError) as exc:
        print(f"multipair-bell: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg_check = bool(args.check) or bool(file_cfg.get("check", False))
    if not (args.out or file_cfg.get("out")):
        sys.stdout.write(text)
    for chk in table.checks:
        print(f"{'PASS' if chk.passed else 'FAIL'}  {chk.name}  [{chk.detail}]", file=sys.stderr)
    if cfg_check and not all(c.passed for c in table.checks):
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
