"""``minimax-lab list`` and ``minimax-lab run <name|config.json>``.

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 bad config,
3 the game diverged.

A config file is a JSON object with keys ``experiment`` (required),
``seed`` (default 0), ``out`` (default ``runs/<experiment>-seed<seed>``),
``emit`` (``traces``, ``samples``, ``stats``, ``figures``; all default
true) and ``params`` (experiment parameters; see ``list --verbose``).
Unknown keys anywhere are rejected before anything runs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .engine import ConfigError, DivergedError
from .experiments import REGISTRY, Result, _plain

log = logging.getLogger(__name__)

TOP_KEYS = ("experiment", "seed", "out", "emit", "params")
EMIT_DEFAULTS = {"traces": True, "samples": True, "stats": True, "figures": True}

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return "" if m is None else f" (line {text.count(chr(10), 0, m.start()) + 1})"


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


def _coerce(key: str, value, default, text=None):
    """Check ``value`` against the type of the documented default."""
    where = _line_of(text, key)
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"key {key!r}{where}: expected {type(default).__name__}, got {value!r}")
    return value


def resolve(raw: dict, text: str | None = None) -> dict:
    """Validate a parsed config and fill in every default."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for k in raw:
        if k not in TOP_KEYS:
            raise ConfigError(f"unknown key {k!r}{_line_of(text, k)}; allowed: {', '.join(TOP_KEYS)}")
    name = raw.get("experiment")
    if name not in REGISTRY:
        raise ConfigError(f"key 'experiment'{_line_of(text, 'experiment')}: unknown experiment {name!r}")
    exp = REGISTRY[name]
    seed = _coerce("seed", raw.get("seed", 0), 0, text)
    if seed < 0:
        raise ConfigError("key 'seed': must be non-negative")
    emit = dict(EMIT_DEFAULTS)
    for k, v in (raw.get("emit") or {}).items():
        if k not in EMIT_DEFAULTS:
            raise ConfigError(f"unknown key {k!r}{_line_of(text, k)} in 'emit'")
        emit[k] = _coerce(k, v, True, text)
    params = dict(exp.defaults)
    given = raw.get("params") or {}
    if not isinstance(given, dict):
        raise ConfigError("key 'params' must be an object")
    for k, v in given.items():
        if k not in exp.defaults:
            raise ConfigError(f"unknown key {k!r}{_line_of(text, k)} in 'params' for {name}")
        params[k] = _coerce(k, v, exp.defaults[k], text)
    out = raw.get("out") or f"runs/{name}-seed{seed}"
    out = _coerce("out", out, "", text)
    return {"experiment": name, "seed": seed, "out": out, "emit": emit, "params": params}


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        raw = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}") from None
    cfg = resolve(raw, text)
    return cfg


def _parse_value(s: str):
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """``key=value`` (a parameter, or ``seed``/``out``/``emit.x``/``params.x``); values parse as JSON."""
    raw = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        value = _parse_value(value)
        if key in ("seed", "out", "experiment"):
            raw[key] = value
        elif key.startswith("emit."):
            raw.setdefault("emit", {})[key[5:]] = value
        else:
            raw.setdefault("params", {})[key[7:] if key.startswith("params.") else key] = value
    return raw


# -- outputs --------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_metrics(path: Path, rows: list[dict]) -> None:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([_cell(r.get(k)) for k in keys])


def write_samples(path: Path, samples) -> None:
    S = np.atleast_2d(samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", *(f"dim_{i}" for i in range(S.shape[1]))])
        for i, row in enumerate(S):
            w.writerow([i, *(repr(float(v)) for v in row)])


def write_outputs(out: Path, cfg: dict, result: Result) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "metrics.csv", out / "verdicts.json"]
    write_metrics(out / "metrics.csv", result.metrics)
    _write_json(out / "verdicts.json", {
        "experiment": cfg["experiment"], "seed": cfg["seed"], "passed": result.passed,
        "verdicts": {k: v.to_dict() for k, v in result.verdicts.items()}})
    # the output directory itself is left out so reruns elsewhere stay byte-identical
    _write_json(out / "config.json", {k: v for k, v in cfg.items() if k != "out"})
    written.append(out / "config.json")
    emit = cfg["emit"]
    if emit["traces"] and result.trace is not None:
        result.trace.to_csv(out / "trace.csv")
        written.append(out / "trace.csv")
    if emit["samples"] and result.samples is not None:
        write_samples(out / "samples.csv", result.samples)
        written.append(out / "samples.csv")
    if emit["stats"] and result.stats is not None:
        _write_json(out / "stats.json", result.stats)
        written.append(out / "stats.json")
    if emit["figures"] and result.figures:
        (out / "figures").mkdir(exist_ok=True)
        for stem, draw in result.figures:
            path = out / "figures" / f"{stem}.png"
            draw(path)
            written.append(path)
    return written


def write_manifest(out: Path, cfg: dict, started: float, finished: float, status: str) -> None:
    """Checksums of every other file under ``out``."""
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    _write_json(out / "manifest.json", {
        "config": cfg,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(finished)),
        "version": __version__,
        "status": status,
        "files": {p.relative_to(out).as_posix(): _sha256(p) for p in files},
    })


def execute(cfg: dict) -> tuple[int, Result | None]:
    """Run a resolved config and write its outputs; returns ``(exit code, result)``."""
    exp = REGISTRY[cfg["experiment"]]
    out = Path(cfg["out"])
    started = time.time()
    try:
        result = exp.runner(cfg["params"], cfg["seed"])
    except DivergedError as e:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "trace.csv"
        if e.trace is not None:
            e.trace.to_csv(path)
        write_manifest(out, cfg, started, time.time(), "diverged")
        print(f"diverged: {e}; trace written to {path}", file=sys.stderr)
        return EXIT_DIVERGED, None
    write_outputs(out, cfg, result)
    write_manifest(out, cfg, started, time.time(), "pass" if result.passed else "fail")
    for name, v in result.verdicts.items():
        print(f"{'PASS' if v.passed else 'FAIL'}  {name}: {_plain(v.value)!r} ({v.threshold})")
    return (EXIT_PASS if result.passed else EXIT_FAIL), result


# -- entry point ------------------------------------------------------------------


def cmd_list(args) -> int:
    for name, exp in REGISTRY.items():
        print(f"{name:24s} [{exp.anchor}] {exp.description}")
        if args.verbose:
            for k, v in exp.defaults.items():
                print(f"    {k} = {json.dumps(v)}")
    return EXIT_PASS


def cmd_run(args) -> int:
    try:
        if args.target in REGISTRY:
            raw, text = {"experiment": args.target}, None
        elif Path(args.target).is_file():
            text = Path(args.target).read_text()
            try:
                raw = json.loads(text, object_pairs_hook=_no_duplicates)
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}") from None
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
        else:
            raise ConfigError(f"{args.target!r} is neither an experiment name nor a config file")
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["out"] = args.out
        raw = apply_overrides(raw, args.override or [])
        cfg = resolve(raw, text)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, _ = execute(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"outputs in {cfg['out']}")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="minimax-lab", description="Unsupervised minimax experiments.")
    ap.add_argument("-v", "--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("list", help="list the registered experiments")
    p.add_argument("--verbose", action="store_true", help="also print every parameter default")
    p.set_defaults(func=cmd_list)
    p = sub.add_parser("run", help="run an experiment by name or from a JSON config")
    p.add_argument("target")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
