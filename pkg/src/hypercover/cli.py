"""Command-line front end.

Every output starts with a header line carrying the tool version, the
fully resolved configuration and the seed. Reals are printed with 17
significant digits so that they round-trip exactly.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any

import numpy as np

from . import __version__
from .analysis import EvenBump, abel_inverse, selberg_kernel
from .covers import BudgetExceeded, format_sample_line, moment_exact, sample_homs
from .experiments import (
    VarianceConfig,
    markov_brothers_check,
    run_variance_experiment,
    variance_summary_json,
)
from .surface_group import CatalogUnstable, build_catalog, build_genus2_group, catalog_body, write_catalog
from .trace_formula import predicted_eigenvalue, weyl_prediction

EXIT_OK = 0
EXIT_UNSTABLE = 2
EXIT_BUDGET = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        # misspelled flags are errors rather than silent prefixes
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# Per-command defaults; config files and flags may only set these keys.
DEFAULTS: dict[str, dict[str, Any]] = {
    "catalog": {"cutoff": 3.2, "wordbound": 0},
    "sample": {"genus": 2, "n": 3, "samples": 10, "trial_cap": 10**12},
    "moments": {"n": 3, "words": "1"},
    "variance": {"genus": 2, "degrees": "4,6,8,10", "samples": 10_000, "q": 2, "Lambda0": 0.25,
                 "bump_center": "", "bump_width": 0.5, "trial_cap": 10**12},
    "weyl": {"Lambda": 10.0, "n": 10, "genus": 2},
    "predict": {"jmax": 10, "n": 10, "genus": 2},
    "kernel": {"width": 1.0, "center": 0.0, "points": 11},
    "markov": {"coeffs": "1,-1", "q": 2, "k": 1, "nmax": 1000},
}
GLOBAL_DEFAULTS = {"seed": 42, "threads": 0, "format": "csv", "tol": 1e-10}


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _float_list(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _words(text: str) -> list[tuple[int, ...]]:
    """Words separated by ';', letters by ','."""
    return [_int_list(w) for w in str(text).split(";") if w.strip()]


def _coerce(key: str, raw: str, like: Any) -> Any:
    try:
        if isinstance(like, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {raw!r}") from exc
    return raw


def read_config(path: str, allowed: dict[str, Any]) -> dict[str, Any]:
    """``key = value`` lines; '#' starts a comment; unknown keys are errors."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in allowed:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, value, allowed[key])
    return out


def resolve_config(command: str, args: argparse.Namespace) -> dict[str, Any]:
    allowed = {**GLOBAL_DEFAULTS, **DEFAULTS[command]}
    cfg = dict(allowed)
    if getattr(args, "config", None):
        cfg.update(read_config(args.config, allowed))
    for key in allowed:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _provenance(cfg: dict[str, Any]) -> dict[str, Any]:
    # the worker count never changes results, so it stays out of the header
    return {k: v for k, v in cfg.items() if k != "threads"}


def header_line(command: str, cfg: dict[str, Any]) -> str:
    cfg = _provenance(cfg)
    return (f"# hypercover {__version__} command={command} seed={cfg['seed']} "
            f"config={json.dumps(cfg, sort_keys=True, separators=(',', ':'))}")


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def emit_table(columns: list[str], rows: list[list], command: str, cfg: dict[str, Any]) -> str:
    """CSV or JSON lines, preceded by the provenance header."""
    buf = io.StringIO()
    if cfg["format"] == "jsonl":
        buf.write(json.dumps({"hypercover": __version__, "command": command, "seed": cfg["seed"],
                              "config": _provenance(cfg)}, sort_keys=True) + "\n")
        for row in rows:
            rec = {c: (float(_fmt(v)) if isinstance(v, float) and math.isfinite(v) else v)
                   for c, v in zip(columns, row)}
            buf.write(json.dumps(rec, sort_keys=True) + "\n")
    else:
        buf.write(header_line(command, cfg) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands

def cmd_catalog(cfg, out):
    cat = build_catalog(build_genus2_group(), cfg["cutoff"], cfg["wordbound"] or None)
    preamble = header_line("catalog", cfg) + "\n"
    if out:
        write_catalog(cat, out, preamble)
    else:
        sys.stdout.write(preamble + catalog_body(cat))
    return EXIT_OK


def cmd_sample(cfg, out):
    s = sample_homs(cfg["genus"], cfg["n"], cfg["samples"], cfg["seed"], cfg["threads"] or None,
                    cfg["trial_cap"])
    lines = [header_line("sample", cfg)]
    lines += [format_sample_line(s.hom(i), int(s.trials[i])) for i in range(len(s))]
    _write("\n".join(lines) + "\n", out)
    return EXIT_OK


def cmd_moments(cfg, out):
    words = _words(cfg["words"])
    value = moment_exact(2, cfg["n"], words)
    label = ";".join(",".join(str(x) for x in w) for w in words)
    _write(emit_table(["word", "n", "value"], [[label, cfg["n"], value]], "moments", cfg), out)
    return EXIT_OK


def cmd_variance(cfg, out):
    center = str(cfg["bump_center"]).strip()
    vc = VarianceConfig(
        genus=cfg["genus"], degrees=_int_list(cfg["degrees"]), samples=cfg["samples"], q=cfg["q"],
        Lambda0=cfg["Lambda0"], seed=cfg["seed"], bump_center=float(center) if center else None,
        bump_width=cfg["bump_width"], threads=cfg["threads"] or None, trial_cap=cfg["trial_cap"],
    )
    run = run_variance_experiment(vc)
    rows = [["variance", r.n, r.samples, r.meanSq, r.stdError, cfg["seed"]] for r in run.results]
    cols = ["experiment", "n", "samples", "mean_sq", "std_err", "seed"]
    _write(emit_table(cols, rows, "variance", cfg), out)
    summary = variance_summary_json(run) + "\n"
    if out:
        with open(out + ".json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(summary)
    else:
        sys.stderr.write(summary)
    return EXIT_OK


def cmd_weyl(cfg, out):
    w = weyl_prediction(cfg["Lambda"], cfg["n"], cfg["genus"])
    _write(emit_table(["Lambda", "n", "genus", "count"], [[w.Lambda, w.n, w.genus, w.count]], "weyl", cfg), out)
    return EXIT_OK


def cmd_predict(cfg, out):
    n, g = cfg["n"], cfg["genus"]
    rows = []
    for j in range(cfg["jmax"] + 1):
        lam = predicted_eigenvalue(j, n, g)
        rows.append([j, n, lam, weyl_prediction(lam, n, g).count - j])
    _write(emit_table(["j", "n", "lambda_j", "roundtrip"], rows, "predict", cfg), out)
    return EXIT_OK


def cmd_kernel(cfg, out):
    phi = EvenBump(cfg["width"], cfg["center"])
    T = phi.support
    t = np.linspace(0.0, T, cfg["points"])
    k = selberg_kernel(phi, t, tol=cfg["tol"])
    kfun = lambda s: selberg_kernel(phi, s, tol=cfg["tol"])
    back = abel_inverse(kfun, t, T, tol=cfg["tol"])
    rows = [[float(a), float(phi(a)), float(b), float(c)] for a, b, c in zip(t, k, back)]
    _write(emit_table(["t", "phi", "k", "abel_inverse"], rows, "kernel", cfg), out)
    return EXIT_OK


def cmd_markov(cfg, out):
    res = markov_brothers_check(_float_list(cfg["coeffs"]), cfg["q"], cfg["k"], cfg["nmax"])
    row = [res.polyDegree, res.k, res.leftSide, res.rightSide, int(res.satisfied)]
    _write(emit_table(["degree", "k", "left", "right", "satisfied"], [row], "markov", cfg), out)
    return EXIT_OK


COMMANDS = {
    "catalog": cmd_catalog,
    "sample": cmd_sample,
    "moments": cmd_moments,
    "variance": cmd_variance,
    "weyl": cmd_weyl,
    "predict": cmd_predict,
    "kernel": cmd_kernel,
    "markov": cmd_markov,
}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--threads", type=int, default=d)
    p.add_argument("--config", default=d)
    p.add_argument("--out", default=d)
    p.add_argument("--format", choices=["csv", "jsonl"], default=d)
    p.add_argument("--tol", type=float, default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hypercover", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hypercover {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, defaults in DEFAULTS.items():
        p = sub.add_parser(name)
        _add_globals(p, suppress=True)
        for key, value in defaults.items():
            kind = type(value) if isinstance(value, (int, float)) else str
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args.command, args)
        return COMMANDS[args.command](cfg, getattr(args, "out", None))
    except (UsageError, ValueError) as exc:
        # bad parameter values (degree too high, out-of-range inputs) are usage errors
        sys.stderr.write(f"hypercover: {exc}\n")
        return EXIT_USAGE
    except CatalogUnstable as exc:
        sys.stderr.write(f"hypercover: catalog unstable: {exc}\n")
        return EXIT_UNSTABLE
    except BudgetExceeded as exc:
        sys.stderr.write(f"hypercover: trial budget exceeded: {exc}\n")
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
