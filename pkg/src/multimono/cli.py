"""``mm`` command-line front end.

Exit codes: 0 pass, 1 fail, 2 inconclusive, 3 usage or input error.
Reports go to stdout as JSON (sorted keys) or as ``key,value`` CSV.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import jsonschema
import numpy as np

from . import convex as cx
from . import gallery
from . import monotone as mo
from .core import ConfigError, GammaSet, Grid, UnsupportedRepresentation
from .report import CheckReport, Verdict, jsonable

EXIT = {Verdict.PASS: 0, Verdict.FAIL: 1, Verdict.INCONCLUSIVE: 2}
EXIT_USAGE = 3

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_CONFIG = {
    "type": "object",
    "additionalProperties": False,
    "required": ["N", "d"],
    "properties": {"N": {"type": "integer", "minimum": 2}, "d": {"type": "integer", "minimum": 1}},
}
_GRID = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lo", "hi", "steps"],
    "properties": {
        "lo": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "hi": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "steps": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
    },
}

GAMMA_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["config", "body"],
    "properties": {
        "config": _CONFIG,
        "body": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "points"],
                    "properties": {
                        "kind": {"const": "finite"},
                        "points": {"type": "array", "minItems": 1, "items": _MATRIX},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "matrices"],
                    "properties": {
                        "kind": {"const": "linear"},
                        "matrices": {"type": "array", "minItems": 2, "items": _MATRIX},
                    },
                },
            ]
        },
    },
}

_FUNC = {
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "matrix"],
            "properties": {"kind": {"const": "quadratic"}, "matrix": _MATRIX},
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "basis", "matrix"],
            "properties": {"kind": {"const": "subspace_quadratic"}, "basis": _MATRIX, "matrix": _MATRIX},
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "grid", "values"],
            "properties": {
                "kind": {"const": "grid"},
                "grid": _GRID,
                "values": {"type": "array", "items": {"anyOf": [{"type": "number"}, {"const": "inf"}]}},
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "alphas", "own_index"],
            "properties": {
                "kind": {"const": "curve"},
                "own_index": {"type": "integer", "minimum": 1},
                "alphas": {
                    "type": "array",
                    "minItems": 2,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["ts", "vals"],
                        "properties": {
                            "ts": {"type": "array", "items": {"type": "number"}},
                            "vals": {"type": "array", "items": {"type": "number"}},
                        },
                    },
                },
            },
        },
    ]
}

TUPLE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["config", "funcs"],
    "properties": {"config": _CONFIG, "funcs": {"type": "array", "minItems": 2, "items": _FUNC}},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_json(path, schema, what):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {what} file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} file {path} is not valid JSON: {exc}") from None
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{e.json_path}: {e.message}" for e in _specific(errors)]
        raise UsageError(f"{what} file {path} violates the schema:\n  " + "\n  ".join(lines))
    return data


def _specific(errors):
    """Descend into oneOf failures, following the branch whose ``kind`` matched."""
    out = []
    for e in errors:
        if not e.context:
            out.append(e)
            continue
        branches = {}
        for sub in e.context:
            branches.setdefault(sub.relative_schema_path[0], []).append(sub)
        kind_ok = [
            errs for errs in branches.values()
            if not any(s.validator == "const" and list(s.relative_path)[-1:] == ["kind"] for s in errs)
        ]
        if len(kind_ok) == 1:
            out.extend(_specific(sorted(kind_ok[0], key=lambda s: list(s.absolute_path))))
        else:
            out.append(e)
    return out


def _fix_inf(data):
    if isinstance(data, dict):
        return {k: _fix_inf(v) for k, v in data.items()}
    if isinstance(data, list):
        return [_fix_inf(v) for v in data]
    return float("inf") if data == "inf" else data


def load_gamma(path) -> GammaSet:
    return GammaSet.from_dict(_load_json(path, GAMMA_SCHEMA, "gamma"))


def load_tuple(path) -> cx.SplittingTuple:
    return cx.SplittingTuple.from_dict(_fix_inf(_load_json(path, TUPLE_SCHEMA, "tuple")))


def _tol(args):
    if args.tol is not None:
        return args.tol
    env = os.environ.get("MM_DEFAULT_TOL")
    if env is None:
        return None
    try:
        return float(env)
    except ValueError:
        raise UsageError(f"MM_DEFAULT_TOL is not a number: {env!r}") from None


def _grid(args, d, default=(-3.0, 3.0, 61)):
    lo = default[0] if args.grid_lo is None else args.grid_lo
    hi = default[1] if args.grid_hi is None else args.grid_hi
    steps = default[2] if args.grid_steps is None else args.grid_steps
    return Grid.cube(lo, hi, steps, d)


def _grid_given(args):
    return any(v is not None for v in (args.grid_lo, args.grid_hi, args.grid_steps))


def _sample(args, gamma):
    """Parameter grid for linear sets when grid flags are given, else the default."""
    if gamma.is_finite or not _grid_given(args):
        return None
    return _grid(args, gamma.d, default=(-2.0, 2.0, 5))


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise UsageError(f"--{n.replace('_', '-')} is required for this command")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# -- commands -----------------------------------------------------------------


def cmd_monotone(args):
    _require(args, "input")
    g = load_gamma(args.input)
    return mo.check_pairwise_c_monotone(g, _sample(args, g), _tol(args))


def cmd_cyclic(args):
    _require(args, "input")
    g = load_gamma(args.input)
    return mo.check_n_c_cyclic(g, args.order, _sample(args, g), _tol(args), budget=args.budget, seed=args.seed)


def cmd_maximal(args):
    _require(args, "input")
    g = load_gamma(args.input)
    return mo.classify_maximality(g, _sample(args, g), _tol(args))


def cmd_resolvents(args):
    _require(args, "input")
    g = load_gamma(args.input)
    if args.index is None:
        return mo.check_partition_identity(g, _sample(args, g), _tol(args))
    try:
        samples = mo.resolvent_samples(g, args.index, _sample(args, g), _tol(args))
    except mo.NotWellDefined as exc:
        return exc.report
    rep = mo.check_firmly_nonexpansive(samples, _tol(args))
    rep.details["samples"] = {"s": samples.u, "J": samples.v}
    return rep


def cmd_splitting(args):
    _require(args, "tuple")
    tup = load_tuple(args.tuple)
    gamma = load_gamma(args.input) if args.input else None
    grids = [_grid(args, tup.config.d)] * len(tup)
    rep = cx.check_splitting_inequality(
        tup, grids=grids, gamma=gamma, sample=_sample(args, gamma) if gamma else None, tol=_tol(args),
        keep_values=bool(args.emit_plot),
    )
    if args.emit_plot:
        slack = rep.details.pop("grid_slack")
        sizes = [g.size for g in grids]
        nodes = [g.nodes() for g in grids]
        d = tup.config.d
        header = [f"x{i + 1}_{k + 1}" for i in range(len(tup)) for k in range(d)] + ["slack"]
        rows = []
        for flat, s in enumerate(slack):
            idx = np.unravel_index(flat, sizes)
            coords = np.concatenate([nodes[i][j] for i, j in enumerate(idx)])
            rows.append(list(coords) + [s])
        _write_csv(args.emit_plot, header, rows)
    return rep


def cmd_conjugate(args):
    _require(args, "tuple", "index")
    tup = load_tuple(args.tuple)
    grid = _grid(args, tup.config.d)
    if args.kind == "fenchel":
        f = tup[args.index - 1]
        out = cx.fenchel_conjugate(f, dual_grid=grid)
        if isinstance(out, cx.Quadratic):
            return CheckReport(Verdict.PASS, 0.0, check="fenchel_conjugate", mode="closed_form",
                               details={"conjugate": out.to_dict()})
        return CheckReport(
            Verdict.INCONCLUSIVE if out.warnings else Verdict.PASS, 0.0, check="fenchel_conjugate", mode="grid",
            details={"conjugate": out.to_dict(), "warnings": out.warnings},
        )
    out = cx.c_conjugate(list(tup), args.index, [grid] * len(tup))
    return CheckReport(Verdict.PASS, 0.0, check="c_conjugate", mode="grid", details={"conjugate": out.to_dict()})


def cmd_relax(args):
    _require(args, "tuple")
    tup = load_tuple(args.tuple)
    grids = [_grid(args, tup.config.d)] * len(tup)
    try:
        res = cx.relax_to_c_conjugate(tup, grids, passes=args.passes, tol=_tol(args))
    except cx.PreconditionFailed as exc:
        return exc.report
    return CheckReport(
        Verdict.PASS, 0.0, check="relax_to_c_conjugate", mode="grid",
        details={"max_change": res.max_change, "interior_change": res.interior_change,
                 "passes": res.pass_changes, "tuple": res.funcs.to_dict()},
    )


def cmd_envelope(args):
    _require(args, "tuple")
    tup = load_tuple(args.tuple)
    gamma = load_gamma(args.input) if args.input else None
    probes = _grid(args, tup.config.d, default=(-3.0, 3.0, 13)).nodes()
    rep = cx.check_envelope_criterion(tup, probes, gamma=gamma, tol=_tol(args), keep_values=bool(args.emit_plot))
    if args.emit_plot:
        S = rep.details.pop("probes")
        total = rep.details.pop("envelope_sum")
        qs = rep.details.pop("q")
        d = tup.config.d
        header = [f"s{k + 1}" for k in range(d)] + ["envelope_sum", "q"]
        _write_csv(args.emit_plot, header, [list(s) + [e, qv] for s, e, qv in zip(S, total, qs)])
    return rep


def cmd_prox_partition(args):
    _require(args, "tuple")
    tup = load_tuple(args.tuple)
    probes = _grid(args, tup.config.d, default=(-3.0, 3.0, 13)).nodes()
    return cx.check_prox_partition(tup, probes, tol=_tol(args))


def cmd_gallery(args):
    if args.action == "list":
        return {"cases": [{"id": cid, "description": gallery.get_case(cid).description} for cid in gallery.case_ids()]}
    if not args.case_id:
        raise UsageError("gallery run needs a case id")
    return gallery.run_case(gallery.get_case(args.case_id))


COMMANDS = {
    "monotone": cmd_monotone,
    "cyclic": cmd_cyclic,
    "maximal": cmd_maximal,
    "resolvents": cmd_resolvents,
    "splitting": cmd_splitting,
    "conjugate": cmd_conjugate,
    "relax": cmd_relax,
    "envelope": cmd_envelope,
    "prox-partition": cmd_prox_partition,
    "gallery": cmd_gallery,
}


def build_parser():
    p = _Parser(prog="mm", description="Checks for multi-marginal monotonicity and c-splitting tuples.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "gallery":
            sp.add_argument("action", choices=["list", "run"])
            sp.add_argument("case_id", nargs="?")
        else:
            sp.add_argument("--input", help="Gamma JSON file")
            sp.add_argument("--tuple", help="splitting tuple JSON file")
            sp.add_argument("--order", type=int, default=3, help="cyclic order n")
            sp.add_argument("--index", type=int, help="1-based marginal index")
            sp.add_argument("--kind", choices=["c", "fenchel"], default="c", help="conjugate kind")
            sp.add_argument("--passes", type=int, default=1)
            sp.add_argument("--tol", type=float)
            sp.add_argument("--grid-lo", type=float)
            sp.add_argument("--grid-hi", type=float)
            sp.add_argument("--grid-steps", type=int)
            sp.add_argument("--budget", type=int, default=mo.DEFAULT_BUDGET)
            sp.add_argument("--seed", type=int, default=mo.DEFAULT_SEED)
            sp.add_argument("--emit-plot", metavar="PATH")
        sp.add_argument("--format", choices=["json", "csv"], default="json")
    return p


def _render(payload, fmt):
    data = payload if isinstance(payload, dict) else payload.to_dict()
    data = jsonable(data)
    if fmt == "json":
        return json.dumps(data, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k in sorted(data):
        v = data[k]
        w.writerow([k, v if not isinstance(v, (dict, list)) else json.dumps(v, sort_keys=True)])
    return buf.getvalue()


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        payload = COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"mm: error: {exc}\n")
        return EXIT_USAGE
    except (ConfigError, UnsupportedRepresentation, cx.DomainError, KeyError, ValueError) as exc:
        sys.stderr.write(f"mm: error: {exc}\n")
        return EXIT_USAGE
    sys.stdout.write(_render(payload, args.format))
    if isinstance(payload, CheckReport):
        return EXIT[payload.verdict]
    if isinstance(payload, gallery.CaseResult):
        return EXIT[payload.verdict]
    return 0


if __name__ == "__main__":
    sys.exit(main())
