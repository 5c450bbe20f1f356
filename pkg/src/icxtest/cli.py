"""Command line interface.

Subcommands: ``test`` (exact p-value for an observed table), ``power``
(exact power of the size-alpha rule over a file of alternatives),
``enumerate`` (dump the conditional ensemble with statistics), and ``rays``
(sample directions from the practical cone).  Output is JSON by default and
is byte-for-byte reproducible: fixed field order, floats rendered with 17
significant digits.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cone import ProbPair, Weights, build_cone, sample_cone_directions
from .errors import IcxError
from .inference import (
    AlternativeSpec,
    evaluate_statistic,
    exact_pvalue,
    power_study,
)
from .tables import Margins, Table2xC, enumerate_tables

__all__ = ["main"]


def _canonical_json(obj) -> str:
    """JSON with deterministic field order and 17-significant-digit floats."""
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(
            f"{json.dumps(str(k))}:{_canonical_json(v)}" for k, v in obj.items()
        ) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical_json(v) for v in obj) + "]"
    if isinstance(obj, (np.floating,)):
        return _canonical_json(float(obj))
    if isinstance(obj, (np.integer,)):
        return json.dumps(int(obj))
    if isinstance(obj, np.ndarray):
        return _canonical_json(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _parse_int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise ValueError(f"{what} must be comma-separated integers: {text!r}") from exc


def _parse_weights(text: str | None, C: int) -> Weights:
    if text is None:
        return Weights.default(C)
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise ValueError(f"--lambda must be comma-separated reals: {text!r}") from exc
    return Weights(values)


def _read_table(path: str) -> Table2xC:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return Table2xC.from_json(text)
    return Table2xC.from_csv(text)


def _read_alternatives(path: str, C: int) -> list[AlternativeSpec]:
    lines = [line.strip() for line in Path(path).read_text().splitlines()]
    specs = []
    for lineno, line in enumerate(lines, start=1):
        if not line or line.startswith("#"):
            continue
        try:
            values = [float(part) for part in line.replace(",", " ").split()]
        except ValueError as exc:
            raise ValueError(f"alternatives line {lineno}: not numeric") from exc
        if len(values) != 2 * C:
            raise ValueError(
                f"alternatives line {lineno}: expected {2 * C} values, "
                f"got {len(values)}"
            )
        p1, p2 = np.array(values[:C]), np.array(values[C:])
        if p1.min() <= 0 or p2.min() <= 0:
            raise ValueError(f"alternatives line {lineno}: cells must be positive")
        for name, half in (("p1", p1), ("p2", p2)):
            if abs(half.sum() - 1.0) > 1e-9:
                raise ValueError(
                    f"alternatives line {lineno}: {name} sums to {half.sum()!r}, "
                    "expected 1 within 1e-9"
                )
        specs.append(AlternativeSpec(ProbPair.from_arrays(p1, p2, normalize=True)))
    if not specs:
        raise ValueError(f"no alternatives found in {path}")
    return specs


def _statistics(stat: str) -> tuple[str, ...]:
    return ("dchisq", "lrt") if stat == "both" else (stat,)


def cmd_test(args) -> str:
    table = _read_table(args.input)
    weights = _parse_weights(args.lam, table.C)
    results = []
    for name in _statistics(args.stat):
        report = exact_pvalue(table, name, weights, tie_tol=args.tie_tol)
        results.append({
            "statistic": report.statistic,
            "value": report.statistic_value,
            "p_value": report.p_value,
            "tie_mass": report.tie_mass,
            "n_tables": report.n_tables,
            "reject_at_alpha": bool(report.p_value <= args.alpha),
        })
    if args.format == "json":
        return _canonical_json({
            "table": [list(r) for r in table.counts],
            "lambda": list(weights.values),
            "alpha": args.alpha,
            "results": results,
        })
    lines = [f"table: {table.counts[0]} / {table.counts[1]}",
             f"lambda: {', '.join(format(v, 'g') for v in weights.values)}"
             f"   alpha: {args.alpha:g}"]
    for r in results:
        verdict = "reject" if r["reject_at_alpha"] else "do not reject"
        lines.append(
            f"{r['statistic']}: value={r['value']:.6g} p={r['p_value']:.6g} "
            f"(tie mass {r['tie_mass']:.3g}, {r['n_tables']} tables) -> {verdict}"
        )
    return "\n".join(lines)


def cmd_power(args) -> str:
    margins = Margins(_parse_int_list(args.rows, "--rows"),
                      _parse_int_list(args.cols, "--cols"))
    weights = _parse_weights(args.lam, margins.C)
    specs = _read_alternatives(args.alternatives, margins.C)
    stats = _statistics(args.stat)
    reports = power_study(margins, weights, specs, args.alpha,
                          statistics=stats, tie_tol=args.tie_tol)
    rows = []
    for i, spec in enumerate(specs):
        entry = {
            "p1": list(spec.pair.p1),
            "p2": list(spec.pair.p2),
        }
        for j, name in enumerate(stats):
            entry[f"power_{name}"] = reports[i * len(stats) + j].power
        rows.append(entry)
    if args.format == "json":
        return _canonical_json({
            "rows": list(margins.row_sums),
            "cols": list(margins.col_sums),
            "lambda": list(weights.values),
            "alpha": args.alpha,
            "alternatives": rows,
        })
    header = "p1 | p2 | " + " | ".join(f"power[{s}]" for s in stats)
    lines = [header]
    for entry in rows:
        p1 = " ".join(f"{v:.4f}" for v in entry["p1"])
        p2 = " ".join(f"{v:.4f}" for v in entry["p2"])
        powers = " | ".join(
            f"{entry[f'power_{s}']:.4f}" for s in stats
        )
        lines.append(f"{p1} | {p2} | {powers}")
    return "\n".join(lines)


def cmd_enumerate(args) -> str:
    if args.input:
        table = _read_table(args.input)
        margins = table.margins
    elif args.rows and args.cols:
        margins = Margins(_parse_int_list(args.rows, "--rows"),
                          _parse_int_list(args.cols, "--cols"))
    else:
        raise ValueError("enumerate needs a table file or --rows and --cols")
    weights = _parse_weights(args.lam, margins.C)
    ensemble = enumerate_tables(margins.row_sums, margins.col_sums)
    probs = ensemble.probs
    dchisq = evaluate_statistic(ensemble, "dchisq", weights)
    lrt = evaluate_statistic(ensemble, "lrt", weights)
    if args.format == "json":
        tables = [
            {
                "first_row": [int(v) for v in ensemble.first_rows[i]],
                "null_prob": float(probs[i]),
                "dchisq": float(dchisq[i]),
                "lrt": float(lrt[i]),
            }
            for i in range(len(ensemble))
        ]
        return _canonical_json({
            "rows": list(margins.row_sums),
            "cols": list(margins.col_sums),
            "lambda": list(weights.values),
            "n_tables": len(ensemble),
            "tables": tables,
        })
    lines = ["first_row,null_prob,dchisq,lrt"]
    for i in range(len(ensemble)):
        cells = " ".join(str(int(v)) for v in ensemble.first_rows[i])
        lines.append(
            f"{cells},{format(probs[i], '.17g')},"
            f"{format(dchisq[i], '.17g')},{format(lrt[i], '.17g')}"
        )
    return "\n".join(lines)


def cmd_rays(args) -> str:
    rows = _parse_int_list(args.rows, "--rows")
    if len(rows) != 2:
        raise ValueError("--rows must give exactly two row sums")
    if args.lam is None:
        raise ValueError("rays needs --lambda to fix the number of columns")
    weights = _parse_weights(args.lam, None if args.lam is None else
                             len(args.lam.split(",")) + 1)
    cone = build_cone(weights.C, weights, rows[0], rows[1])
    directions = sample_cone_directions(cone, args.count, args.seed)
    payload = {
        "rows": list(rows),
        "lambda": list(weights.values),
        "count": args.count,
        "seed": args.seed,
        "directions": [[float(v) for v in d] for d in directions],
    }
    if args.format == "json":
        return _canonical_json(payload)
    return "\n".join(" ".join(format(v, ".17g") for v in d) for d in directions)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icxtest",
        description="Exact conditional tests of two multinomials against the "
                    "increasing convex order.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, stat_default="dchisq"):
        p.add_argument("--lambda", dest="lam", default=None,
                       help="comma-separated strictly decreasing positive weights "
                            "(default: C-1,...,1)")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--stat", choices=["dchisq", "lrt", "both"],
                       default=stat_default)
        p.add_argument("--tie-tol", dest="tie_tol", type=float, default=1e-9)
        p.add_argument("--format", choices=["json", "text"], default="json")

    p_test = sub.add_parser("test", help="exact p-value for an observed table")
    p_test.add_argument("input", help="table file: JSON {\"counts\": ...} or "
                                      "two CSV rows of counts")
    common(p_test)

    p_power = sub.add_parser("power", help="exact power over a file of alternatives")
    p_power.add_argument("--rows", required=True, help="n1,n2")
    p_power.add_argument("--cols", required=True, help="t1,...,tC")
    p_power.add_argument("--alternatives", required=True,
                         help="file with 2C positive reals per line "
                              "(p11..p1C p21..p2C), each half summing to 1")
    common(p_power)

    p_enum = sub.add_parser("enumerate",
                            help="list every table sharing the margins")
    p_enum.add_argument("input", nargs="?", default=None,
                        help="optional table file supplying the margins")
    p_enum.add_argument("--rows", default=None, help="n1,n2")
    p_enum.add_argument("--cols", default=None, help="t1,...,tC")
    common(p_enum)

    p_rays = sub.add_parser("rays", help="sample practical cone directions")
    p_rays.add_argument("--rows", required=True, help="n1,n2")
    p_rays.add_argument("--count", type=int, default=8)
    p_rays.add_argument("--seed", type=int, default=0)
    common(p_rays)
    return parser


_COMMANDS = {
    "test": cmd_test,
    "power": cmd_power,
    "enumerate": cmd_enumerate,
    "rays": cmd_rays,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        output = _COMMANDS[args.command](args)
    except (IcxError, ValueError, OSError) as exc:
        print(f"icxtest: error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(output + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
