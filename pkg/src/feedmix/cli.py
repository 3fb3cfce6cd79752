"""Command line interface: scenario files, solving, reporting and sweeps.

Exit codes: 0 ok, 1 parse/usage error, 2 infeasible scenario,
3 method not applicable to the scenario, 4 solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import analytic, oracle
from .errors import InfeasibleScenario, NonConvergence, ScenarioError
from .model import (
    ACTIVE_TOL,
    FeedstockRecord,
    Regime,
    Scenario,
    Solution,
    existence_condition,
    potentials,
    reservoir_sum,
    xi_bar,
)
from .solver import SolverConfig, solve

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_METHOD, EXIT_NONCONVERGENCE = 0, 1, 2, 3, 4

TOP_KEYS = ("Q", "gamma", "r", "feedstocks")
FEED_KEYS = ("name", "lambda", "c", "C", "mu", "W")
ROW_COLUMNS = ("name", "x", "lambda_x", "cost_share", "water_share", "potential", "active")


class UsageError(Exception):
    pass


# -- scenario files ----------------------------------------------------------


def _line_of(text, key):
    needle = f'"{key}"'
    for no, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return no
    return None


def _fail(text, key, msg):
    line = _line_of(text, key) if text else None
    where = f" (line {line})" if line else ""
    raise ScenarioError(f"key '{key}'{where}: {msg}")


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ScenarioError(f"key '{k}': duplicated")
        seen[k] = v
    return seen


def _number(text, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(text, key, f"expected a number, got {json.dumps(value)}")
    return float(value)


def scenario_from_dict(doc: dict, text: str = "") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    for key in doc:
        if key not in TOP_KEYS:
            _fail(text, key, "unknown key")
    for key in TOP_KEYS:
        if key not in doc:
            raise ScenarioError(f"key '{key}': missing")
    feeds = doc["feedstocks"]
    if not isinstance(feeds, list) or not feeds:
        _fail(text, "feedstocks", "expected a non-empty array")
    records = []
    for i, item in enumerate(feeds):
        if not isinstance(item, dict):
            _fail(text, "feedstocks", f"entry {i} is not an object")
        for key in item:
            if key not in FEED_KEYS:
                _fail(text, key, f"unknown key in feedstock {i}")
        for key in FEED_KEYS:
            if key not in item:
                raise ScenarioError(f"key '{key}': missing in feedstock {i}")
        if not isinstance(item["name"], str):
            _fail(text, "name", f"feedstock {i} name must be a string")
        W = item["W"]
        vals = {k: _number(text, k, item[k]) for k in ("lambda", "c", "C", "mu")}
        if W is not None:
            W = _number(text, "W", W)
        records.append(FeedstockRecord(item["name"], vals["lambda"], vals["c"], vals["C"], vals["mu"], W))
    return Scenario(
        tuple(records),
        _number(text, "Q", doc["Q"]),
        _number(text, "gamma", doc["gamma"]),
        _number(text, "r", doc["r"]),
    )


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, text)


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text)


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "Q": s.Q,
        "gamma": s.gamma,
        "r": s.r,
        "feedstocks": [
            {"name": f.name, "lambda": f.lam, "c": f.c, "C": f.C, "mu": f.mu, "W": f.W}
            for f in s.feedstocks
        ],
    }


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2)


# -- reports -----------------------------------------------------------------


@dataclass
class ReportRow:
    name: str
    x: float
    lambda_x: float
    cost_share: float
    water_share: float
    potential: float
    active: bool


def report_rows(sol: Solution, s: Scenario) -> list[ReportRow]:
    x = sol.x
    cost = s.c * x + s.C * x**s.gamma
    used = s.mu * x
    weight = np.ones(s.n)
    b = s.bounded
    weight[b] = s.W[b] / (s.W[b] - used[b])
    water = weight * used
    tc, tw = float(cost.sum()), float(water.sum())
    p = potentials(s)
    return [
        ReportRow(
            f.name,
            float(x[i]),
            float(s.lam[i] * x[i]),
            float(cost[i] / tc) if tc > 0 else 0.0,
            float(water[i] / tw) if tw > 0 else 0.0,
            float(p[i]),
            bool(x[i] > ACTIVE_TOL),
        )
        for i, f in enumerate(s.feedstocks)
    ]


def _num(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    return float(v)


def solution_json(sol: Solution, s: Scenario) -> str:
    doc = {
        "regime": sol.regime.value,
        "status": sol.status.value,
        "objective": float(sol.objective),
        "xi": _num(sol.xi),
        "x": [float(v) for v in sol.x],
        "feedstocks": [asdict(row) for row in report_rows(sol, s)],
    }
    return json.dumps(doc, indent=2)


def solution_csv(sol: Solution, s: Scenario) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS + ("regime", "status", "F", "xi"))
    xi = _num(sol.xi)
    for row in report_rows(sol, s):
        w.writerow([row.name, repr(row.x), repr(row.lambda_x), repr(row.cost_share),
                    repr(row.water_share), repr(row.potential), int(row.active),
                    sol.regime.value, sol.status.value, repr(float(sol.objective)),
                    "" if xi is None else repr(xi)])
    return buf.getvalue()


def _g(v):
    return f"{v:.6g}"


def solution_table(sol: Solution, s: Scenario) -> str:
    lines = [
        f"regime     {sol.regime.value}",
        f"status     {sol.status.value}",
        f"F          {_g(sol.objective)}",
        f"xi         {'-' if _num(sol.xi) is None else _g(sol.xi)}",
        "",
        f"{'name':<16}{'x':>14}{'lambda*x':>14}{'cost%':>10}{'water%':>10}{'P_i':>12}  active",
    ]
    for row in report_rows(sol, s):
        lines.append(
            f"{row.name:<16}{_g(row.x):>14}{_g(row.lambda_x):>14}"
            f"{_g(100 * row.cost_share):>10}{_g(100 * row.water_share):>10}"
            f"{_g(row.potential):>12}  {'yes' if row.active else 'no'}"
        )
    return "\n".join(lines)


# -- commands ----------------------------------------------------------------


def cmd_check(args, out) -> int:
    s = load_scenario(args.file)
    total = reservoir_sum(s)
    print(f"sum lambda*W/mu = {total!r}", file=out)
    print(f"Q = {s.Q!r}", file=out)
    if existence_condition(s):
        print("FEASIBLE", file=out)
        return EXIT_OK
    print("INFEASIBLE", file=out)
    return EXIT_INFEASIBLE


def _solve_with(s, method, cfg, grid):
    if method == "oracle":
        if s.n > 4:
            raise UsageError(f"method oracle supports N <= 4, scenario has N={s.n}")
        sol = oracle.grid_search(s, grid)
        return replace(sol, regime=analytic.diagnose(s).regime)
    if method == "analytic" and analytic.diagnose(s).regime is Regime.GENERAL:
        raise UsageError("method analytic needs a closed-form regime; scenario is General")
    return solve(s, cfg, method=method)


def cmd_solve(args, out) -> int:
    s = load_scenario(args.file)
    cfg = SolverConfig(seed=args.seed, max_iters=args.max_iters)
    grid = oracle.GridSpec(points_per_axis=args.grid_points)
    code = EXIT_OK
    try:
        sol = _solve_with(s, args.method, cfg, grid)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_METHOD
    except InfeasibleScenario as exc:
        print(f"INFEASIBLE: {exc}", file=out)
        return EXIT_INFEASIBLE
    except NonConvergence as exc:
        print(f"warning: {exc}", file=sys.stderr)
        sol, code = exc.solution, EXIT_NONCONVERGENCE
    render = {"table": solution_table, "json": solution_json, "csv": solution_csv}[args.format]
    text = render(sol, s)
    out.write(text if text.endswith("\n") else text + "\n")
    return code


def cmd_potentials(args, out) -> int:
    s = load_scenario(args.file)
    p = potentials(s)
    _, i_max = xi_bar(s)
    i_min = int(np.argmin(p))
    print(f"{'index':<7}{'name':<16}{'P_i':>14}  mark", file=out)
    for i, f in enumerate(s.feedstocks):
        marks = [m for m, hit in (("max", i == i_max), ("min", i == i_min)) if hit]
        print(f"{i:<7}{f.name:<16}{_g(p[i]):>14}  {','.join(marks)}", file=out)
    regime = analytic.diagnose(s).regime
    if regime is Regime.LINEAR_FREE:
        verdict = "INTERCHANGEABLE" if analytic.interchangeable_linear(s) else "NOT INTERCHANGEABLE"
        print(f"verdict: {verdict}", file=out)
    else:
        print(f"note: interchangeability verdict only applies to LinearFree (regime is {regime.value})",
              file=out)
    return EXIT_OK


FIELD_ALIASES = {"lambda": "lam", "lam": "lam", "c": "c", "C": "C", "mu": "mu", "W": "W"}


def parse_selector(selector: str, s: Scenario):
    """``Q``, ``gamma``, ``r`` or ``<index>.<field>`` with field in lambda, c, C, mu, W."""
    if selector in ("Q", "gamma", "r"):
        return selector, None
    head, _, field = selector.partition(".")
    if not field or field not in FIELD_ALIASES:
        raise UsageError(f"invalid selector {selector!r}")
    try:
        index = int(head)
    except ValueError:
        raise UsageError(f"invalid feedstock index in selector {selector!r}") from None
    if not 0 <= index < s.n:
        raise UsageError(f"feedstock index {index} out of range for N={s.n}")
    return FIELD_ALIASES[field], index


def with_param(s: Scenario, field, index, value) -> Scenario:
    if index is None:
        return Scenario(s.feedstocks, **{"Q": s.Q, "gamma": s.gamma, "r": s.r, field: value})
    feeds = list(s.feedstocks)
    feeds[index] = replace(feeds[index], **{field: value})
    return s.replace_feedstocks(feeds)


def sweep_rows(s: Scenario, field, index, values, cfg: SolverConfig) -> list[list]:
    scenarios = [with_param(s, field, index, float(v)) for v in values]

    def one(pair):
        v, sc = pair
        if not existence_condition(sc):
            return [repr(float(v)), "INFEASIBLE", "", "", "", ""] + [""] * sc.n
        try:
            sol = solve(sc, cfg)
        except NonConvergence as exc:
            sol = exc.solution
        xi = _num(sol.xi)
        return ([repr(float(v)), "FEASIBLE", repr(float(sol.objective)),
                 "" if xi is None else repr(xi), sol.regime.value, str(sol.support_mask())]
                + [repr(float(t)) for t in sol.x])

    threads = int(os.environ.get("FEEDMIX_THREADS", "1") or 1)
    pairs = list(zip(values, scenarios))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, pairs))
    return [one(p) for p in pairs]


def cmd_sweep(args, out) -> int:
    s = load_scenario(args.file)
    try:
        field, index = parse_selector(args.param, s)
        if args.steps < 2:
            raise UsageError("--steps must be at least 2")
        values = np.linspace(args.start, args.stop, args.steps)
        rows = sweep_rows(s, field, index, values, SolverConfig(seed=args.seed))
    except (UsageError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "feasible", "F", "xi", "regime", "support"] + [f"x{i}" for i in range(s.n)])
    w.writerows(rows)
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        out.write(buf.getvalue())
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="feedmix", description="Feedstock import mix optimizer")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="test the existence condition")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="solve a scenario")
    p.add_argument("file")
    p.add_argument("--method", choices=["auto", "analytic", "general", "oracle"], default="auto")
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=None,
                   help="oracle points per axis (default depends on N)")
    p.add_argument("--max-iters", type=int, default=SolverConfig.max_iters,
                   help="projected-gradient iteration cap per start")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("potentials", help="productive potentials and interchangeability")
    p.add_argument("file")
    p.set_defaults(func=cmd_potentials)

    p = sub.add_parser("sweep", help="re-solve while varying one parameter")
    p.add_argument("file")
    p.add_argument("--param", required=True, help="Q, gamma, r or <index>.<lambda|c|C|mu|W>")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_PARSE
    try:
        return args.func(args, out)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
