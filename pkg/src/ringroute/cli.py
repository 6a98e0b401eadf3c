"""Command-line entry point: ``ringroute <command> [options]``.

Every command prints (or writes) a JSON envelope ``{config, seed, results,
checks}`` with sorted keys, so identical inputs give identical bytes.  Exit
status is 0 when every check passes, 1 when one fails and 2 on bad usage.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import analysis, butterfly, formulas, lyapunov, taylor
from .ring import Protocol, RingSpec, nominal_load
from .series import IntSeries
from .sim import simulate

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def number(text: str):
    """``"3/10"`` becomes a Fraction, anything else a float."""
    try:
        return Fraction(text) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def int_list(text: str) -> list[int]:
    text = text.strip()
    return [int(x) for x in text.split(",") if x.strip()] if text else []


def count(text: str) -> int:
    """Integer that also accepts ``1e6``."""
    value = float(text)
    if value != int(value):
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(value)


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, IntSeries):
        return [int(a) for a in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def check(name: str, passed: bool, **detail) -> dict:
    return {"name": name, "passed": bool(passed), **detail}


def _spec(args) -> RingSpec:
    if args.lam is not None or args.mu is not None:
        if args.lam is None or args.mu is None:
            raise UsageError("a geometric ring needs both --lam and --mu")
        return RingSpec.geometric_ring(args.N, float(args.lam), float(args.mu), args.protocol)
    L = args.N - 1 if args.L is None else args.L
    return RingSpec(args.N, L, float(args.p), args.protocol)


def cmd_simulate(args):
    spec = _spec(args)
    st = simulate(spec, args.steps, args.reps, args.seed, burn_in=args.burn_in,
                  thin=args.thin, workers=args.workers)
    checks = []
    r = nominal_load(spec)
    if r < 1 and args.reps > 1 and not spec.geometric:
        gap = abs(st.idle_fraction - (1 - r))
        tol = 4 * st.idle_fraction_se + 1e-12
        checks.append(check("idle fraction equals 1 - r", gap <= tol,
                            observed=st.idle_fraction, expected=1 - r, tolerance=tol))
    return st.to_dict(), checks, [st.csv_row()]


def cmd_taylor(args):
    if args.N is None:
        raise UsageError("taylor needs --N")
    L = args.N - 1 if args.L is None else args.L
    spec = RingSpec(args.N, L, 0.0)
    kw = dict(compressed=args.compressed, cap=args.state_cap)
    if args.steps is not None:
        dist = taylor.propagate(spec, args.k, args.steps, **kw)
    else:
        dist = taylor.stationary_series(spec, args.k, window=args.window, **kw)
    total = taylor.expected_queue_series(dist)
    try:
        node = taylor.per_node(total, args.N)
    except ArithmeticError:
        node = None
    results = {
        "spec": spec.to_dict(), "k": args.k, "compressed": args.compressed,
        "states": len(dist.states), "steps": dist.steps, "converged_at": dist.converged_at,
        "expected_queue_total": total, "expected_queue_per_node": node,
        "empty_state": dist.empty_state(),
    }
    if args.dump:
        dist.dump(args.dump)
        results["dump"] = str(args.dump)
    mass = dist.total()
    checks = [check("probabilities sum to one", list(mass) == [1] + [0] * args.k),
              check("coefficients integral", all(s.is_integral() for s in dist.probs.values()))]
    table = [{"degree": j, "expected_queue_per_node": (node[j] if node else ""),
              "expected_queue_total": total[j], "empty_state": dist.empty_state()[j]}
             for j in range(args.k + 1)]
    return results, checks, table


def cmd_formulas(args):
    kind = args.kind
    checks: list = []
    table = None
    if kind == "l2":
        pmf = [formulas.l2_marginal(args.p, n) for n in range(args.n_max + 1)]
        mom = formulas.l2_moments(args.p)
        results = {"p": args.p, "marginal": pmf, "expected_queue": mom.expected_queue,
                   "variance": mom.variance, "entropy": mom.entropy}
        table = [{"n": n, "probability": _jsonable(v)} for n, v in enumerate(pmf)]
    elif kind == "birth-death":
        bd = formulas.birth_death(args.a_hat, args.d_hat, args.measure)
        pmf = bd.pmf(args.n_max)
        results = {"pmf": pmf, "expected_queue": bd.expected_queue}
        table = [{"n": n, "probability": _jsonable(v)} for n, v in enumerate(pmf)]
    elif kind == "pk":
        if args.L is not None:
            val = formulas.pk_one_node_ring(args.L, args.r)
            closed = formulas.one_node_ring_closed(args.L, args.r)
            results = {"L": args.L, "r": args.r, "expected_queue": val, "closed_form": closed}
            checks.append(check("P-K equals closed form", abs(val - closed) <= 1e-12))
        else:
            if None in (args.lam, args.ez, args.ez2):
                raise UsageError("pk needs --L and --r, or --lam, --ez and --ez2")
            results = {"expected_queue": formulas.pk_queue(args.lam, args.ez, args.ez2)}
    elif kind == "chernoff":
        b = formulas.chernoff_bounds(float(args.beta), float(args.P), args.side)
        results = {"exponent": b.exponent, "bound": b.bound}
    elif kind == "empty-slot":
        vals = [args.A, args.B, args.C, args.D]
        if None in vals:
            raise UsageError("empty-slot needs --A --B --C --D")
        bound = formulas.empty_slot_bound(*map(float, vals), float(args.r), float(args.N),
                                          float(args.delta))
        results = {"bound": bound, "scaled": bound * float(args.N) / 2}
    elif kind == "traffic":
        model = formulas.ring_traffic_model(int(args.N), int(args.N) - 1 if args.L is None else args.L,
                                            args.p)
        lam, rho = formulas.traffic_solve(model)
        results = {"class_rates": lam, "node_loads": [rho[i] for i in sorted(rho)]}
        table = [{"node": i, "load": _jsonable(rho[i])} for i in sorted(rho)]
    elif kind == "balance":
        spec = RingSpec.nonstandard(int(args.N), 2, float(args.p))
        cand = lambda state: formulas.l2_state_prob(state, args.p)
        rep = formulas.balance_check(spec, cand, args.cap, args.p)
        results = {"max_residual": rep.max_residual, "tail_bound": rep.tail_bound,
                   "states": rep.states, "worst_state": rep.worst_state}
        checks.append(check("balance residual within tail bound", rep.ok,
                            residual=rep.max_residual, tolerance=rep.tail_bound))
    else:
        raise UsageError(f"unknown formula {kind!r}")
    return results, checks, table


def _coefficients(args) -> list[int]:
    if args.coeffs:
        return int_list(args.coeffs)
    if args.input:
        data = json.loads(Path(args.input).read_text())
        body = data.get("results", data)
        for key in ("expected_queue_per_node", "expected_queue_total", "coefficients"):
            if body.get(key):
                return [int(x) for x in body[key]]
        raise UsageError(f"no coefficient list in {args.input}")
    raise UsageError("series needs --coeffs or --input")


def cmd_series(args):
    c = _coefficients(args)
    results: dict = {"coefficients": c}
    checks = []
    table = None
    if args.rationality:
        a, b = args.rationality
        res = [analysis.rationality_test(c, a, b, q) for q in (analysis.PRIME, analysis.CONFIRM_PRIME)]
        results["rationality"] = [r.to_dict() for r in res]
        checks.append(check("primes agree", res[0].full_rank == res[1].full_rank))
        for r in res:
            if not r.full_rank:
                checks.append(check(f"annihilator verified mod {r.prime}", r.verified))
    if args.scan is not None:
        scan = analysis.rationality_scan(c, args.scan)
        results["scan"] = scan
        checks.append(check("primes agree on every split", all(row["agree"] for row in scan)))
        table = [{"alpha": row["alpha"], "beta": row["beta"],
                  "full_rank": all(row["full_rank"]), "admissible": any(row["admissible"])}
                 for row in scan]
    if args.recover:
        got = analysis.recover_rational(c, *args.recover)
        results["rational"] = None if got is None else {"numerator": got[0], "denominator": got[1]}
    if args.mono:
        results["absolute_monotonicity"] = analysis.abso_mono_verdict(c).to_dict()
    if args.leading is not None:
        lead = analysis.light_traffic_leading(c, args.leading)
        results["leading"] = {"predicted": lead.predicted, "actual": lead.actual}
        checks.append(check("s^2 coefficient matches light-traffic prediction", lead.ok))
    if table is None:
        table = [{"degree": j, "coefficient": a} for j, a in enumerate(c)]
    return results, checks, table


def cmd_drift(args):
    if args.r is not None:
        p = 2 * float(args.r) / args.N
    elif args.p is not None:
        p = float(args.p)
    else:
        raise UsageError("drift needs --r or --p")
    spec = RingSpec.standard(args.N, p)
    params = lyapunov.PhiParams.for_spec(spec, args.delta)
    results = {"params": params.to_dict()}
    checks = []
    if args.trick:
        states = lyapunov.sample_states(spec, args.trick, seed=args.seed)
        bad = [s for s in states if not lyapunov.trick_check(s, params)]
        results["trick_states"] = len(states)
        checks.append(check("trick inequality on sampled states", not bad, failures=len(bad)))
    state = lyapunov.state_with_phi(spec, params, args.phi * args.N, seed=args.seed,
                                    peaked=not args.uniform)
    rep = lyapunov.drift_probe(spec, state, params, args.T, args.reps, args.seed, args.node)
    results["drift"] = rep.to_dict()
    if args.expect_negative:
        checks.append(check("drift interval below zero", rep.ci_high < 0, ci_high=rep.ci_high))
    return results, checks, [{k: v for k, v in rep.to_dict().items() if k != "params"}]


def _pair(args) -> butterfly.ButterflyPair:
    if args.pair:
        return butterfly.ButterflyPair.from_dict(json.loads(Path(args.pair).read_text()))
    if args.d is None:
        raise UsageError("butterfly needs --d or --pair")
    left = int_list(args.left_order) if args.left_order else list(range(args.d))
    right = int_list(args.right_order) if args.right_order else list(range(args.d))
    return butterfly.ButterflyPair(args.d, tuple(left), tuple(right))


def _labels(text: Optional[str]) -> list[int]:
    if text is None:
        return []
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok:
            out.append(int(tok[2:], 2) if tok.startswith("0b") else int(tok))
    return out


def cmd_butterfly(args):
    pair = _pair(args)
    results: dict = {"pair": pair.to_dict()}
    checks = []
    if args.action == "graph":
        q = args.q
        g = butterfly.connectivity_graph(pair, q)
        results["components"] = [{"left": [str(g.left[i]) for i in ls],
                                  "right": [str(g.right[j]) for j in rs]} for ls, rs in g.components()]
        checks.append(check("enriched graph regular", g.regular()))
        if pair.layer_permuted:
            checks.append(check("components complete with equal sides", g.complete_components()))
        return results, checks, None
    if args.action == "verify":
        if not args.paths:
            raise UsageError("verify needs --paths")
        data = json.loads(Path(args.paths).read_text())
        body = data.get("results", {}).get("paths", data) if isinstance(data, dict) else data
        paths = butterfly.PathSet.from_json(pair.d, body)
        A = _labels(args.A) or None
        B = _labels(args.B) or None
        verdict = butterfly.verify_node_disjoint(paths, pair, A, B)
        results["violations"] = verdict.violations
        checks.append(check("paths node-disjoint and valid", verdict.ok))
        return results, checks, None
    if args.mapping:
        mapping = {}
        for item in args.mapping.split(","):
            a, b = item.split(":")
            mapping[_labels(a)[0]] = _labels(b)[0]
        paths = butterfly.route_permutation_small(pair, mapping)
        A, B = list(mapping), list(mapping.values())
    else:
        A, B = _labels(args.A), _labels(args.B)
        n = len(A)
        if n and not n & (n - 1) and not pair.layer_permuted:
            paths = butterfly.route_power_of_two(pair, A, B)
        else:
            paths = butterfly.route_subset(pair, A, B)
    verdict = butterfly.verify_node_disjoint(paths, pair, A, B,
                                             mapping if args.mapping else None)
    results["paths"] = paths.to_json(pair)
    checks.append(check("paths node-disjoint and valid", verdict.ok, violations=verdict.violations))
    if args.complement:
        comp = butterfly.complement_paths(pair, paths)
        everyone = set(range(pair.size))
        cv = butterfly.verify_node_disjoint(comp, pair, everyone - set(A), everyone - set(B))
        results["complement"] = comp.to_json(pair)
        checks.append(check("complement paths node-disjoint and valid", cv.ok))
    if args.paths_out:
        Path(args.paths_out).write_text(json.dumps(results["paths"], indent=1) + "\n")
    return results, checks, None


def _l2_rows(args) -> list[dict]:
    rows = []
    p = float(args.p)
    spec = RingSpec.nonstandard(args.N, 2, p)
    thin = args.thin
    st = simulate(spec, args.steps, args.reps, args.seed, burn_in=args.steps // 100, thin=thin)
    closed = float(formulas.l2_moments(p).expected_queue)
    tol = 3 * st.mean_queue_se
    rows.append({"quantity": f"mean queue per node (N={args.N}, p={p})", "closed_form": closed,
                 "observed": st.mean_queue, "tolerance": tol,
                 "passed": abs(st.mean_queue - closed) <= tol})
    obs = np.array(st.thinned_histogram, float)
    exp_p = np.array([formulas.l2_marginal(p, n) for n in range(len(obs))])
    exp_p[-1] = max(0.0, 1 - exp_p[:-1].sum())
    pval = chi_square_pvalue(obs, exp_p)
    rows.append({"quantity": "occupancy histogram chi-square p-value", "closed_form": "",
                 "observed": pval, "tolerance": 0.01, "passed": pval > 0.01})
    return rows


def chi_square_pvalue(observed, probs, min_expected: float = 5.0) -> float:
    """Goodness-of-fit p-value with sparse tail cells pooled."""
    observed = np.asarray(observed, float)
    probs = np.asarray(probs, float)
    n = observed.sum()
    expected = probs * n
    cells_o, cells_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if cells_o:
            cells_o[-1] += acc_o
            cells_e[-1] += acc_e
        else:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
    if len(cells_o) < 2:
        return 1.0
    cells_e = np.array(cells_e) * (sum(cells_o) / sum(cells_e))
    return float(stats.chisquare(cells_o, cells_e).pvalue)


def _taylor_rows(args) -> list[dict]:
    rows = []
    N = args.N
    spec = RingSpec.standard(N)
    dist = taylor.stationary_series(spec, args.k, compressed=True)
    node = taylor.per_node(taylor.expected_queue_series(dist), N)
    if N == 3:
        # p = 2s: p^2/(2 - 3p) = 4 s^2 / (2 - 6 s)
        closed = IntSeries.from_rational([0, 0, 2], [1, -3], args.k)
        rows.append({"quantity": "N=3 expected queue series", "closed_form": list(closed),
                     "observed": list(node), "tolerance": 0, "passed": closed == node})
    lead = analysis.light_traffic_leading(node, N)
    rows.append({"quantity": "s^2 coefficient", "closed_form": lead.predicted,
                 "observed": lead.actual, "tolerance": 0, "passed": lead.ok})
    return rows


def cmd_compare(args):
    rows = []
    if args.l2:
        rows += _l2_rows(args)
    if args.taylor:
        rows += _taylor_rows(args)
    if args.pk:
        for L in (2, 3, 5, 8, 13):
            for r in (0.3, 0.7):
                val = formulas.pk_one_node_ring(L, r)
                closed = formulas.one_node_ring_closed(L, r)
                rows.append({"quantity": f"one-node P-K (L={L}, r={r})", "closed_form": closed,
                             "observed": val, "tolerance": 1e-12,
                             "passed": abs(val - closed) <= 1e-12})
    if not rows:
        raise UsageError("compare needs at least one of --l2, --taylor, --pk")
    checks = [check(row["quantity"], row["passed"]) for row in rows]
    return {"verdicts": rows}, checks, rows


COMMANDS = {"simulate": cmd_simulate, "taylor": cmd_taylor, "formulas": cmd_formulas,
            "series": cmd_series, "drift": cmd_drift, "butterfly": cmd_butterfly,
            "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults; flags win")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", help="write here instead of stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    ring = argparse.ArgumentParser(add_help=False)
    ring.add_argument("--N", type=int, default=5)
    ring.add_argument("--L", type=int)
    ring.add_argument("--p", type=number, default=0.2)
    ring.add_argument("--protocol", choices=[p.value for p in Protocol], default="GHP")
    ring.add_argument("--lam", type=float)
    ring.add_argument("--mu", type=float)

    parser = argparse.ArgumentParser(prog="ringroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, ring], help="Monte Carlo ring statistics")
    s.add_argument("--steps", type=count, default=100_000)
    s.add_argument("--reps", type=int, default=4)
    s.add_argument("--burn-in", type=count, default=0)
    s.add_argument("--thin", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("taylor", parents=[common], help="exact light-traffic series")
    s.add_argument("--N", type=int)
    s.add_argument("--L", type=int)
    s.add_argument("--k", type=int, default=6)
    s.add_argument("--compressed", action="store_true")
    s.add_argument("--steps", type=int, help="propagate exactly this many steps")
    s.add_argument("--window", type=int)
    s.add_argument("--state-cap", type=int, default=taylor.DEFAULT_STATE_CAP)
    s.add_argument("--dump", help="save the state distribution as JSON")

    s = sub.add_parser("formulas", parents=[common], help="closed-form evaluators")
    s.add_argument("kind", choices=("l2", "birth-death", "pk", "chernoff", "empty-slot",
                                    "traffic", "balance"))
    s.add_argument("--p", type=number, default=Fraction(3, 10))
    s.add_argument("--N", type=number, default=3)
    s.add_argument("--L", type=int)
    s.add_argument("--n-max", type=int, default=10)
    s.add_argument("--a-hat", type=number)
    s.add_argument("--d-hat", type=number)
    s.add_argument("--measure", choices=("after-arrivals", "after-departures"),
                   default="after-arrivals")
    s.add_argument("--r", type=number, default=0.5)
    s.add_argument("--lam", type=number)
    s.add_argument("--ez", type=number)
    s.add_argument("--ez2", type=number)
    s.add_argument("--beta", type=number)
    s.add_argument("--P", type=number)
    s.add_argument("--side", choices=("upper", "lower"), default="upper")
    for name in "ABCD":
        s.add_argument(f"--{name}", type=number)
    s.add_argument("--delta", type=number, default=0.0)
    s.add_argument("--cap", type=int, default=8)

    s = sub.add_parser("series", parents=[common], help="rationality and monotonicity diagnostics")
    s.add_argument("--coeffs", help="comma-separated integer coefficients from degree 0")
    s.add_argument("--input", help="taylor command output to read coefficients from")
    s.add_argument("--rationality", type=int, nargs=2, metavar=("NUM_DEG", "DEN_DEG"))
    s.add_argument("--scan", type=int, metavar="TOTAL")
    s.add_argument("--recover", type=int, nargs=2, metavar=("NUM_DEG", "DEN_DEG"))
    s.add_argument("--mono", action="store_true")
    s.add_argument("--leading", type=int, metavar="N")

    s = sub.add_parser("drift", parents=[common], help="potential-function drift probe")
    s.add_argument("--N", type=int, default=50)
    s.add_argument("--r", type=float)
    s.add_argument("--p", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--phi", type=float, default=5.0, help="start at potential phi*N")
    s.add_argument("--T", type=int, default=200)
    s.add_argument("--reps", type=int, default=400)
    s.add_argument("--node", type=int)
    s.add_argument("--uniform", action="store_true", help="spread the start load evenly")
    s.add_argument("--trick", type=int, default=0, metavar="STATES")
    s.add_argument("--expect-negative", action="store_true")

    s = sub.add_parser("butterfly", parents=[common], help="node-disjoint butterfly routing")
    s.add_argument("action", choices=("route", "verify", "graph"))
    s.add_argument("--d", type=int)
    s.add_argument("--left-order")
    s.add_argument("--right-order")
    s.add_argument("--pair", help="JSON pair file {d, left_order, right_order, middle}")
    s.add_argument("--A")
    s.add_argument("--B")
    s.add_argument("--mapping", help="a:b pairs, comma-separated")
    s.add_argument("--q", type=int, default=0)
    s.add_argument("--paths", help="path file to verify")
    s.add_argument("--paths-out")
    s.add_argument("--complement", action="store_true")

    s = sub.add_parser("compare", parents=[common], help="closed form against simulation or series")
    s.add_argument("--l2", action="store_true")
    s.add_argument("--taylor", action="store_true")
    s.add_argument("--pk", action="store_true")
    s.add_argument("--N", type=int, default=5)
    s.add_argument("--p", type=number, default=0.4)
    s.add_argument("--steps", type=count, default=1_000_000)
    s.add_argument("--reps", type=int, default=4)
    s.add_argument("--thin", type=int, default=25)
    s.add_argument("--k", type=int, default=8)
    return parser


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # "formulas eval <kind>" is accepted as a spelling of "formulas <kind>"
    if "formulas" in argv:
        at = argv.index("formulas") + 1
        if argv[at:at + 1] == ["eval"]:
            del argv[at]
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(overrides) - known
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    return args


def envelope(args, results, checks) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("output", "verbose", "format")}
    return _jsonable({"config": config, "seed": args.seed, "results": results, "checks": checks})


def render(args, results, checks, table) -> str:
    if args.format == "csv":
        if not table:
            raise UsageError(f"{args.command} has no tabular output; use --format json")
        buf = io.StringIO()
        rows = _jsonable(table)
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    return json.dumps(envelope(args, results, checks), indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    args = _parse(argv)
    try:
        results, checks, table = COMMANDS[args.command](args)
        text = render(args, results, checks, table)
    except (UsageError, ValueError) as exc:
        print(f"ringroute {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (taylor.StateCapExceeded, taylor.ConvergenceError, butterfly.RoutingError) as exc:
        print(f"ringroute {args.command}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    failed = [c["name"] for c in checks if not c["passed"]]
    if failed:
        print(f"failed checks: {'; '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    if args.verbose:
        print(f"{len(checks)} checks passed", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
