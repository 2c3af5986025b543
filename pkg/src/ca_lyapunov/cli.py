"""Command-line entry point.

Every subcommand builds a report (a JSON-able dict, plus optional CSV rows)
and hands it to :func:`emit_report`.  Exit codes: 0 success / holds / pass,
1 violated or failed acceptance, 2 usage, configuration or budget errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .ca_core import (Config, MeasureSpec, RuleError, WindowError, Word, builtin_rule, default_measure,
                      diagram_to_text, evolve, rule_from_json, sample_config)
from .propagation import BudgetExceeded
from .set_dynamics import SubsetBudgetExceeded

COMMANDS = ("simulate", "exponent", "avg-exponent", "lambda-mu", "entropy", "patterns", "blocking",
            "surjective", "check", "properties", "reproduce")
EXPONENT_COLUMNS = ["rule_id", "side", "n", "method", "lower", "exact", "upper", "value", "stderr",
                    "samples", "seed"]
ENTROPY_COLUMNS = ["rule_id", "kind", "p", "n", "block_len", "samples", "seed", "value", "pattern_count",
                   "warnings"]
INEQUALITY_COLUMNS = ["inequality_id", "lhs", "rhs", "margin", "verdict", "tolerance", "params", "provenance"]
PROPERTY_COLUMNS = ["property_id", "trials", "skipped", "status", "failures", "params"]

# config keys map one-to-one onto long flags (underscores for dashes)
CONFIG_KEYS = {"command", "target", "rule", "measure", "x", "n", "n_list", "p", "samples", "seed", "side",
               "kind", "method", "search", "estimator", "block_len", "word", "anchor", "center_width",
               "max_word_len", "max_steps", "trials", "tolerance", "lambda_n", "entropy_samples",
               "exponent_samples", "width", "budget", "workers", "out", "format"}


class UsageError(Exception):
    pass


# -- serialization ---------------------------------------------------------------------

def _canon(obj):
    """JSON-ready copy with floats at 12 significant digits; NaN and infinities rejected."""
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        v = float(obj)
        if not math.isfinite(v):
            raise ValueError("NaN or infinite value in report")
        return float(format(v, ".12g"))
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_json"):
        return _canon(obj.to_json())
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json_text(report: dict) -> str:
    return json.dumps(_canon(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(v):
    v = _canon(v)
    if v is None:
        return ""
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def to_csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def emit_report(report: dict, fmt: str, path: str | None, rows=None, columns=None) -> None:
    """Write the report byte-stably to ``path`` (or stdout)."""
    if fmt == "csv":
        if rows is None:
            rows, columns = [report], sorted(report)
        text = to_csv_text(rows, columns)
    else:
        text = to_json_text(report)
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# -- argument handling ---------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ca-lyapunov", description="Lyapunov exponents and entropy of 1-d CA.")
    ap.add_argument("command", nargs="?", choices=COMMANDS)
    ap.add_argument("target", nargs="?", help="inequality id for check, example id for reproduce")
    ap.add_argument("--config", help="JSON run configuration; flags override it")
    ap.add_argument("--rule", help="builtin:<name> (shift, identity, coven:<B>, f2:<r>, product:<a>,<b>) or rule file")
    ap.add_argument("--measure", help="'uniform' or per-track weights, e.g. '0.5,0.5;0.2,0.3,0.5'")
    ap.add_argument("--x", help="configuration file (header 'origin=<i> valid=[lo,hi]')")
    ap.add_argument("--n", type=int)
    ap.add_argument("--n-list", help="comma-separated horizons")
    ap.add_argument("--p", type=int)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--side", choices=("plus", "minus", "both"))
    ap.add_argument("--kind")
    ap.add_argument("--method", choices=("auto", "enumerate", "symbolic"))
    ap.add_argument("--search", choices=("auto", "binary", "linear"))
    ap.add_argument("--estimator", choices=("I", "lambda_sampled", "lambda_exact"))
    ap.add_argument("--block-len", type=int)
    ap.add_argument("--word")
    ap.add_argument("--anchor", type=int)
    ap.add_argument("--center-width", type=int)
    ap.add_argument("--max-word-len", type=int)
    ap.add_argument("--max-steps", type=int)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--tolerance", type=float)
    ap.add_argument("--lambda-n", type=int)
    ap.add_argument("--entropy-samples", type=int)
    ap.add_argument("--exponent-samples", type=int)
    ap.add_argument("--width", type=int, help="random window half-width for simulate")
    ap.add_argument("--budget", type=int, help="enumeration budget (same as CA_LYAPUNOV_BUDGET)")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out")
    ap.add_argument("--format", choices=("text", "json", "csv"))
    return ap


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path}: top level must be an object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"config {path}: unknown field(s) {', '.join(unknown)}")
    return cfg


def _merge(args: argparse.Namespace) -> dict:
    opts = {k: v for k, v in vars(args).items() if k != "config"}
    if args.config:
        for key, val in _load_config(args.config).items():
            if opts.get(key) is None:
                opts[key] = val
    if isinstance(opts.get("n_list"), str):
        try:
            opts["n_list"] = [int(t) for t in opts["n_list"].split(",") if t.strip()]
        except ValueError:
            raise UsageError("n_list must be comma-separated integers") from None
    if opts.get("command") is None:
        raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
    if opts["command"] not in COMMANDS:
        raise UsageError(f"config field command: unknown command {opts['command']!r}")
    if opts.get("x") is not None and not Path(opts["x"]).is_file():
        raise UsageError(f"configuration file {opts['x']} does not exist")
    return opts


def _rule(opts, required=True):
    spec = opts.get("rule")
    if spec is None:
        if required:
            raise UsageError("--rule is required")
        return None
    if spec.startswith("builtin:"):
        return builtin_rule(spec)
    path = Path(spec)
    if path.is_file():
        try:
            return rule_from_json(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise UsageError(f"rule file {spec}: line {e.lineno} column {e.colno}: {e.msg}") from None
    try:
        return builtin_rule(spec)
    except RuleError:
        raise UsageError(f"rule {spec!r} is neither a builtin nor an existing file") from None


def _measure(opts, rule) -> MeasureSpec:
    m = opts.get("measure")
    if m is None or m == "uniform":
        return default_measure(rule)
    if isinstance(m, str):
        tracks = [[float(w) for w in t.split(",")] for t in m.split(";")]
    elif isinstance(m, list):
        tracks = m
    else:
        raise UsageError("measure must be 'uniform', a weight string or a list of weight lists")
    mu = MeasureSpec(tuple(tuple(t) for t in tracks))
    if mu.alphabet_size != rule.k:
        raise UsageError(f"measure alphabet {mu.alphabet_size} does not match rule alphabet {rule.k}")
    return mu


def _need(opts, key, flag=None):
    if opts.get(key) is None:
        raise UsageError(f"--{flag or key.replace('_', '-')} is required for {opts['command']}")
    return opts[key]


def _config_x(opts, rule, n):
    if opts.get("x"):
        return Config.from_text(Path(opts["x"]).read_text(encoding="utf-8"))
    seed = _need(opts, "seed")
    half = opts.get("width") or 2 * rule.radius * n + rule.radius * n
    return sample_config(_measure(opts, rule), -half, half, seed)


def _sides(opts):
    side = opts.get("side") or "minus"
    return ("plus", "minus") if side == "both" else (side,)


# -- commands --------------------------------------------------------------------------------

def cmd_simulate(opts):
    rule = _rule(opts)
    n = opts.get("n") or 1
    x = _config_x(opts, rule, n)
    rows = evolve(rule, x, n)
    report = dict(command="simulate", rule=rule.name, n=n,
                  rows=[dict(origin=c.origin, valid=[c.valid_lo, c.valid_hi], cells=c.cells.tolist())
                        for c in rows])
    return report, None, None, 0, diagram_to_text(rows, rule.alphabet)


def cmd_exponent(opts):
    from . import exponents as ex
    rule = _rule(opts)
    n = _need(opts, "n")
    kind = opts.get("kind") or "lambda_tilde"
    method = opts.get("method") or "auto"
    x = _config_x(opts, rule, n)
    out = []
    for side in _sides(opts):
        row = dict(rule_id=rule.name, side=side, n=n, method=method, kind=kind, lower=None, exact=None,
                   upper=None, value=None, stderr=None, samples=None, seed=opts.get("seed"))
        if kind == "lambda_tilde":
            row["value"] = row["exact"] = ex.lambda_tilde_exact(rule, x, n, side, method)
        elif kind == "I":
            row["value"] = row["exact"] = ex.I_exact(rule, x, n, side, method, opts.get("search") or "auto")
        elif kind == "bounds":
            b = ex.lambda_tilde_bounds(rule, x, n, side, seed=opts.get("seed") or 0)
            row.update(lower=b.lower, exact=b.exact, upper=b.upper, value=b.exact, method=json.dumps(b.methods, sort_keys=True))
        elif kind == "capital_lambda":
            v, shifts = ex.capital_lambda(rule, x, n, side, method)
            row.update(value=v, lower=v, method=f"max over {shifts} shifts (lower bound)")
        else:
            raise UsageError(f"unknown exponent kind {kind!r} (lambda_tilde, I, bounds, capital_lambda)")
        out.append(row)
    report = dict(command="exponent", rows=out)
    text = "\n".join("null" if r["value"] is None else str(r["value"]) for r in out) + "\n"
    return report, out, EXPONENT_COLUMNS, 0, text


def cmd_avg_exponent(opts):
    from .exponents import exponent_sequence
    rule = _rule(opts)
    seed = _need(opts, "seed")
    n_list = opts.get("n_list") or [_need(opts, "n")]
    samples = opts.get("samples") or 1000
    estimator = opts.get("estimator") or "I"
    mu = _measure(opts, rule)
    out = []
    for side in _sides(opts):
        for row in exponent_sequence(rule, mu, n_list, estimator, side, samples, seed, opts.get("workers") or 1):
            out.append(dict(row, rule_id=rule.name, side=side))
    report = dict(command="avg-exponent", rule=rule.name, estimator=estimator, rows=out)
    text = "".join(f"{r['side']} n={r['n']} value={_cell(r['value'])} stderr={_cell(r['stderr'])}\n" for r in out)
    return report, out, EXPONENT_COLUMNS + ["non_monotone"], 0, text


def cmd_lambda_mu(opts):
    from .exponents import lambda_mu_exact
    rule = _rule(opts)
    n_list = opts.get("n_list") or [_need(opts, "n")]
    mu = _measure(opts, rule)
    out = []
    for side in _sides(opts):
        for n in n_list:
            v = lambda_mu_exact(rule, mu, n, side)
            out.append(dict(rule_id=rule.name, side=side, n=n, method="enumeration", lower=None,
                            exact=f"{v.numerator}/{v.denominator}", upper=None, value=float(v), stderr=0.0,
                            samples=None, seed=None))
    report = dict(command="lambda-mu", rule=rule.name, rows=out)
    text = "".join(f"{float(r['value'])!r}\n" for r in out)
    return report, out, EXPONENT_COLUMNS, 0, text


def cmd_entropy(opts):
    from . import entropy as en
    rule = _rule(opts, required=False)
    kind = opts.get("kind") or "automaton"
    mu = _measure(opts, rule) if rule is not None else None
    if mu is None:
        if opts.get("measure") in (None, "uniform"):
            raise UsageError("entropy needs --rule or an explicit --measure")
        tracks = [[float(w) for w in t.split(",")] for t in opts["measure"].split(";")] \
            if isinstance(opts["measure"], str) else opts["measure"]
        mu = MeasureSpec(tuple(tuple(t) for t in tracks))
    row = dict(rule_id=rule.name if rule else None, kind=kind, p=None, n=None, block_len=None, samples=None,
               seed=None, value=None, pattern_count=None, warnings="")
    if kind in ("analytic", "shift_analytic"):
        row.update(kind="shift_analytic", value=en.analytic_shift_entropy(mu))
    elif kind in ("shift", "shift_empirical"):
        seed = _need(opts, "seed")
        e = en.empirical_shift_entropy(mu, opts.get("block_len") or 8, opts.get("samples") or 100_000, seed)
        row.update(kind=e.kind, block_len=e.params["block_len"], samples=e.params["samples"], seed=seed,
                   value=e.value, pattern_count=e.pattern_count, warnings="; ".join(e.warnings))
    elif kind in ("automaton", "automaton_empirical"):
        if rule is None:
            raise UsageError("--rule is required for automaton entropy")
        seed = _need(opts, "seed")
        p, n = opts.get("p") or max(rule.radius, 1), opts.get("n") or 10
        samples = opts.get("samples") or 100_000
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            e = en.empirical_automaton_entropy(rule, mu, p, n, samples, seed)
        row.update(kind=e.kind, p=p, n=n, samples=samples, seed=seed, value=e.value, pattern_count=e.pattern_count,
                   warnings="; ".join(e.warnings), ratio=e.ratio, increments=e.increments,
                   horizon=e.params["horizon"])
    else:
        raise UsageError(f"unknown entropy kind {kind!r} (analytic, shift, automaton)")
    report = dict(command="entropy", **row)
    return report, [row], ENTROPY_COLUMNS, 0, f"{_cell(row['value'])}\n"


def cmd_patterns(opts):
    from .entropy import count_spacetime_patterns
    from .inequality_lab import max_pattern_horizon
    rule = _rule(opts)
    p = opts.get("p") or max(rule.radius, 1)
    n = opts.get("n") or max_pattern_horizon(rule, p)
    e = count_spacetime_patterns(rule, p, n, seed=opts.get("seed") or 0)
    row = dict(rule_id=rule.name, kind=e.kind, p=p, n=n, block_len=None, samples=None, seed=None,
               value=e.value, pattern_count=e.pattern_count, warnings="; ".join(e.warnings),
               ratio=e.ratio, increments=e.increments, exact=e.params["exact"])
    report = dict(command="patterns", **row)
    return report, [row], ENTROPY_COLUMNS, 0, f"{e.pattern_count} {_cell(e.value)}\n"


def cmd_blocking(opts):
    from .set_dynamics import certify_blocking, search_blocking_words
    rule = _rule(opts)
    kwargs = dict(max_steps=opts.get("max_steps") or 200)
    if opts.get("word"):
        word = Word.parse(str(opts["word"]), opts.get("anchor") or 0)
        cert = certify_blocking(rule, word, center_width=opts.get("center_width"), **kwargs)
        report = dict(command="blocking", rule=rule.name, certificate=cert.to_json())
        return report, [cert.to_json()], None, 0, f"{cert.status}\n"
    found, complete = search_blocking_words(rule, opts.get("max_word_len") or max(rule.radius, 1) + 1, **kwargs)
    report = dict(command="blocking", rule=rule.name, complete=complete,
                  certificates=[c.to_json() for c in found])
    text = "".join(f"{c.word} certified\n" for c in found) or "none\n"
    return report, [c.to_json() for c in found], None, 0, text


def cmd_surjective(opts):
    from .set_dynamics import decide_surjective
    rule = _rule(opts)
    v = decide_surjective(rule)
    report = dict(command="surjective", rule=rule.name, value=v)
    return report, None, None, 0, ("true" if v else "false") + "\n"


def cmd_check(opts):
    from . import inequality_lab as lab
    iid = opts.get("target") or _need(opts, "kind", "target")
    if iid not in lab.INEQUALITIES:
        raise UsageError(f"unknown inequality {iid!r}; choose from {', '.join(lab.INEQUALITIES)}")
    rule = _rule(opts)
    mu = _measure(opts, rule)
    p = opts.get("p") or max(rule.radius, 1)
    tol = opts.get("tolerance")
    extra = {} if tol is None else dict(tolerance=tol)
    if opts.get("lambda_n"):
        extra["lambda_n"] = opts["lambda_n"]
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if iid == "prop_5_7":
            rep = lab.check_topological_inequality(rule, opts.get("n"), p, **extra)
        else:
            seed = _need(opts, "seed")
            n = opts.get("n") or 10
            samples = opts.get("samples") or 100_000
            if iid == "thm_5_5":
                rep = lab.check_average_inequality(rule, mu, n, p, samples, seed, opts.get("exponent_samples"),
                                                   workers=opts.get("workers") or 1, **extra)
            elif iid == "cor_5_6":
                rep = lab.check_max_inequality(rule, mu, n, p, samples, seed, **extra)
            else:
                rep = lab.check_exponent_inequality(rule, mu, n, opts.get("exponent_samples") or 2000, seed,
                                                    workers=opts.get("workers") or 1, **extra)
    report = dict(rep.to_json(), command="check", rule=rule.name)
    code = 1 if rep.verdict == "violated" else 0
    text = f"{rep.verdict} lhs={_cell(rep.lhs)} rhs={_cell(rep.rhs)} margin={_cell(rep.margin)}\n"
    return report, [report], INEQUALITY_COLUMNS, code, text


def cmd_properties(opts):
    from .inequality_lab import run_property_suite
    rule = _rule(opts)
    seed = _need(opts, "seed")
    reps = run_property_suite(rule, _measure(opts, rule), opts.get("trials") or 1000, seed, opts.get("n"))
    rows = [r.to_json() for r in reps]
    report = dict(command="properties", rule=rule.name, reports=rows)
    code = 0 if all(r.status == "pass" for r in reps) else 1
    text = "".join(f"{r.property_id}: {r.status} ({r.trials} trials, {len(r.failures)} failures)\n" for r in reps)
    return report, rows, PROPERTY_COLUMNS, code, text


def cmd_reproduce(opts):
    from .inequality_lab import reproduce_example
    ex = opts.get("target") or _need(opts, "kind", "target")
    kwargs = {}
    for key in ("seed", "samples", "entropy_samples"):
        if opts.get(key) is not None:
            kwargs[key] = opts[key]
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            bundle = reproduce_example(ex, workers=opts.get("workers") or 1, **kwargs)
        except ValueError as e:
            if "unknown example" in str(e):
                raise UsageError(str(e)) from None
            raise
    report = dict(bundle, command="reproduce")
    code = 0 if bundle["passed"] else 1
    text = "".join(f"{'PASS' if r['passed'] else 'FAIL'} {r['quantity']}: {_cell(r['computed'])} "
                   f"(expected {_cell(r['expected'])})\n" for r in bundle["rows"])
    return report, bundle["rows"], ["quantity", "computed", "expected", "passed", "note"], code, text


HANDLERS = {"simulate": cmd_simulate, "exponent": cmd_exponent, "avg-exponent": cmd_avg_exponent,
            "lambda-mu": cmd_lambda_mu, "entropy": cmd_entropy, "patterns": cmd_patterns,
            "blocking": cmd_blocking, "surjective": cmd_surjective, "check": cmd_check,
            "properties": cmd_properties, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    from .exponents import ExponentBudgetError
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    saved = os.environ.get("CA_LYAPUNOV_BUDGET")
    try:
        opts = _merge(args)
        if opts.get("budget") is not None:
            # via the environment so that worker processes inherit it
            os.environ["CA_LYAPUNOV_BUDGET"] = str(opts["budget"])
        report, rows, columns, code, text = HANDLERS[opts["command"]](opts)
        fmt = opts.get("format") or ("json" if opts.get("out") else "text")
        if fmt == "text" and opts.get("out") is None:
            sys.stdout.write(text)
        else:
            emit_report(report, "csv" if fmt == "csv" else "json", opts.get("out"), rows, columns)
        return code
    except (UsageError, RuleError, WindowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ExponentBudgetError, BudgetExceeded, SubsetBudgetExceeded) as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    finally:
        if saved is None:
            os.environ.pop("CA_LYAPUNOV_BUDGET", None)
        else:
            os.environ["CA_LYAPUNOV_BUDGET"] = saved


if __name__ == "__main__":
    sys.exit(main())
