"""Command-line entry point: ``welfareid <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (flat ``key = value`` lines whose
keys are the long option names); explicit flags override the file.  Outputs
carry the SHA-256 of the effective configuration.

Exit codes: 0 success, 2 usage or configuration error, 3 data or model error,
4 numerical failure.
"""
import argparse
import json
import logging
import sys

import numpy as np

from . import binary_welfare as bw
from . import bounds as bd
from . import estimation as est
from . import targeting as tg
from .choice_model import BudgetPoint, ModelError, model_from_json
from .fixtures import FIXTURES, get_fixture
from .io import ConfigError, config_hash, read_config, write_csv, write_json
from .oracle import simulate_welfare
from .welfare_distribution import asw, welfare_cdf, welfare_inequality_index

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
log = logging.getLogger("welfareid")


class UsageError(Exception):
    pass


def floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    parts = [p for p in str(text).replace(",", " ").split() if p]
    if not parts:
        raise argparse.ArgumentTypeError("expected at least one number")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def grid(text):
    """``start:stop:count`` or a number list."""
    if isinstance(text, str) and text.count(":") == 2:
        a, b, n = text.split(":")
        try:
            return list(np.linspace(float(a), float(b), int(n)))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return floats(text)


def positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def flag(text):
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _model_opts(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--model", help="model JSON file")
    g.add_argument("--fixture", choices=sorted(FIXTURES), help="bundled synthetic model")


def build_parser():
    parser = argparse.ArgumentParser(prog="welfareid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate agents or an estimation dataset")
    p.add_argument("--config")
    p.add_argument("--kind", choices=["population", "dataset"], default="population")
    _model_opts(p)
    p.add_argument("--prices", type=floats, default=[1.0])
    p.add_argument("--income", type=positive(float), default=10.0)
    p.add_argument("--n", type=positive(int), default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta-p", type=float, default=-0.5)
    p.add_argument("--endogeneity", type=float, default=1.2)
    p.add_argument("--hide-nonbuyer-prices", type=flag, default=False)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="fit the constrained spline probit")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--y-min", type=float)
    p.add_argument("--y-max", type=float)
    p.add_argument("--grid-size", type=positive(int), default=50)
    p.add_argument("--control-function", type=flag, default=True)
    p.add_argument("--B", type=int, default=0, help="bootstrap draws (0 skips)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="fit JSON")
    p.add_argument("--model-out", help="model JSON at the mean covariate profile")
    p.add_argument("--draws-out", help="bootstrap draws CSV")

    p = sub.add_parser("welfare", help="welfare CDF, ASW and inequality, or binary subsidy effects")
    p.add_argument("--config")
    _model_opts(p)
    p.add_argument("--prices", type=floats, default=[1.0])
    p.add_argument("--income", type=positive(float), default=10.0)
    p.add_argument("--eps", type=floats, default=[0.0])
    p.add_argument("--c-grid", type=grid)
    p.add_argument("--truncation", default="auto")
    p.add_argument("--binary", action="store_true", help="subsidy effects at --pbar/--sigma")
    p.add_argument("--pbar", type=positive(float))
    p.add_argument("--sigma", type=grid)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bounds", help="bounds on the welfare CDF from observed demand")
    p.add_argument("--config")
    p.add_argument("--demand", required=True, help="CSV with r_1..r_J, z, q0")
    p.add_argument("--ordered", action="store_true")
    p.add_argument("--prices", type=floats, help="target prices (multinomial)")
    p.add_argument("--price", type=positive(float), help="unit price (ordered)")
    p.add_argument("--income", type=positive(float), required=True)
    p.add_argument("--c-grid", type=grid, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("target", help="optimal income-targeted subsidy schedule")
    p.add_argument("--config")
    _model_opts(p)
    p.add_argument("--incomes", help="income CSV (y[, weight])")
    p.add_argument("--income-grid", type=grid, help="equally weighted incomes instead of a CSV")
    p.add_argument("--pbar", type=positive(float), required=True)
    p.add_argument("--criterion", default="ate")
    p.add_argument("--budget", type=float, default=0.0)
    p.add_argument("--inequality-budget", action="store_true", help="cost <= budget")
    p.add_argument("--schedule", choices=["spline", "pointwise"], default="spline")
    p.add_argument("--basis-size", type=positive(int), default=6)
    p.add_argument("--sigma-min", type=float)
    p.add_argument("--sigma-max", type=float)
    p.add_argument("--starts", type=positive(int), default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="schedule CSV")
    p.add_argument("--report-out", help="JSON report")

    p = sub.add_parser("report", help="subsidy-grid table of welfare, CV, take-up and cost")
    p.add_argument("--config")
    _model_opts(p)
    p.add_argument("--pbar", type=positive(float), required=True)
    p.add_argument("--income", type=positive(float), help="single income")
    p.add_argument("--incomes", help="income CSV (y[, weight]); adds an empirical-weight average")
    p.add_argument("--income-grid", type=grid, help="income grid; adds an unweighted average")
    p.add_argument("--sigma", type=grid, required=True)
    p.add_argument("--truncation", default="auto")
    p.add_argument("--out", required=True)
    return parser


def _prescan(argv):
    """Subcommand and ``--config`` path, found before full parsing."""
    command = next((a for a in argv if a in COMMANDS), None)
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    return command, path


def _config_defaults(sub, path):
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, text in read_config(path).items():
        if key not in actions or key in ("config", "help"):
            raise ConfigError(f"unknown config key {key!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = flag(text)
            continue
        try:
            val = (act.type or str)(text)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
        if act.choices is not None and val not in act.choices:
            raise ConfigError(f"config key {key!r}: {val!r} not in {list(act.choices)}")
        defaults[key] = val
    return defaults


def parse(argv):
    """Parse ``argv`` with config-file defaults; returns ``(args, effective_config)``.

    The effective configuration excludes output paths and verbosity, so it
    hashes identically wherever results are written.
    """
    parser = build_parser()
    command, path = _prescan(argv)
    if command is not None and path is not None:
        sub = parser._subparsers._group_actions[0].choices[command]
        defaults = _config_defaults(sub, path)
        sub.set_defaults(**defaults)
        for a in sub._actions:
            if a.dest in defaults:
                a.required = False
    args = parser.parse_args(argv)
    effective = {k: v for k, v in vars(args).items()
                 if k not in ("config", "verbose") and not k.endswith("out")}
    return args, effective


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load_model(args):
    if args.fixture:
        return get_fixture(args.fixture)
    if args.model:
        try:
            with open(args.model, encoding="utf-8") as fh:
                return model_from_json(fh.read())
        except OSError as exc:
            raise ModelError(f"cannot read model {args.model}: {exc}") from exc
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ModelError(f"{args.model}: malformed model JSON ({exc})") from exc
    raise UsageError("one of --model or --fixture is required")


def _truncation(text):
    if text in (None, "auto", "support"):
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"truncation must be auto, support or a number, got {text!r}") from None


def cmd_simulate(args, digest):
    if args.kind == "dataset":
        data, truth = est.simulate_dataset(args.n, args.seed, beta_p=args.beta_p,
                                           endogeneity=args.endogeneity,
                                           hide_nonbuyer_prices=args.hide_nonbuyer_prices)
        header = ["choice", "price", "income", "instrument", "cluster", "stratum",
                  *data.covariate_names]
        rows = ([int(data.choice[i]), "" if np.isnan(data.price[i]) else data.price[i],
                 data.income[i], data.instrument[i], data.cluster[i], data.stratum[i],
                 *data.covariates[i]] for i in range(data.n))
        write_csv(args.out, header, rows, digest)
        return
    model = _load_model(args)
    point = BudgetPoint(args.prices, args.income)
    pop = simulate_welfare(model, point, args.n, args.seed)
    write_csv(args.out, ["agent", "welfare", "choice"],
              ((i, pop.welfare[i], int(pop.choice[i])) for i in range(pop.n)), digest)


def cmd_estimate(args, digest):
    data = est.load_dataset_csv(args.data)
    data, report = est.impute_prices(data)
    y_min = args.y_min if args.y_min is not None else float(data.income.min())
    y_max = args.y_max if args.y_max is not None else float(data.income.max())
    try:
        basis = est.build_spline_basis(y_min, y_max, args.M, args.q)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    g = est.default_grid(data.income, args.grid_size)
    fit = est.fit_constrained_probit(data, basis, g, control_function=args.control_function)
    payload = {"fit": fit.to_dict(), "imputed_rows": report.imputed_rows,
               "fallback_clusters": list(report.fallback_clusters)}
    draws = None
    if args.B:
        draws = est.bootstrap_fit(data, basis, g, args.B, args.seed, args.control_function,
                                  n_jobs=args.jobs)
        payload["bootstrap"] = {"B": int(args.B), "failed": draws.n_failed,
                                "beta_p_se": float(np.std(draws.beta_p, ddof=1))}
    write_json(args.out, payload, digest)
    if args.model_out:
        model = est.fit_to_model(fit)
        write_json(args.model_out, model.to_dict(), digest)
    if args.draws_out and draws is not None:
        k = basis.size
        header = ["draw", "beta_p", *(f"beta_y{m + 1}" for m in range(k)),
                  *(f"beta_{n}" for n in fit.covariate_names), "rho"]
        rows = ([b, draws.beta_p[b], *draws.beta_y[b], *draws.beta_x[b], draws.rho[b]]
                for b in range(draws.B))
        write_csv(args.draws_out, header, rows, digest)


def cmd_welfare(args, digest):
    model = _load_model(args)
    trunc = _truncation(args.truncation)
    if args.binary:
        if args.pbar is None or args.sigma is None:
            raise UsageError("--binary needs --pbar and --sigma")
        # DWL and the MVPF line are eps = 0 quantities, repeated on every eps row
        try:
            parts = bw.mvpf_parts(model, args.pbar, args.income, truncation=trunc)
            slope = parts.numerator - parts.denominator
        except ArithmeticError:
            slope = float("nan")
        cost = [s * float(model.q1(args.pbar - s, args.income)) for s in args.sigma]
        dwl = [c - bw.delta_asw(model, bw.SubsidyScenario(args.pbar, s, args.income, 0.0), trunc)
               for s, c in zip(args.sigma, cost)]
        rows = []
        for eps in args.eps:
            for k, s in enumerate(args.sigma):
                scen = bw.SubsidyScenario(args.pbar, s, args.income, eps)
                rows.append([eps, s, bw.delta_asw(model, scen, trunc), bw.acv(model, scen),
                             bw.ate(model, scen), dwl[k], s * slope, cost[k]])
        write_csv(args.out, ["eps", "sigma", "delta_asw", "acv", "ate", "dwl",
                             "mvpf_linear_net_benefit", "cost"], rows, digest)
        return
    point = BudgetPoint(args.prices, args.income)
    rows = []
    for eps in args.eps:
        rows.append(["asw", eps, asw(model, point, eps, trunc)])
    rows.append(["gini", "", welfare_inequality_index(model, point, "gini")])
    for eps in args.eps:
        if 0 < eps <= 1:
            rows.append(["atkinson", eps, welfare_inequality_index(model, point, ("atkinson", eps))])
    if args.c_grid is not None:
        cdf = welfare_cdf(model, point, np.asarray(args.c_grid))
        rows += [["cdf", c, v] for c, v in zip(args.c_grid, cdf)]
    write_csv(args.out, ["quantity", "argument", "value"], rows, digest)


def cmd_bounds(args, digest):
    S = bd.load_demand_csv(args.demand, ordered=args.ordered)
    c = np.asarray(args.c_grid, dtype=float)
    if args.ordered:
        if args.price is None:
            raise UsageError("--ordered needs --price")
        res = bd.ordered_cdf_bounds(S, c, args.price, args.income)
    else:
        if args.prices is None:
            raise UsageError("multinomial bounds need --prices")
        res = bd.multinomial_cdf_bounds(S, c, BudgetPoint(args.prices, args.income))
    rows = zip(c, res.lower, res.upper, res.has_lower, res.has_upper)
    write_csv(args.out, ["c", "lower", "upper", "has_lower", "has_upper"], rows, digest)


def cmd_target(args, digest):
    model = _load_model(args)
    if args.incomes:
        F = tg.load_income_csv(args.incomes)
    elif args.income_grid:
        F = tg.IncomeDistribution.from_sample(args.income_grid)
    else:
        raise UsageError("one of --incomes or --income-grid is required")
    bounds = None
    if args.sigma_min is not None or args.sigma_max is not None:
        lo = -args.pbar if args.sigma_min is None else args.sigma_min
        hi = 0.95 * args.pbar if args.sigma_max is None else args.sigma_max
        bounds = (lo, hi)
    try:
        space = tg.schedule_space(F, args.pbar, bounds, args.schedule, args.basis_size)
        crit = tg.Criterion.parse(args.criterion)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = tg.optimal_schedule(model, args.pbar, crit, F, args.budget, space,
                              equality=not args.inequality_budget, starts=args.starts,
                              seed=args.seed)
    sig = res.schedule(F.incomes)
    write_csv(args.out, ["y", "weight", "sigma"], zip(F.incomes, F.weights, sig), digest)
    if args.report_out:
        rep = res.report()
        rep["criterion"] = str(crit)
        if F.size == 2 and args.schedule == "pointwise":
            rep["soc"] = tg.soc_check(model, args.pbar, crit, F, res).to_dict()
            if crit.kind == "ate":
                rep["foc_identity_gap"] = tg.foc_identity_gap(model, args.pbar, F, res)
        write_json(args.report_out, rep, digest)


def cmd_report(args, digest):
    """Subsidy-grid table at one income, or per income plus a labelled average.

    ``--incomes`` averages with the CSV weights (equal weights for a raw
    sample, i.e. the empirical distribution); ``--income-grid`` averages the
    grid points with equal weights.
    """
    given = [v is not None for v in (args.income, args.incomes, args.income_grid)]
    if sum(given) != 1:
        raise UsageError("give exactly one of --income, --incomes or --income-grid")
    model = _load_model(args)
    sigma = np.asarray(args.sigma, dtype=float)
    if args.income is not None:
        F, label = tg.IncomeDistribution([args.income], [1.0]), None
    elif args.incomes:
        F, label = tg.load_income_csv(args.incomes), "mean_empirical"
    else:
        F, label = tg.IncomeDistribution.from_sample(args.income_grid), "mean_grid"
    trunc = _truncation(args.truncation)
    rows, mean = [], 0.0
    for y, w in zip(F.incomes, F.weights):
        table = bw.sigma_grid_table(model, args.pbar, y, sigma, trunc)
        table = np.column_stack([table, sigma * model.q1(args.pbar - sigma, y)])
        rows += [list(r) + [y] for r in table]
        mean = mean + w * table
    if label is not None:
        rows += [list(r) + [label] for r in mean]
    header = ["sigma", "delta_asw", "acv", "ate", "dwl", "mvpf_linear_net_benefit", "cost",
              "income"]
    write_csv(args.out, header, rows, digest)


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "welfare": cmd_welfare,
            "bounds": cmd_bounds, "target": cmd_target, "report": cmd_report}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, effective = parse(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except ConfigError as exc:
        print(f"welfareid: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    digest = config_hash(effective)
    try:
        COMMANDS[args.command](args, digest)
    except (UsageError, ConfigError) as exc:
        print(f"welfareid: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, est.EstimationError, tg.TargetingError, np.linalg.LinAlgError) as exc:
        print(f"welfareid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"welfareid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
