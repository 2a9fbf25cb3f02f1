"""
trawlkit.py
Description: Command-line entry point. Subcommands simulate, estimate, slices,
mc, mc-coverage, forecast, dm-test and serve read CSV series and JSON configs
and write CSV tables to --out or stdout; summaries go to stderr.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 degenerate estimate.
"""

import argparse
import io
import json
import logging
import sys

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

import model_config as settings
from utils.estimator_utils import SliceEstimator, estimate
from utils.forecast_utils import dm_stars, dm_test, rolling_forecast
from utils.montecarlo_utils import Target, emit_table, load_study_cell, run_cell
from utils.series_utils import format_series, parse_series
from utils.simulator_utils import load_sim_config, simulate
from utils.utils import (
    CellRunError,
    ConfigurationError,
    DegenerateEstimateError,
    InsufficientDataError,
    SeriesFormatError,
    TrawlDomainError,
    TrawlkitError,
    set_logging,
)

logger = logging.getLogger("utils.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


def exit_code_for(error):
    """Exit code of a library error."""
    if isinstance(error, CellRunError):
        return EXIT_DEGENERATE if isinstance(error.cause, DegenerateEstimateError) else EXIT_DATA
    if isinstance(error, DegenerateEstimateError):
        return EXIT_DEGENERATE
    if isinstance(error, (InsufficientDataError, SeriesFormatError)):
        return EXIT_DATA
    if isinstance(error, (TrawlDomainError, ConfigurationError)):
        return EXIT_USAGE
    return 1


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(part) for part in text.split(',') if part.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}")
    return parse


def _read_json(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config {path} is not valid JSON: {e}")


def _emit(text, out):
    if out:
        with open(out, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        logger.info(f"Wrote {out}")
    else:
        sys.stdout.write(text)


def _frame_csv(frame, precision):
    buf = io.StringIO()
    frame.to_csv(buf, index=False, float_format=f"%.{precision}g", lineterminator='\n')
    return buf.getvalue()


def _load_input(args):
    series = parse_series(args.input)
    if args.offset:
        series = series.shifted(args.offset)
    return series


def cmd_simulate(args, console):
    data = _read_json(args.config)
    if args.seed is not None:
        if not isinstance(data.get('seed'), dict):
            data.pop('seed', None)
        data['rng_seed'] = args.seed
    if args.n is not None:
        data['n'] = args.n
    series = simulate(load_sim_config(data))
    _emit(format_series(series), args.out)
    return EXIT_OK


def cmd_estimate(args, console):
    series = _load_input(args)
    est = estimate(series, max_lag=args.max_lag, N_n=args.n_n, K_n=args.k_n)
    _emit(_frame_csv(est.table(args.levels), args.precision), args.out)
    if not args.quiet:
        console.print(f"n={est.n} delta={est.delta:g} Q_n={est.q_n:.{args.precision}g} K_n={est.k_n} N_n={est.n_n}")
    return EXIT_OK


def cmd_slices(args, console):
    series = _load_input(args)
    estimator = SliceEstimator(series)
    rows = []
    for h in args.h:
        for method in args.method:
            s = estimator.estimate(h, method)
            rows.append({'h': s.h, 'method': s.method.value, 'leb_a': s.leb_A, 'leb_cap': s.leb_cap,
                         'leb_minus': s.leb_minus, 'ratio_cap': s.ratio_cap, 'ratio_minus': s.ratio_minus,
                         'clamped': int(s.clamped)})
    _emit(_frame_csv(pd.DataFrame(rows, columns=['h', 'method', 'leb_a', 'leb_cap', 'leb_minus', 'ratio_cap',
                                                 'ratio_minus', 'clamped']), args.precision), args.out)
    return EXIT_OK


def _run_study(args, console, forced_target=None):
    overrides = {'runs': args.runs, 'seed': args.seed}
    if forced_target is not None:
        overrides['targets'] = [forced_target]
    cell = load_study_cell(_read_json(args.config), **overrides)
    layout = args.layout or cell.targets[0].value
    result = run_cell(cell, jobs=args.jobs, show_progress=not args.quiet)
    _emit(emit_table(result, layout, precision=args.precision), args.out)
    if not args.quiet:
        table = Table(title=f"Monte Carlo cell {cell.label}")
        table.add_column("runs", justify="right")
        table.add_column("targets")
        table.add_column("wall time", justify="right")
        table.add_row(str(result.runs), ",".join(t.value for t in cell.targets), f"{result.wall_time:.2f}s")
        console.print(table)
    return EXIT_OK


def cmd_mc(args, console):
    return _run_study(args, console)


def cmd_mc_coverage(args, console):
    return _run_study(args, console, forced_target=Target.COVERAGE.value)


def cmd_forecast(args, console):
    series = _load_input(args)
    report = rolling_forecast(series, args.window, args.hmax, predictors=args.predictors,
                              dm_powers=args.dm_power, stride=args.stride, jobs=args.jobs,
                              show_progress=not args.quiet)
    _emit(_frame_csv(report.to_frame(), args.precision), args.out)
    if not args.quiet:
        power = report.dm_powers[-1]
        table = Table(title=f"{report.forecast_count} forecasts, window {report.window_n}, "
                            f"DM vs {report.reference} (power {power})")
        table.add_column("h", justify="right")
        for name in report.predictors:
            table.add_column(f"{name} MSE/naive", justify="right")
        for j, h in enumerate(report.horizons):
            cells = []
            for name in report.predictors:
                ratio = report.ratio_vs_naive(name, 'mse')[j]
                stat_p = report.dm.get((name, power))
                stars = dm_stars(stat_p[1][j]) if stat_p is not None else ''
                cells.append(f"{ratio:.3f}{stars}")
            table.add_row(str(h), *cells)
        console.print(table)
    return EXIT_OK


def cmd_dm_test(args, console):
    try:
        frame = pd.read_csv(args.input, comment='#')
    except Exception as e:
        raise SeriesFormatError(f"{args.input}: not a readable CSV table: {e}")
    for col in (args.col_a, args.col_b):
        if col not in frame.columns:
            raise SeriesFormatError(f"{args.input}: column {col!r} not found in {list(frame.columns)}")
    errors_a = pd.to_numeric(frame[args.col_a], errors='coerce').to_numpy(dtype=float)
    errors_b = pd.to_numeric(frame[args.col_b], errors='coerce').to_numpy(dtype=float)
    if not (np.all(np.isfinite(errors_a)) and np.all(np.isfinite(errors_b))):
        raise SeriesFormatError(f"{args.input}: missing or non-numeric forecast errors")
    result = dm_test(np.abs(errors_a) ** args.power, np.abs(errors_b) ** args.power, h=args.h, power=args.power)
    p = args.precision
    _emit(f"statistic,p_value,stars,dominance\n{result.statistic:.{p}g},{result.p_value:.{p}g},"
          f"{dm_stars(result.p_value)},{int(result.dominance)}\n", args.out)
    return EXIT_OK


def cmd_serve(args, console):
    import uvicorn
    uvicorn.run("app:app", host=args.host or settings.HOST_APP, port=args.port or settings.PORT_NUM_APP)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog='trawlkit', description='Simulate, estimate and forecast trawl processes.')
    parser.add_argument('--precision', type=int, default=settings.PRECISION,
                        help='significant digits of report tables (default %(default)s)')
    parser.add_argument('--jobs', type=int, default=None, help='worker count (default TRAWLKIT_JOBS or all CPUs)')
    parser.add_argument('--seed', type=int, default=None, help='master seed of every stochastic output')
    parser.add_argument('--quiet', action='store_true', help='no logs, progress bars or summaries')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')

    series_in = argparse.ArgumentParser(add_help=False)
    series_in.add_argument('--in', dest='input', required=True, help='series CSV (# delta= header, time,value)')
    series_in.add_argument('--offset', type=float, default=0.0, help='subtract a constant from every value')
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument('--out', default=None, help='output CSV (default stdout)')

    p = sub.add_parser('simulate', parents=[out], help='simulate a trawl path')
    p.add_argument('--config', required=True, help='JSON with trawl, marginal, delta, n')
    p.add_argument('--n', type=int, default=None, help='override the number of observations')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('estimate', parents=[series_in, out], help='estimate the trawl function and its variance')
    p.add_argument('--max-lag', type=int, default=None, help='largest lag index (default n-3)')
    p.add_argument('--levels', type=float, default=0.05, help='beta of the (1-beta) intervals')
    p.add_argument('--n-n', type=int, default=None, help='truncation of the variance sums')
    p.add_argument('--k-n', type=int, default=None, help='subsample stride for the t=0 derivative')
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser('slices', parents=[series_in, out], help='estimate trawl-set slice measures')
    p.add_argument('--h', type=_csv_list(float), required=True, help='horizons, e.g. 0.1,1')
    p.add_argument('--method', type=_csv_list(str), default=['empirical_acf'],
                   help='trawl_sum, trawl_sum_bc, empirical_acf')
    p.set_defaults(func=cmd_slices)

    for name, func, help_text in (('mc', cmd_mc, 'run a Monte Carlo study cell'),
                                  ('mc-coverage', cmd_mc_coverage, 'run a coverage study cell')):
        p = sub.add_parser(name, parents=[out], help=help_text)
        p.add_argument('--config', required=True, help='study cell JSON')
        p.add_argument('--runs', type=int, default=None, help='override the run count')
        p.add_argument('--layout', choices=[t.value for t in Target], default=None,
                       help='table layout (default: first target)')
        p.set_defaults(func=func)

    p = sub.add_parser('forecast', parents=[series_in, out], help='rolling-window forecast evaluation')
    p.add_argument('--window', type=int, required=True, help='estimation window length')
    p.add_argument('--hmax', type=int, required=True, help='largest horizon in steps')
    p.add_argument('--predictors', type=_csv_list(str), default=['trawl', 'acf', 'naive'],
                   help='first one is the DM benchmark')
    p.add_argument('--dm-power', type=_csv_list(int), default=[1, 2], help='loss powers')
    p.add_argument('--stride', type=int, default=1, help='refit every STRIDE origins')
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser('dm-test', parents=[out], help='Diebold-Mariano test on two forecast-error columns')
    p.add_argument('--in', dest='input', required=True, help='CSV with forecast errors')
    p.add_argument('--col-a', required=True)
    p.add_argument('--col-b', required=True)
    p.add_argument('--h', type=int, default=1)
    p.add_argument('--power', type=int, choices=[1, 2], default=2, help='loss |e|^power')
    p.set_defaults(func=cmd_dm_test)

    p = sub.add_parser('serve', help='start the HTTP service')
    p.add_argument('--host', default=None)
    p.add_argument('--port', type=int, default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def dispatch(argv=None):
    """Parse argv and run one subcommand; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    set_logging(not args.quiet, verbose=args.verbose)
    console = Console(stderr=True)
    try:
        return args.func(args, console)
    except TrawlkitError as e:
        code = exit_code_for(e)
        print(f"trawlkit: error: {e}", file=sys.stderr)
        logger.debug("Command failed", exc_info=True)
        return code


def main():
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
