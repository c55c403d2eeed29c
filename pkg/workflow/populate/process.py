import argparse
import json
import logging
import re
import sys

import pandas as pd

from workflow import logger
from workflow.pipeline.metrics import TimelineError
from workflow.pipeline.scenario import (
    SWEEP_AXES,
    ConfigValidationError,
    ScenarioConfig,
    build_config,
    load_scenario_config,
)
from workflow.pipeline.tdd_schedule import EssaInfeasibleError
from workflow.populate.runner import (
    TABLE_COLUMNS,
    InterferenceError,
    calibrate_gain,
    iter_sweep,
    run_batch,
    selected_snr_samples,
    summary_rows,
    write_table,
    write_traces,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INTERFERENCE = 3
EXIT_ESSA_INFEASIBLE = 4


class _SimulateParser(argparse.ArgumentParser):
    """Reports bad flags as configuration errors instead of exiting."""

    def error(self, message):
        match = re.search(r"argument ([^:]+):", message)
        fields = []
        if match:
            flag = match.group(1).split("/")[-1]
            fields = [flag.lstrip("-").replace("-", "_")]
        raise ConfigValidationError(message, fields=fields)


def parse_args(args):
    parser = _SimulateParser(
        prog="simulate",
        description="Monte Carlo simulation of TDD slot allocation in a LEO cell",
    )
    parser.add_argument("--config", help="scenario TOML file (defaults if omitted)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--runs", type=int)
    parser.add_argument("--policy", choices=["ta", "essa"], type=str.lower)
    parser.add_argument("--scheduler", choices=["mg", "ms"], type=str.lower)
    parser.add_argument("--pattern", type=str.lower, help="dsu, 2dsu, 4dsu, 6dsu, ...")
    parser.add_argument("--sweep", choices=sorted(SWEEP_AXES))
    parser.add_argument("--values", nargs="+", help="values of the sweep axis")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--emit-traces", action="store_true")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument(
        "--calibrate",
        action="store_true",
        help="bisect the link calibration gain and print it instead of simulating",
    )
    parser.add_argument("--figures", action="store_true", help="also write PNG figures")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser.parse_args(args)


def _sweep_values(axis, values):
    if not values:
        raise ConfigValidationError("--sweep requires --values", fields=["values"])
    if axis == "pattern":
        return list(values)
    try:
        return [float(v) for v in values]
    except ValueError as error:
        raise ConfigValidationError(str(error), fields=["values"]) from error


def run(**kwargs):
    overrides = {
        key: kwargs.get(key)
        for key in ("seed", "runs", "policy", "scheduler", "pattern")
    }
    if kwargs.get("config"):
        config = load_scenario_config(kwargs["config"], overrides)
    else:
        config = build_config({k: v for k, v in overrides.items() if v is not None})

    if kwargs.get("calibrate"):
        gain = calibrate_gain(config)
        print(json.dumps({"calibration_gain_db": gain}))
        return {"calibration_gain_db": gain}

    axis = kwargs.get("sweep")
    if axis:
        values = _sweep_values(axis, kwargs.get("values"))
        stem = f"sweep_{axis}"
    else:
        values = [None]
        stem = "point"

    rows, per_point = [], []
    for value, point_config, results in _iter_points(
        config, axis, values, kwargs.get("jobs", 1), kwargs.get("emit_traces", False)
    ):
        rows.extend(summary_rows(point_config, results, sweep_value=value))
        label = "point" if value is None else f"{axis}_{value}"
        per_point.append((label, point_config, results))
        if kwargs.get("emit_traces"):
            write_traces(results, kwargs["out"], label)

    table = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    paths = write_table(table, kwargs["out"], stem, config, axis=axis)
    logger.info(f"Wrote {paths['csv']} and {paths['json']}")

    if kwargs.get("figures"):
        from workflow.utils.plotting.simulation_plots import save_report_figures

        samples = {
            label: selected_snr_samples(results) for label, _, results in per_point
        }
        traces = {
            label: (results[0].trace, cfg.grid.slot_duration_ms)
            for label, cfg, results in per_point
            if results[0].trace is not None
        }
        save_report_figures(
            table, samples, kwargs["out"], stem, axis=axis, traces=traces
        )

    return paths


def _iter_points(config: ScenarioConfig, axis, values, jobs, keep_traces):
    if axis:
        yield from iter_sweep(config, axis, values, jobs=jobs, keep_traces=keep_traces)
    else:
        yield None, config, run_batch(config, jobs=jobs, keep_traces=keep_traces)


def _fail(code, error, **extra):
    payload = {"error": type(error).__name__, "message": str(error), **extra}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except ConfigValidationError as error:
        return _fail(EXIT_CONFIG, error, fields=error.fields)

    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)

    try:
        run(**vars(args))
    except ConfigValidationError as error:
        return _fail(EXIT_CONFIG, error, fields=error.fields)
    except FileNotFoundError as error:
        return _fail(EXIT_CONFIG, error, fields=["config"])
    except TimelineError as error:
        return _fail(EXIT_CONFIG, error, fields=["grid.horizon_slots"])
    except EssaInfeasibleError as error:
        return _fail(EXIT_ESSA_INFEASIBLE, error)
    except InterferenceError as error:
        return _fail(EXIT_INTERFERENCE, error, violations=len(error.violations))
    except Exception as error:
        logger.exception("Simulation encountered an exception:")
        return _fail(EXIT_FAILURE, error)
    finally:
        logger.removeHandler(handler)
    return EXIT_OK


def cli():
    """
    Calls :func:`main` passing the CLI arguments extracted from `sys.argv`

    This function can be used as entry point to create console scripts with setuptools.
    """
    sys.exit(main())


if __name__ == "__main__":
    cli()
