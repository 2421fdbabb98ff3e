"""Command-line interface: ``fgwild {fit,band,simulate,coverage}``.

Results go to ``--out`` (or stdout). Every run also produces a manifest: it
is embedded in JSON output and written next to CSV output as
``<out>.manifest.json``. Validated failures exit with status 1 and print a
JSON error object on stderr; usage errors exit with status 2.

``FGWILD_SEED`` and ``FGWILD_THREADS`` supply defaults for ``--seed`` and
``--threads``.
"""

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .bands import ALL_VARIANTS, Variant, bands
from .bootstrap import MultiplierLaw
from .data import CSVSchema, load_csv
from .errors import FGWildError, NegativeCauseSpecificHazard
from .estimation import fit_mple
from .simulation import ScenarioConfig, generate_arrays, reports_to_csv, run_coverage

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("fgwild")

SCHEMA_VERSION = 1


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _interval(text):
    if text == "auto":
        return None
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("interval must be 't1,t2' or 'auto'")
    return tuple(vals)


def _variants(text):
    if text == "all":
        return list(ALL_VARIANTS)
    try:
        return [Variant(v.strip()) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _multiplier(text):
    try:
        law = MultiplierLaw.parse(text)
    except ValueError:
        law = None
    if law is None or law is MultiplierLaw.SIGN:
        raise argparse.ArgumentTypeError("multiplier must be normal, exp or poisson")
    return law


def _env_int(name, default):
    value = os.environ.get(name)
    return int(value) if value not in (None, "") else default


def _add_data_args(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", required=True, help="CSV file with a header row")
    g.add_argument("--time-col", default="time")
    g.add_argument("--event-col", default="event")
    g.add_argument("--cens-col", default="cens", help="censoring-time column; '' if absent")
    g.add_argument("--covariate-cols", default="", help="comma-separated covariate columns")
    g.add_argument("--censor-code", default="0")
    g.add_argument("--interest-code", default="1")
    g.add_argument("--mode", choices=["censoring-complete", "partially-censoring-complete"])
    g.add_argument("--jitter", type=float, help="break tied type-1 times by multiples of this")
    g.add_argument("--tau", type=float, help="end of follow-up")


def _add_output_args(p, formats):
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fgwild",
        description="Fine-Gray regression with wild-bootstrap confidence bands for the CIF.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the Fine-Gray model")
    _add_data_args(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=50)
    _add_output_args(p, ["json"])

    p = sub.add_parser("band", help="simultaneous confidence bands for F1(t | z)")
    _add_data_args(p)
    p.add_argument("--variant", type=_variants, default=[Variant.EP0],
                   help="comma-separated list of plain0..ep2, or 'all'")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--boot", type=int, default=2000)
    p.add_argument("--multiplier", type=_multiplier, default=MultiplierLaw.NORMAL)
    p.add_argument("--seed", type=int, default=_env_int("FGWILD_SEED", 0))
    p.add_argument("--z", type=_floats, required=True, help="covariate vector v1,v2,...")
    p.add_argument("--interval", type=_interval, default=None, help="t1,t2 or auto")
    p.add_argument("--threads", type=int, default=_env_int("FGWILD_THREADS", os.cpu_count() or 1),
                   help="accepted for symmetry; band computation is vectorized in-process")
    _add_output_args(p, ["json", "csv"])

    p = sub.add_parser("simulate", help="emit one simulated dataset as CSV")
    p.add_argument("--scenario", help="TOML/JSON scenario file (first scenario is used)")
    p.add_argument("--n", type=int)
    p.add_argument("--beta0", type=_floats)
    p.add_argument("--alpha01", type=float)
    p.add_argument("--alpha02", type=float)
    p.add_argument("--covariates", choices=["bernoulli", "trivariate"])
    p.add_argument("--censor-max", type=float)
    p.add_argument("--censoring-rate", help="low, high or a fraction")
    p.add_argument("--study-index", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    _add_output_args(p, ["csv"])

    p = sub.add_parser("coverage", help="Monte-Carlo coverage study")
    p.add_argument("--scenario", required=True, help="TOML/JSON scenario file")
    p.add_argument("--threads", type=int, default=_env_int("FGWILD_THREADS", os.cpu_count() or 1))
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--studies", type=int, help="override n_studies")
    p.add_argument("--boot", type=int, help="override n_boot")
    _add_output_args(p, ["csv", "json"])
    return parser


class Manifest:
    def __init__(self, command, argv):
        self.data = {
            "schema_version": SCHEMA_VERSION,
            "software": "fgwild",
            "version": __version__,
            "command": command,
            "argv": list(argv),
            "config": {},
            "seed": None,
            "counters": {},
        }
        self._start = time.perf_counter()

    def finish(self):
        self.data["wall_time_seconds"] = round(time.perf_counter() - self._start, 6)
        return self.data


def _load_dataset(args):
    schema = CSVSchema(
        time_col=args.time_col,
        event_col=args.event_col,
        cens_col=args.cens_col or None,
        covariate_cols=[c.strip() for c in args.covariate_cols.split(",") if c.strip()],
        censor_code=args.censor_code,
        interest_code=args.interest_code,
    )
    return load_csv(args.data, schema, mode=args.mode, jitter=args.jitter, tau=args.tau)


def _data_config(args):
    return {k: getattr(args, k) for k in ("data", "time_col", "event_col", "cens_col",
                                          "covariate_cols", "censor_code", "interest_code",
                                          "mode", "jitter", "tau")}


def _write(args, text, manifest):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    path = args.manifest or (args.out + ".manifest.json" if args.out else None)
    if path:
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")


def _json(obj):
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def cmd_fit(args, manifest):
    ds = _load_dataset(args)
    fit = fit_mple(ds, tol=args.tol, max_iter=args.max_iter)
    manifest.data["config"] = {**_data_config(args), "tol": args.tol, "max_iter": args.max_iter}
    manifest.data["counters"] = {"jittered_rows": len(ds.jitter_log)}
    body = {"schema_version": SCHEMA_VERSION, "dataset": ds.summary(), "fit": fit.to_dict(),
            "jitter": ds.jitter_log}
    body["manifest"] = manifest.finish()
    _write(args, _json(body), None)
    return 0 if fit.converged else 1


def cmd_band(args, manifest):
    ds = _load_dataset(args)
    fit = fit_mple(ds)
    if not fit.converged:
        raise FGWildError("Newton-Raphson did not converge")
    res = bands(fit, ds, args.z, args.variant, args.interval, args.level, args.boot,
                args.multiplier, args.seed)
    manifest.data["config"] = {
        **_data_config(args), "variants": [v.value for v in args.variant], "level": args.level,
        "boot": args.boot, "multiplier": args.multiplier.value, "z": args.z,
        "interval": args.interval or "auto",
    }
    manifest.data["seed"] = args.seed
    manifest.data["counters"] = {f"rejected_{v.value}": r.n_rejected for v, r in res.items()}
    manifest.data["counters"]["jittered_rows"] = len(ds.jitter_log)
    if args.format == "json":
        body = {
            "schema_version": SCHEMA_VERSION,
            "beta_hat": fit.beta_hat.tolist(),
            "bands": [r.to_dict() for r in res.values()],
            "manifest": manifest.finish(),
        }
        _write(args, _json(body), None)
        return 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "time", "estimate", "lower", "upper", "quantile", "rejected"])
    for v, r in res.items():
        for t, est, lo, hi in r.rows():
            w.writerow([v.value, repr(float(t)), repr(float(est)), repr(float(lo)),
                        repr(float(hi)), repr(r.quantile), r.n_rejected])
    _write(args, buf.getvalue(), manifest.finish())
    return 0


def read_scenario_file(path):
    """Load a TOML or JSON scenario file into a list of keyword dicts.

    The file may hold top-level keys (one scenario), a ``scenario`` list, or
    a ``grid`` table whose list-valued entries are expanded as a Cartesian
    product in the order ``n``, ``censoring_rate``, ``beta0``, ``hazards``, then
    any other keys. ``defaults`` apply to every scenario.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).endswith(".json"):
        doc = json.loads(raw)
    else:
        doc = tomllib.loads(raw.decode())
    defaults = dict(doc.get("defaults", {}))
    top = {k: v for k, v in doc.items() if k not in ("defaults", "scenario", "grid", "skip_invalid")}
    scenarios = [dict(s) for s in doc.get("scenario", [])]
    if "grid" in doc:
        grid = dict(doc["grid"])
        first = [k for k in ("n", "censoring_rate", "beta0", "hazards") if k in grid]
        keys = first + [k for k in grid if k not in first]
        for combo in itertools.product(*(grid[k] for k in keys)):
            scenarios.append(dict(zip(keys, combo)))
    if not scenarios:
        scenarios = [{}]
    out = []
    for s in scenarios:
        merged = {**defaults, **top, **s}
        if "hazards" in merged:
            merged["alpha01"], merged["alpha02"] = merged.pop("hazards")
        out.append(merged)
    return out, bool(doc.get("skip_invalid", False))


def _scenario_configs(path, overrides, skip_invalid=None):
    specs, skip = read_scenario_file(path)
    skip = skip if skip_invalid is None else skip_invalid
    configs, skipped = [], []
    for spec in specs:
        spec = {**spec, **{k: v for k, v in overrides.items() if v is not None}}
        try:
            configs.append(ScenarioConfig(**spec))
        except NegativeCauseSpecificHazard as exc:
            if not skip:
                raise
            log.warning("skipping scenario %s: %s", spec, exc)
            skipped.append({"scenario": spec, "reason": str(exc)})
    return configs, skipped


def cmd_simulate(args, manifest):
    overrides = {
        "n": args.n, "beta0": args.beta0, "alpha01": args.alpha01, "alpha02": args.alpha02,
        "covariates": args.covariates, "censor_max": args.censor_max,
        "master_seed": args.seed if args.seed is not None else _env_int("FGWILD_SEED", None),
    }
    if args.censoring_rate is not None:
        rate = args.censoring_rate
        overrides["censoring_rate"] = rate if rate in ("low", "high") else float(rate)
    if args.scenario:
        configs, _ = _scenario_configs(args.scenario, overrides)
        config = configs[0]
    else:
        config = ScenarioConfig(**{k: v for k, v in overrides.items() if v is not None})
    time_, event, cens, z = generate_arrays(config, args.study_index)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "event", "cens"] + [f"z{j + 1}" for j in range(z.shape[1])])
    for t, e, c, row in zip(time_, event, cens, z):
        w.writerow([repr(float(t)), int(e), repr(float(c))] + [repr(float(v)) for v in row])
    manifest.data["config"] = {**config.to_dict(), "study_index": args.study_index}
    manifest.data["seed"] = config.master_seed
    manifest.data["counters"] = {
        "censored": int(np.sum(event == 0)), "type1": int(np.sum(event == 1)),
        "type2": int(np.sum(event == 2)),
    }
    _write(args, buf.getvalue(), manifest.finish())
    return 0


def cmd_coverage(args, manifest):
    overrides = {"n_studies": args.studies, "n_boot": args.boot}
    seed = args.seed if args.seed is not None else _env_int("FGWILD_SEED", None)
    overrides["master_seed"] = seed
    configs, skipped = _scenario_configs(args.scenario, overrides)
    reports = [run_coverage(c, n_jobs=max(1, args.threads)) for c in configs]
    manifest.data["config"] = {"scenario_file": args.scenario,
                               "scenarios": [c.to_dict() for c in configs], "skipped": skipped}
    manifest.data["seed"] = sorted({c.master_seed for c in configs})
    manifest.data["threads"] = args.threads
    manifest.data["counters"] = {
        "failed_studies": sum(sum(r.failures.values()) for r in reports),
        "rejected_replicates": sum(c.rejected_total for r in reports for c in r.cells),
        "excluded_bands": sum(c.excluded for r in reports for c in r.cells),
        "skipped_scenarios": len(skipped),
    }
    if args.format == "json":
        body = {"schema_version": SCHEMA_VERSION, "reports": [r.to_dict() for r in reports],
                "manifest": manifest.finish()}
        _write(args, _json(body), None)
    else:
        text = reports_to_csv(reports) if reports else ""
        _write(args, text, manifest.finish())
    return 0


COMMANDS = {"fit": cmd_fit, "band": cmd_band, "simulate": cmd_simulate, "coverage": cmd_coverage}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = Manifest(args.command, argv)
    try:
        return COMMANDS[args.command](args, manifest)
    except FGWildError as exc:
        err = exc.to_dict()
    except (ValueError, TypeError, OSError, KeyError) as exc:
        err = {"error": "invalid_input", "message": str(exc)}
    sys.stderr.write(json.dumps(err) + "\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
