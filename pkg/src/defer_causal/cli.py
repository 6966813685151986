"""Command-line entry point: ``defer-causal <command> [flags]``.

Every command accepts ``--config FILE`` with ``key = value`` lines; flags
given on the command line win over the file. Output verbosity follows the
``DEFER_CAUSAL_LOG_LEVEL`` environment variable (default ``WARNING``).

Exit codes: 0 on success (including reports with failed cells), 1 when a
single estimator fails on the data, 2 on configuration or input errors.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .calibration import coverage_grid
from .data import ColumnSchema, emit_dataset, load_dataset
from .effects import Unavailable, estimate_atd, estimate_catd
from .errors import ConfigError, DataError, DeferCausalError
from .falsification import density_test, placebo_outcome_test, placebo_side_test
from .pipeline import (DEFAULT_GRID, PipelineConfig, to_jsonable, emit_plotdata,
                       emit_report, run_pipeline)
from .rd import KERNELS, estimate_rd
from .synthetic import SynthConfig, generate_synth

EXIT_OK, EXIT_ESTIMATION, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("defer_causal")


# config file ----------------------------------------------------------------


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use underscores."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        parser.read_string("[run]\n" + text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def _merge(args: argparse.Namespace) -> dict[str, Any]:
    """Config-file values overlaid by the flags the user actually set."""
    merged: dict[str, Any] = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command", "func"):
            merged[k] = v
    return merged


def _get(opts: dict[str, Any], key: str, conv=str, default=None):
    if key not in opts or opts[key] in ("", None):
        return default
    v = opts[key]
    if isinstance(v, str) and conv is not str:
        try:
            return conv(v)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {v!r}") from exc
    return v


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    parts = [p for p in str(text).replace(",", " ").split() if p]
    return tuple(float(p) for p in parts)


def _names(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(p for p in str(text).replace(",", " ").split() if p)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def schema_from(opts: dict[str, Any]) -> ColumnSchema:
    base = ColumnSchema()
    labels = _get(opts, "labels")
    return ColumnSchema(
        reject_score=_get(opts, "reject_score_col", default=base.reject_score),
        deferred=_get(opts, "deferred_col", default=base.deferred),
        model_pred=_get(opts, "model_pred_col", default=base.model_pred),
        human_pred=_get(opts, "human_pred_col", default=base.human_pred),
        label=_get(opts, "label_col", default=base.label),
        groups=_names(_get(opts, "groups", default=())),
        labels=_names(labels) if labels else None,
        delimiter=_get(opts, "delimiter", default=base.delimiter),
    )


def synth_config_from(opts: dict[str, Any]) -> SynthConfig:
    base = SynthConfig()
    rng = _get(opts, "defer_frac_range", _floats, base.defer_frac_range)
    try:
        return SynthConfig(
            d=_get(opts, "d", int, base.d),
            n=_get(opts, "n", int, base.n),
            p_h0=_get(opts, "p_h0", float, base.p_h0),
            p_h1=_get(opts, "p_h1", float, base.p_h1),
            p_ml=_get(opts, "p_ml", float, base.p_ml),
            defer_frac_range=tuple(rng),
            seed=_get(opts, "synth_seed", int, _get(opts, "seed", int, base.seed)),
            cutoff=_get(opts, "synth_cutoff", float, base.cutoff),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def pipeline_config_from(opts: dict[str, Any]) -> PipelineConfig:
    data = _get(opts, "data")
    val, test = _get(opts, "validation"), _get(opts, "test")
    synth = None if (data or val or test) else synth_config_from(opts)
    fam = _get(opts, "family_size", int)
    bw = _get(opts, "bandwidth", float)
    try:
        falsify = _get(opts, "falsify", _bool, True)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return PipelineConfig(
        synth=synth, data=data, validation=val, test=test,
        schema=schema_from(opts),
        system=_get(opts, "system", default="sp"),
        grid=_get(opts, "grid", _floats, DEFAULT_GRID),
        level=_get(opts, "level", float, 0.95),
        alpha=_get(opts, "alpha", float, 0.05),
        family_size=fam,
        scenarios=tuple(s.upper() for s in _names(_get(opts, "scenarios", default="S1,S2"))),
        seed=_get(opts, "seed", int, 0),
        split=_get(opts, "split", _floats, (0.7, 0.1, 0.2)),
        groups=_names(_get(opts, "catd_groups", default=())),
        falsify=falsify,
        placebo_p=_get(opts, "placebo_p", float, 0.5),
        kernel=_get(opts, "kernel", default="triangular"),
        bandwidth=bw,
        epochs=_get(opts, "epochs", int, 20),
        step=_get(opts, "step", float, 0.1),
    )


# commands ---------------------------------------------------------------------


def _dump(obj: Any, out: str | None) -> None:
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(opts: dict[str, Any]):
    path = _get(opts, "data")
    if not path:
        raise ConfigError("--data is required")
    return load_dataset(path, schema_from(opts))


def cmd_synth(opts: dict[str, Any]) -> int:
    cfg = synth_config_from(opts)
    out = _get(opts, "out")
    if not out:
        raise ConfigError("--out is required")
    synth = generate_synth(cfg)
    schema = ColumnSchema(groups=("component",))
    with open(out, "w", newline="") as fh:
        emit_dataset(synth.dataset, fh, schema)
    sidecar = _get(opts, "oracle_out") or str(Path(out).with_suffix(".oracle.csv"))
    with open(sidecar, "w", newline="") as fh:
        fh.write("g_star,f_star,human_correct_prob,model_correct_prob\n")
        for g, f, h, m in zip(synth.g_star, synth.f_star_pred,
                              synth.human_correct_prob, synth.model_correct_prob):
            fh.write(f"{int(g)},{f},{h!r},{m!r}\n")
    _dump({"records": len(synth.dataset), "data": out, "oracle": sidecar,
           "model_region_fraction": synth.model_region_fraction,
           "oracle_atd": synth.oracle_atd() if synth.dataset.n_deferred else None}, None)
    return EXIT_OK


def cmd_calibrate(opts: dict[str, Any]) -> int:
    path = _get(opts, "scores") or _get(opts, "data")
    if not path:
        raise ConfigError("--scores is required")
    ds = load_dataset(path, schema_from(opts))
    cov = _get(opts, "coverage", default="grid")
    grid = DEFAULT_GRID if str(cov).strip().lower() == "grid" else _floats(cov)
    try:
        cuts = coverage_grid(ds.scores, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _dump([{"coverage": c.target_coverage, "cutoff": c.value,
            "achieved_coverage": c.achieved_coverage} for c in cuts], _get(opts, "out"))
    return EXIT_OK


def cmd_atd(opts: dict[str, Any]) -> int:
    ds = _load(opts)
    est = estimate_atd(ds, _get(opts, "level", float, 0.95))
    _dump(est.to_dict(), _get(opts, "out"))
    return EXIT_OK


def cmd_catd(opts: dict[str, Any]) -> int:
    group = _get(opts, "group")
    if not group:
        raise ConfigError("--group is required")
    opts = {**opts, "groups": ",".join(dict.fromkeys([*_names(_get(opts, "groups", default=())), group]))}
    ds = _load(opts)
    res = estimate_catd(ds, group, _get(opts, "level", float, 0.95))
    _dump({cat: ({"status": "unavailable", **e.to_dict()} if isinstance(e, Unavailable)
                 else {"status": "ok", **e.to_dict()}) for cat, e in res.items()}, _get(opts, "out"))
    return EXIT_OK


def _cutoff(opts: dict[str, Any]) -> float:
    c = _get(opts, "cutoff", float)
    if c is None:
        raise ConfigError("--cutoff is required")
    return c


def cmd_rd(opts: dict[str, Any]) -> int:
    ds = _load(opts)
    r = estimate_rd(ds, _cutoff(opts), _get(opts, "bandwidth", float),
                    _get(opts, "level", float, 0.95), _get(opts, "kernel", default="triangular"))
    _dump(r.to_dict(), _get(opts, "out"))
    return EXIT_OK


def cmd_falsify(opts: dict[str, Any]) -> int:
    ds = _load(opts)
    cutoff = _cutoff(opts)
    level = _get(opts, "level", float, 0.95)
    kernel = _get(opts, "kernel", default="triangular")
    seeds = _get(opts, "placebo_seeds", int, 1)
    out: dict[str, Any] = {}
    for side in ("low", "high"):
        try:
            at, r = placebo_side_test(ds, cutoff, side, level, kernel)
            out[f"placebo_{side}"] = {"status": "ok", "placebo_cutoff": at, **r.to_dict()}
        except DeferCausalError as exc:
            out[f"placebo_{side}"] = {"status": "error", "code": exc.code, "message": str(exc)}
    outcomes = []
    for s in range(seeds):
        try:
            r = placebo_outcome_test(ds, cutoff, _get(opts, "placebo_p", float, 0.5), s, level, kernel)
            outcomes.append({"status": "ok", "seed": s, **r.to_dict()})
        except DeferCausalError as exc:
            outcomes.append({"status": "error", "seed": s, "code": exc.code, "message": str(exc)})
    out["placebo_outcome"] = outcomes
    dens = density_test(ds.scores, cutoff, _get(opts, "window", float))
    out["density"] = dens.to_dict()
    hist_out = _get(opts, "histogram_out")
    if hist_out:
        with open(hist_out, "w") as fh:
            fh.write("bin_low,bin_high,count\n")
            for lo, hi, n in dens.histogram:
                fh.write(f"{lo!r},{hi!r},{n}\n")
    _dump(out, _get(opts, "out"))
    return EXIT_OK


def cmd_report(opts: dict[str, Any]) -> int:
    cfg = pipeline_config_from(opts)
    report = run_pipeline(cfg)
    fmt = _get(opts, "format", default="json")
    out = _get(opts, "out")
    data = emit_report(report, fmt, out)
    if not out:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    plot_dir = _get(opts, "plotdata")
    if plot_dir:
        emit_plotdata(report, plot_dir)
    return EXIT_OK


# parser -----------------------------------------------------------------------------


def _schema_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("columns")
    for name in ("reject-score-col", "deferred-col", "model-pred-col", "human-pred-col", "label-col"):
        g.add_argument(f"--{name}")
    g.add_argument("--groups", help="comma-separated group attribute columns")
    g.add_argument("--labels", help="comma-separated label set (default: inferred)")
    g.add_argument("--delimiter")


def _synth_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic data")
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--p-h0", type=float)
    g.add_argument("--p-h1", type=float)
    g.add_argument("--p-ml", type=float)
    g.add_argument("--defer-frac-range", help="two numbers, e.g. 0.2,0.8")
    g.add_argument("--synth-seed", type=int)
    g.add_argument("--synth-cutoff", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defer-causal",
                                     description="Causal evaluation of deferring systems.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help="output file (default: stdout)")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic benchmark CSV plus oracle sidecar")
    _synth_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle-out")

    p = add("calibrate", cmd_calibrate, "cutoffs for target coverages from validation scores")
    p.add_argument("--scores", help="CSV with a reject score column")
    p.add_argument("--coverage", help="one value, a comma list, or 'grid'")
    _schema_flags(p)

    for name, func, help in (("atd", cmd_atd, "average effect of deferring on the deferred"),
                             ("catd", cmd_catd, "ATD per category of a group attribute")):
        p = add(name, func, help)
        p.add_argument("--data")
        p.add_argument("--level", type=float)
        _schema_flags(p)
        if name == "catd":
            p.add_argument("--group")

    p = add("rd", cmd_rd, "regression discontinuity effect at a cutoff")
    p.add_argument("--data")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--level", type=float)
    _schema_flags(p)

    p = add("falsify", cmd_falsify, "placebo and density checks at a cutoff")
    p.add_argument("--data")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--level", type=float)
    p.add_argument("--placebo-seeds", type=int)
    p.add_argument("--placebo-p", type=float)
    p.add_argument("--window", type=float)
    p.add_argument("--histogram-out")
    _schema_flags(p)

    p = add("report", cmd_report, "full coverage-grid evaluation")
    p.add_argument("--data", help="pool CSV, split into train/validation/test")
    p.add_argument("--validation")
    p.add_argument("--test")
    p.add_argument("--system", choices=("sp", "cc", "oracle"))
    p.add_argument("--grid", help="comma-separated coverages")
    p.add_argument("--level", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--family-size", type=int)
    p.add_argument("--scenarios", help="S1, S2 or S1,S2")
    p.add_argument("--seed", type=int)
    p.add_argument("--split", help="train,validation,test fractions")
    p.add_argument("--catd-groups")
    p.add_argument("--falsify", help="true/false")
    p.add_argument("--placebo-p", type=float)
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--format", choices=("json", "table"))
    p.add_argument("--plotdata", help="directory for per-panel CSV files")
    _schema_flags(p)
    _synth_flags(p)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("DEFER_CAUSAL_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        opts = _merge(args)
        return args.func(opts)
    except (ConfigError, DataError, OSError) as exc:
        print(f"defer-causal: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DeferCausalError as exc:
        print(f"defer-causal: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
