"""End-to-end evaluation over a coverage grid, multiplicity correction and report emission.

A run splits the data, calibrates one cutoff per grid coverage on the
validation scores, re-flags the test records at each cutoff and estimates
accuracy, ATD, CATD, the RD effect and the falsification battery. Any
estimator failure lands in its cell as ``{"status": "error", "code": ...}``.

Report JSON layout (stable)::

    {"schema": "defer-causal/report/1",
     "config": {...},
     "globals": {"alpha": a, "m": m, "family_size": M, "threshold": a / M},
     "rows": [{"coverage": c, "cutoff": k, "achieved_coverage": {...},
               "n_test": n, "n_deferred": n1, "accuracy": cell,
               "oracle_atd": cell, "atd": cell, "catd": {attr: {cat: cell}},
               "rd": cell, "falsification": {"placebo_low": cell,
               "placebo_high": cell, "placebo_outcome": cell, "density": cell}}]}

Cells with ``"status": "ok"`` and a ``p_value`` also carry ``significant``.
Non-finite floats are written as the strings ``"inf"``, ``"-inf"``, ``"nan"``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, IO, Iterator, Sequence

import numpy as np

from .calibration import Cutoff, achieved_coverage, apply_policy, coverage_grid
from .data import ColumnSchema, EvaluationDataset, Scenario, load_dataset, split_indices
from .effects import Unavailable, estimate_atd, estimate_catd, system_accuracy
from .errors import ConfigError, DeferCausalError
from .falsification import density_test, placebo_outcome_test, placebo_side_test
from .rd import KERNELS, RdEstimate, estimate_rd
from .synthetic import SynthConfig, build_surrogate, generate_synth

log = logging.getLogger(__name__)

SCHEMA = "defer-causal/report/1"
DEFAULT_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
SYSTEMS = ("sp", "cc", "oracle")


def bonferroni_threshold(alpha: float, m: int) -> float:
    """Per-test significance threshold controlling the family-wise error at ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ValueError(f"number of tests must be a positive integer, got {m!r}")
    return alpha / int(m)


def format_pvalue(p: float, digits: int = 3) -> str:
    """Compact scientific notation without exponent padding, e.g. ``7.52e-5``."""
    if p == 0.0:
        return "0"
    if not math.isfinite(p):
        return str(p)
    mant, exp = f"{p:.{digits - 1}e}".split("e")
    return f"{mant}e{int(exp)}"


def format_threshold(threshold: float) -> str:
    return f"< {format_pvalue(threshold)}"


# configuration --------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    """One evaluation run.

    Exactly one data source: ``synth`` (generated, surrogate trained on the
    train split), ``data`` (a pool split into train/validation/test; the
    train part is unused) or ``validation`` plus ``test`` files.
    """

    synth: SynthConfig | None = None
    data: str | None = None
    validation: str | None = None
    test: str | None = None
    schema: ColumnSchema = field(default_factory=ColumnSchema)
    system: str = "sp"
    grid: tuple[float, ...] = DEFAULT_GRID
    level: float = 0.95
    alpha: float = 0.05
    family_size: int | None = None
    scenarios: tuple[str, ...] = ("S1", "S2")
    seed: int = 0
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    groups: tuple[str, ...] = ()
    falsify: bool = True
    placebo_p: float = 0.5
    kernel: str = "triangular"
    bandwidth: float | None = None
    epochs: int = 20
    step: float = 0.1

    def __post_init__(self):
        sources = [self.synth is not None, self.data is not None,
                   self.validation is not None or self.test is not None]
        if sum(sources) != 1:
            raise ConfigError("give exactly one of: synth config, data pool, validation+test files")
        if (self.validation is None) != (self.test is None):
            raise ConfigError("validation and test files must be given together")
        g = [float(c) for c in self.grid]
        if any(not 0.0 <= c <= 1.0 for c in g):
            raise ConfigError(f"grid values must lie in [0, 1], got {g}")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError(f"grid must be strictly increasing, got {g}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"level must lie in (0, 1), got {self.level}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.family_size is not None and self.family_size < 1:
            raise ConfigError(f"family size must be positive, got {self.family_size}")
        bad = set(self.scenarios) - {s.value for s in Scenario}
        if bad or not self.scenarios:
            raise ConfigError(f"scenarios must be a non-empty subset of S1, S2; got {self.scenarios}")
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if len(self.split) != 3 or any(not f > 0 for f in self.split) or abs(sum(self.split) - 1) > 1e-9:
            raise ConfigError(f"split must be three positive fractions summing to 1, got {self.split}")
        if not 0.0 <= self.placebo_p <= 1.0:
            raise ConfigError(f"placebo probability must lie in [0, 1], got {self.placebo_p}")

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable(asdict(self))


# report -----------------------------------------------------------------------


@dataclass
class Report:
    config: dict[str, Any]
    rows: list[dict[str, Any]]
    alpha: float
    m: int
    family_size: int
    threshold: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "config": self.config,
            "globals": {
                "alpha": self.alpha,
                "m": self.m,
                "family_size": self.family_size,
                "threshold": self.threshold,
                "threshold_label": format_threshold(self.threshold),
            },
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Report":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        g = d["globals"]
        return cls(d["config"], d["rows"], g["alpha"], g["m"], g["family_size"], g["threshold"])

    def p_value_cells(self) -> Iterator[dict[str, Any]]:
        for row in self.rows:
            yield from _p_cells(row)


def to_jsonable(x):
    if isinstance(x, float):
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return to_jsonable(x.item())
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, Path):
        return str(x)
    return x


def _ok(payload: dict[str, Any]) -> dict[str, Any]:
    return {"status": "ok", **to_jsonable(payload)}


def _err(exc: Exception) -> dict[str, Any]:
    code = exc.code if isinstance(exc, DeferCausalError) else "invalid_input"
    return {"status": "error", "code": code, "message": str(exc)}


def _skip(code: str, message: str) -> dict[str, Any]:
    return {"status": "skipped", "code": code, "message": message}


def _cell(fn: Callable[[], dict[str, Any]]) -> dict[str, Any]:
    try:
        return _ok(fn())
    except (DeferCausalError, ValueError, ArithmeticError) as exc:
        log.debug("cell failed: %s", exc)
        return _err(exc)


def _rd_payload(r: RdEstimate) -> dict[str, Any]:
    d = r.estimate.to_dict()
    d.update(bandwidth=r.bandwidth.h, bandwidth_method=r.bandwidth.method,
             n_left=r.left.n_effective, n_right=r.right.n_effective,
             left_intercept=r.left.intercept, right_intercept=r.right.intercept)
    return d


def _p_cells(node) -> Iterator[dict[str, Any]]:
    """Every ok cell carrying a p-value, in a fixed traversal order."""
    if isinstance(node, dict):
        if node.get("status") == "ok" and "p_value" in node:
            yield node
            return
        for key in sorted(node):
            yield from _p_cells(node[key])
    elif isinstance(node, list):
        for v in node:
            yield from _p_cells(v)


# data preparation ---------------------------------------------------------------


@dataclass(frozen=True)
class _Prepared:
    validation_scores: np.ndarray
    test: EvaluationDataset
    oracle: Callable[[np.ndarray], float] | None


def _prepare(cfg: PipelineConfig) -> _Prepared:
    if cfg.synth is not None:
        synth = generate_synth(cfg.synth)
        train, val, test = split_indices(cfg.synth.n, cfg.split, cfg.seed)
        sur = build_surrogate(synth, train, cfg.system, cfg.epochs, cfg.step, cfg.seed)
        test_ds = sur.dataset.subset(test)
        h_p = synth.human_correct_prob[test]
        m_p = sur.model_correct_prob[test]

        def oracle(flags: np.ndarray) -> float:
            if not flags.any():
                raise DeferCausalError("no deferred records")
            return float(np.mean(h_p[flags] - m_p[flags]))

        return _Prepared(sur.dataset.scores[val], test_ds, oracle)
    if cfg.data is not None:
        pool = load_dataset(cfg.data, cfg.schema)
        _, val, test = split_indices(len(pool), cfg.split, cfg.seed)
        return _Prepared(pool.scores[val], pool.subset(test), None)
    val_ds = load_dataset(cfg.validation, cfg.schema)
    test_ds = load_dataset(cfg.test, cfg.schema)
    return _Prepared(val_ds.scores, test_ds, None)


# grid evaluation ------------------------------------------------------------------


def _catd_cells(ds: EvaluationDataset, attrs: Sequence[str], level: float) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for attr in attrs:
        try:
            per = estimate_catd(ds, attr, level)
        except (DeferCausalError, ValueError) as exc:
            out[attr] = _err(exc)
            continue
        cells = {}
        for cat, est in per.items():
            if isinstance(est, Unavailable):
                cells[cat] = {"status": "error", "code": "insufficient_data",
                              "message": est.reason, "n_used": est.n_used,
                              "point": est.point}
            else:
                cells[cat] = _ok(est.to_dict())
        out[attr] = cells
    return out


def _evaluate_cutoff(cfg: PipelineConfig, prep: _Prepared, cut: Cutoff) -> dict[str, Any]:
    c = cut.target_coverage
    row: dict[str, Any] = {
        "coverage": c,
        "cutoff": to_jsonable(cut.value),
        "achieved_coverage": {
            "validation": cut.achieved_coverage,
            "test": achieved_coverage(prep.test.scores, cut),
        },
    }
    want_s1 = "S1" in cfg.scenarios
    want_s2 = "S2" in cfg.scenarios
    try:
        ds = apply_policy(prep.test, cut)
    except DeferCausalError as exc:
        cell = _err(exc)
        row.update(n_test=len(prep.test), n_deferred=None, accuracy=cell)
        if want_s1:
            row.update(atd=cell, catd={a: cell for a in cfg.groups})
            if prep.oracle is not None:
                row["oracle_atd"] = cell
        if want_s2:
            row["rd"] = cell if c > 0 else _skip("atd_only_coverage", "zero coverage appears in ATD grids only")
            if cfg.falsify:
                row["falsification"] = {k: cell for k in
                                        ("placebo_low", "placebo_high", "placebo_outcome", "density")}
        return row

    row["n_test"] = len(ds)
    row["n_deferred"] = ds.n_deferred
    row["accuracy"] = _cell(lambda: {"value": system_accuracy(ds)})

    if want_s1:
        if ds.scenario1_capable:
            row["atd"] = _cell(lambda: estimate_atd(ds, cfg.level).to_dict())
            row["catd"] = _catd_cells(ds, cfg.groups, cfg.level)
        else:
            note = {"status": "error", "code": "unavailable_scenario",
                    "message": "unavailable: scenario (model predictions missing on deferred records)"}
            row["atd"] = note
            row["catd"] = {a: note for a in cfg.groups}
        if prep.oracle is not None:
            row["oracle_atd"] = _cell(lambda: {"value": prep.oracle(ds.deferred)})

    if want_s2:
        if c == 0.0:
            row["rd"] = _skip("atd_only_coverage", "zero coverage appears in ATD grids only")
            if cfg.falsify:
                row["falsification"] = {k: _skip("atd_only_coverage", "no RD at zero coverage")
                                        for k in ("placebo_low", "placebo_high", "placebo_outcome", "density")}
        else:
            rd_box: list[RdEstimate] = []

            def rd():
                r = estimate_rd(ds, cut.value, cfg.bandwidth, cfg.level, cfg.kernel)
                rd_box.append(r)
                return _rd_payload(r)

            row["rd"] = _cell(rd)
            if cfg.falsify:
                row["falsification"] = _falsify(cfg, ds, cut.value, rd_box[0] if rd_box else None)
    return row


def _falsify(cfg: PipelineConfig, ds: EvaluationDataset, cutoff: float,
             rd: RdEstimate | None) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for side in ("low", "high"):
        def run(side=side):
            at, r = placebo_side_test(ds, cutoff, side, cfg.level, cfg.kernel)
            return {**_rd_payload(r), "placebo_cutoff": at}
        out[f"placebo_{side}"] = _cell(run)
    out["placebo_outcome"] = _cell(lambda: _rd_payload(
        placebo_outcome_test(ds, cutoff, cfg.placebo_p, cfg.seed, cfg.level, cfg.kernel)))
    window = rd.bandwidth.h if rd is not None else None
    out["density"] = _cell(lambda: density_test(ds.scores, cutoff, window).to_dict())
    return out


def run_pipeline(cfg: PipelineConfig) -> Report:
    """Run the full grid; deterministic given the config and its seeds."""
    prep = _prepare(cfg)
    cuts = coverage_grid(prep.validation_scores, cfg.grid)
    rows = []
    for cut in cuts:
        log.info("coverage %.2f: cutoff %s", cut.target_coverage, cut.value)
        rows.append(_evaluate_cutoff(cfg, prep, cut))
    return _finalize(cfg, rows)


def _finalize(cfg: PipelineConfig, rows: list[dict[str, Any]]) -> Report:
    cells = [c for row in rows for c in _p_cells(row)]
    m = len(cells)
    family = cfg.family_size if cfg.family_size is not None else max(m, 1)
    threshold = bonferroni_threshold(cfg.alpha, family)
    for c in cells:
        c["significant"] = bool(c["p_value"] < threshold)
    return Report(cfg.to_dict(), rows, cfg.alpha, m, family, threshold)


# emission ---------------------------------------------------------------------------


def report_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt_estimate(cell: dict[str, Any] | None) -> str:
    if cell is None:
        return "-"
    if cell["status"] != "ok":
        return f"[{cell['code']}]"
    star = "*" if cell.get("significant") else ""
    return f"{cell['point']:.3f} ({format_pvalue(cell['p_value'])}){star}"


def report_table(report: Report) -> str:
    """One line per grid coverage: cutoff, accuracy, ATD and RD with p-values.

    ``*`` marks p-values below the Bonferroni threshold.
    """
    header = ["c", "cutoff", "accuracy", "ATD (p)", "RD (p)"]
    lines = []
    for row in report.rows:
        acc = row.get("accuracy")
        acc_s = f"{acc['value']:.3f}" if acc and acc["status"] == "ok" else _fmt_estimate(acc)
        cut = row["cutoff"]
        cut_s = cut if isinstance(cut, str) else f"{cut:.4g}"
        lines.append([f"{row['coverage']:.2f}", cut_s, acc_s,
                      _fmt_estimate(row.get("atd")), _fmt_estimate(row.get("rd"))])
    widths = [max(len(r[i]) for r in [header, *lines]) for i in range(len(header))]
    out = io.StringIO()
    for r in [header, *lines]:
        out.write("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() + "\n")
    out.write(f"m = {report.m}, family size = {report.family_size}, "
              f"alpha = {report.alpha:g}, threshold {format_threshold(report.threshold)}\n")
    return out.getvalue()


def emit_report(report: Report, fmt: str = "json", sink: IO[bytes] | str | os.PathLike | None = None) -> bytes:
    """Serialise ``report`` as ``json`` or ``table``; also write to ``sink`` when given."""
    if fmt == "json":
        data = report_json(report).encode()
    elif fmt == "table":
        data = report_table(report).encode()
    else:
        raise ValueError(f"unknown report format {fmt!r}; expected json or table")
    if sink is not None:
        if isinstance(sink, (str, os.PathLike)):
            Path(sink).write_bytes(data)
        else:
            sink.write(data)
    return data


def _ok_estimate_rows(report: Report, key: str) -> list[list[Any]]:
    out = []
    for row in report.rows:
        cell = row.get(key)
        if cell and cell["status"] == "ok":
            out.append([row["coverage"], cell["point"], cell["ci_low"], cell["ci_high"], cell["p_value"]])
    return out


def emit_plotdata(report: Report, directory: str | os.PathLike) -> dict[str, Path]:
    """Write one CSV per figure panel into ``directory``; returns panel name to path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    acc = [[r["coverage"], r["accuracy"]["value"]] for r in report.rows
           if r.get("accuracy", {}).get("status") == "ok"]
    dens = []
    for r in report.rows:
        cell = r.get("falsification", {}).get("density")
        if cell and cell["status"] == "ok":
            dens.extend([r["coverage"], lo, hi, n] for lo, hi, n in cell["histogram"])
    tables = {
        "accuracy": (["c", "accuracy"], acc),
        "atd": (["c", "point", "lo", "hi", "p"], _ok_estimate_rows(report, "atd")),
        "rd": (["c", "point", "lo", "hi", "p"], _ok_estimate_rows(report, "rd")),
        "density": (["c", "bin_low", "bin_high", "count"], dens),
    }
    paths = {}
    for name, (header, rows) in tables.items():
        path = d / f"{name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows([repr(v) if isinstance(v, float) else v for v in row] for row in rows)
        paths[name] = path
    return paths
