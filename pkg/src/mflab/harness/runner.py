"""Run experiments, write artifacts atomically, and emit plot data."""

from __future__ import annotations

import csv
import io
import json
import os
import platform
import tempfile
from dataclasses import dataclass, field

import numpy as np
import scipy

from .config import ExperimentConfig, config_hash
from .experiments import EXPERIMENT_FUNCS, ArtifactMismatchError, RunContext
from ..quantum import ResourceCapError

__all__ = [
    "ExperimentReport",
    "METRIC_COLUMNS",
    "run_experiment",
    "emit_plots",
    "read_metrics",
    "verdicts_from_metrics",
    "ArtifactMismatchError",
]

METRIC_COLUMNS = ("experiment", "check", "label", "t", "N", "lhs", "rhs", "tol", "pass", "gate", "anchor")
HASH_PREFIX = "# config_hash="


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    config_hash: str
    metrics: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)

    @property
    def gated(self) -> list:
        return [r for r in self.metrics if r["gate"]]

    @property
    def violations(self) -> list:
        return [r for r in self.gated if not r["pass"]]

    @property
    def passed(self) -> bool:
        return not self.failures and not self.violations and bool(self.gated)

    def verdicts(self) -> dict:
        """check name -> (rows, violations) over gated rows."""
        out: dict = {}
        for r in self.gated:
            n, v = out.get(r["check"], (0, 0))
            out[r["check"]] = (n + 1, v + (not r["pass"]))
        return out

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "config": self.config,
            "provenance": self.provenance,
            "passed": self.passed,
            "verdicts": {k: {"rows": n, "violations": v} for k, (n, v) in sorted(self.verdicts().items())},
            "info": _jsonable(self.info),
            "warnings": self.warnings,
            "failures": self.failures,
            "artifacts": self.artifacts,
            "metrics": self.metrics,
        }

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"{HASH_PREFIX}{self.config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in self.metrics:
            w.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _provenance(cfg: ExperimentConfig, h: str) -> dict:
    from .. import __version__

    return {"config_hash": h, "seed": cfg.seed, "experiment": cfg.experiment,
            "versions": {"mflab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()}}


# --- atomic writes --------------------------------------------------------

def _atomic_write(path: str, writer) -> None:
    """Call writer(tmp) on a temporary file in the target directory, then rename it into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: str, text: str) -> None:
    def w(p):
        with open(p, "w", newline="") as fh:
            fh.write(text)
    _atomic_write(path, w)


def _stamped_writer(writer, h: str, is_json: bool):
    """Wrap an artifact writer so the output carries the config hash."""
    def w(p):
        writer(p)
        with open(p) as fh:
            body = fh.read()
        if is_json:
            data = json.loads(body)
            data["config_hash"] = h
            body = json.dumps(data, indent=2, sort_keys=True) + "\n"
        else:
            body = f"{HASH_PREFIX}{h}\n{body}"
        with open(p, "w", newline="") as fh:
            fh.write(body)
    return w


def artifact_hash(path: str) -> str | None:
    """Config hash recorded in an artifact, or None when it has none."""
    with open(path) as fh:
        if path.endswith(".json"):
            try:
                return json.load(fh).get("config_hash")
            except (json.JSONDecodeError, AttributeError):
                return None
        first = fh.readline().strip()
    return first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else None


def _check_resume(out_dir: str, h: str) -> None:
    report = os.path.join(out_dir, "report.json")
    if os.path.exists(report):
        old = artifact_hash(report)
        if old != h:
            raise ArtifactMismatchError(
                f"{out_dir} holds results of config {str(old)[:12]}, not {h[:12]}; choose another --out")


# --- running --------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None, jobs: int = 1,
                   write: bool = True, cache_dir: str | None = None) -> ExperimentReport:
    """Run one experiment; with ``write`` the artifacts go to ``out_dir`` (default cfg.output_dir).

    Numerical failures inside the experiment are recorded in the report along
    with the rows computed so far. Resource-cap errors propagate.
    """
    h = config_hash(cfg)
    out_dir = cfg.output_dir if out_dir is None else out_dir
    if write:
        os.makedirs(out_dir, exist_ok=True)
        _check_resume(out_dir, h)
    cache_dir = os.environ.get("MFLAB_CACHE") if cache_dir is None else cache_dir
    ctx = RunContext(jobs=max(1, int(jobs)), config_hash=h, cache_dir=cache_dir or None)
    report = ExperimentReport(cfg.experiment, cfg.to_dict(), h, provenance=_provenance(cfg, h))
    try:
        EXPERIMENT_FUNCS[cfg.experiment](cfg, ctx)
    except (ResourceCapError, ArtifactMismatchError):
        raise
    except (ValueError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        report.failures.append(f"{type(exc).__name__}: {exc}")
    report.metrics = ctx.rows
    report.series = ctx.series
    report.info = ctx.info
    if not ctx.rows:
        report.warnings.append("experiment produced no metrics")
    if write:
        for name, writer in sorted(ctx.artifacts.items()):
            path = os.path.join(out_dir, name)
            _atomic_write(path, _stamped_writer(writer, h, name.endswith(".json")))
            report.artifacts.append(name)
        report.artifacts += emit_plots(report, out_dir)
        _write_text(os.path.join(out_dir, "metrics.csv"), report.metrics_csv())
        report.artifacts.append("metrics.csv")
        _write_text(os.path.join(out_dir, "report.json"),
                    json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report


def emit_plots(report: ExperimentReport, out_dir: str) -> list[str]:
    """Plain-text plot data (x y yerr blocks, one per curve) plus plots/plots.json.

    Returns the written paths relative to ``out_dir``. An empty report writes
    nothing and records a warning.
    """
    if not report.metrics or not report.series:
        report.warnings.append("no metrics to plot; no plot files written")
        return []
    pdir = os.path.join(out_dir, "plots")
    os.makedirs(pdir, exist_ok=True)
    figures = []
    written = []
    for name, fig in sorted(report.series.items()):
        lines = [f"{HASH_PREFIX}{report.config_hash}", f"# {fig['title']}"]
        if fig["annotation"]:
            lines.append(f"# {fig['annotation']}")
        curves = []
        for i, c in enumerate(fig["curves"]):
            if i:
                lines += ["", ""]
            lines.append(f"# curve {i}: {c['label']}")
            lines.append("# x y yerr")
            lines += [f"{x!r} {y!r} {e!r}" for x, y, e in zip(c["x"], c["y"], c["yerr"])]
            curves.append({"index": i, "label": c["label"], "columns": ["x", "y", "yerr"]})
        fname = f"{name}.dat"
        _write_text(os.path.join(pdir, fname), "\n".join(lines) + "\n")
        written.append(os.path.join("plots", fname))
        figures.append({"name": name, "file": fname, "title": fig["title"], "xlabel": fig["xlabel"],
                        "ylabel": fig["ylabel"], "logx": fig["logx"], "logy": fig["logy"],
                        "annotation": fig["annotation"], "curves": curves})
    desc = {"config_hash": report.config_hash, "experiment": report.experiment, "figures": figures}
    _write_text(os.path.join(pdir, "plots.json"), json.dumps(desc, indent=2, sort_keys=True) + "\n")
    written.append(os.path.join("plots", "plots.json"))
    return written


# --- reading back ---------------------------------------------------------

def read_metrics(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for r in csv.DictReader(lines):
        for c in ("lhs", "rhs", "tol"):
            r[c] = float(r[c])
        r["pass"] = r["pass"] == "true"
        r["gate"] = r["gate"] == "true"
        rows.append(r)
    return rows


def verdicts_from_metrics(path: str) -> dict:
    """Recompute every verdict from the metrics table alone.

    Returns {"rows": [...recomputed pass flags...], "passed": bool, "consistent": bool}
    where ``consistent`` says the stored flags agree with the recomputation.
    """
    rows = read_metrics(path)
    recomputed = [r["lhs"] <= r["rhs"] + r["tol"] for r in rows]
    gated = [p for p, r in zip(recomputed, rows) if r["gate"]]
    return {"rows": recomputed, "passed": bool(gated) and all(gated),
            "consistent": all(p == r["pass"] for p, r in zip(recomputed, rows))}
