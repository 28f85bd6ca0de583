"""End-to-end experiments: predictions, Monte Carlo comparison and reports.

Seeds: the batch for grid point ``i`` and replication ``r`` of a study with
experiment seed ``S`` uses ``derive_seed(S, i, r)``, the first 64-bit word of
``numpy.random.SeedSequence([S, i, r])``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .action import exit_point, solve_m
from .chain import sigma_law
from .errors import AmbiguousMinimizerError, ExitlabError, SimulationBudgetError
from .sde import ExitBatch, SimConfig, simulate_batch


def derive_seed(seed, *ids):
    return int(np.random.SeedSequence([int(seed), *map(int, ids)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class Prediction:
    m: np.ndarray
    x: np.ndarray
    law: object
    exit_law: dict
    ambiguous: tuple = ()

    def to_dict(self):
        return {
            "m": [float(v) for v in self.m],
            "x": [[float(c) for c in p] for p in self.x],
            "atoms": [{"location": a.location, "mass": a.mass} for a in self.law.atoms],
            "continuous_mass": self.law.continuous_mass,
            "exit_state_probs": [float(p) for p in self.law.exit_probs],
            "ambiguous_exit_states": [k + 1 for k in self.ambiguous],
            "exit_point_law": [
                {"state": k + 1, "x": [float(c) for c in self.x[k]], "prob": float(p)} for k, p in self.exit_law.items()
            ],
        }


def predict(model, lambda_grid=None, allow_ambiguous=False, **boundary_kwargs):
    """Roots ``m^k``, exit points ``x^k`` and the law of ``sigma`` for ``model``.

    A non-unique boundary minimizer raises :class:`AmbiguousMinimizerError`
    unless ``allow_ambiguous`` is set; then that state gets a NaN exit point
    and is listed in ``ambiguous`` (the law of ``sigma`` does not need it).
    """
    ms, xs, ambiguous = [], [], []
    for k in range(model.states):
        root = solve_m(model, k, lambda_grid, **boundary_kwargs)
        ms.append(root.m)
        try:
            xs.append(exit_point(model, k, root=root, **boundary_kwargs).x)
        except AmbiguousMinimizerError:
            if not allow_ambiguous:
                raise
            xs.append(np.full(model.dimension, np.nan))
            ambiguous.append(k)
    m = np.array(ms)
    law = sigma_law(model.chain, m)
    exit_law = {k: float(law.exit_probs[k]) for k in range(model.states)}
    return Prediction(m, np.array(xs), law, exit_law, tuple(ambiguous))


def ks_distance(samples, law, censored=None):
    """Sup distance between the empirical CDF of ``samples`` and ``law.cdf``.

    Both one-sided limits are compared at every sample and every atom, which
    gives the exact supremum for a law that is continuous between atoms.
    Censored samples stay in the sample at their recorded value.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("ks_distance needs at least one sample")
    if censored is not None and np.all(censored):
        raise ExitlabError("all samples are censored")
    n = x.size
    pts = np.unique(np.concatenate([x, law.atom_locations()]))
    right = np.searchsorted(x, pts, side="right") / n
    left = np.searchsorted(x, pts, side="left") / n
    d = np.maximum(np.abs(right - law.cdf(pts)), np.abs(left - law.cdf_left(pts)))
    return float(d.max())


def levy_distance(samples, law, tol=1e-6):
    """Levy distance between the empirical law of ``samples`` and ``law``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    atoms = law.atom_locations()

    def ok(h):
        Fn_right = np.arange(1, n + 1) / n
        Fn_left = np.arange(0, n) / n
        if np.any(Fn_right > law.cdf(x + h) + h + 1e-15):
            return False
        if np.any(law.cdf_left(x - h) - h > Fn_left + 1e-15):
            return False
        a_right = np.searchsorted(x, atoms + h, side="right") / n
        return not np.any(law.cdf(atoms) - h > a_right + 1e-15)

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class ExitPointStats:
    hit_rate: float
    per_state_hit: dict
    confusion: np.ndarray
    agreement: float
    n: int


def exit_point_stats(samples, prediction, eta):
    """Hit rates of exits within ``eta`` of the predicted point of their exit state.

    Censored samples and exits in states without a predicted point are skipped.

    ``samples`` is an :class:`ExitBatch` or a list of ``ExitSample``;
    ``prediction`` is a :class:`Prediction` or an ``(s, d)`` array of points.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if isinstance(samples, ExitBatch):
        keep = ~samples.censored
        pts, states = samples.exit_point[keep], samples.state[keep]
    else:
        kept = [s for s in samples if not s.censored]
        pts = np.array([s.exit_point for s in kept]).reshape(len(kept), -1)
        states = np.array([s.state for s in kept], dtype=int)
    targets = np.asarray(prediction.x if isinstance(prediction, Prediction) else prediction, dtype=float)
    s = targets.shape[0]
    confusion = np.zeros((s, s), dtype=int)
    defined = np.all(np.isfinite(targets[states]), axis=1) if states.size else np.zeros(0, dtype=bool)
    pts, states = pts[defined], states[defined]
    if pts.shape[0] == 0:
        return ExitPointStats(math.nan, {}, confusion, math.nan, 0)
    dist = np.linalg.norm(pts - targets[states], axis=1)
    hit = dist <= eta
    gaps = np.linalg.norm(pts[:, None, :] - targets[None], axis=2)
    nearest = np.argmin(np.where(np.isfinite(gaps), gaps, np.inf), axis=1)
    np.add.at(confusion, (states, nearest), 1)
    per_state = {int(k): float(hit[states == k].mean()) for k in np.unique(states)}
    return ExitPointStats(float(hit.mean()), per_state, confusion, float(np.mean(nearest == states)), int(hit.size))


@dataclass
class ComparisonReport:
    eps: list
    n: int
    eta: float
    replications: int
    ks: list = field(default_factory=list)  # per eps: list over replications
    levy: list = field(default_factory=list)
    hit: list = field(default_factory=list)
    censored: list = field(default_factory=list)
    mean_lambda_hat: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    gaps: list = field(default_factory=list)
    law_grid: Optional[np.ndarray] = None
    law_cdf: Optional[np.ndarray] = None
    empirical: list = field(default_factory=list)  # first replication's lambda_hat per eps
    exits: list = field(default_factory=list)  # first replication's batch per eps
    prediction: Optional[Prediction] = None

    @property
    def ks_median(self):
        return [float(np.median(v)) for v in self.ks]

    @property
    def hit_median(self):
        return [float(np.nanmedian(v)) if np.any(np.isfinite(v)) else math.nan for v in self.hit]

    @property
    def levy_median(self):
        return [float(np.median(v)) for v in self.levy]

    def to_dict(self):
        return {
            "eps": [float(e) for e in self.eps[: len(self.ks)]],
            "n": self.n,
            "eta": self.eta,
            "replications": self.replications,
            "ks": [[float(v) for v in row] for row in self.ks],
            "ks_median": self.ks_median,
            "levy_median": self.levy_median,
            "hit_rate": [[float(v) for v in row] for row in self.hit],
            "hit_median": self.hit_median,
            "censored": [[int(v) for v in row] for row in self.censored],
            "mean_lambda_hat": [[float(v) for v in row] for row in self.mean_lambda_hat],
            "verdicts": self.verdicts,
            "gaps": self.gaps,
            "prediction": self.prediction.to_dict() if self.prediction is not None else None,
        }


def _trend(values, direction):
    if len(values) < 2 or not np.all(np.isfinite(values)):
        return None
    diffs = np.diff(values)
    return bool(np.all(diffs <= 0)) if direction == "down" else bool(np.all(diffs >= 0))


def run_convergence_study(
    model,
    eps_grid,
    n,
    seed,
    eta=0.2,
    replications=5,
    h=0.01,
    prediction=None,
    x0=None,
):
    """Full-process Monte Carlo at each eps compared with the predicted limit.

    Verdicts: median KS nonincreasing and median hit rate nondecreasing along
    ``eps_grid`` (which must be sorted descending).  States without a unique
    predicted exit point are left out of the hit rates.  ``None`` marks a trend
    that is undefined (a single eps); ``low_power`` flags tiny samples.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(a < b for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps_grid must be sorted in descending order")
    if prediction is None:
        prediction = predict(model, allow_ambiguous=True)
    law = prediction.law
    grid = np.linspace(0.0, model.Lambda, 401)
    report = ComparisonReport(eps=eps_grid, n=n, eta=eta, replications=replications, prediction=prediction)
    report.law_grid, report.law_cdf = grid, law.cdf(grid)
    for i, eps in enumerate(eps_grid):
        ks_row, levy_row, hit_row, cens_row, mean_row = [], [], [], [], []
        try:
            for r in range(replications):
                cfg = SimConfig(eps=eps, h=h, x0=x0, seed=derive_seed(seed, i, r))
                batch = simulate_batch(model, cfg, n, "full")
                ks_row.append(ks_distance(batch.lambda_hat, law))
                levy_row.append(levy_distance(batch.lambda_hat, law))
                hit_row.append(exit_point_stats(batch, prediction, eta).hit_rate)
                cens_row.append(int(batch.censored.sum()))
                mean_row.append(float(batch.lambda_hat.mean()))
                if r == 0:
                    report.empirical.append(np.sort(batch.lambda_hat))
                    report.exits.append(batch)
        except SimulationBudgetError as exc:
            report.gaps.append({"eps": eps, "reason": str(exc), "diagnostics": exc.diagnostics})
            break
        report.ks.append(ks_row)
        report.levy.append(levy_row)
        report.hit.append(hit_row)
        report.censored.append(cens_row)
        report.mean_lambda_hat.append(mean_row)
    report.verdicts = {
        "ks_nonincreasing": _trend(report.ks_median, "down"),
        "hit_nondecreasing": _trend(report.hit_median, "up"),
        "low_power": bool(n < 100 or replications < 3),
        "complete": not report.gaps,
    }
    return report


def jsonable(obj):
    """Plain JSON types with non-finite floats mapped to ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _fmt(v):
    return repr(float(v))


def emit_plot_data(report, path):
    """Write ``cdf_overlay.csv`` and ``cdf_overlay.svg`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    eps = [e for e in report.eps[: len(report.empirical)]]
    header = ["lambda", "law_cdf"] + [f"emp_eps_{e:g}" for e in eps]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    curves = []
    if report.law_grid is not None:
        grid = report.law_grid
        for emp in report.empirical:
            curves.append(np.searchsorted(emp, grid, side="right") / max(emp.size, 1))
        for j, lam in enumerate(grid):
            w.writerow([_fmt(lam), _fmt(report.law_cdf[j])] + [_fmt(c[j]) for c in curves])
    (out / "cdf_overlay.csv").write_text(buf.getvalue())
    (out / "cdf_overlay.svg").write_text(_svg(report, curves, eps))
    return out / "cdf_overlay.csv", out / "cdf_overlay.svg"


_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]


def _svg(report, curves, eps, width=640, height=400, pad=50):
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">lambda</text>',
        f'<text x="14" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 14 {height / 2:.1f})">CDF</text>',
    ]
    if report.law_grid is not None and report.law_grid.size:
        grid = report.law_grid
        x0, x1 = float(grid[0]), float(grid[-1]) if grid[-1] > grid[0] else float(grid[0]) + 1.0

        def pts(vals):
            xs = pad + (grid - x0) / (x1 - x0) * (width - 2 * pad)
            ys = height - pad - np.asarray(vals) * (height - 2 * pad)
            return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))

        lines.append(f'<polyline fill="none" stroke="black" stroke-width="2" points="{pts(report.law_cdf)}"/>')
        for j, c in enumerate(curves):
            color = _COLORS[j % len(_COLORS)]
            lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts(c)}"/>')
            lines.append(
                f'<text x="{width - pad - 80}" y="{pad + 14 * (j + 1)}" font-size="11" fill="{color}">eps={eps[j]:g}</text>'
            )
        lines.append(f'<text x="{width - pad - 80}" y="{pad}" font-size="11">limit law</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_study_outputs(report, path):
    """``summary.json``, the CDF overlay files and ``exit_points.csv``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n")
    emit_plot_data(report, out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "idx", "censored", "x1", "x2", "exit_state", "pred_x1", "pred_x2", "hit"])
    pred = report.prediction
    for eps, batch in zip(report.eps, report.exits):
        for i in range(len(batch)):
            p = batch.exit_point[i]
            q = pred.x[batch.state[i]] if pred is not None else np.full(p.size, np.nan)
            hit = (not batch.censored[i]) and float(np.linalg.norm(p - q)) <= report.eta
            w.writerow([_fmt(eps), int(batch.index[i]), int(batch.censored[i]), _fmt(p[0]), _fmt(p[1] if p.size > 1 else 0.0),
                        int(batch.state[i]) + 1, _fmt(q[0]), _fmt(q[1] if q.size > 1 else 0.0), int(hit)])
    (out / "exit_points.csv").write_text(buf.getvalue())
    return out
