"""Maneuver indicators built on the alpha_x -> alpha_z confidence curve.

``alpha_z(alpha_x)`` is the chi-square confidence of the closest observation
reachable from the state confidence region of level ``alpha_x``. The single
indicator compares it with ``alpha_x``; the integrated indicator ``P`` is its
area over [0, 1], computed on a dense grid or on adaptively chosen samples.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .observation import MeasurementExpansion, ObservationSet
from .rpo import closest_point_special, rpo_solve
from .stats import ConfidenceBudget, GaussianState, chi2_cdf

MODES = ("single", "integrated-dense", "integrated-adaptive")
MONOTONE_SLACK = 1e-6


class DetectionError(RuntimeError):
    """The detection pipeline could not produce a trustworthy answer."""


@dataclass(frozen=True)
class CurveSample:
    alpha_x: float
    alpha_z: float
    m_z: float
    solver_iterations: int = 0


@dataclass(frozen=True)
class CdmiCurve:
    samples: tuple[CurveSample, ...]

    def __post_init__(self):
        s = tuple(sorted(self.samples, key=lambda c: c.alpha_x))
        xs = [c.alpha_x for c in s]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError(f"curve abscissae must be distinct, got {xs}")
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def alpha_x(self) -> np.ndarray:
        return np.array([c.alpha_x for c in self.samples])

    @property
    def alpha_z(self) -> np.ndarray:
        return np.array([c.alpha_z for c in self.samples])

    def monotone_violations(self, slack: float = MONOTONE_SLACK) -> list[tuple[float, float]]:
        """Pairs ``(alpha_x, alpha_x')`` where alpha_z rises by more than ``slack``."""
        out = []
        best = math.inf
        best_x = None
        for c in self.samples:
            if c.alpha_z > best + slack:
                out.append((best_x, c.alpha_x))
            if c.alpha_z < best:
                best, best_x = c.alpha_z, c.alpha_x
        return out

    def csv_rows(self, case_id: str) -> list[str]:
        return [f"{case_id},{c.alpha_x:.17g},{c.alpha_z:.17g},{c.m_z:.17g},{c.solver_iterations}"
                for c in self.samples]


CURVE_CSV_HEADER = "case_id,alpha_x,alpha_z,m_z,iterations"


@dataclass
class DetectionReport:
    mode: str
    flag: bool
    curve: CdmiCurve
    P: float | None = None
    alpha_x_used: float | None = None
    threshold: float | None = None
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_json(self, include_timings: bool = True) -> dict:
        doc = {
            "mode": self.mode,
            "flag": bool(self.flag),
            "P": self.P,
            "alpha_x_used": self.alpha_x_used,
            "threshold": self.threshold,
            "n_samples": len(self.curve),
            "curve": [{"alpha_x": c.alpha_x, "alpha_z": c.alpha_z, "m_z": c.m_z,
                       "iterations": c.solver_iterations} for c in self.curve.samples],
            "diagnostics": self.diagnostics,
        }
        if include_timings:
            doc["timings"] = self.timings
        return doc


@dataclass(frozen=True)
class CdmiCase:
    """Everything needed to evaluate alpha_z for one detection problem."""
    meas: MeasurementExpansion
    obs: ObservationSet
    prior: GaussianState
    eta: float = 1e-6
    max_iter: int = 50
    half: bool = True
    case_id: str = "case"
    trace: bool = False

    @property
    def dof(self) -> int:
        return len(self.obs.z)


def alpha_z_at(alpha_x: float, case: CdmiCase, traces: list | None = None) -> CurveSample:
    if not 0.0 <= alpha_x <= 1.0:
        raise ValueError(f"alpha_x must lie in [0, 1], got {alpha_x}")
    if alpha_x in (0.0, 1.0):
        _, m_z = closest_point_special(alpha_x, case.meas, case.obs, case.half)
        its = 0
    else:
        res = rpo_solve(case.meas, case.obs, case.prior, ConfidenceBudget.from_alpha(alpha_x),
                        case.eta, case.max_iter, case.half)
        if traces is not None:
            traces.append({"alpha_x": alpha_x, "iterations": res.trace})
        if not res.converged:
            raise DetectionError(f"{case.case_id}: closest-point iteration did not converge at "
                                 f"alpha_x={alpha_x} after {res.iterations} iterations "
                                 f"(last step {res.trace[-1]['step_norm']:.3e})")
        m_z, its = res.m_z, res.iterations
    return CurveSample(float(alpha_x), chi2_cdf(m_z, case.dof), float(m_z), its)


def trapezoid(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Composite trapezoid over (possibly non-uniform) sorted abscissae."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need at least two matching samples")
    return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))


def _finish(mode, curve, threshold, case, t_start, traces, **extra) -> DetectionReport:
    violations = curve.monotone_violations()
    diag = {"monotone_violations": len(violations)}
    if violations:
        diag["violating_pairs"] = violations
    if traces is not None:
        diag["trace"] = traces
    P = extra.pop("P", None)
    return DetectionReport(mode, extra.pop("flag"), curve, P=P, threshold=threshold, diagnostics=diag,
                           timings={"detect_s": time.perf_counter() - t_start}, **extra)


def cdmi_single(alpha_x: float, case: CdmiCase) -> DetectionReport:
    """Flag when the observation confidence exceeds the chosen state confidence."""
    t = time.perf_counter()
    traces = [] if case.trace else None
    s = alpha_z_at(alpha_x, case, traces)
    flag = False if alpha_x == 1.0 else s.alpha_z > alpha_x
    return _finish("single", CdmiCurve((s,)), None, case, t, traces, flag=flag, alpha_x_used=float(alpha_x))


def dense_grid(grid_step: float) -> np.ndarray:
    n = round(1.0 / grid_step)
    if n < 1 or abs(n * grid_step - 1.0) > 1e-9:
        raise ValueError(f"grid step {grid_step} does not divide [0, 1] evenly")
    return np.arange(n + 1) / n


def integrate_dense(case: CdmiCase, grid_step: float = 0.01, threshold: float = 0.5) -> DetectionReport:
    t = time.perf_counter()
    traces = [] if case.trace else None
    curve = CdmiCurve(tuple(alpha_z_at(float(a), case, traces) for a in dense_grid(grid_step)))
    P = trapezoid(curve.alpha_x, curve.alpha_z)
    return _finish("integrated-dense", curve, threshold, case, t, traces, flag=P >= threshold, P=P)


def adaptive_samples(f: Callable[[float], float], eps1: float = 0.01, eps2: float = 0.02,
                     max_samples: int = 64, narrow: str = "skip") -> tuple[list[float], list[float]]:
    """Refine the seeds {0, 0.5, 1} where the curve departs most from linear.

    Each interior sample is checked against the chord through its neighbours.
    A triple whose two gaps are both within ``eps2`` cannot be refined further:
    with ``narrow="skip"`` it is set aside and the next-worst triple is used,
    with ``narrow="stop"`` sampling ends as soon as the worst triple is narrow.
    Returns the sorted abscissae and values; ``f`` is called once per point.
    """
    if not (eps1 > 0 and eps2 > 0):
        raise ValueError(f"thresholds must be positive, got eps1={eps1}, eps2={eps2}")
    if narrow not in ("skip", "stop"):
        raise ValueError(f"narrow must be 'skip' or 'stop', got {narrow!r}")
    xs = [0.0, 0.5, 1.0]
    ys = [f(x) for x in xs]
    while True:
        errs = []
        for i in range(len(xs) - 2):
            x0, x1, x2 = xs[i:i + 3]
            y0, y1, y2 = ys[i:i + 3]
            errs.append(abs(y0 + (y2 - y0) * (x1 - x0) / (x2 - x0) - y1))
        # stable order: largest error first, leftmost on ties
        order = sorted(range(len(errs)), key=lambda k: -errs[k])
        target = None
        for i in order:
            if errs[i] <= eps1:
                break
            if xs[i + 1] - xs[i] <= eps2 and xs[i + 2] - xs[i + 1] <= eps2:
                if narrow == "stop":
                    break
                continue
            target = i
            break
        if target is None:
            break
        if len(xs) >= max_samples:
            raise DetectionError(f"adaptive sampling reached the cap of {max_samples} samples "
                                 f"(interpolation error {errs[target]:.3e} at alpha_x={xs[target + 1]})")
        i = target
        j = i if abs(ys[i + 1] - ys[i]) >= abs(ys[i + 2] - ys[i + 1]) else i + 1
        x_new = 0.5 * (xs[j] + xs[j + 1])
        y_new = f(x_new)
        xs.insert(j + 1, x_new)
        ys.insert(j + 1, y_new)
    return xs, ys


def integrate_adaptive(case: CdmiCase, eps1: float = 0.01, eps2: float = 0.02, threshold: float = 0.5,
                       max_samples: int = 64, narrow: str = "skip") -> DetectionReport:
    t = time.perf_counter()
    traces = [] if case.trace else None
    samples = {}

    def f(a):
        samples[a] = alpha_z_at(a, case, traces)
        return samples[a].alpha_z

    xs, ys = adaptive_samples(f, eps1, eps2, max_samples, narrow)
    curve = CdmiCurve(tuple(samples[x] for x in xs))
    P = trapezoid(xs, ys)
    return _finish("integrated-adaptive", curve, threshold, case, t, traces, flag=P >= threshold, P=P)


def detect(case: CdmiCase, mode: str, alpha_x: float | None = None, grid_step: float = 0.01,
           eps1: float = 0.01, eps2: float = 0.02, threshold: float = 0.5, narrow: str = "skip") -> DetectionReport:
    if mode == "single":
        if alpha_x is None:
            raise ValueError("single mode needs alpha_x")
        return cdmi_single(alpha_x, case)
    if alpha_x is not None:
        raise ValueError(f"alpha_x is only meaningful in single mode, not {mode}")
    if mode == "integrated-dense":
        return integrate_dense(case, grid_step, threshold)
    if mode == "integrated-adaptive":
        return integrate_adaptive(case, eps1, eps2, threshold, narrow=narrow)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def threshold_sweep(p_values: Sequence[float], maneuvered: Sequence[bool], thresholds: Sequence[float]) -> list[dict]:
    """Accuracy per class and overall when the integrated indicator is cut at each threshold."""
    p = np.asarray(p_values, dtype=float)
    m = np.asarray(maneuvered, dtype=bool)
    if p.size == 0 or p.shape != m.shape:
        raise ValueError("need a non-empty campaign with one class label per P value")
    rows = []
    for th in thresholds:
        flags = p >= th
        correct = flags == m
        rows.append({
            "threshold": float(th),
            "accuracy_non_maneuver": float(np.mean(correct[~m])) if np.any(~m) else math.nan,
            "accuracy_maneuver": float(np.mean(correct[m])) if np.any(m) else math.nan,
            "accuracy_overall": float(np.mean(correct)),
        })
    return rows
