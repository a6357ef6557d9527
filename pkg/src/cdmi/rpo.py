"""Recursive polynomial optimization for the confidence-constrained closest point.

Each iteration linearizes the measurement polynomial about the current
deviation and solves

    min ||W (A dx + b)||^2   s.t.   ||U (dx_prev + dx)||^2 <= r^2

exactly. With ``u = U (dx_prev + dx)`` this is a least-squares problem over a
ball, whose solution is either the minimum-norm unconstrained solution or the
point on the sphere fixed by a single secular equation in the multiplier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .observation import MeasurementExpansion, ObservationSet, residual
from .stats import ConfidenceBudget, GaussianState


class SubproblemError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubproblemInput:
    A: np.ndarray
    b: np.ndarray
    R_inv_factor: np.ndarray
    P0_inv_factor: np.ndarray
    m_x: float
    dx_prev: np.ndarray
    half: bool = True

    @property
    def radius_sq(self) -> float:
        """Squared radius of the whitened ball; twice the budget under the half convention."""
        return 2.0 * self.m_x if self.half else self.m_x


@dataclass(frozen=True)
class SubproblemSolution:
    dx: np.ndarray
    multiplier: float
    objective: float
    on_boundary: bool
    secular_iterations: int = 0


def _secular_root(sg: np.ndarray, s2: np.ndarray, radius: float, max_iter: int = 200) -> tuple[float, int]:
    """Positive root of ||u(lam)|| = radius with u_i = sg_i / (s2_i + lam).

    Newton on ``1/||u|| - 1/radius`` (close to linear in lam), bracketed.
    """
    def norm_u(lam):
        return math.sqrt(float(np.sum((sg / (s2 + lam)) ** 2)))

    lo, hi = 0.0, float(np.linalg.norm(sg)) / radius
    lam = 0.0
    for it in range(1, max_iter + 1):
        u = sg / (s2 + lam)
        nu = math.sqrt(float(u @ u))
        phi = 1.0 / nu - 1.0 / radius
        if phi < 0:
            lo = lam
        else:
            hi = lam
        # d||u||/dlam = -(sum u_i^2 / (s2_i + lam)) / ||u||
        dnu = -float(np.sum(u * u / (s2 + lam))) / nu
        dphi = -dnu / (nu * nu)
        new = lam - phi / dphi if dphi > 0 else math.inf
        if not lo < new < hi:
            new = 0.5 * (lo + hi)
        if abs(new - lam) <= 1e-12 * max(new, 1e-300) or hi - lo <= 1e-12 * hi:
            lam = new
            if abs(norm_u(lam) - radius) <= 1e-10 * radius:
                return lam, it
        lam = new
    raise SubproblemError(f"secular equation did not converge in {max_iter} iterations")


def solve_subproblem(inp: SubproblemInput) -> SubproblemSolution:
    A = np.asarray(inp.A, dtype=float)
    b = np.asarray(inp.b, dtype=float)
    dx_prev = np.asarray(inp.dx_prev, dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(dx_prev))):
        raise ValueError("subproblem data must be finite")
    if not inp.m_x > 0:
        raise ValueError(f"confidence budget must be positive, got {inp.m_x}")
    L = np.linalg.inv(inp.P0_inv_factor)  # dx_total = L @ u
    B = inp.R_inv_factor @ A @ L
    d = inp.R_inv_factor @ (A @ dx_prev - b)
    Q, s, Vt = np.linalg.svd(B, full_matrices=False)
    g = Q.T @ d
    rank_tol = (s[0] if s.size else 0.0) * max(B.shape) * np.finfo(float).eps
    keep = s > rank_tol
    s, g, Vt = s[keep], g[keep], Vt[keep]
    coef = g / s
    radius_sq = inp.radius_sq
    lam, its = 0.0, 0
    if math.isinf(radius_sq) or float(coef @ coef) <= radius_sq:
        on_boundary = False
    else:
        lam, its = _secular_root(s * g, s * s, math.sqrt(radius_sq))
        coef = s * g / (s * s + lam)
        on_boundary = True
    u = Vt.T @ coef
    dx = L @ u - dx_prev
    r = B @ u - d
    return SubproblemSolution(dx, lam, float(r @ r), on_boundary, its)


@dataclass
class RpoResult:
    dx_star: np.ndarray
    dz_star: np.ndarray
    m_z: float
    iterations: int
    converged: bool
    multiplier: float
    objective: float
    poly_residual: np.ndarray
    trace: list = field(default_factory=list)


def _stat(d: np.ndarray, W: np.ndarray, half: bool) -> float:
    w = W @ d
    q = float(w @ w)
    return 0.5 * q if half else q


def rpo_solve(meas: MeasurementExpansion, obs: ObservationSet, prior: GaussianState, budget: ConfidenceBudget,
              eta: float = 1e-6, max_iter: int = 50, half: bool = True) -> RpoResult:
    """Confidence-constrained closest point by sequential linearization of the polynomial.

    The first iteration uses the linear part at zero deviation; later ones use
    the full-order value and Jacobian at the previous iterate. The returned
    residual comes from a full propagation of the optimal deviation.
    """
    if not 0.0 < budget.alpha_x < 1.0:
        raise ValueError(f"rpo_solve needs 0 < alpha_x < 1, got {budget.alpha_x}")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if tuple(obs.epochs) != tuple(meas.epochs):
        raise ValueError(f"observation epochs {obs.epochs} do not match expansion epochs {meas.epochs}")
    z = obs.z
    W = obs.whitening()
    U = prior.chol_inv
    dx = np.zeros(6)
    trace = []

    def step(A, b, prev):
        return solve_subproblem(SubproblemInput(A, b, W, U, budget.m_x, prev, half))

    sol = step(meas.map.linear(), residual(meas.map.cons, z), dx)
    dx = dx + sol.dx
    trace.append({"iteration": 1, "step_norm": float(np.linalg.norm(sol.dx)), "objective": sol.objective,
                  "multiplier": sol.multiplier})
    converged = False
    iterations = 1
    while iterations < max_iter:
        iterations += 1
        A = meas.map.jacobian_at(dx)
        b = residual(meas.map(dx), z)
        sol = step(A, b, dx)
        dx = dx + sol.dx
        step_norm = float(np.linalg.norm(sol.dx))
        trace.append({"iteration": iterations, "step_norm": step_norm, "objective": sol.objective,
                      "multiplier": sol.multiplier})
        if step_norm <= eta:
            converged = True
            break
    poly_res = residual(meas.map(dx), z)
    dz = residual(meas.exact(dx), z)
    return RpoResult(dx, dz, _stat(dz, W, half), iterations, converged, sol.multiplier,
                     float(np.sum((W @ poly_res) ** 2)), poly_res, trace)


def closest_point_special(alpha_x: float, meas: MeasurementExpansion, obs: ObservationSet,
                          half: bool = True) -> tuple[np.ndarray, float]:
    """Closed-form closest point for the degenerate regions alpha_x = 0 and alpha_x = 1."""
    z = obs.z
    if alpha_x == 0.0:
        dz = residual(nominal_prediction(meas), z)
        return dz, _stat(dz, obs.whitening(), half)
    if alpha_x == 1.0:
        return np.zeros_like(z), 0.0
    raise ValueError(f"closed-form closest point only exists for alpha_x in {{0, 1}}, got {alpha_x}")


def nominal_prediction(meas: MeasurementExpansion) -> np.ndarray:
    """Propagated measurement of the mean state (memoized per expansion object)."""
    cached = meas.__dict__.get("_nominal_prediction")
    if cached is None:
        cached = meas.exact(np.zeros(6))
        object.__setattr__(meas, "_nominal_prediction", cached)
    return cached.copy()
