"""CRTBP equations of motion, an adaptive RK7(8) integrator and jet transport.

The integrator is written once over a state array whose first axis holds the
six components. A real state has shape ``(6,)``; a polynomial state has shape
``(6, size)`` where each row is the coefficient array of a
:class:`~cdmi.polyalg.TruncatedPoly`. Step-size control only ever looks at the
constant parts, so a polynomial integration follows (up to rounding) the same
step sequence as its nominal trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import polyalg
from .polyalg import PolyMap, TruncatedPoly

MU_EARTH_MOON = 0.0121505839


class IntegrationError(RuntimeError):
    """Step size collapsed (stiffness or a close approach to a primary)."""


class SingularityError(ValueError):
    """State sits on one of the primaries."""


@dataclass(frozen=True)
class CrtbpParams:
    mu: float = MU_EARTH_MOON
    length_unit_km: float = 384400.0
    velocity_unit_km_s: float = 1.02454629434750
    time_unit_s: float = 375190.464423878

    def __post_init__(self):
        if not 0.0 < self.mu < 0.5:
            raise ValueError(f"mu must lie in (0, 0.5), got {self.mu}")
        for name in ("length_unit_km", "velocity_unit_km_s", "time_unit_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Tolerance:
    rtol: float = 1e-12
    atol: float = 1e-12
    safety: float = 0.9
    min_factor: float = 0.2
    max_factor: float = 5.0
    min_step: float = 1e-14
    max_steps: int = 200_000


# Fehlberg 7(8), 13 stages. The error estimate is the 7th/8th order difference;
# the 8th order solution is propagated (local extrapolation).
RK_SET_NAME = "fehlberg78"
_C = np.array([0, 2 / 27, 1 / 9, 1 / 6, 5 / 12, 1 / 2, 5 / 6, 1 / 6, 2 / 3, 1 / 3, 1, 0, 1])
_A = np.zeros((13, 13))
_A[1, :1] = [2 / 27]
_A[2, :2] = [1 / 36, 1 / 12]
_A[3, :3] = [1 / 24, 0, 1 / 8]
_A[4, :4] = [5 / 12, 0, -25 / 16, 25 / 16]
_A[5, :5] = [1 / 20, 0, 0, 1 / 4, 1 / 5]
_A[6, :6] = [-25 / 108, 0, 0, 125 / 108, -65 / 27, 125 / 54]
_A[7, :7] = [31 / 300, 0, 0, 0, 61 / 225, -2 / 9, 13 / 900]
_A[8, :8] = [2, 0, 0, -53 / 6, 704 / 45, -107 / 9, 67 / 90, 3]
_A[9, :9] = [-91 / 108, 0, 0, 23 / 108, -976 / 135, 311 / 54, -19 / 60, 17 / 6, -1 / 12]
_A[10, :10] = [2383 / 4100, 0, 0, -341 / 164, 4496 / 1025, -301 / 82, 2133 / 4100, 45 / 82, 45 / 164, 18 / 41]
_A[11, :11] = [3 / 205, 0, 0, 0, 0, -6 / 41, -3 / 205, -3 / 41, 3 / 41, 6 / 41, 0]
_A[12, :12] = [-1777 / 4100, 0, 0, -341 / 164, 4496 / 1025, -289 / 82, 2193 / 4100, 51 / 82, 33 / 164, 12 / 41, 0, 1]
_B7 = np.array([41 / 840, 0, 0, 0, 0, 34 / 105, 9 / 35, 9 / 35, 9 / 280, 9 / 280, 41 / 840, 0, 0])
_B8 = np.array([0, 0, 0, 0, 0, 34 / 105, 9 / 35, 9 / 35, 9 / 280, 9 / 280, 0, 41 / 840, 41 / 840])
_E = _B8 - _B7


def rk_tableau():
    return _C.copy(), _A.copy(), _B7.copy(), _B8.copy()


def _inv_cube(r2):
    """r**-3 from r**2, for floats or polynomials."""
    if isinstance(r2, TruncatedPoly):
        return polyalg.power(r2, -1.5)
    return r2 ** -1.5


def crtbp_rhs(t, s, params: CrtbpParams):
    """Rotating-frame CRTBP vector field.

    ``s`` is any length-6 sequence of floats or :class:`TruncatedPoly`; the
    result has the same element type.
    """
    mu = params.mu
    x, y, z, vx, vy, vz = s
    d1 = x + mu
    d2 = x + (mu - 1.0)
    yz = y * y + z * z
    r1sq = d1 * d1 + yz
    r2sq = d2 * d2 + yz
    c1 = r1sq.cons if isinstance(r1sq, TruncatedPoly) else r1sq
    c2 = r2sq.cons if isinstance(r2sq, TruncatedPoly) else r2sq
    if not (c1 > 0.0 and c2 > 0.0):
        raise SingularityError(f"state at a primary (r1^2={c1}, r2^2={c2})")
    k1 = _inv_cube(r1sq) * (1.0 - mu)
    k2 = _inv_cube(r2sq) * mu
    k = k1 + k2
    ax = 2.0 * vy + x - k1 * d1 - k2 * d2
    ay = -2.0 * vx + y - k * y
    az = -(k * z)
    return [vx, vy, vz, ax, ay, az]


def _rhs_array(t, y, params):
    if y.ndim == 1:
        x, yy, z, vx, vy, vz = (float(v) for v in y)
        d1 = x + params.mu
        d2 = x + params.mu - 1.0
        yz = yy * yy + z * z
        r1sq = d1 * d1 + yz
        r2sq = d2 * d2 + yz
        if not (r1sq > 0.0 and r2sq > 0.0):
            raise SingularityError(f"state at a primary (r1^2={r1sq}, r2^2={r2sq})")
        k1 = (1.0 - params.mu) / (r1sq * math.sqrt(r1sq))
        k2 = params.mu / (r2sq * math.sqrt(r2sq))
        k = k1 + k2
        return np.array([vx, vy, vz, 2.0 * vy + x - k1 * d1 - k2 * d2, -2.0 * vx + yy - k * yy, -k * z])
    order = _order_for_size(y.shape[1])
    comps = [TruncatedPoly(row, order) for row in y]
    return np.stack([c.coeffs for c in crtbp_rhs(t, comps, params)])


def _order_for_size(size: int) -> int:
    for n in range(1, 30):
        if polyalg.basis(n).size == size:
            return n
    raise ValueError(f"no polynomial order has {size} coefficients")


def jacobi_constant(s, params: CrtbpParams) -> float:
    x, y, z, vx, vy, vz = (float(v) for v in s)
    mu = params.mu
    r1 = math.sqrt((x + mu) ** 2 + y * y + z * z)
    r2 = math.sqrt((x + mu - 1.0) ** 2 + y * y + z * z)
    return x * x + y * y + 2.0 * (1.0 - mu) / r1 + 2.0 * mu / r2 - (vx * vx + vy * vy + vz * vz)


@dataclass
class IntegrationStats:
    steps: int = 0
    rejected: int = 0
    rhs_calls: int = 0


def integrate(y0: np.ndarray, t0: float, t1: float, params: CrtbpParams, tol: Tolerance = Tolerance(),
              h0: float | None = None, stats: IntegrationStats | None = None) -> np.ndarray:
    """Adaptive RK7(8) from ``t0`` to ``t1`` (either direction); lands exactly on ``t1``."""
    y = np.array(y0, dtype=float)
    if t1 == t0:
        return y
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    h = min(span, h0 if h0 is not None else 1e-2)
    t = t0
    stats = stats if stats is not None else IntegrationStats()
    k = np.empty((13,) + y.shape)
    while True:
        remaining = abs(t1 - t)
        if remaining <= 1e-15 * max(1.0, abs(t1)):
            return y
        last = h >= remaining
        step = remaining if last else h
        hs = direction * step
        for i in range(13):
            yi = y + hs * np.tensordot(_A[i, :i], k[:i], axes=1) if i else y
            k[i] = _rhs_array(t + _C[i] * hs, yi, params)
        stats.rhs_calls += 13
        y_new = y + hs * np.tensordot(_B8, k, axes=1)
        err_vec = hs * np.tensordot(_E, k, axes=1)
        if y.ndim == 2:
            y_c, new_c, err_c = y[:, 0], y_new[:, 0], err_vec[:, 0]
        else:
            y_c, new_c, err_c = y, y_new, err_vec
        scale = tol.atol + tol.rtol * np.maximum(np.abs(y_c), np.abs(new_c))
        err = float(np.max(np.abs(err_c) / scale))
        if not np.isfinite(err):
            raise IntegrationError(f"non-finite error estimate at t={t}")
        if err <= 1.0:
            t = t1 if last else t + hs
            y = y_new
            stats.steps += 1
            if last:
                return y
        else:
            stats.rejected += 1
        factor = tol.max_factor if err == 0.0 else min(tol.max_factor, max(tol.min_factor, tol.safety * err ** (-1.0 / 8.0)))
        h = step * factor
        if h < tol.min_step:
            raise IntegrationError(f"step size {h:.3e} below {tol.min_step:.1e} at t={t}")
        if stats.steps + stats.rejected > tol.max_steps:
            raise IntegrationError(f"more than {tol.max_steps} steps between t={t0} and t={t1}")


def propagate(s0, t0: float, t1: float, params: CrtbpParams = CrtbpParams(), tol: Tolerance = Tolerance()) -> np.ndarray:
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (6,) or not np.all(np.isfinite(s0)):
        raise ValueError(f"state must be 6 finite numbers, got {s0}")
    return integrate(s0, t0, t1, params, tol)


def propagate_many(s0, t0: float, epochs, params: CrtbpParams = CrtbpParams(), tol: Tolerance = Tolerance()) -> np.ndarray:
    """States at each of ``epochs`` (ascending), integrating segment by segment."""
    out = []
    y, t = np.asarray(s0, dtype=float), t0
    for te in epochs:
        y = integrate(y, t, te, params, tol)
        t = te
        out.append(y)
    return np.array(out)


@dataclass(frozen=True)
class FlowExpansion:
    map: PolyMap
    ref_state: np.ndarray
    t0: float
    t1: float
    stats: IntegrationStats = field(default_factory=IntegrationStats, compare=False)

    @property
    def stm(self) -> np.ndarray:
        return self.map.linear()


def flow_expansions(ref, t0: float, epochs, order: int, params: CrtbpParams = CrtbpParams(),
                    tol: Tolerance = Tolerance()) -> list[FlowExpansion]:
    """Order-``order`` Taylor expansions of the flow from ``t0`` to each epoch."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    ref = np.asarray(ref, dtype=float)
    y = PolyMap.identity(ref, order).coeffs.copy()
    t = t0
    out = []
    for te in epochs:
        stats = IntegrationStats()
        y = integrate(y, t, te, params, tol, stats=stats)
        t = te
        out.append(FlowExpansion(PolyMap(y, order), ref.copy(), t0, te, stats))
    return out


def flow_expansion(ref, t0: float, t1: float, order: int, params: CrtbpParams = CrtbpParams(),
                   tol: Tolerance = Tolerance()) -> FlowExpansion:
    return flow_expansions(ref, t0, [t1], order, params, tol)[0]


class DegenerateGeometryError(ValueError):
    pass


def most_sensitive_direction(phi_rv: np.ndarray) -> np.ndarray:
    """Unit initial-velocity direction that maximises the final position change.

    This is the dominant eigenvector of the Cauchy-Green tensor of the
    position-from-velocity block. Sign is fixed so the largest component is
    positive; exact ties in the spectrum fall back to the first axis.
    """
    phi_rv = np.asarray(phi_rv, dtype=float)
    if not np.any(phi_rv):
        raise DegenerateGeometryError("position-from-velocity block is zero")
    _, s, vt = np.linalg.svd(phi_rv)
    if np.isclose(s[0], s[1], rtol=1e-12, atol=0.0):
        # isotropic leading subspace: no preferred direction beyond convention
        basis_vecs = vt[s >= s[0] * (1 - 1e-12)]
        e1 = np.zeros(3)
        e1[0] = 1.0
        u = basis_vecs.T @ (basis_vecs @ e1)
        if np.linalg.norm(u) < 1e-8:
            u = basis_vecs[0]
        u = u / np.linalg.norm(u)
    else:
        u = vt[0]
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    return u


def stm_and_cgt_direction(flow: FlowExpansion) -> np.ndarray:
    return most_sensitive_direction(flow.stm[0:3, 3:6])
