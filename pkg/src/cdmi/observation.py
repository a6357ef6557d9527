"""Angles-only measurements: model, polynomial expansion and multi-epoch stacking."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from . import polyalg
from .dynamics import CrtbpParams, FlowExpansion, Tolerance, propagate, propagate_many
from .polyalg import PolyMap

ARCSEC = math.pi / 648000.0

OBSERVER_APOLUNE = np.array([1.02202815472411, 0.0, -0.182101352652963, 0.0, -0.103270818092086, 0.0])
OBSERVER_PERIOD = 1.51119865689808


class CoincidentPositionError(ValueError):
    pass


class AngleWrapError(ValueError):
    """A residual reached the principal-value boundary; this model never wraps silently."""


def observer_state(t: float, params: CrtbpParams = CrtbpParams(), tol: Tolerance = Tolerance(),
                   apolune=OBSERVER_APOLUNE) -> np.ndarray:
    """Observer state ``t`` time units after its apolune passage."""
    return propagate(np.asarray(apolune, dtype=float), 0.0, t, params, tol)


def angles(target_r, observer_r) -> tuple[float, float]:
    """Right ascension and declination of the target seen from the observer.

    At the poles (no horizontal component) right ascension is reported as 0.
    """
    d = np.asarray(target_r, dtype=float) - np.asarray(observer_r, dtype=float)
    rho = float(np.linalg.norm(d))
    if rho == 0.0:
        raise CoincidentPositionError("target and observer positions coincide")
    alpha = math.atan2(d[1], d[0]) if (d[0] or d[1]) else 0.0
    beta = math.asin(max(-1.0, min(1.0, d[2] / rho)))
    return alpha, beta


def poly_angles(flow_map: PolyMap, observer_r) -> PolyMap:
    """Apply the angles model to the position rows of a flow map."""
    dx, dy, dz = (flow_map[i] - float(observer_r[i]) for i in range(3))
    rho = polyalg.sqrt(dx * dx + dy * dy + dz * dz)
    alpha = polyalg.atan2(dy, dx)
    beta = polyalg.asin(dz * polyalg.recip(rho))
    return PolyMap.from_polys([alpha, beta])


@dataclass(frozen=True)
class AngleObs:
    epoch: float
    alpha: float
    beta: float
    noise_cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.noise_cov, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError(f"noise covariance must be 2x2 symmetric positive definite, got {cov}")
        object.__setattr__(self, "noise_cov", cov)
        if not -math.pi < self.alpha <= math.pi:
            raise ValueError(f"right ascension {self.alpha} outside (-pi, pi]")
        if not -math.pi / 2 <= self.beta <= math.pi / 2:
            raise ValueError(f"declination {self.beta} outside [-pi/2, pi/2]")

    @property
    def z(self) -> np.ndarray:
        return np.array([self.alpha, self.beta])


@dataclass(frozen=True)
class ObservationSet:
    observations: tuple[AngleObs, ...]

    def __post_init__(self):
        obs = tuple(self.observations)
        if not obs:
            raise ValueError("an observation set needs at least one epoch")
        epochs = [o.epoch for o in obs]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError(f"epochs must be strictly increasing, got {epochs}")
        object.__setattr__(self, "observations", obs)

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def epochs(self) -> list[float]:
        return [o.epoch for o in self.observations]

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([o.z for o in self.observations])

    @property
    def stacked_cov(self) -> np.ndarray:
        return block_diag(*[o.noise_cov for o in self.observations])

    def stacked_cov_inv(self) -> np.ndarray:
        return block_diag(*[np.linalg.inv(o.noise_cov) for o in self.observations])

    def whitening(self) -> np.ndarray:
        """Block-diagonal W with W.T @ W equal to the inverse stacked covariance."""
        blocks = []
        for o in self.observations:
            chol = np.linalg.cholesky(o.noise_cov)
            blocks.append(np.linalg.inv(chol))
        return block_diag(*blocks)

    def to_json(self) -> dict:
        stds = {math.sqrt(o.noise_cov[i, i]) for o in self.observations for i in range(2)}
        isotropic = len(stds) == 1 and all(o.noise_cov[0, 1] == 0.0 for o in self.observations)
        if not isotropic:
            raise ValueError("the observation file format only carries one isotropic noise level")
        return {
            "epochs_nd": self.epochs,
            "alpha_rad": [o.alpha for o in self.observations],
            "beta_rad": [o.beta for o in self.observations],
            "noise_std_arcsec": stds.pop() / ARCSEC,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ObservationSet":
        missing = {"epochs_nd", "alpha_rad", "beta_rad", "noise_std_arcsec"} - set(doc)
        if missing:
            raise ValueError(f"observation file is missing {sorted(missing)}")
        n = len(doc["epochs_nd"])
        if len(doc["alpha_rad"]) != n or len(doc["beta_rad"]) != n:
            raise ValueError("epochs_nd, alpha_rad and beta_rad must have equal length")
        sigma = float(doc["noise_std_arcsec"]) * ARCSEC
        cov = np.eye(2) * sigma**2
        return cls(tuple(AngleObs(float(t), float(a), float(b), cov)
                         for t, a, b in zip(doc["epochs_nd"], doc["alpha_rad"], doc["beta_rad"])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "ObservationSet":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class MeasurementExpansion:
    """Stacked angle polynomials (2 rows per epoch) over the initial deviation.

    Besides the polynomial map this keeps what is needed to evaluate the exact
    (propagated) measurement for a given deviation.
    """
    map: PolyMap
    epochs: tuple[float, ...]
    ref_state: np.ndarray
    t0: float
    observer_positions: np.ndarray
    params: CrtbpParams = field(default_factory=CrtbpParams)
    tol: Tolerance = field(default_factory=Tolerance)

    @property
    def dim(self) -> int:
        return len(self.map)

    def predicted(self) -> np.ndarray:
        return self.map.cons

    def exact(self, dx) -> np.ndarray:
        """Angles from a full propagation of ``ref_state + dx``."""
        states = propagate_many(self.ref_state + np.asarray(dx, dtype=float), self.t0, self.epochs,
                                self.params, self.tol)
        return np.concatenate([angles(s[:3], r) for s, r in zip(states, self.observer_positions)])


def measurement_expansion(flows: Sequence[FlowExpansion], observer_positions) -> MeasurementExpansion:
    flows = list(flows)
    observer_positions = np.asarray(observer_positions, dtype=float).reshape(len(flows), -1)[:, :3]
    if not flows:
        raise ValueError("need at least one flow expansion")
    ref = flows[0].ref_state
    t0 = flows[0].t0
    for f in flows:
        if f.t0 != t0 or not np.array_equal(f.ref_state, ref):
            raise ValueError("all flow expansions must share the reference state and initial epoch")
    blocks = [poly_angles(f.map, r) for f, r in zip(flows, observer_positions)]
    return MeasurementExpansion(PolyMap.vstack(blocks), tuple(f.t1 for f in flows), ref.copy(), t0,
                                observer_positions.copy())


def residual(predicted, observed) -> np.ndarray:
    """Predicted minus observed angles; refuses residuals near the wrap boundary."""
    r = np.asarray(predicted, dtype=float) - np.asarray(observed, dtype=float)
    if np.any(np.abs(r) >= math.pi):
        raise AngleWrapError(f"angle residual {r} reaches the principal-value boundary")
    return r


def synthesize_observation(true_state0, maneuver_dv, t0: float, epochs, observer_positions, noise_draws,
                           noise_cov, params: CrtbpParams = CrtbpParams(),
                           tol: Tolerance = Tolerance()) -> ObservationSet:
    """Noisy angles of a true trajectory with an impulsive maneuver right after ``t0``.

    ``noise_draws`` are the additive angle noises in radians, one (alpha, beta)
    pair per epoch.
    """
    x0 = np.array(true_state0, dtype=float)
    x0[3:] += np.asarray(maneuver_dv, dtype=float)
    noise = np.asarray(noise_draws, dtype=float).reshape(len(epochs), 2)
    states = propagate_many(x0, t0, epochs, params, tol)
    obs = []
    for t, s, r, n in zip(epochs, states, np.asarray(observer_positions)[:, :3], noise):
        a, b = angles(s[:3], r)
        a, b = a + n[0], b + n[1]
        a = math.remainder(a, 2 * math.pi)
        if a == -math.pi:
            a = math.pi
        obs.append(AngleObs(float(t), a, b, np.asarray(noise_cov, dtype=float)))
    return ObservationSet(tuple(obs))
