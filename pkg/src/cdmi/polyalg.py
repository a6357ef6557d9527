"""Truncated multivariate Taylor polynomials in six variables.

A :class:`TruncatedPoly` stores every coefficient up to total degree ``n`` in a
dense array ordered graded-lexicographically: degree 0 first, then the six
linear terms (``x1`` .. ``x6``), then the quadratic block and so on. Products
drop every term above degree ``n``, which makes the set of polynomials of a
given order a commutative ring (the usual differential-algebra setting used for
jet transport of ODE flows).

Elementary functions are applied by composing their one-dimensional Taylor
series about the constant part with the nilpotent remainder ``p - p(0)``.
"""
from __future__ import annotations

import functools
import itertools
import math
from typing import Callable, Iterable, Sequence

import numpy as np

NVARS = 6


class PolyDomainError(ValueError):
    """An intrinsic was applied outside the domain of its constant part."""


class OrderMismatchError(ValueError):
    """Polynomials of different order were combined."""


@functools.lru_cache(maxsize=None)
def basis(order: int) -> "_Basis":
    if order < 1:
        raise ValueError(f"polynomial order must be >= 1, got {order}")
    return _Basis(order)


class _Basis:
    """Monomial tables shared by all polynomials of one order."""

    def __init__(self, order: int):
        self.order = order
        exps: list[tuple[int, ...]] = []
        for d in range(order + 1):
            block = [e for e in itertools.product(range(d + 1), repeat=NVARS) if sum(e) == d]
            block.sort(reverse=True)
            exps.extend(block)
        self.exponents = np.array(exps, dtype=np.int64)
        self.size = len(exps)
        self.degree = self.exponents.sum(axis=1)
        self.index = {e: i for i, e in enumerate(exps)}

        # products: every pair (a, b) with deg a + deg b <= order, grouped by target
        ia, ib, ic = [], [], []
        for a, ea in enumerate(exps):
            for b, eb in enumerate(exps):
                if self.degree[a] + self.degree[b] > order:
                    continue
                ia.append(a)
                ib.append(b)
                ic.append(self.index[tuple(x + y for x, y in zip(ea, eb))])
        perm = np.argsort(ic, kind="stable")
        self.mul_a = np.asarray(ia)[perm]
        self.mul_b = np.asarray(ib)[perm]
        target = np.asarray(ic)[perm]
        self.mul_starts = np.flatnonzero(np.r_[True, target[1:] != target[:-1]])

        # monomial evaluation: x^e = x^(e - unit_v) * x_v with v the first nonzero slot
        self.eval_parent = np.zeros(self.size, dtype=np.int64)
        self.eval_var = np.zeros(self.size, dtype=np.int64)
        for i, e in enumerate(exps[1:], start=1):
            v = next(k for k in range(NVARS) if e[k])
            parent = list(e)
            parent[v] -= 1
            self.eval_parent[i] = self.index[tuple(parent)]
            self.eval_var[i] = v
        self.degree_slices = []
        start = 1
        for d in range(1, order + 1):
            stop = start + int(np.sum(self.degree == d))
            self.degree_slices.append(slice(start, stop))
            start = stop

        # d/dx_v maps coefficient src -> dst with factor e_v
        self.deriv_src, self.deriv_dst, self.deriv_fac = [], [], []
        for v in range(NVARS):
            src, dst, fac = [], [], []
            for i, e in enumerate(exps):
                if e[v] == 0:
                    continue
                lowered = list(e)
                lowered[v] -= 1
                src.append(i)
                dst.append(self.index[tuple(lowered)])
                fac.append(float(e[v]))
            self.deriv_src.append(np.asarray(src))
            self.deriv_dst.append(np.asarray(dst))
            self.deriv_fac.append(np.asarray(fac))

    def monomials(self, delta) -> np.ndarray:
        """All monomial values for one point (shape (6,)) or a batch (shape (k, 6))."""
        delta = np.asarray(delta, dtype=float)
        out = np.empty(delta.shape[:-1] + (self.size,))
        out[..., 0] = 1.0
        for sl in self.degree_slices:
            out[..., sl] = out[..., self.eval_parent[sl]] * delta[..., self.eval_var[sl]]
        return out


def mul_coeffs(p: np.ndarray, q: np.ndarray, order: int) -> np.ndarray:
    """Truncated product of coefficient arrays; leading axes broadcast."""
    b = basis(order)
    prod = p[..., b.mul_a] * q[..., b.mul_b]
    return np.add.reduceat(prod, b.mul_starts, axis=-1)


class TruncatedPoly:
    """Polynomial in six deviation variables, truncated at total degree ``order``."""

    __slots__ = ("order", "coeffs")
    __array_priority__ = 100

    def __init__(self, coeffs, order: int):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (basis(order).size,):
            raise ValueError(
                f"order {order} needs {basis(order).size} coefficients, got shape {coeffs.shape}"
            )
        coeffs.flags.writeable = False
        self.order = order
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value: float, order: int) -> "TruncatedPoly":
        c = np.zeros(basis(order).size)
        c[0] = value
        return cls(c, order)

    @classmethod
    def variable(cls, k: int, order: int, value: float = 0.0) -> "TruncatedPoly":
        """``value + x_k`` with ``k`` counted from zero."""
        c = np.zeros(basis(order).size)
        c[0] = value
        c[1 + k] = 1.0
        return cls(c, order)

    @classmethod
    def from_terms(cls, terms: dict, order: int) -> "TruncatedPoly":
        """Build from ``{exponent tuple: coefficient}``; terms above ``order`` are dropped."""
        b = basis(order)
        c = np.zeros(b.size)
        for e, v in terms.items():
            e = tuple(int(x) for x in e)
            if len(e) != NVARS:
                raise ValueError(f"exponent {e} does not have {NVARS} entries")
            if sum(e) <= order:
                c[b.index[e]] += v
        return cls(c, order)

    # -- inspection -------------------------------------------------------
    @property
    def cons(self) -> float:
        return float(self.coeffs[0])

    def coefficient(self, exponent: Sequence[int]) -> float:
        return float(self.coeffs[basis(self.order).index[tuple(exponent)]])

    def terms(self) -> dict:
        b = basis(self.order)
        return {tuple(int(x) for x in b.exponents[i]): float(self.coeffs[i]) for i in np.flatnonzero(self.coeffs)}

    def __repr__(self) -> str:
        return f"TruncatedPoly(order={self.order}, nonzero={np.count_nonzero(self.coeffs)}, cons={self.cons!r})"

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other) -> np.ndarray | None:
        if isinstance(other, TruncatedPoly):
            if other.order != self.order:
                raise OrderMismatchError(f"cannot combine order {self.order} with order {other.order}")
            return other.coeffs
        if isinstance(other, (int, float, np.floating, np.integer)):
            c = np.zeros_like(self.coeffs)
            c[0] = other
            return c
        return None

    def __add__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        return TruncatedPoly(self.coeffs + c, self.order)

    __radd__ = __add__

    def __sub__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        return TruncatedPoly(self.coeffs - c, self.order)

    def __rsub__(self, other):
        c = self._coerce(other)
        if c is None:
            return NotImplemented
        return TruncatedPoly(c - self.coeffs, self.order)

    def __neg__(self):
        return TruncatedPoly(-self.coeffs, self.order)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return TruncatedPoly(self.coeffs * other, self.order)
        if isinstance(other, TruncatedPoly):
            self._coerce(other)
            return TruncatedPoly(mul_coeffs(self.coeffs, other.coeffs, self.order), self.order)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return TruncatedPoly(self.coeffs / other, self.order)
        if isinstance(other, TruncatedPoly):
            return self * recip(other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return recip(self) * other
        return NotImplemented

    def __pow__(self, k):
        if isinstance(k, (int, np.integer)) and k >= 0:
            out = TruncatedPoly.constant(1.0, self.order)
            for _ in range(int(k)):
                out = out * self
            return out
        return power(self, float(k))

    # -- calculus -----------------------------------------------------------
    def __call__(self, delta) -> float | np.ndarray:
        return evaluate(self, delta)

    def deriv(self, k: int) -> "TruncatedPoly":
        """Formal partial derivative with respect to ``x_k`` (top degree becomes zero)."""
        b = basis(self.order)
        c = np.zeros_like(self.coeffs)
        c[b.deriv_dst[k]] = self.coeffs[b.deriv_src[k]] * b.deriv_fac[k]
        return TruncatedPoly(c, self.order)

    def to_text(self) -> str:
        """One ``e1 .. e6 coefficient`` line per nonzero term, graded-lex order."""
        b = basis(self.order)
        lines = []
        for i in np.flatnonzero(self.coeffs):
            exps = " ".join(str(int(x)) for x in b.exponents[i])
            lines.append(f"{exps} {self.coeffs[i]:.17g}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, order: int) -> "TruncatedPoly":
        terms = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            *e, v = line.split()
            terms[tuple(int(x) for x in e)] = float(v)
        return cls.from_terms(terms, order)


def add(p: TruncatedPoly, q: TruncatedPoly) -> TruncatedPoly:
    return p + q


def mul(p: TruncatedPoly, q: TruncatedPoly) -> TruncatedPoly:
    return p * q


def evaluate(p: TruncatedPoly, delta) -> float | np.ndarray:
    """Value of ``p`` at one deviation vector (or a batch of them, shape (k, 6))."""
    mons = basis(p.order).monomials(delta)
    out = mons @ p.coeffs
    return float(out) if np.ndim(out) == 0 else out


# -- univariate series about a point ---------------------------------------------

def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a)
    return np.convolve(a, b)[:n]


def _series_power(base: np.ndarray, alpha: float) -> np.ndarray:
    """Series of base(h)**alpha for a univariate series with base[0] > 0."""
    n = len(base)
    b0 = base[0]
    w = base / b0
    w[0] = 0.0
    out = np.zeros(n)
    out[0] = 1.0
    term = np.zeros(n)
    term[0] = 1.0
    coef = 1.0
    for k in range(1, n):
        coef *= (alpha - k + 1) / k
        term = _series_mul(term, w)
        out += coef * term
    return out * b0**alpha


def _series_integrate(d: np.ndarray, c0: float) -> np.ndarray:
    n = len(d)
    out = np.empty(n + 1)
    out[0] = c0
    out[1:] = d / np.arange(1, n + 1)
    return out


def taylor_recip(c: float, n: int) -> np.ndarray:
    return np.array([(-1.0) ** k / c ** (k + 1) for k in range(n + 1)])


def taylor_power(c: float, alpha: float, n: int) -> np.ndarray:
    out = np.empty(n + 1)
    coef = 1.0
    for k in range(n + 1):
        out[k] = coef * c ** (alpha - k)
        coef *= (alpha - k) / (k + 1)
    return out


def taylor_asin(c: float, n: int) -> np.ndarray:
    # d/dx asin = (1 - x^2)^(-1/2)
    u = np.zeros(max(n, 1))
    u[0] = 1.0 - c * c
    if n > 1:
        u[1] = -2.0 * c
    if n > 2:
        u[2] = -1.0
    return _series_integrate(_series_power(u, -0.5)[:n], math.asin(c))


def taylor_atan(c: float, n: int) -> np.ndarray:
    # d/dx atan = (1 + x^2)^(-1)
    u = np.zeros(max(n, 1))
    u[0] = 1.0 + c * c
    if n > 1:
        u[1] = 2.0 * c
    if n > 2:
        u[2] = 1.0
    return _series_integrate(_series_power(u, -1.0)[:n], math.atan(c))


def compose_series(p: TruncatedPoly, series: np.ndarray) -> TruncatedPoly:
    """Evaluate ``sum_k series[k] * (p - p(0))**k`` by Horner's rule."""
    h = p.coeffs.copy()
    h[0] = 0.0
    acc = np.zeros_like(h)
    acc[0] = series[p.order]
    for k in range(p.order - 1, -1, -1):
        acc = mul_coeffs(acc, h, p.order)
        acc[0] += series[k]
    return TruncatedPoly(acc, p.order)


def recip(p: TruncatedPoly) -> TruncatedPoly:
    c = p.cons
    if c == 0.0:
        raise PolyDomainError(f"recip: constant part {c!r} is zero")
    return compose_series(p, taylor_recip(c, p.order))


def sqrt(p: TruncatedPoly) -> TruncatedPoly:
    c = p.cons
    if not c > 0.0:
        raise PolyDomainError(f"sqrt: constant part {c!r} is not positive")
    return compose_series(p, taylor_power(c, 0.5, p.order))


def power(p: TruncatedPoly, alpha: float) -> TruncatedPoly:
    c = p.cons
    if not c > 0.0:
        raise PolyDomainError(f"power({alpha}): constant part {c!r} is not positive")
    return compose_series(p, taylor_power(c, alpha, p.order))


def asin(p: TruncatedPoly) -> TruncatedPoly:
    c = p.cons
    if not abs(c) < 1.0:
        raise PolyDomainError(f"asin: constant part {c!r} is outside (-1, 1)")
    return compose_series(p, taylor_asin(c, p.order))


def atan(p: TruncatedPoly) -> TruncatedPoly:
    return compose_series(p, taylor_atan(p.cons, p.order))


def atan2(y: TruncatedPoly, x: TruncatedPoly) -> TruncatedPoly:
    """Quadrant-aware arctangent; the branch comes from the constant parts only."""
    cx, cy = x.cons, y.cons
    if cx == 0.0 and cy == 0.0:
        raise PolyDomainError("atan2: both constant parts are zero")
    if abs(cx) >= abs(cy):
        base = atan(y * recip(x))
        if cx > 0:
            return base
        return base + (math.pi if cy >= 0 else -math.pi)
    # near the y axis use the cotangent form to stay well conditioned
    base = atan(x * recip(y))
    return (math.pi / 2 if cy > 0 else -math.pi / 2) - base


_INTRINSICS: dict[str, Callable[[TruncatedPoly], TruncatedPoly]] = {
    "recip": recip,
    "sqrt": sqrt,
    "asin": asin,
    "atan": atan,
}


def intrinsic(name: str, p: TruncatedPoly) -> TruncatedPoly:
    try:
        f = _INTRINSICS[name]
    except KeyError:
        raise ValueError(f"unknown intrinsic {name!r}; expected one of {sorted(_INTRINSICS)}") from None
    return f(p)


class PolyMap:
    """A vector of polynomials sharing one order, stored as a (rows, size) array."""

    def __init__(self, coeffs, order: int):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[1] != basis(order).size:
            raise ValueError(f"expected shape (rows, {basis(order).size}), got {coeffs.shape}")
        coeffs.flags.writeable = False
        self.order = order
        self.coeffs = coeffs

    @classmethod
    def from_polys(cls, polys: Iterable[TruncatedPoly]) -> "PolyMap":
        polys = list(polys)
        orders = {p.order for p in polys}
        if len(orders) != 1:
            raise OrderMismatchError(f"components have mixed orders {sorted(orders)}")
        return cls(np.stack([p.coeffs for p in polys]), polys[0].order)

    @classmethod
    def identity(cls, ref, order: int) -> "PolyMap":
        """``ref + delta``: the starting point of a jet-transport integration."""
        return cls.from_polys(TruncatedPoly.variable(k, order, float(ref[k])) for k in range(NVARS))

    @classmethod
    def vstack(cls, maps: Sequence["PolyMap"]) -> "PolyMap":
        orders = {m.order for m in maps}
        if len(orders) != 1:
            raise OrderMismatchError(f"maps have mixed orders {sorted(orders)}")
        return cls(np.vstack([m.coeffs for m in maps]), maps[0].order)

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def __getitem__(self, i) -> TruncatedPoly:
        return TruncatedPoly(self.coeffs[i], self.order)

    @property
    def components(self) -> list[TruncatedPoly]:
        return [self[i] for i in range(len(self))]

    @property
    def cons(self) -> np.ndarray:
        return self.coeffs[:, 0].copy()

    def linear(self) -> np.ndarray:
        """Degree-1 coefficient block, i.e. the Jacobian at the expansion point."""
        return self.coeffs[:, 1 : 1 + NVARS].copy()

    def truncate(self, degree: int) -> "PolyMap":
        """Same order, terms above ``degree`` zeroed."""
        c = self.coeffs.copy()
        c[:, basis(self.order).degree > degree] = 0.0
        return PolyMap(c, self.order)

    def __call__(self, delta) -> np.ndarray:
        return self.eval(delta)

    def eval(self, delta) -> np.ndarray:
        return basis(self.order).monomials(delta) @ self.coeffs.T

    def jacobian_at(self, delta) -> np.ndarray:
        return jacobian_at(self, delta)


def jacobian_at(m: PolyMap, delta) -> np.ndarray:
    """Matrix of partial derivatives (rows = components, columns = variables) at ``delta``."""
    b = basis(m.order)
    mons = b.monomials(delta)
    jac = np.empty((len(m), NVARS))
    for v in range(NVARS):
        jac[:, v] = (m.coeffs[:, b.deriv_src[v]] * b.deriv_fac[v]) @ mons[b.deriv_dst[v]]
    return jac
