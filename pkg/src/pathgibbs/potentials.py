"""Scalar pair potentials and their lift to path pair potentials.

Infinite energies are IEEE ``inf``. ``boltzmann`` maps them to an exact
zero weight, and every public function that multiplies an energy by an
inverse temperature requires ``beta > 0`` so that ``0 * inf`` never occurs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "INF",
    "ScalarPotential",
    "PathPairPotential",
    "SelfPotential",
    "ConfigError",
    "TailNorm",
    "boltzmann",
    "mayer",
    "truncate",
    "phi_eval",
    "pair_energy",
    "truncated_pair",
    "phi_tail_norm",
    "stability_constant_bound",
    "unit_ball_volume",
    "shifted_lj_potential",
    "unshifted_lj_potential",
    "hard_core_potential",
    "zero_potential",
]

INF = math.inf


class ConfigError(ValueError):
    pass


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def boltzmann(beta, energy):
    """exp(-beta * energy) with exp(-inf) == 0 exactly."""
    return np.exp(-beta * np.asarray(energy, dtype=float))


def mayer(beta, energy):
    """The Mayer edge factor exp(-beta * energy) - 1; equals -1 on +inf."""
    return np.expm1(-beta * np.asarray(energy, dtype=float))


def truncate(energy):
    """Truncated potential: 1 where the energy is +inf, the energy elsewhere."""
    e = np.asarray(energy, dtype=float)
    out = np.where(np.isposinf(e), 1.0, e)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScalarPotential:
    """phi = hard core of diameter ``R`` plus a tail on ``[R, inf)``.

    The Lennard-Jones tail is ``a / v**12 - b / v**6`` with ``v = u - R`` when
    ``shifted`` and ``v = u`` otherwise. ``a0`` is the sensitivity radius
    beyond which an attractive tail must stay non-positive.
    """

    R: float = 1.0
    tail: str = "none"
    lj_a: float = 1.0
    lj_b: float = 1.0
    shifted: bool = False
    a0: float = 1.0

    def __post_init__(self):
        if self.R < 0 or self.a0 < 0:
            raise ConfigError("R and a0 must be non-negative")
        if self.tail not in ("none", "lj"):
            raise ConfigError(f"unknown tail {self.tail!r}")
        if self.tail == "lj":
            if self.lj_a <= 0 or self.lj_b <= 0:
                raise ConfigError("Lennard-Jones coefficients must be positive")
            if self.shifted and self.R <= 0:
                raise ConfigError("a shifted tail needs a positive hard core")
            lo = max(self.a0, self.R)
            u = lo + np.geomspace(1e-9, 1e4, 4000)
            if np.any(self.tail_values(u) > 1e-12):
                raise ConfigError(f"attractive tail is positive beyond a0={self.a0}")

    @property
    def is_trivial(self) -> bool:
        return self.R == 0 and self.tail == "none"

    def tail_values(self, u):
        """phi_l at distances ``u`` (no hard core applied)."""
        u = np.asarray(u, dtype=float)
        if self.tail == "none":
            return np.zeros_like(u)
        v = u - self.R if self.shifted else u
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            inv6 = 1.0 / v**6
            out = self.lj_a * inv6 * inv6 - self.lj_b * inv6
        return np.where(v <= 0, INF, out)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.where(u < self.R, INF, self.tail_values(u))
        return float(out) if out.ndim == 0 else out


def phi_eval(scalar: ScalarPotential, u: float) -> float:
    if u < 0:
        raise ValueError("distance must be non-negative")
    return float(scalar(u))


class PathPairPotential:
    """Lift of a scalar potential to marked points by time quadrature.

        Phi(x, y) = int_0^1 phi(|x1 - x2 + m1(s) - m2(s)|) ds

    when ``|x1 - x2| <= a0 + ||m1|| + ||m2||`` and zero otherwise. The hard
    core is checked at the grid nodes; the integral is the trapezoidal rule
    on the shared mark grid.
    """

    def __init__(self, scalar: ScalarPotential):
        self.scalar = scalar
        self._weights = {}

    def __repr__(self):
        return f"PathPairPotential({self.scalar!r})"

    @property
    def is_trivial(self) -> bool:
        return self.scalar.is_trivial

    def _trapezoid(self, n_nodes):
        w = self._weights.get(n_nodes)
        if w is None:
            w = np.full(n_nodes, 1.0 / (n_nodes - 1))
            w[0] = w[-1] = 0.5 / (n_nodes - 1)
            self._weights[n_nodes] = w
        return w

    def energies(self, x, m, norm, xs, ms, norms) -> np.ndarray:
        """Pair energies between one marked point and ``k`` others.

        ``x`` (d,), ``m`` (T, d), ``norm`` float; ``xs`` (k, d), ``ms``
        (k, T, d), ``norms`` (k,). Returns shape (k,).
        """
        xs = np.asarray(xs, dtype=float)
        k = xs.shape[0]
        out = np.zeros(k)
        if k == 0 or self.is_trivial:
            return out
        if ms.shape[1:] != m.shape:
            raise ValueError("marks live on different grids")
        dx = x[None, :] - xs
        sep = np.sqrt((dx * dx).sum(axis=1))
        near = sep <= self.scalar.a0 + (norm + norms)
        if not near.any():
            return out
        idx = np.flatnonzero(near)
        diff = dx[idx, None, :] + (m[None, :, :] - ms[idx])
        dist = np.sqrt((diff * diff).sum(axis=2))
        hard = (dist < self.scalar.R).any(axis=1)
        out[idx[hard]] = INF
        soft = idx[~hard]
        if soft.size and self.scalar.tail != "none":
            vals = self.scalar.tail_values(dist[~hard])
            # row-wise reduction: the result for a pair must not depend on the batch it is in
            out[soft] = (vals * self._trapezoid(m.shape[0])).sum(axis=1)
        return out

    def pair(self, p, q) -> float:
        if p.m.n_nodes != q.m.n_nodes:
            raise ValueError("marks live on different grids")
        e = self.energies(p.x, p.m.values, p.m.sup_norm,
                          q.x[None, :], q.m.values[None], np.array([q.m.sup_norm]))
        return float(e[0])

    __call__ = pair

    def truncated(self, p, q) -> float:
        return truncate(self.pair(p, q))


def pair_energy(phi: PathPairPotential, p, q) -> float:
    return phi.pair(p, q)


def truncated_pair(phi: PathPairPotential, p, q) -> float:
    return phi.truncated(p, q)


class SelfPotential:
    """Self potential Psi(x, m) = coef * ||m||**exponent (or zero).

    ``A_Psi`` is the declared constant of the lower bound
    ``Psi >= -A_Psi * ||m||**(d + delta)``.
    """

    def __init__(self, kind: str = "zero", coef: float = 0.0, exponent: float = 1.0, A_Psi: float = 0.0):
        if kind not in ("zero", "power"):
            raise ConfigError(f"unknown self potential {kind!r}")
        self.kind = kind
        self.coef = float(coef)
        self.exponent = float(exponent)
        self.A_Psi = float(A_Psi)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.coef == 0.0

    def from_norms(self, norms):
        norms = np.asarray(norms, dtype=float)
        if self.is_zero:
            return np.zeros_like(norms)
        return self.coef * norms**self.exponent

    def __call__(self, point) -> float:
        return float(self.from_norms(point.m.sup_norm))

    def check_lower_bound(self, norms, d: int, delta: float) -> bool:
        norms = np.asarray(norms, dtype=float)
        return bool(np.all(self.from_norms(norms) >= -self.A_Psi * norms ** (d + delta) - 1e-12))


class TailNorm(NamedTuple):
    value: float
    error: float
    regular: bool


def _tail_breakpoints(scalar, hi):
    pts = []
    if scalar.tail == "lj":
        shift = scalar.R if scalar.shifted else 0.0
        root = (scalar.lj_a / scalar.lj_b) ** (1 / 6) + shift
        well = (2 * scalar.lj_a / scalar.lj_b) ** (1 / 6) + shift
        pts = [p for p in (root, well) if scalar.R < p < hi]
    return pts


def phi_tail_norm(scalar: ScalarPotential, d: int) -> TailNorm:
    """int_R^inf |phi_l(u)| u^(d-1) du, or a non-regular flag on divergence at R+."""
    if scalar.tail == "none":
        return TailNorm(0.0, 0.0, True)
    R = scalar.R
    # integrability at R+: eps * |phi(R + eps)| must vanish
    eps = np.array([1e-2, 1e-3, 1e-4, 1e-5])
    probe = eps * np.abs(scalar.tail_values(R + eps)) * np.maximum(R + eps, 1e-300) ** (d - 1)
    if not np.all(np.isfinite(probe)) or (probe[-1] > 1.0 and np.all(np.diff(probe) > 0)):
        return TailNorm(INF, 0.0, False)

    def g(u):
        return abs(float(scalar.tail_values(u))) * u ** (d - 1)

    hi = max(10.0 * max(R, 1.0), 2 * scalar.a0)
    pts = _tail_breakpoints(scalar, hi)
    val1, err1 = integrate.quad(g, R, hi, points=pts or None, limit=400, epsabs=0, epsrel=1e-12)
    val2, err2 = integrate.quad(g, hi, np.inf, limit=400, epsabs=0, epsrel=1e-12)
    return TailNorm(val1 + val2, err1 + err2, True)


def _min_tail(scalar: ScalarPotential, hi_factor: float = 50.0) -> float:
    """Minimum of phi_l over [R, inf): fine grid, then bounded refinement."""
    if scalar.tail == "none":
        return 0.0
    R = scalar.R
    lo = R + (1e-9 if scalar.shifted else 0.0)
    hi = lo + hi_factor * max(R, 1.0, scalar.a0)
    u = np.linspace(lo, hi, 200_001)
    v = scalar.tail_values(u)
    i = int(np.argmin(v))
    best = float(v[i])
    a, b = u[max(i - 1, 0)], u[min(i + 1, u.size - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda t: float(scalar.tail_values(t)), bounds=(a, b),
                                       method="bounded", options={"xatol": 1e-13})
        best = min(best, float(res.fun))
    return best


def stability_constant_bound(scalar: ScalarPotential, d: int) -> float:
    """Packing bound B_phi with 2 B_phi = kappa * sup |min(phi_l, 0)|.

    ``kappa = ceil(((a0 + R) / (R / 2))**d)`` bounds the number of
    R-separated points within interaction range of a given one.
    """
    if scalar.R <= 0:
        raise ConfigError("stability bound needs a positive hard core")
    depth = -min(_min_tail(scalar), 0.0)
    if depth == 0.0:
        return 0.0
    kappa = math.ceil(((scalar.a0 + scalar.R) / (scalar.R / 2)) ** d)
    return kappa * depth / 2


def hard_core_potential(R: float = 1.0, a0: float | None = None) -> PathPairPotential:
    return PathPairPotential(ScalarPotential(R=R, tail="none", a0=R if a0 is None else a0))


def zero_potential() -> PathPairPotential:
    return PathPairPotential(ScalarPotential(R=0.0, tail="none", a0=0.0))


def shifted_lj_potential() -> ScalarPotential:
    """Hard core R=1 with 16((1.5/(u-1))^12 - (1.5/(u-1))^6), a0 = 2.5."""
    return ScalarPotential(R=1.0, tail="lj", lj_a=16 * 1.5**12, lj_b=16 * 1.5**6, shifted=True, a0=2.5)


def unshifted_lj_potential() -> ScalarPotential:
    """Hard core R=1 with the unshifted tail u^-12 - u^-6, maximal at u = R."""
    return ScalarPotential(R=1.0, tail="lj", lj_a=1.0, lj_b=1.0, shifted=False, a0=1.0)
