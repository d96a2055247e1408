"""Euler-Maruyama simulation of the Langevin mark law R.

A mark is the displacement path ``m(s) = X(s) - X(0)`` of

    dX(s) = dB(s) - 1/2 grad V(X(s)) ds,   s in [0, 1],   X(0) = 0,

sampled on a uniform grid of ``n_steps + 1`` nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "LangevinSpec",
    "PathMark",
    "IntegrationError",
    "MomentEstimate",
    "simulate_mark",
    "simulate_marks",
    "euler_maruyama",
    "exp_moment_estimate",
    "zero_mark",
]

_EPS_ORIGIN = 1e-6
_EXP_MAX = np.log(np.finfo(float).max)


class IntegrationError(RuntimeError):
    """The drift evaluated to a non-finite value."""


@dataclass(frozen=True)
class LangevinSpec:
    """Confining potential and discretisation of the mark diffusion.

    ``potential`` is ``"power"`` for ``V(x) = (|x|^2 + eps^2)^(p/2)`` or
    ``"zero"`` for pure Brownian motion.
    """

    d: int = 1
    potential: str = "power"
    p: float = 4.0
    n_steps: int = 64
    delta: float = 0.5
    eps: float = _EPS_ORIGIN

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.potential not in ("power", "zero"):
            raise ValueError(f"unknown confining potential {self.potential!r}")
        if self.potential == "power" and not self.p > self.d:
            raise ValueError("power potential needs p > d")

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_steps + 1)

    @property
    def delta_prime(self) -> float:
        """Largest growth exponent for which both confinement inequalities hold.

        For ``V ~ |x|^p`` the lower bound needs ``d + delta' <= p`` and the
        gradient condition needs ``2 + 2 delta' <= 2p - 2``.
        """
        if self.potential == "zero":
            return 0.0
        return min(self.p - self.d, self.p - 2.0)

    @property
    def confinement_ok(self) -> bool:
        dp = self.delta_prime
        return dp > 0 and self.delta < dp / 2

    def drift(self, x: np.ndarray) -> np.ndarray:
        """-1/2 grad V at points ``x`` of shape (..., d)."""
        if self.potential == "zero":
            return np.zeros_like(x)
        with np.errstate(over="ignore", invalid="ignore"):
            r2 = np.sum(x * x, axis=-1, keepdims=True) + self.eps**2
            return -0.5 * self.p * r2 ** (self.p / 2 - 1) * x


@dataclass(frozen=True, eq=False)
class PathMark:
    """Displacement path on the uniform grid, ``values[0] == 0``."""

    values: np.ndarray
    sup_norm: float = field(default=-1.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("mark values must have shape (n_nodes, d)")
        if np.any(v[0] != 0.0):
            raise ValueError("mark must start at the origin")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sup_norm", float(np.sqrt((v * v).sum(axis=1)).max()))

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return isinstance(other, PathMark) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


def zero_mark(n_steps: int, d: int) -> PathMark:
    return PathMark(np.zeros((n_steps + 1, d)))


def euler_maruyama(spec: LangevinSpec, dW: np.ndarray) -> np.ndarray:
    """Integrate from 0 with Brownian increments ``dW`` of shape (n, n_steps, d).

    Returns paths of shape (n, n_steps + 1, d).
    """
    dW = np.asarray(dW, dtype=float)
    n, steps, d = dW.shape
    if steps != spec.n_steps or d != spec.d:
        raise ValueError("increment array does not match the time grid")
    out = np.zeros((n, steps + 1, d))
    x = out[:, 0]
    h = spec.dt
    for k in range(steps):
        b = spec.drift(x)
        if not np.all(np.isfinite(b)):
            raise IntegrationError(f"non-finite drift at step {k}")
        x = x + b * h + dW[:, k]
        out[:, k + 1] = x
    return out


def simulate_marks(spec: LangevinSpec, n: int, rng) -> np.ndarray:
    """Raw array of ``n`` mark paths, shape (n, n_steps + 1, d)."""
    rng = np.random.default_rng(rng)
    dW = rng.normal(0.0, np.sqrt(spec.dt), size=(n, spec.n_steps, spec.d))
    return euler_maruyama(spec, dW)


def simulate_mark(spec: LangevinSpec, seed) -> PathMark:
    return PathMark(simulate_marks(spec, 1, seed)[0])


class MomentEstimate(NamedTuple):
    estimate: float
    stderr: float
    n_overflow: int
    hypothesis_checked: bool


def exp_moment_estimate(spec: LangevinSpec, exponent: float, n_samples: int, seed) -> MomentEstimate:
    """Monte Carlo estimate of E[exp(||m||^exponent)] under R.

    Samples whose exponential overflows are counted in ``n_overflow`` and left
    out of the mean, so the estimate is then a lower bound.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    if exponent == 0:
        return MomentEstimate(1.0, 0.0, 0, _moment_hypothesis(spec, exponent))
    paths = simulate_marks(spec, n_samples, seed)
    norms = np.sqrt((paths**2).sum(axis=2)).max(axis=1)
    log_vals = norms**exponent
    ok = log_vals < _EXP_MAX
    vals = np.exp(log_vals[ok])
    n_ok = vals.size
    est = float(vals.mean()) if n_ok else float("inf")
    se = float(vals.std(ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else float("inf")
    return MomentEstimate(est, se, int(n_samples - n_ok), _moment_hypothesis(spec, exponent))


def _moment_hypothesis(spec: LangevinSpec, exponent: float) -> bool:
    # finiteness is guaranteed for exponents d + 2 delta with delta < delta'/2
    return spec.confinement_ok and exponent < spec.d + spec.delta_prime
