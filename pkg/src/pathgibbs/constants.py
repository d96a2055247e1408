"""Regularity constant, activity thresholds and the weighted-norm constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .langevin import LangevinSpec, simulate_marks
from .potentials import (ConfigError, PathPairPotential, SelfPotential, phi_tail_norm,
                         stability_constant_bound, unit_ball_volume)
from .reference import ReferenceMeasure, uniform_in_balls

__all__ = [
    "ModelConstants",
    "ThresholdReport",
    "RegularityEstimate",
    "WeightedConstants",
    "DivergenceError",
    "z_ruelle",
    "c_z",
    "ks_norm_bound",
    "log_ks_norm_bound",
    "z_crit",
    "threshold_curve",
    "uniform_rb_threshold",
    "regularity_constant",
    "weighted_constants",
    "weighted_A",
    "stirling_chain_holds",
    "tree_integral_estimate",
    "tree_integral_bound",
    "k_d",
]

_E_OVER_SQRT2PI = math.e / math.sqrt(2 * math.pi)


class DivergenceError(ValueError):
    """Activity at or beyond the Ruelle threshold."""


@dataclass
class ModelConstants:
    beta: float
    B_Phi: float = 0.0
    Bbar_Phi: float = 0.0
    C_beta: float = 1.0
    C_source: str = "user-supplied"
    d: int = 1
    delta: float = 0.5

    def __post_init__(self):
        if not self.beta > 0 or not self.C_beta > 0:
            raise ConfigError("beta and C_beta must be positive")
        if self.B_Phi < 0 or self.Bbar_Phi < 0:
            raise ConfigError("stability constants must be non-negative")
        if self.C_source not in ("user-supplied", "MC-estimated", "analytic-bound"):
            raise ConfigError(f"unknown C provenance {self.C_source!r}")
        for v in (self.beta, self.B_Phi, self.Bbar_Phi, self.C_beta):
            if not math.isfinite(v):
                raise ConfigError("model constants must be finite")


def z_ruelle(C_beta: float, B_Phi: float, beta: float) -> float:
    """1 / (C exp(2 beta B + 1))."""
    if not C_beta > 0:
        raise ValueError("C_beta must be positive")
    return 1.0 / (C_beta * math.exp(2 * beta * B_Phi + 1))


def _cz_array(z, C_beta, B_Phi, beta):
    zr = z_ruelle(C_beta, B_Phi, beta)
    z = np.asarray(z, dtype=float)
    return math.exp(2 * beta * B_Phi) * (1 + _E_OVER_SQRT2PI * -np.log1p(-z / zr))


def c_z(z: float, C_beta: float, B_Phi: float, beta: float) -> float:
    """exp(2 beta B) (1 + e / sqrt(2 pi) * log(1 / (1 - z / z_Ru)))."""
    zr = z_ruelle(C_beta, B_Phi, beta)
    if z < 0:
        raise ValueError("activity must be non-negative")
    if z >= zr:
        raise DivergenceError(f"c_z diverged: z={z} >= z_Ru={zr}")
    return float(_cz_array(z, C_beta, B_Phi, beta))


def log_ks_norm_bound(z, C_beta, B_Phi, beta):
    """log f(z) = 2 beta B + z c_z C - log c_z, vectorised over z."""
    c = _cz_array(z, C_beta, B_Phi, beta)
    return 2 * beta * B_Phi + np.asarray(z) * c * C_beta - np.log(c)


def ks_norm_bound(z: float, C_beta: float, B_Phi: float, beta: float) -> float:
    """Operator-norm bound f(z) = exp(2 beta B + z c_z C) / c_z."""
    c = c_z(z, C_beta, B_Phi, beta)
    return math.exp(2 * beta * B_Phi + z * c * C_beta) / c


@dataclass
class ThresholdReport:
    z_ru: float
    z_crit: float
    curve: np.ndarray = field(repr=False)
    notes: list = field(default_factory=list)


def threshold_curve(C_beta, B_Phi, beta, n: int = 2048, top: float = 1 - 1e-6) -> np.ndarray:
    """Table with columns z, c_z, f(z) on a uniform grid of [0, top * z_Ru]."""
    zr = z_ruelle(C_beta, B_Phi, beta)
    z = np.linspace(0.0, top * zr, n)
    c = _cz_array(z, C_beta, B_Phi, beta)
    f = np.exp(log_ks_norm_bound(z, C_beta, B_Phi, beta))
    return np.column_stack([z, c, f])


def z_crit(C_beta: float, B_Phi: float, beta: float, grid_n: int = 2048, tol: float = 1e-8) -> ThresholdReport:
    """First up-crossing of f(z) = 1 after the initial dip below 1.

    A geometric scan of log f locates the bracket, bisection refines it.
    """
    if grid_n < 1000:
        raise ValueError("grid_n must be >= 1000")
    zr = z_ruelle(C_beta, B_Phi, beta)
    grid = np.geomspace(zr * 1e-9, zr * (1 - 1e-6), grid_n)
    lf = log_ks_norm_bound(grid, C_beta, B_Phi, beta)
    below = lf < 0
    if not below.any():
        raise RuntimeError("f never dips below 1")
    first_below = int(np.argmax(below))
    above = np.flatnonzero(~below[first_below:])
    if above.size == 0:
        raise RuntimeError("no up-crossing of f = 1 below z_Ru")
    i = first_below + int(above[0])
    lo, hi = float(grid[i - 1]), float(grid[i])
    g = lambda z: float(log_ks_norm_bound(z, C_beta, B_Phi, beta))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    zc = 0.5 * (lo + hi)
    return ThresholdReport(zr, zc, threshold_curve(C_beta, B_Phi, beta, grid_n),
                           [f"scan: {grid_n}-point geometric grid, bisection tol {tol:g}"])


def uniform_rb_threshold(C_beta: float, B_phi: float, beta: float) -> float:
    """beta B / (C exp(3 beta B)): contraction threshold for the constant c = exp(3 beta B)."""
    return beta * B_phi / (C_beta * math.exp(3 * beta * B_phi))


class RegularityEstimate(NamedTuple):
    estimate: float
    stderr: float
    analytic_bound: float
    anchor_values: np.ndarray

    @property
    def conservative(self) -> float:
        """The larger of the empirical sup and the analytic bound."""
        return max(self.estimate, self.analytic_bound)


def _integral_against_sigma(phi, beta, ref, x0, m0, norm0, rng, n_mc):
    xs, ms, norms, w = ref.sample_near(x0, norm0, phi.scalar.a0, rng, n_mc)
    e = phi.energies(x0, m0, norm0, xs, ms, norms)
    vals = w * np.abs(np.expm1(-beta * e))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mc))


def regularity_constant(phi: PathPairPotential, psi: SelfPotential, beta: float, ref: ReferenceMeasure,
                        n_anchor: int = 256, n_mc: int = 4096, seed=0, force: bool = False,
                        A_Psi_exponent_samples: int = 4096) -> RegularityEstimate:
    """Empirical sup over anchor marks of int |exp(-beta Phi(x, y)) - 1| sigma(dy).

    The analytic bound is exp(2 beta B) (b_d R^d + beta ||phi||) E[exp(A_Psi ||m||^(d + delta))]
    with the expectation estimated by Monte Carlo over the marks.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if ref.box is not None:
        raise ValueError("the regularity constant integrates over the whole space; use an unboxed reference")
    scalar = phi.scalar
    d = ref.d
    tail = phi_tail_norm(scalar, d)
    if not tail.regular and not force:
        raise ConfigError("pair potential is not regular (tail not integrable at the hard core)")
    rng = np.random.default_rng(seed)
    anchors_m, anchors_n = ref.sample_marks(rng, n_anchor)
    x0 = np.zeros(d)
    vals = np.empty(n_anchor)
    errs = np.empty(n_anchor)
    for a in range(n_anchor):
        vals[a], errs[a] = _integral_against_sigma(phi, beta, ref, x0, anchors_m[a], anchors_n[a], rng, n_mc)
    best = int(np.argmax(vals))
    B = stability_constant_bound(scalar, d) if scalar.R > 0 else 0.0
    _, norms = ref.sample_marks(rng, A_Psi_exponent_samples)
    moment = float(np.mean(np.exp(psi.A_Psi * norms ** (d + ref.spec.delta))))
    bound = math.exp(2 * beta * B) * (unit_ball_volume(d) * scalar.R**d + beta * tail.value) * moment
    return RegularityEstimate(float(vals[best]), float(errs[best]), bound, vals)


def k_d(d: int) -> int:
    """Constant with (x + y + z)^d <= k_d (x^d + y^d + z^d) for x, y, z >= 0."""
    return 3 ** (d - 1)


def weighted_A(Bbar_Phi: float, M_phi: float, R: float, a0: float, d: int, delta: float) -> float:
    """sup_u max(Bbar (1 + u^(d+delta)), b_d (R^d + M k_d (a0^d + u^d + 1))) / (1 + u^(d+delta))."""
    bd = unit_ball_volume(d)
    kd = k_d(d)

    def ratio(u):
        w = 1.0 + u ** (d + delta)
        return max(Bbar_Phi * w, bd * (R**d + M_phi * kd * (a0**d + u**d + 1))) / w

    u = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 20001)])
    r = np.array([ratio(t) for t in u])
    i = int(np.argmax(r))
    best = float(r[i])
    a, b = u[max(i - 1, 0)], u[min(i + 1, u.size - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda t: -ratio(t), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


class WeightedConstants(NamedTuple):
    A: float
    upsilon_A: float
    upsilon_stderr: float
    z_crit_weighted: float
    n_overflow: int


def weighted_constants(spec: LangevinSpec, psi: SelfPotential, beta: float, B_Phi: float, Bbar_Phi: float,
                       M_phi: float, R: float, a0: float, n_mc: int = 20000, seed=0,
                       A: float | None = None) -> WeightedConstants:
    """A, upsilon_A = E[exp(A(1 + ||m||^(d+delta)) + A_Psi ||m||^(d+2 delta))] and (upsilon_A beta e^(2 beta B))^-1."""
    d, delta = spec.d, spec.delta
    if A is None:
        A = weighted_A(Bbar_Phi, M_phi, R, a0, d, delta)
    paths = simulate_marks(spec, n_mc, np.random.default_rng(seed))
    norms = np.sqrt((paths**2).sum(axis=2)).max(axis=1)
    expo = A * (1 + norms ** (d + delta)) + psi.A_Psi * norms ** (d + 2 * delta)
    ok = expo < np.log(np.finfo(float).max)
    vals = np.exp(expo[ok])
    ups = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(vals.size))
    zc = 1.0 / (ups * beta * math.exp(2 * beta * B_Phi))
    return WeightedConstants(float(A), ups, se, zc, int((~ok).sum()))


# rational bounds: pi < 355/113 and e > 2.718281828
_PI_UPPER = Fraction(355, 113)
_E_LOWER = Fraction(2718281828, 10**9)


def stirling_chain_holds(N: int) -> bool:
    """Exact check of (N+1)^(N-1) <= e^(N+1) N! / (sqrt(2 pi) (N+1)^(3/2)).

    Squared and rearranged: 2 pi (N+1)^(2N+1) <= e^(2N+2) (N!)^2, decided with
    an upper bound for pi and a lower bound for e, so True is a proof.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    lhs = 2 * _PI_UPPER * (N + 1) ** (2 * N + 1)
    rhs = _E_LOWER ** (2 * N + 2) * math.factorial(N) ** 2
    return lhs <= rhs


def tree_integral_bound(N: int, C_beta: float, B_Phi: float, beta: float) -> float:
    """exp(2 beta B (N+1)) C^N (N+1)^(N-1)."""
    return math.exp(2 * beta * B_Phi * (N + 1)) * C_beta**N * (N + 1) ** (N - 1)


def tree_integral_estimate(N: int, phi: PathPairPotential, beta: float, B_Phi: float, ref: ReferenceMeasure,
                           n_mc: int = 20000, seed=0):
    """Monte Carlo estimate of int Q({x}, {y_1..y_N}) sigma^N(dy) with x at the origin, zero mark.

    Each y is uniform in a ball that contains every point reachable from x
    through a chain of at most N interacting pairs.
    """
    from .cluster import tree_edge_array

    if ref.mark_mode == "simulate":
        raise ValueError("needs a reference with a bounded mark set (bank or zero)")
    rng = np.random.default_rng(seed)
    d, T = ref.d, ref.n_nodes
    max_norm = ref.max_mark_norm
    radius = N * (phi.scalar.a0 + 2 * max_norm)
    vol = unit_ball_volume(d) * radius**d
    trees = tree_edge_array(N + 1) if N >= 1 else None
    x0 = np.zeros(d)
    m0 = np.zeros((T, d))
    vals = np.empty(n_mc)
    for s in range(n_mc):
        ms, norms = ref.sample_marks(rng, N)
        xs = uniform_in_balls(rng, np.zeros((N, d)), np.full(N, radius))
        pos = np.vstack([x0, xs])
        mk = np.concatenate([m0[None], ms])
        nm = np.concatenate([[0.0], norms])
        F = np.zeros((N + 1, N + 1))
        for i in range(N):
            e = phi.energies(pos[i], mk[i], nm[i], pos[i + 1:], mk[i + 1:], nm[i + 1:])
            F[i, i + 1:] = np.abs(np.expm1(-beta * e))
        F = F + F.T
        tree_sum = F[trees[:, :, 0], trees[:, :, 1]].prod(axis=1).sum()
        w = vol**N * float(np.prod(ref.mark_weights(norms)))
        vals[s] = math.exp(2 * beta * B_Phi * (N + 1)) * tree_sum * w
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mc))
