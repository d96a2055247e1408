"""Kirkwood-Salsburg operator, its fixed point and the weighted sup-norm.

Correlation functions are evaluated lazily at argument tuples. A tuple of
marked points is carried as three stacked arrays (locations, marks,
sup-norms) so that pair energies stay vectorised.

The fixed point is approached by the iteration

    r^(J) = D r^(J) + I r^(J-1) + 1_z,      r^(0) = (1 - D)^-1 1_z,

where ``D`` is the point-removal part of the operator (prefactor times
r_N at the remaining points) and ``I`` is the integral series. ``J``
counts integration generations only. Every r^(J) is computed without bias
by a randomised recursion: the removal term is followed exactly, one
series term ``k`` is picked uniformly in ``1..k_max`` and its integral is
replaced by a single importance sample.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .potentials import PathPairPotential
from .reference import ReferenceMeasure

__all__ = [
    "Points",
    "KSModel",
    "WeightFunction",
    "CorrelationSequence",
    "Estimate",
    "NeumannResult",
    "NormEstimate",
    "as_points",
    "ks_apply",
    "ks_residual",
    "neumann_eval",
    "neumann_mean_intensity",
    "banach_norm_estimate",
    "series_tail_bound",
]


class Points(NamedTuple):
    xs: np.ndarray
    ms: np.ndarray
    norms: np.ndarray

    def __len__(self):
        return self.xs.shape[0]

    def head_tail(self):
        return (self.xs[0], self.ms[0], self.norms[0]), Points(self.xs[1:], self.ms[1:], self.norms[1:])

    def concat(self, other: "Points") -> "Points":
        return Points(np.concatenate([self.xs, other.xs]), np.concatenate([self.ms, other.ms]),
                      np.concatenate([self.norms, other.norms]))

    def permuted(self, order) -> "Points":
        order = np.asarray(order)
        return Points(self.xs[order], self.ms[order], self.norms[order])


def as_points(pts) -> Points:
    """Accept a Points value, a Configuration or a sequence of MarkedPoints."""
    if isinstance(pts, Points):
        return pts
    pts = list(pts)
    if not pts:
        return Points(np.zeros((0, 0)), np.zeros((0, 0, 0)), np.zeros(0))
    return Points(np.stack([p.x for p in pts]), np.stack([p.m.values for p in pts]),
                  np.array([p.m.sup_norm for p in pts]))


class Estimate(NamedTuple):
    value: float
    stderr: float


@dataclass
class KSModel:
    """Activity, inverse temperature, pair potential and reference measure of the equations."""

    z: float
    beta: float
    phi: PathPairPotential
    ref: ReferenceMeasure
    k_max: int = 3

    def __post_init__(self):
        if self.z <= 0 or self.beta <= 0:
            raise ValueError("z and beta must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    def anchor_factor(self, head, rest: Points) -> float:
        """exp(-beta sum_i Phi(x0, x_i))."""
        if len(rest) == 0:
            return 1.0
        x0, m0, n0 = head
        e = self.phi.energies(x0, m0, n0, rest.xs, rest.ms, rest.norms)
        return float(np.exp(-self.beta * e.sum()))

    def sample_ys(self, head, k: int, rng):
        """k independent importance samples near the anchor and the product weight prod w_j f(x0, y_j)."""
        x0, m0, n0 = head
        xs, ms, norms, w = self.ref.sample_near(x0, n0, self.phi.scalar.a0, rng, k)
        f = np.expm1(-self.beta * self.phi.energies(x0, m0, n0, xs, ms, norms))
        return Points(xs, ms, norms), float(np.prod(w * f))


class WeightFunction:
    """c(x, m) = const, or exp(A (1 + ||m||^(d+delta)) + b) in weighted mode."""

    def __init__(self, kind: str = "constant", c: float = 1.0, A: float = 0.0, b: float = 0.0,
                 d: int = 1, delta: float = 0.5):
        if kind not in ("constant", "weighted"):
            raise ValueError(f"unknown weight kind {kind!r}")
        if kind == "constant" and not c > 0:
            raise ValueError("constant weight must be positive")
        self.kind, self.c, self.A, self.b, self.d, self.delta = kind, float(c), float(A), float(b), d, delta

    def log_weights(self, norms) -> np.ndarray:
        norms = np.asarray(norms, dtype=float)
        if self.kind == "constant":
            return np.full(norms.shape, math.log(self.c))
        return self.A * (1 + norms ** (self.d + self.delta)) + self.b

    def __call__(self, norms) -> np.ndarray:
        return np.exp(self.log_weights(norms))


class CorrelationSequence:
    """A family (r_N) evaluated on demand, with r_0 = 1.

    ``draw(points, rng)`` returns one evaluation; deterministic families
    ignore the generator. Stochastic families average ``n_rep`` independent
    draws in :meth:`evaluate`. Families carrying their own error (such as
    chain averages) supply ``estimate_fn`` returning an :class:`Estimate`.
    """

    def __init__(self, draw: Callable, N_max: int, provenance: str, stochastic: bool = False, seed=0,
                 estimate_fn: Callable | None = None):
        self._draw = draw
        self.estimate_fn = estimate_fn
        self.N_max = N_max
        self.provenance = provenance
        self.stochastic = stochastic
        self.rng = np.random.default_rng(seed)

    def draw(self, points: Points) -> float:
        if len(points) == 0:
            return 1.0
        if len(points) > self.N_max:
            raise ValueError(f"tuple size {len(points)} exceeds N_max={self.N_max}")
        return float(self._draw(points, self.rng))

    def evaluate(self, points, n_rep: int = 1) -> Estimate:
        points = as_points(points)
        if self.estimate_fn is not None and len(points) > 0:
            return self.estimate_fn(points)
        if not self.stochastic or len(points) == 0:
            return Estimate(self.draw(points), 0.0)
        vals = np.array([self.draw(points) for _ in range(n_rep)])
        se = float(vals.std(ddof=1) / math.sqrt(n_rep)) if n_rep > 1 else math.nan
        return Estimate(float(vals.mean()), se)

    __call__ = evaluate

    @classmethod
    def ideal(cls, N_max: int = 64) -> "CorrelationSequence":
        return cls(lambda p, rng: 1.0, N_max, "ideal")

    @classmethod
    def power(cls, c: float, N_max: int = 64) -> "CorrelationSequence":
        """r_N = c^N, the extremal element of unit norm for a constant weight c."""
        return cls(lambda p, rng: c ** len(p), N_max, f"power({c:g})")

    @classmethod
    def from_function(cls, fn, N_max: int, provenance: str) -> "CorrelationSequence":
        return cls(lambda p, rng: fn(p), N_max, provenance)

    @classmethod
    def neumann(cls, model: KSModel, depth: int, seed=0, N_max: int = 64) -> "CorrelationSequence":
        def draw(p, rng):
            return _neumann_draw(model, p, depth, rng, [0, math.inf])

        return cls(draw, N_max, f"neumann(J={depth})", stochastic=True, seed=seed)


class _CallBudgetExceeded(Exception):
    pass


def _neumann_draw(model: KSModel, pts: Points, depth: int, rng, counter) -> float:
    """One unbiased draw of r^(depth)_N(pts)."""
    counter[0] += 1
    if counter[0] > counter[1]:
        raise _CallBudgetExceeded
    n = len(pts)
    if n == 0:
        return 1.0
    head, rest = pts.head_tail()
    pref = model.anchor_factor(head, rest)
    if pref == 0.0:
        return 0.0
    val = _neumann_draw(model, rest, depth, rng, counter)
    if depth > 0 and not model.phi.is_trivial:
        k = int(rng.integers(1, model.k_max + 1))
        ys, w = model.sample_ys(head, k, rng)
        w *= model.k_max * model.z**k / math.factorial(k)
        if w != 0.0:
            val += w * _neumann_draw(model, rest.concat(ys), depth - 1, rng, counter)
    return pref * val


class NeumannResult(NamedTuple):
    estimate: float
    stderr: float
    n_samples: int
    n_calls: int
    partial: bool


def neumann_eval(args, model: KSModel, depth: int = 4, budget: int = 1000, seed=0,
                 z_crit: float | None = None, max_calls: int | None = None) -> NeumannResult:
    """Estimate rho_N at ``args`` from ``budget`` independent recursion draws.

    When ``max_calls`` recursion steps are used up the draws completed so far
    are returned with ``partial=True``.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if z_crit is not None and model.z >= z_crit:
        warnings.warn(f"z={model.z} is not below z_crit={z_crit}; contraction is not guaranteed")
    pts = as_points(args)
    rng = np.random.default_rng(seed)
    counter = [0, math.inf if max_calls is None else max_calls]
    vals = []
    partial = False
    for _ in range(budget):
        try:
            vals.append(_neumann_draw(model, pts, depth, rng, counter))
        except _CallBudgetExceeded:
            partial = True
            break
    vals = np.asarray(vals)
    if vals.size == 0:
        return NeumannResult(math.nan, math.nan, 0, counter[0], True)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return NeumannResult(float(vals.mean()), se, int(vals.size), int(counter[0]), partial)


def neumann_mean_intensity(model: KSModel, depth: int = 4, budget: int = 10000, seed=0) -> Estimate:
    """Average of rho_1 over the box against sigma, normalised by sigma(box)."""
    ref = model.ref
    rng = np.random.default_rng(seed)
    xs, ms, norms, w = ref.sample_box(rng, budget)
    counter = [0, math.inf]
    vals = np.array([_neumann_draw(model, Points(xs[i:i + 1], ms[i:i + 1], norms[i:i + 1]), depth, rng, counter)
                     for i in range(budget)])
    if ref.psi.is_zero:
        return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(budget)))
    # self-normalised importance estimate of int rho_1 dsigma / sigma(box)
    wv = w * vals
    est = wv.sum() / w.sum()
    resid = (wv - est * w) / w.mean()
    return Estimate(float(est), float(resid.std(ddof=1) / math.sqrt(budget)))


def ks_apply(r: CorrelationSequence, args, model: KSModel, budget: int = 1000, seed=0) -> Estimate:
    """(K_z r)_{N+1} at ``args`` = (x0, x1..xN), series truncated at k_max.

    For a single argument only the series is present.
    """
    pts = as_points(args)
    if len(pts) < 1:
        raise ValueError("the operator needs at least one argument")
    if len(pts) + model.k_max - 1 > r.N_max:
        raise ValueError("arguments exceed N_max - k_max")
    head, rest = pts.head_tail()
    pref = model.anchor_factor(head, rest)
    if pref == 0.0:
        return Estimate(0.0, 0.0)
    base = r.evaluate(rest, n_rep=budget) if len(rest) > 0 else Estimate(0.0, 0.0)
    total, var = base.value, base.stderr**2
    if not model.phi.is_trivial:
        rng = np.random.default_rng(seed)
        for k in range(1, model.k_max + 1):
            coef = model.z**k / math.factorial(k)
            vals = np.empty(budget)
            for s in range(budget):
                ys, w = model.sample_ys(head, k, rng)
                vals[s] = 0.0 if w == 0.0 else w * r.draw(rest.concat(ys))
            total += coef * float(vals.mean())
            var += (coef * float(vals.std(ddof=1))) ** 2 / budget
    return Estimate(pref * total, pref * math.sqrt(var))


def ks_residual(r: CorrelationSequence, args, model: KSModel, budget: int = 1000, seed=0) -> Estimate:
    """r(args) - [(K_z r)(args) + 1_z(args)] with the combined standard error."""
    pts = as_points(args)
    lhs = r.evaluate(pts, n_rep=budget)
    k = ks_apply(r, pts, model, budget, seed)
    one = 1.0 if len(pts) == 1 else 0.0
    return Estimate(lhs.value - k.value - one, math.hypot(lhs.stderr, k.stderr))


class NormEstimate(NamedTuple):
    value: float
    argmax_N: int
    lower_bound: bool


def banach_norm_estimate(r: CorrelationSequence, weight: WeightFunction, ref: ReferenceMeasure,
                         n_tuples: int = 64, max_N: int = 3, seed=0, n_rep: int = 1,
                         radius: float = 1.0) -> NormEstimate:
    """Empirical sup over sampled tuples of |r_N| / prod c(x_i).

    This is a lower bound for the norm. Tuples are uniform in the box of
    ``ref`` or, without a box, in a ball of ``radius`` around the origin.
    """
    rng = np.random.default_rng(seed)
    best, best_N = 0.0, 1
    for N in range(1, max_N + 1):
        for _ in range(n_tuples):
            if ref.box is not None:
                xs, ms, norms, _ = ref.sample_box(rng, N)
            else:
                xs, ms, norms, _ = ref.sample_near(np.zeros(ref.d), 0.0, radius, rng, N)
            v = abs(r.evaluate(Points(xs, ms, norms), n_rep=n_rep).value)
            ratio = v * math.exp(-float(weight.log_weights(norms).sum()))
            if ratio > best:
                best, best_N = ratio, N
    return NormEstimate(best, best_N, True)


def series_tail_bound(k: int, z: float, c: float, C_beta: float) -> float:
    """(z c C)^k / k!: bound on the k-th series term relative to the current norm bound."""
    return (z * c * C_beta) ** k / math.factorial(k)
