"""Finite marked configurations, their energies and structural predicates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .langevin import PathMark
from .potentials import INF, PathPairPotential, SelfPotential

__all__ = [
    "MarkedPoint",
    "Configuration",
    "TemperednessReport",
    "pair_interaction_energy",
    "conditional_energy",
    "total_energy",
    "interaction_range",
    "temperedness_index",
    "select_anchor",
    "is_admissible",
    "write_configurations_csv",
    "read_configurations_csv",
    "write_mark_csv",
]


@dataclass(frozen=True, eq=False)
class MarkedPoint:
    x: np.ndarray
    m: PathMark

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        if x.shape[0] != self.m.d:
            raise ValueError("location and mark dimensions differ")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def d(self) -> int:
        return self.x.shape[0]

    def key(self) -> bytes:
        return self.x.tobytes() + self.m.values.tobytes()

    def __eq__(self, other):
        return (isinstance(other, MarkedPoint) and np.array_equal(self.x, other.x)
                and self.m == other.m)

    def __hash__(self):
        return hash(self.key())


class Configuration:
    """Immutable finite simple configuration of marked points.

    Locations, marks and sup-norms are also held as stacked arrays so that
    energies against many points can be vectorised.
    """

    __slots__ = ("points", "positions", "marks", "norms")

    def __init__(self, points: Iterable[MarkedPoint] = ()):
        pts = tuple(points)
        if len({p.key() for p in pts}) != len(pts):
            raise ValueError("configuration is not simple: repeated marked point")
        if pts:
            d, T = pts[0].d, pts[0].m.n_nodes
            if any(p.d != d or p.m.n_nodes != T for p in pts):
                raise ValueError("points have inconsistent dimension or mark grid")
            self.positions = np.stack([p.x for p in pts])
            self.marks = np.stack([p.m.values for p in pts])
            self.norms = np.array([p.m.sup_norm for p in pts])
        else:
            self.positions = np.zeros((0, 0))
            self.marks = np.zeros((0, 0, 0))
            self.norms = np.zeros(0)
        self.points = pts

    @classmethod
    def from_arrays(cls, positions, marks) -> "Configuration":
        return cls(MarkedPoint(x, PathMark(m)) for x, m in zip(positions, marks))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def __contains__(self, p):
        return any(p == q for q in self.points)

    def __repr__(self):
        return f"Configuration(n={len(self)})"

    def without(self, i: int) -> "Configuration":
        return Configuration(self.points[:i] + self.points[i + 1:])

    def concat(self, other: "Configuration") -> "Configuration":
        return Configuration(self.points + tuple(other.points))

    def energies_to(self, p: MarkedPoint, phi: PathPairPotential) -> np.ndarray:
        if not self.points:
            return np.zeros(0)
        return phi.energies(p.x, p.m.values, p.m.sup_norm, self.positions, self.marks, self.norms)


def _finite_sum(values) -> float:
    # fsum is exactly rounded, hence independent of summation order
    values = np.asarray(values, dtype=float)
    if np.isposinf(values).any():
        return INF
    return math.fsum(values)


def pair_interaction_energy(gamma: Configuration, phi: PathPairPotential) -> float:
    """Sum of Phi over unordered pairs; +inf as soon as one pair is +inf."""
    n = len(gamma)
    parts = []
    for i in range(n - 1):
        p = gamma[i]
        e = phi.energies(p.x, p.m.values, p.m.sup_norm,
                         gamma.positions[i + 1:], gamma.marks[i + 1:], gamma.norms[i + 1:])
        if np.isposinf(e).any():
            return INF
        parts.append(e)
    return math.fsum(np.concatenate(parts)) if parts else 0.0


def conditional_energy(p: MarkedPoint, xi: Configuration, phi: PathPairPotential) -> float:
    if p in xi:
        raise ValueError("point belongs to the conditioning configuration")
    return _finite_sum(xi.energies_to(p, phi))


def total_energy(gamma: Configuration, psi: SelfPotential, phi: PathPairPotential, beta: float) -> float:
    """H(gamma) = sum Psi + beta * E_Phi(gamma), with H(empty) = 0."""
    if len(gamma) == 0:
        return 0.0
    e = pair_interaction_energy(gamma, phi)
    if e == INF:
        return INF
    return math.fsum(psi.from_norms(gamma.norms)) + beta * e


def interaction_range(t: int, sup_mark: float, a0: float, d: int, delta: float) -> float:
    """Range bound 2 l(t) + 2 sup||m|| + 1 + a0 with l(t) = 2^((d+delta)/delta - 1) t^(1/delta)."""
    if t < 1:
        raise ValueError("temperedness index must be >= 1")
    ell = 2.0 ** ((d + delta) / delta - 1.0) * t ** (1.0 / delta)
    return 2.0 * ell + 2.0 * sup_mark + 1.0 + a0


class TemperednessReport(NamedTuple):
    index_t: int
    l_max: int


def temperedness_index(gamma: Configuration, l_max: int, delta: float, d: int) -> TemperednessReport:
    """Smallest t with sum_{|x| <= l} (1 + ||m||^(d + 2 delta)) <= t l^d for l <= l_max.

    A finite configuration always has such a t, so no "none" state arises.
    """
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    if len(gamma) == 0:
        return TemperednessReport(1, l_max)
    radii = np.sqrt((gamma.positions**2).sum(axis=1))
    weights = 1.0 + gamma.norms ** (d + 2 * delta)
    t = 1
    for ell in range(1, l_max + 1):
        s = float(weights[radii <= ell].sum())
        t = max(t, math.ceil(s / ell**d))
    return TemperednessReport(t, l_max)


def select_anchor(gamma: Configuration, phi: PathPairPotential) -> MarkedPoint:
    """Point with the largest conditional energy against the rest (lowest index on ties)."""
    if len(gamma) == 0:
        raise ValueError("empty configuration has no anchor")
    best, best_val = 0, -INF
    for i in range(len(gamma)):
        v = conditional_energy(gamma[i], gamma.without(i), phi)
        if v > best_val:
            best, best_val = i, v
    return gamma[best]


def is_admissible(gamma: Configuration, phi: PathPairPotential) -> bool:
    return pair_interaction_energy(gamma, phi) < INF


def _header(d: int, n_nodes: int) -> list[str]:
    cols = ["point_id"] + [f"x{j + 1}" for j in range(d)]
    cols += [f"m{k}_{j + 1}" for k in range(n_nodes) for j in range(d)]
    return cols


def write_configurations_csv(path, configs: Sequence[Configuration], d: int, n_nodes: int) -> None:
    """One row per point; a leading ``config_id`` column separates configurations."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config_id"] + _header(d, n_nodes))
        for c, gamma in enumerate(configs):
            for i, p in enumerate(gamma):
                row = [c, i] + [f"{v:.17g}" for v in p.x] + [f"{v:.17g}" for v in p.m.values.ravel()]
                w.writerow(row)


def read_configurations_csv(path) -> list[Configuration]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = sum(1 for h in header if h.startswith("x"))
        n_nodes = (len(header) - 2 - d) // d
        groups: dict[int, list[MarkedPoint]] = {}
        for row in r:
            cid = int(row[0])
            vals = [float(v) for v in row[2:]]
            x = np.array(vals[:d])
            m = np.array(vals[d:]).reshape(n_nodes, d)
            groups.setdefault(cid, []).append(MarkedPoint(x, PathMark(m)))
    n = max(groups) + 1 if groups else 0
    return [Configuration(groups.get(c, [])) for c in range(n)]


def write_mark_csv(path, mark: PathMark) -> None:
    n = mark.n_nodes
    s = np.linspace(0.0, 1.0, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"m{j + 1}" for j in range(mark.d)])
        for k in range(n):
            w.writerow([f"{s[k]:.17g}"] + [f"{v:.17g}" for v in mark.values[k]])
