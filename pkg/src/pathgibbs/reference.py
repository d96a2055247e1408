"""Sampling from the reference measure sigma(dx, dm) = exp(-Psi) dx R(dm).

Marks are drawn either by fresh Euler-Maruyama simulation, from a
pre-simulated bank (resampled with replacement), or frozen to the zero path.
"""
from __future__ import annotations

import math

import numpy as np

from .langevin import LangevinSpec, simulate_marks
from .potentials import SelfPotential, unit_ball_volume

__all__ = ["ReferenceMeasure", "uniform_in_balls"]


def uniform_in_balls(rng, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """One uniform point in each ball ``B(centers[i], radii[i])``."""
    n, d = centers.shape
    g = rng.normal(size=(n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radii * rng.random(n) ** (1.0 / d)
    return centers + g * r[:, None]


class ReferenceMeasure:
    """Reference measure on locations times marks.

    ``mark_mode`` is ``"simulate"`` (fresh paths), ``"bank"`` (resample from
    ``bank_size`` stored paths) or ``"zero"`` (all marks are the zero path).
    ``box`` is an optional array of shape (d, 2) restricting locations.
    """

    def __init__(self, spec: LangevinSpec, psi: SelfPotential | None = None, box=None,
                 mark_mode: str = "bank", bank_size: int = 4096, seed=0):
        if mark_mode not in ("simulate", "bank", "zero"):
            raise ValueError(f"unknown mark mode {mark_mode!r}")
        self.spec = spec
        self.d = spec.d
        self.n_nodes = spec.n_steps + 1
        self.psi = psi if psi is not None else SelfPotential()
        self.mark_mode = mark_mode
        self.box = None if box is None else np.asarray(box, dtype=float).reshape(self.d, 2)
        if self.box is not None and np.any(self.box[:, 1] <= self.box[:, 0]):
            raise ValueError("degenerate box")
        self._bank = None
        self._bank_norms = None
        if mark_mode == "bank":
            paths = simulate_marks(spec, bank_size, np.random.default_rng(seed))
            self._bank = paths
            self._bank_norms = np.sqrt((paths**2).sum(axis=2)).max(axis=1)

    @property
    def box_volume(self) -> float:
        if self.box is None:
            return math.inf
        return float(np.prod(self.box[:, 1] - self.box[:, 0]))

    @property
    def max_mark_norm(self) -> float:
        """Largest sup-norm the mark sampler can return (inf for fresh simulation)."""
        if self.mark_mode == "zero":
            return 0.0
        if self.mark_mode == "bank":
            return float(self._bank_norms.max())
        return math.inf

    def in_box(self, xs: np.ndarray) -> np.ndarray:
        if self.box is None:
            return np.ones(xs.shape[0], dtype=bool)
        return np.all((xs >= self.box[:, 0]) & (xs <= self.box[:, 1]), axis=1)

    def sample_marks(self, rng, n: int):
        """Marks of shape (n, T, d) with their sup-norms."""
        if self.mark_mode == "zero":
            return np.zeros((n, self.n_nodes, self.d)), np.zeros(n)
        if self.mark_mode == "bank":
            idx = rng.integers(0, self._bank.shape[0], size=n)
            return self._bank[idx], self._bank_norms[idx]
        paths = simulate_marks(self.spec, n, rng)
        return paths, np.sqrt((paths**2).sum(axis=2)).max(axis=1)

    def mark_weights(self, norms: np.ndarray) -> np.ndarray:
        return np.exp(-self.psi.from_norms(norms))

    def sample_near(self, x0: np.ndarray, norm0: float, a0: float, rng, n: int):
        """Importance sample ``n`` marked points supported on the interaction range of (x0, norm0).

        Locations are uniform in the ball of radius ``a0 + norm0 + ||m||``,
        so ``weights`` = ball volume * exp(-Psi) * 1{in box} makes
        ``mean(weights * g)`` unbiased for the sigma-integral of any ``g``
        vanishing outside that range.
        """
        ms, norms = self.sample_marks(rng, n)
        radii = a0 + norm0 + norms
        xs = uniform_in_balls(rng, np.broadcast_to(np.asarray(x0, float), (n, self.d)), radii)
        w = unit_ball_volume(self.d) * radii**self.d * self.mark_weights(norms)
        w = np.where(self.in_box(xs), w, 0.0)
        return xs, ms, norms, w

    def sample_box(self, rng, n: int):
        """Uniform locations in the box with weights |box| * exp(-Psi)."""
        if self.box is None:
            raise ValueError("sampling over the whole space needs a box")
        ms, norms = self.sample_marks(rng, n)
        lo, hi = self.box[:, 0], self.box[:, 1]
        xs = lo + (hi - lo) * rng.random((n, self.d))
        return xs, ms, norms, self.box_volume * self.mark_weights(norms)

    def box_mass(self, rng=None, n_mc: int = 20000):
        """sigma(box): exact when Psi is zero, Monte Carlo (value, stderr) otherwise."""
        vol = self.box_volume
        if self.psi.is_zero:
            return vol, 0.0
        rng = np.random.default_rng(rng)
        _, norms = self.sample_marks(rng, n_mc)
        w = self.mark_weights(norms)
        return vol * float(w.mean()), vol * float(w.std(ddof=1) / math.sqrt(n_mc))
