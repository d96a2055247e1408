"""Birth-death-move Metropolis-Hastings for finite-volume Gibbs path processes.

The target on configurations in the box is proportional to
``z^n exp(-H)`` against the unit-rate Poisson process of Lebesgue x R,
with ``H = sum Psi + beta E_Phi``; equivalently ``exp(-beta E_Phi)``
against the Poisson process of intensity ``z sigma``. Correlation
functions are densities with respect to ``(z sigma)^N``; references that
normalise against Lebesgue measure differ by the factor ``z^N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .configurations import Configuration
from .ks import CorrelationSequence, Estimate, Points
from .potentials import INF, PathPairPotential, SelfPotential
from .reference import ReferenceMeasure

__all__ = [
    "SamplerConfig",
    "ChainSummary",
    "ChainResult",
    "ChainState",
    "mcmc_run",
    "batch_means",
    "integrated_autocorr_time",
    "estimate_intensity",
    "estimate_intensity_gnz",
    "mcmc_correlation",
    "gnz_residual",
    "GNZResult",
    "TEST_FUNCTIONS",
    "log_target",
    "PartitionResult",
    "partition_oracle",
]

MOVES = ("birth", "death", "translate", "mark")


@dataclass
class SamplerConfig:
    box: np.ndarray
    z: float
    beta: float = 1.0
    p_birth: float = 0.35
    p_death: float = 0.35
    p_translate: float = 0.2
    p_mark: float = 0.1
    n_sweeps: int = 10000
    burn_in: int = 1000
    thinning: int = 1
    moves_per_sweep: int = 10
    translate_scale: float = 0.25
    seed: int = 0
    keep_samples: bool = False

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float).reshape(-1, 2)
        if np.any(self.box[:, 1] <= self.box[:, 0]):
            raise ValueError("degenerate box")
        probs = self.probabilities
        if np.any(probs < 0) or np.any(probs > 1) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("move probabilities must lie in [0, 1] and sum to 1")
        if self.z <= 0 or self.beta <= 0:
            raise ValueError("z and beta must be positive")
        for name in ("n_sweeps", "thinning", "moves_per_sweep"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([self.p_birth, self.p_death, self.p_translate, self.p_mark])

    @property
    def d(self) -> int:
        return self.box.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.box[:, 1] - self.box[:, 0]))


class ChainSummary(NamedTuple):
    n_kept: int
    acceptance: dict
    mean_n: float
    tau_n: float


@dataclass
class ChainResult:
    counts: np.ndarray
    summary: ChainSummary
    config: SamplerConfig
    samples: list = field(default_factory=list)

    def configurations(self) -> list[Configuration]:
        return [Configuration.from_arrays(xs, ms) for xs, ms, _ in self.samples]


class ChainState:
    """Mutable point arrays with O(1) append and swap-remove."""

    def __init__(self, d: int, n_nodes: int, capacity: int = 64):
        self.xs = np.zeros((capacity, d))
        self.ms = np.zeros((capacity, n_nodes, d))
        self.norms = np.zeros(capacity)
        self.psi = np.zeros(capacity)
        self.n = 0

    def view(self) -> Points:
        return Points(self.xs[:self.n], self.ms[:self.n], self.norms[:self.n])

    def add(self, x, m, norm, psi):
        if self.n == self.xs.shape[0]:
            for name in ("xs", "ms", "norms", "psi"):
                a = getattr(self, name)
                setattr(self, name, np.concatenate([a, np.zeros_like(a)]))
        i = self.n
        self.xs[i], self.ms[i], self.norms[i], self.psi[i] = x, m, norm, psi
        self.n += 1

    def remove(self, i):
        j = self.n - 1
        if i != j:
            self.xs[i], self.ms[i], self.norms[i], self.psi[i] = self.xs[j], self.ms[j], self.norms[j], self.psi[j]
        self.n -= 1

    def snapshot(self):
        return self.xs[:self.n].copy(), self.ms[:self.n].copy(), self.norms[:self.n].copy()


def _cond_energy(phi, x, m, norm, pts: Points, skip: int | None = None) -> float:
    if len(pts) == 0:
        return 0.0
    e = phi.energies(x, m, norm, pts.xs, pts.ms, pts.norms)
    if skip is not None:
        e[skip] = 0.0
    return float(e.sum())


def log_target(pts: Points, z: float, beta: float, phi: PathPairPotential, psi: SelfPotential) -> float:
    """log of z^n exp(-H) computed from scratch (used to audit the incremental ratios)."""
    from .configurations import total_energy

    n = len(pts)
    if n == 0:
        return 0.0
    gamma = Configuration.from_arrays(pts.xs, pts.ms)
    h = total_energy(gamma, psi, phi, beta)
    return -INF if h == INF else n * math.log(z) - h


def _in_box(x, box) -> bool:
    return bool(np.all((x >= box[:, 0]) & (x <= box[:, 1])))


def log_acceptance(move: str, state: ChainState, cfg: SamplerConfig, phi, proposal) -> float:
    """Log Metropolis-Hastings ratio for one proposal.

    ``proposal`` is (x, m, norm, psi) for a birth, an index for a death,
    (index, new_x) for a translation and (index, m, norm, psi) for a mark
    redraw.
    """
    pts = state.view()
    n = state.n
    b = cfg.beta
    if move == "birth":
        x, m, norm, psi_new = proposal
        e = _cond_energy(phi, x, m, norm, pts)
        if e == INF:
            return -INF
        return (math.log(cfg.p_death / cfg.p_birth) + math.log(cfg.z * cfg.volume / (n + 1))
                - psi_new - b * e)
    if move == "death":
        i = proposal
        e = _cond_energy(phi, pts.xs[i], pts.ms[i], pts.norms[i], pts, skip=i)
        return (math.log(cfg.p_birth / cfg.p_death) + math.log(n / (cfg.z * cfg.volume))
                + state.psi[i] + b * e)
    if move == "translate":
        i, x_new = proposal
        if not _in_box(x_new, cfg.box):
            return -INF
        e_new = _cond_energy(phi, x_new, pts.ms[i], pts.norms[i], pts, skip=i)
        if e_new == INF:
            return -INF
        e_old = _cond_energy(phi, pts.xs[i], pts.ms[i], pts.norms[i], pts, skip=i)
        return -b * (e_new - e_old)
    if move == "mark":
        i, m, norm, psi_new = proposal
        e_new = _cond_energy(phi, pts.xs[i], m, norm, pts, skip=i)
        if e_new == INF:
            return -INF
        e_old = _cond_energy(phi, pts.xs[i], pts.ms[i], pts.norms[i], pts, skip=i)
        return -(psi_new - state.psi[i]) - b * (e_new - e_old)
    raise ValueError(f"unknown move {move!r}")


def mcmc_run(cfg: SamplerConfig, phi: PathPairPotential, psi: SelfPotential, ref: ReferenceMeasure,
             initial: Points | None = None) -> ChainResult:
    """Run the chain; keep |gamma| (and optionally the configuration) after each kept sweep."""
    if ref.d != cfg.d:
        raise ValueError("reference and box dimensions differ")
    rng = np.random.default_rng(cfg.seed)
    state = ChainState(cfg.d, ref.n_nodes)
    if initial is not None:
        for x, m, nm in zip(*initial):
            state.add(x, m, nm, float(psi.from_norms(nm)))
    probs = np.cumsum(cfg.probabilities)
    lo, hi = cfg.box[:, 0], cfg.box[:, 1]
    width = hi - lo
    tried = dict.fromkeys(MOVES, 0)
    accepted = dict.fromkeys(MOVES, 0)
    counts = []
    samples = []
    total = cfg.burn_in + cfg.n_sweeps
    for sweep in range(total):
        for _ in range(cfg.moves_per_sweep):
            u = rng.random()
            move = MOVES[int(np.searchsorted(probs, u, side="right"))] if u < probs[-1] else MOVES[-1]
            n = state.n
            if move != "birth" and n == 0:
                continue
            tried[move] += 1
            if move == "birth":
                x = lo + width * rng.random(cfg.d)
                ms, nms = ref.sample_marks(rng, 1)
                proposal = (x, ms[0], float(nms[0]), float(psi.from_norms(nms[0])))
            elif move == "death":
                proposal = int(rng.integers(n))
            elif move == "translate":
                i = int(rng.integers(n))
                step = cfg.translate_scale * width * (2 * rng.random(cfg.d) - 1)
                proposal = (i, state.xs[i] + step)
            else:
                i = int(rng.integers(n))
                ms, nms = ref.sample_marks(rng, 1)
                proposal = (i, ms[0], float(nms[0]), float(psi.from_norms(nms[0])))
            la = log_acceptance(move, state, cfg, phi, proposal)
            if la >= 0 or rng.random() < math.exp(la):
                accepted[move] += 1
                if move == "birth":
                    state.add(*proposal)
                elif move == "death":
                    state.remove(proposal)
                elif move == "translate":
                    state.xs[proposal[0]] = proposal[1]
                else:
                    i, m, nm, ps = proposal
                    state.ms[i], state.norms[i], state.psi[i] = m, nm, ps
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thinning == 0:
            counts.append(state.n)
            if cfg.keep_samples:
                samples.append(state.snapshot())
    counts = np.asarray(counts)
    acc = {m: (accepted[m] / tried[m] if tried[m] else 0.0) for m in MOVES}
    summary = ChainSummary(int(counts.size), acc, float(counts.mean()), integrated_autocorr_time(counts))
    return ChainResult(counts, summary, cfg, samples)


def batch_means(x, n_batches: int = 32) -> Estimate:
    """Mean and batch-means standard error."""
    x = np.asarray(x, dtype=float)
    if x.size < 2 * n_batches:
        raise ValueError("series too short for batch means")
    b = x.size // n_batches
    means = x[:b * n_batches].reshape(n_batches, b).mean(axis=1)
    return Estimate(float(x.mean()), float(means.std(ddof=1) / math.sqrt(n_batches)))


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with an adaptive window (window >= c * tau)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or x.var() == 0:
        return 1.0
    y = x - x.mean()
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 1.0
    for w in range(1, n):
        tau = 1.0 + 2.0 * acf[1:w + 1].sum()
        if w >= c * tau:
            break
    return float(max(tau, 1.0))


def _sigma_box(ref: ReferenceMeasure, seed=0):
    return ref.box_mass(seed)


def estimate_intensity(chain: ChainResult, ref: ReferenceMeasure, n_batches: int = 32, seed=0) -> Estimate:
    """rho-bar_1 = E|gamma| / (z sigma(box)) with batch-means error."""
    if chain.counts.size < 100:
        raise ValueError("need at least 100 kept samples")
    m = batch_means(chain.counts, n_batches)
    s, s_err = _sigma_box(ref, seed)
    zs = chain.config.z * s
    est = m.value / zs
    se = math.hypot(m.stderr / zs, est * s_err / s)
    return Estimate(est, se)


def _rho1_probe_values(chain, phi, beta, ref, n_probe, rng):
    """Per kept sample: mean over probes of w exp(-beta E(x | gamma)), w the sigma weight over the box."""
    out = np.empty(len(chain.samples))
    for t, (xs, ms, norms) in enumerate(chain.samples):
        px, pm, pn, w = ref.sample_box(rng, n_probe)
        acc = 0.0
        for j in range(n_probe):
            e = _cond_energy(phi, px[j], pm[j], pn[j], Points(xs, ms, norms))
            acc += w[j] * math.exp(-beta * e)
        out[t] = acc / n_probe
    return out


def estimate_intensity_gnz(chain: ChainResult, phi: PathPairPotential, ref: ReferenceMeasure,
                           n_probe: int = 16, n_batches: int = 32, seed=0) -> Estimate:
    """rho-bar_1 through the conditional-intensity form E[exp(-beta E(x | gamma))], averaged over the box."""
    if not chain.samples:
        raise ValueError("chain was run without keep_samples")
    rng = np.random.default_rng(seed)
    vals = _rho1_probe_values(chain, phi, chain.config.beta, ref, n_probe, rng)
    m = batch_means(vals, n_batches)
    s, s_err = _sigma_box(ref, seed)
    est = m.value / s
    return Estimate(est, math.hypot(m.stderr / s, est * s_err / s))


def mcmc_correlation(chain: ChainResult, phi: PathPairPotential, n_batches: int = 32) -> CorrelationSequence:
    """rho_N(x_1..x_N) = exp(-beta E(x_1..x_N)) E[exp(-beta E(x_1..x_N | gamma))] from kept samples."""
    if not chain.samples:
        raise ValueError("chain was run without keep_samples")
    beta = chain.config.beta
    box = chain.config.box

    def series(p: Points) -> np.ndarray:
        if not all(_in_box(x, box) for x in p.xs):
            return np.zeros(len(chain.samples))
        own = 0.0
        for i in range(len(p) - 1):
            own += _cond_energy(phi, p.xs[i], p.ms[i], p.norms[i], Points(p.xs[i + 1:], p.ms[i + 1:], p.norms[i + 1:]))
        if own == INF:
            return np.zeros(len(chain.samples))
        vals = np.empty(len(chain.samples))
        for t, (xs, ms, norms) in enumerate(chain.samples):
            g = Points(xs, ms, norms)
            e = sum(_cond_energy(phi, p.xs[i], p.ms[i], p.norms[i], g) for i in range(len(p)))
            vals[t] = math.exp(-beta * (own + e))
        return vals

    return CorrelationSequence(lambda p, rng: float(series(p).mean()), 64, "mcmc",
                               estimate_fn=lambda p: batch_means(series(p), n_batches))


# Test functions f(x, m, norm, gamma: Points, R) for GNZ diagnostics.
def _f_one(x, m, norm, g, R):
    return 1.0


def _f_zero(x, m, norm, g, R):
    return 0.0


def _f_isolated(x, m, norm, g, R):
    if len(g) == 0:
        return 1.0
    return float(np.all(np.linalg.norm(g.xs - x, axis=1) >= 2 * R))


def _f_neighbours(x, m, norm, g, R):
    if len(g) == 0:
        return 0.0
    return float(np.sum(np.linalg.norm(g.xs - x, axis=1) < 2 * R))


def _f_small_mark(x, m, norm, g, R):
    return float(norm <= R)


TEST_FUNCTIONS: dict[str, Callable] = {
    "one": _f_one,
    "zero": _f_zero,
    "isolated": _f_isolated,
    "neighbours": _f_neighbours,
    "small_mark": _f_small_mark,
}


class GNZResult(NamedTuple):
    name: str
    lhs: float
    rhs: float
    residual: float
    stderr: float


def gnz_residual(chain: ChainResult, phi: PathPairPotential, ref: ReferenceMeasure,
                 test_fns: dict | None = None, budget: int = 16, n_batches: int = 32, seed=0) -> list[GNZResult]:
    """Both sides of E sum_x f(x, gamma - x) = z int E[f(x, gamma) exp(-beta E(x | gamma))] sigma(dx).

    Per kept sample the left side is the exact sum and the right side a
    ``budget``-point Monte Carlo integral over the box; the residual error
    is the batch-means error of their difference.
    """
    if not chain.samples:
        raise ValueError("chain was run without keep_samples")
    fns = TEST_FUNCTIONS if test_fns is None else test_fns
    cfg = chain.config
    R = phi.scalar.R
    rng = np.random.default_rng(seed)
    T = len(chain.samples)
    lhs = {k: np.empty(T) for k in fns}
    rhs = {k: np.empty(T) for k in fns}
    for t, (xs, ms, norms) in enumerate(chain.samples):
        g = Points(xs, ms, norms)
        n = len(g)
        for k, f in fns.items():
            s = 0.0
            for i in range(n):
                keep = np.arange(n) != i
                s += f(xs[i], ms[i], norms[i], Points(xs[keep], ms[keep], norms[keep]), R)
            lhs[k][t] = s
        px, pm, pn, w = ref.sample_box(rng, budget)
        boltz = np.array([math.exp(-cfg.beta * _cond_energy(phi, px[j], pm[j], pn[j], g)) for j in range(budget)])
        for k, f in fns.items():
            vals = np.array([f(px[j], pm[j], pn[j], g, R) for j in range(budget)])
            rhs[k][t] = cfg.z * float(np.mean(w * vals * boltz))
    out = []
    for k in fns:
        diff = batch_means(lhs[k] - rhs[k], n_batches)
        out.append(GNZResult(k, float(lhs[k].mean()), float(rhs[k].mean()), diff.value, diff.stderr))
    return out


class PartitionResult(NamedTuple):
    Z: float
    rho1_probe: float
    rho1_mean: float
    tail_bound: float
    flagged: bool
    terms: tuple


def _boltzmann_matrix(phi: PathPairPotential, beta: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """exp(-beta Phi) between zero-mark points at 1-d locations a (rows) and b (columns)."""
    m0 = np.zeros((2, 1))
    out = np.empty((a.size, b.size))
    bx = b[:, None]
    ms = np.zeros((b.size, 2, 1))
    nb = np.zeros(b.size)
    for i, x in enumerate(a):
        out[i] = np.exp(-beta * phi.energies(np.array([x]), m0, 0.0, bx, ms, nb))
    return out


def _clique_sum(W: np.ndarray, v: np.ndarray, k: int) -> float:
    """sum over grid k-tuples of prod_j v_j prod_{i<j} W_ij, for k <= 3."""
    if k == 0:
        return 1.0
    if k == 1:
        return float(v.sum())
    if k == 2:
        return float(v @ W @ v)
    if k == 3:
        s = np.sqrt(v)
        U = s[:, None] * W * s[None, :]
        return float(np.sum(U * (U @ U)))
    raise ValueError("clique sums implemented for k <= 3")


def _partition_terms(phi, beta, L, z, psi0, N_cut, n, probe):
    h = L / n
    grid = (np.arange(n) + 0.5) * h
    W = _boltzmann_matrix(phi, beta, grid, grid)
    ones = np.ones(n)
    w_self = math.exp(-psi0)
    terms = [1.0]
    for N in range(1, N_cut + 1):
        if N <= 3:
            c = _clique_sum(W, ones, N)
        else:
            c = 0.0
            for i in range(n):
                c += _clique_sum(W, W[i].copy(), 3)
        terms.append(z**N / math.factorial(N) * (w_self * h) ** N * c)
    wp = _boltzmann_matrix(phi, beta, np.array([probe]), grid)[0]
    probe_terms = [z**M / math.factorial(M) * (w_self * h) ** M * _clique_sum(W, wp, M)
                   for M in range(0, min(N_cut - 1, 3) + 1)]
    return np.array(terms), np.array(probe_terms)


def partition_oracle(L: float, z: float, beta: float, phi: PathPairPotential, psi: SelfPotential | None = None,
                     N_cut: int = 4, n_quad: int = 200, probe: float | None = None, tol: float = 1e-8,
                     B_phi: float = 0.0) -> PartitionResult:
    """Truncated grand-canonical sums on the box [0, L] in one dimension with zero marks.

    Z = sum_{N <= N_cut} z^N / N! int exp(-beta E) dx^N and rho_1 relative to
    z sigma, by midpoint quadrature at n and 2n nodes with Richardson
    extrapolation (the hard-core indicator makes the rule first order).
    ``tail_bound`` bounds the first omitted term; it is zero when the hard
    core forbids N_cut + 1 points in the box.
    """
    if N_cut < 1 or N_cut > 4:
        raise ValueError("N_cut must be in 1..4")
    R = phi.scalar.R
    if R > 0 and L > 4 * R:
        raise ValueError("box length must not exceed 4 R")
    psi0 = 0.0 if psi is None else float(psi.from_norms(0.0))
    probe = L / 2 if probe is None else probe
    t1, p1 = _partition_terms(phi, beta, L, z, psi0, N_cut, n_quad, probe)
    t2, p2 = _partition_terms(phi, beta, L, z, psi0, N_cut, 2 * n_quad, probe)
    terms = 2 * t2 - t1
    pterms = 2 * p2 - p1
    Z = float(terms.sum())
    mean_n = float(sum(N * t for N, t in enumerate(terms)))
    sigma_box = L * math.exp(-psi0)
    rho_mean = mean_n / (z * sigma_box * Z)
    rho_probe = float(pterms.sum()) / Z
    if R > 0 and L <= N_cut * R:
        tail = 0.0
    else:
        M = N_cut + 1
        tail = (z * sigma_box) ** M * math.exp(beta * B_phi * M) / math.factorial(M)
    return PartitionResult(Z, rho_probe, rho_mean, tail, tail > tol * Z, tuple(terms))
