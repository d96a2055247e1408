import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathgibbs.configurations import (
    Configuration,
    MarkedPoint,
    conditional_energy,
    interaction_range,
    is_admissible,
    pair_interaction_energy,
    read_configurations_csv,
    select_anchor,
    temperedness_index,
    total_energy,
    write_configurations_csv,
)
from pathgibbs.langevin import LangevinSpec, PathMark, simulate_marks, zero_mark
from pathgibbs.potentials import (
    INF,
    PathPairPotential,
    SelfPotential,
    hard_core_potential,
    stability_constant_bound,
    unshifted_lj_potential,
)

T = 8
LJ = PathPairPotential(unshifted_lj_potential())


def zpt(*x):
    return MarkedPoint(np.array(x, float), zero_mark(T, len(x)))


def random_admissible(rng, d, n_max=8, box=4.0, marks=True):
    """Sequential random insertion of marked points, keeping only admissible additions."""
    spec = LangevinSpec(d=d, p=d + 2.0, n_steps=T)
    n_target = int(rng.integers(1, n_max + 1))
    gamma = Configuration()
    for _ in range(200):
        if len(gamma) == n_target:
            break
        v = simulate_marks(spec, 1, rng)[0] * 0.3 if marks else np.zeros((T + 1, d))
        p = MarkedPoint(rng.uniform(0, box, d), PathMark(v))
        if len(gamma) == 0 or np.all(np.isfinite(gamma.energies_to(p, LJ))):
            gamma = gamma.concat(Configuration([p]))
    return gamma


def test_energy_examples():
    hc = hard_core_potential(1.0)
    assert pair_interaction_energy(Configuration(), hc) == 0.0
    assert pair_interaction_energy(Configuration([zpt(0.0)]), hc) == 0.0
    assert pair_interaction_energy(Configuration([zpt(0.0), zpt(0.5)]), hc) == INF
    assert pair_interaction_energy(Configuration([zpt(0.0), zpt(5.0), zpt(10.0)]), LJ) == 0.0


def test_conditional_energy_examples():
    p = zpt(0.0)
    assert conditional_energy(p, Configuration(), LJ) == 0.0
    assert conditional_energy(p, Configuration([zpt(4.0)]), LJ) == 0.0
    with pytest.raises(ValueError):
        conditional_energy(p, Configuration([p]), LJ)


def test_total_energy_examples():
    psi = SelfPotential()
    assert total_energy(Configuration(), psi, LJ, 1.0) == 0.0
    assert total_energy(Configuration([zpt(0.0)]), psi, LJ, 1.0) == 0.0
    g = Configuration([zpt(0.0), zpt(1.1), zpt(2.5)])
    assert total_energy(g, psi, LJ, 1.0) == pair_interaction_energy(g, LJ)
    psi2 = SelfPotential("power", 2.0, 1.0)
    assert total_energy(g, psi2, LJ, 0.5) == pytest.approx(0.5 * pair_interaction_energy(g, LJ))


def test_simplicity_enforced():
    with pytest.raises(ValueError):
        Configuration([zpt(0.0), zpt(0.0)])


@pytest.mark.parametrize("d", [1, 2])
def test_stability_witness_and_anchor_bound(d):
    rng = np.random.default_rng(10 + d)
    B = stability_constant_bound(LJ.scalar, d)
    for _ in range(1000):
        g = random_admissible(rng, d)
        e = pair_interaction_energy(g, LJ)
        assert e >= -B * len(g)
        a = select_anchor(g, LJ)
        i = g.points.index(a)
        ea = conditional_energy(a, g.without(i), LJ)
        assert ea >= 2 * e / len(g) - 1e-12
        assert ea >= -2 * B


def test_conditional_energy_lower_bound_example_class():
    rng = np.random.default_rng(3)
    B = stability_constant_bound(LJ.scalar, 1)
    for _ in range(300):
        g = random_admissible(rng, 1)
        for i in range(len(g)):
            assert conditional_energy(g[i], g.without(i), LJ) >= -2 * B


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_invariance_exact(seed):
    rng = np.random.default_rng(seed)
    g = random_admissible(rng, 2)
    psi = SelfPotential("power", 0.3, 1.5)
    perm = rng.permutation(len(g))
    h = Configuration([g[i] for i in perm])
    assert pair_interaction_energy(h, LJ) == pair_interaction_energy(g, LJ)
    assert total_energy(h, psi, LJ, 1.3) == total_energy(g, psi, LJ, 1.3)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_conditional_additivity(seed):
    rng = np.random.default_rng(seed)
    g = random_admissible(rng, 1, n_max=8)
    k = int(rng.integers(0, len(g) + 1))
    a, b = Configuration(g.points[:k]), Configuration(g.points[k:])
    cross = math.fsum(conditional_energy(p, b, LJ) for p in a)
    lhs = pair_interaction_energy(g, LJ)
    rhs = pair_interaction_energy(a, LJ) + pair_interaction_energy(b, LJ) + cross
    # each side is a correctly rounded sum of the same pair energies
    assert math.isclose(lhs, rhs, rel_tol=1e-13, abs_tol=1e-14)


def test_conditional_additivity_exact_for_hard_core():
    rng = np.random.default_rng(8)
    hc = hard_core_potential(0.5, 1.0)
    for _ in range(200):
        xs = rng.uniform(0, 3, size=(6, 1))
        g = Configuration([zpt(*x) for x in xs])
        a, b = Configuration(g.points[:3]), Configuration(g.points[3:])
        cross = sum(conditional_energy(p, b, hc) for p in a)
        assert pair_interaction_energy(g, hc) == (pair_interaction_energy(a, hc)
                                                  + pair_interaction_energy(b, hc) + cross)


def test_interaction_range():
    # l(1) = 2^((1 + 1) / 1 - 1) * 1 = 2, so r = 2 * 2 + 0 + 1 + 0
    assert interaction_range(1, 0.0, 0.0, 1, 1.0) == 5.0
    base = interaction_range(2, 0.5, 1.0, 2, 0.5)
    assert interaction_range(3, 0.5, 1.0, 2, 0.5) > base
    assert interaction_range(2, 0.6, 1.0, 2, 0.5) > base
    assert interaction_range(2, 0.5, 1.5, 2, 0.5) > base
    # delta -> inf: l(t) -> 2^0 * t^0 = 1
    assert interaction_range(5, 0.0, 0.0, 1, 1e9) == pytest.approx(2 * 1 + 1, rel=1e-6)
    with pytest.raises(ValueError):
        interaction_range(0, 0.0, 0.0, 1, 1.0)


def test_temperedness_index():
    assert temperedness_index(Configuration(), 8, 0.5, 1).index_t == 1
    # the point at the origin contributes 1 + 0 = 1 <= t * 1
    assert temperedness_index(Configuration([zpt(0.0)]), 8, 0.5, 1).index_t == 1
    v = np.zeros((T + 1, 1))
    v[3] = 2.0
    g = Configuration([MarkedPoint(np.zeros(1), PathMark(v))])
    # 1 + 2^(1 + 1) = 5
    assert temperedness_index(g, 8, 0.5, 1).index_t == 5


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_temperedness_monotone_in_marks(seed):
    rng = np.random.default_rng(seed)
    g = random_admissible(rng, 2)
    g2 = Configuration.from_arrays(g.positions, 2 * g.marks)
    assert temperedness_index(g2, 16, 0.5, 2).index_t >= temperedness_index(g, 16, 0.5, 2).index_t


def test_select_anchor():
    p = zpt(0.0)
    assert select_anchor(Configuration([p]), LJ) == p
    two = Configuration([zpt(0.0), zpt(1.2)])
    assert select_anchor(two, LJ) == two[0]
    rep = Configuration([zpt(0.0), zpt(1.0), zpt(2.0)])
    hc = hard_core_potential(0.5, 1.5)
    a = select_anchor(rep, hc)
    assert conditional_energy(a, Configuration([q for q in rep if q != a]), hc) >= 0
    with pytest.raises(ValueError):
        select_anchor(Configuration(), LJ)


def test_is_admissible():
    hc = hard_core_potential(1.0)
    assert is_admissible(Configuration(), hc)
    assert not is_admissible(Configuration([zpt(0.0), zpt(0.3)]), hc)
    assert is_admissible(Configuration([zpt(0.0), zpt(3.0)]), hc)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    a, b, c = (random_admissible(rng, 2) for _ in range(3))
    configs = [a, b, Configuration(), c]
    path = tmp_path / "c.csv"
    write_configurations_csv(path, configs, 2, T + 1)
    back = read_configurations_csv(path)
    assert len(back) == len(configs)
    for a, b in zip(configs, back):
        assert len(a) == len(b)
        assert all(p == q for p, q in zip(a, b))
