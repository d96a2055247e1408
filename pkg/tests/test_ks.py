import math
import warnings

import numpy as np
import pytest

from pathgibbs.constants import c_z, ks_norm_bound, z_crit
from pathgibbs.ks import (
    CorrelationSequence,
    KSModel,
    Points,
    WeightFunction,
    banach_norm_estimate,
    ks_apply,
    ks_residual,
    neumann_eval,
    neumann_mean_intensity,
    series_tail_bound,
)
from pathgibbs.langevin import LangevinSpec
from pathgibbs.potentials import hard_core_potential, zero_potential
from pathgibbs.reference import ReferenceMeasure
from pathgibbs.sampler import SamplerConfig, mcmc_correlation, mcmc_run

T = 8
SPEC = LangevinSpec(d=1, n_steps=T)
C_HC = 2.0  # int 1{|y| < 1} dy for zero marks
Z_HALF = z_crit(C_HC, 0.0, 1.0).z_crit / 2


def boxed(L=2.0):
    return ReferenceMeasure(SPEC, mark_mode="zero", box=[[0.0, L]])


def pts(*xs):
    n = len(xs)
    return Points(np.array(xs, float).reshape(n, 1), np.zeros((n, T + 1, 1)), np.zeros(n))


def hc_model(z=Z_HALF, ref=None, k_max=3):
    return KSModel(z, 1.0, hard_core_potential(1.0), ref if ref is not None else boxed(), k_max=k_max)


def test_operator_on_ideal_gas():
    model = KSModel(0.3, 1.0, zero_potential(), boxed())
    r = CorrelationSequence.ideal()
    assert ks_apply(r, pts(0.2, 1.5, 0.7), model).value == 1.0
    one_z = CorrelationSequence.from_function(lambda p: 1.0 if len(p) == 1 else 0.0, 64, "one_z")
    assert ks_apply(one_z, pts(0.4), model).value == 0.0
    for args in (pts(0.1), pts(0.1, 1.9), pts(0.1, 0.2, 0.3)):
        res = ks_residual(r, args, model)
        assert res.value == 0.0 and res.stderr == 0.0


def test_operator_overlapping_anchor_is_zero():
    r = CorrelationSequence.power(1.3)
    est = ks_apply(r, pts(0.5, 0.9), hc_model())
    assert est.value == 0.0 and est.stderr == 0.0


def test_neumann_ideal_gas_exact():
    model = KSModel(0.25, 1.0, zero_potential(), boxed())
    for depth in range(6):
        for args in (pts(1.0), pts(0.3, 1.7), pts(0.1, 0.11, 1.2)):
            res = neumann_eval(args, model, depth=depth, budget=20, seed=depth)
            assert res.estimate == 1.0 and res.stderr == 0.0


def test_first_order_expansion():
    z = 1e-3
    ref = ReferenceMeasure(SPEC, mark_mode="zero")  # whole line
    model = hc_model(z=z, ref=ref)
    # direct quadrature of int (exp(-Phi(x0, y)) - 1) dy on a midpoint grid
    h = 1e-4
    ys = np.arange(-3.0, 3.0, h) + h / 2
    e = model.phi.energies(np.zeros(1), np.zeros((T + 1, 1)), 0.0, ys[:, None],
                           np.zeros((ys.size, T + 1, 1)), np.zeros(ys.size))
    tube = float(np.expm1(-e).sum() * h)
    assert tube == pytest.approx(-2.0, abs=1e-3)
    res = neumann_eval(pts(0.0), model, depth=1, budget=20000, seed=4)
    # second-order remainder bounded by z^2 C^2 / 2 + z^3 C^3 / 6
    rem = z**2 * C_HC**2 / 2 + z**3 * C_HC**3 / 6
    assert abs(res.estimate - (1 + z * tube)) < 3 * res.stderr + rem + 1e-6


def test_depth_changes_decay_geometrically():
    model = hc_model()
    f = ks_norm_bound(Z_HALF, C_HC, 0.0, 1.0)
    est = [neumann_eval(pts(1.0), model, depth=J, budget=20000, seed=100 + J) for J in range(5)]
    for J in range(1, 4):
        d_prev = abs(est[J].estimate - est[J - 1].estimate)
        d_next = abs(est[J + 1].estimate - est[J].estimate)
        noise = 3 * math.sqrt(est[J + 1].stderr**2 + 2 * est[J].stderr**2 + est[J - 1].stderr**2)
        assert d_next <= f * d_prev + noise


def test_residual_shrinks_with_depth():
    model = hc_model()
    f = ks_norm_bound(Z_HALF, C_HC, 0.0, 1.0)
    res = []
    for J in (0, 4):
        r = CorrelationSequence.neumann(model, J, seed=J)
        res.append(ks_residual(r, pts(1.0), model, budget=4000, seed=7 + J))
    assert abs(res[0].value) > 3 * res[0].stderr
    assert abs(res[1].value) <= f**4 * abs(res[0].value) + 3 * res[1].stderr
    assert abs(res[1].value) < abs(res[0].value)


def test_residual_of_sampler_estimate():
    z = 0.05
    model = hc_model(z=z)
    cfg = SamplerConfig(box=[[0.0, 2.0]], z=z, n_sweeps=8000, burn_in=500, thinning=8, keep_samples=True, seed=3)
    chain = mcmc_run(cfg, model.phi, model.ref.psi, model.ref)
    r = mcmc_correlation(chain, model.phi)
    res = ks_residual(r, pts(1.0), model, budget=100, seed=1)
    # the chain error also enters the integral term, scaled by at most z C
    assert abs(res.value) < 3 * res.stderr * (1 + z * C_HC)


def test_neumann_symmetric_in_arguments():
    model = hc_model()
    a = neumann_eval(pts(0.3, 1.6), model, depth=3, budget=8000, seed=1)
    b = neumann_eval(pts(1.6, 0.3), model, depth=3, budget=8000, seed=2)
    assert abs(a.estimate - b.estimate) < 3 * math.hypot(a.stderr, b.stderr)


def test_ruelle_bound_consistency():
    model = hc_model()
    c = c_z(Z_HALF, C_HC, 0.0, 1.0)
    for args in (pts(1.0), pts(0.2, 1.5)):
        res = neumann_eval(args, model, depth=4, budget=4000, seed=9)
        assert res.estimate <= c ** len(args) + 3 * res.stderr


def test_banach_norm_of_constants():
    ref = boxed()
    r = CorrelationSequence.ideal()
    assert banach_norm_estimate(r, WeightFunction(c=1.0), ref).value == 1.0
    half = banach_norm_estimate(r, WeightFunction(c=2.0), ref, max_N=3)
    assert half.value == 0.5 and half.argmax_N == 1


def test_neumann_norm_bound():
    model = hc_model()
    c = c_z(Z_HALF, C_HC, 0.0, 1.0)
    f = ks_norm_bound(Z_HALF, C_HC, 0.0, 1.0)
    r = CorrelationSequence.neumann(model, 3, seed=5)
    est = banach_norm_estimate(r, WeightFunction(c=c), model.ref, n_tuples=12, max_N=2, n_rep=200, seed=2)
    assert est.value <= 1 / (1 - f) + 0.05


def test_operator_norm_surrogate():
    model = hc_model()
    c = c_z(Z_HALF, C_HC, 0.0, 1.0)
    f = ks_norm_bound(Z_HALF, C_HC, 0.0, 1.0)
    r = CorrelationSequence.power(c)
    rng = np.random.default_rng(0)
    for n_args in (1, 2, 3):
        for _ in range(6):
            args = pts(*rng.uniform(0, 2, n_args))
            k = ks_apply(r, args, model, budget=2000, seed=int(rng.integers(1 << 30)))
            assert k.value / c**n_args <= f + 3 * k.stderr / c**n_args


def test_series_terms_bounded():
    c = c_z(Z_HALF, C_HC, 0.0, 1.0)
    r = CorrelationSequence.power(c)
    args = pts(1.0, 0.1)
    prev = ks_apply(r, args, hc_model(k_max=1), budget=4000, seed=3)
    for k in (2, 3):
        cur = ks_apply(r, args, hc_model(k_max=k), budget=4000, seed=3)
        # same seed: the first k - 1 series terms coincide, the difference is term k
        term = abs(cur.value - prev.value)
        assert term <= series_tail_bound(k, Z_HALF, c, C_HC) * c ** (len(args) - 1) + 3 * cur.stderr
        prev = cur
    assert series_tail_bound(3, Z_HALF, c, C_HC) < series_tail_bound(2, Z_HALF, c, C_HC)


def test_mean_intensity_near_exact_value():
    # rods of length 1 on [0, 2]: Z = 1 + 2z + z^2 / 2, E N = 2z + z^2
    z = Z_HALF
    exact = (1 + z / 2) / (1 + 2 * z + z**2 / 2)
    f = ks_norm_bound(z, C_HC, 0.0, 1.0)
    est = neumann_mean_intensity(hc_model(), depth=4, budget=20000, seed=2)
    # depth-4 error is at most f^5 times the error of the start value 1
    assert abs(est.value - exact) < 3 * est.stderr + f**5 * (1 - exact)


def test_warns_beyond_contraction_and_budget():
    model = hc_model()
    with pytest.warns(UserWarning):
        neumann_eval(pts(1.0), model, depth=1, budget=5, z_crit=model.z / 2)
    res = neumann_eval(pts(1.0), model, depth=6, budget=1000, max_calls=50)
    assert res.partial and res.n_calls <= 51
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        neumann_eval(pts(1.0), model, depth=1, budget=5, z_crit=2 * model.z)


def test_weighted_weights():
    w = WeightFunction("weighted", A=0.5, b=0.2, d=1, delta=0.5)
    assert w([0.0])[0] == pytest.approx(math.exp(0.7))
    with pytest.raises(ValueError):
        WeightFunction("odd")
