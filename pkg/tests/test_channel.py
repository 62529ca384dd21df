import numpy as np
import pytest

from cellfree_se.channel import (
    draw_batch_pilot,
    draw_batch_statistical,
    draw_sample_pilot,
    draw_sample_statistical,
    estimate_gains,
)
from cellfree_se.errors import ConfigError
from cellfree_se.numerics import make_rng
from cellfree_se.scenario import PowerAllocation, SystemConfig, default_allocation, place_uniform


def cfg_small(**kw):
    base = dict(n_raus=3, antennas_per_rau=10, n_unicast=3, n_groups=2,
                group_sizes=(2, 3), pilot_length=5, noise_ul=0.5, rng_seed=0)
    base.update(kw)
    return SystemConfig(**base)


@pytest.fixture
def setup():
    cfg = cfg_small()
    scn = place_uniform(cfg, make_rng(4))
    alloc = default_allocation(cfg)
    return cfg, scn, alloc


def test_zero_pilot_power_zero_gain(setup):
    cfg, scn, alloc = setup
    alloc.p_ul[1] = 0.0
    g = estimate_gains(scn, alloc, cfg)
    assert np.all(g.unicast[:, 1] == 0)
    assert g.unicast_sum[1] == 0


def test_unicast_gain_direct_value():
    # tau*p*beta = 6, sigma = 1: gain = 36/(6+1)/... = tau p beta^2/(tau p beta + s)
    cfg = cfg_small(noise_ul=1.0, pilot_length=12, n_unicast=1, n_groups=0,
                    group_sizes=())
    scn = place_uniform(cfg, make_rng(1))
    scn.beta[:] = 1.0
    alloc = PowerAllocation(p_ul=[0.5], q_ul=[], p_dl=[1.0], q_dl=[], tau=12)
    g = estimate_gains(scn, alloc, cfg)
    assert np.allclose(g.unicast, 6.0 / 7.0)
    assert g.unicast_sum[0] == pytest.approx(3 * 6.0 / 7.0)


def test_single_member_group_matches_composite(setup):
    # one user in the group: composite variance = tau*q * member variance
    # (the composite channel carries the sqrt(tau*q) pilot amplitude), so the
    # two coincide exactly when tau*q = 1
    cfg = cfg_small(group_sizes=(1, 3))
    scn = place_uniform(cfg, make_rng(4))
    alloc = default_allocation(cfg)
    g = estimate_gains(scn, alloc, cfg)
    tq = alloc.tau * alloc.q_ul[0][0]
    assert np.allclose(tq * g.member[0][:, 0], g.group[:, 0], rtol=1e-12)
    unit = PowerAllocation(p_ul=alloc.p_ul, q_ul=[np.array([1.0 / alloc.tau]),
                                                  alloc.q_ul[1]],
                           p_dl=alloc.p_dl, q_dl=alloc.q_dl, tau=alloc.tau)
    g1 = estimate_gains(scn, unit, cfg)
    assert np.allclose(g1.member[0][:, 0], g1.group[:, 0], rtol=1e-12)


def test_gain_bounds_and_row_sums(setup):
    cfg, scn, alloc = setup
    g = estimate_gains(scn, alloc, cfg)
    assert np.all(g.unicast >= 0) and np.all(g.unicast < scn.beta)
    for m in range(cfg.n_groups):
        assert np.all(g.member[m] >= 0) and np.all(g.member[m] < scn.eta[m])
    assert np.allclose(g.unicast_sum, g.unicast.sum(axis=0))
    assert np.allclose(g.group_sum, g.group.sum(axis=0))


def test_gain_monotone_in_pilot_power_and_tau(setup):
    cfg, scn, alloc = setup
    g1 = estimate_gains(scn, alloc, cfg)
    stronger = PowerAllocation(p_ul=alloc.p_ul * 2, q_ul=alloc.q_ul,
                               p_dl=alloc.p_dl, q_dl=alloc.q_dl, tau=alloc.tau)
    g2 = estimate_gains(scn, stronger, cfg)
    assert np.all(g2.unicast >= g1.unicast)
    longer = PowerAllocation(p_ul=alloc.p_ul, q_ul=alloc.q_ul,
                             p_dl=alloc.p_dl, q_dl=alloc.q_dl, tau=alloc.tau + 3)
    g3 = estimate_gains(scn, longer, cfg)
    assert np.all(g3.unicast >= g1.unicast)


def test_contamination_monotone_in_other_members_power(setup):
    cfg, scn, alloc = setup
    g1 = estimate_gains(scn, alloc, cfg)
    q = [q.copy() for q in alloc.q_ul]
    q[0][1] *= 3.0  # boost member 1's pilot
    bumped = PowerAllocation(p_ul=alloc.p_ul, q_ul=q, p_dl=alloc.p_dl,
                             q_dl=alloc.q_dl, tau=alloc.tau)
    g2 = estimate_gains(scn, bumped, cfg)
    assert np.all(g2.member[0][:, 0] <= g1.member[0][:, 0])  # member 0 suffers


def test_sqrt_combination_identity(setup):
    # sum_j sqrt(tau q_j) sqrt(member_var_j) == sqrt(group_var), per RAU
    cfg, scn, alloc = setup
    g = estimate_gains(scn, alloc, cfg)
    for m in range(cfg.n_groups):
        lhs = (np.sqrt(alloc.tau * alloc.q_ul[m]) * np.sqrt(g.member[m])).sum(axis=1)
        assert np.allclose(lhs, np.sqrt(g.group[:, m]), atol=1e-12, rtol=1e-12)


def test_group_sum_equals_weighted_member_identity(setup):
    cfg, scn, alloc = setup
    g = estimate_gains(scn, alloc, cfg)
    for m in range(cfg.n_groups):
        lhs = ((np.sqrt(alloc.tau * alloc.q_ul[m] * g.member[m])).sum(axis=1)) ** 2
        assert np.allclose(lhs, g.group[:, m], rtol=1e-12)


def test_pilot_sampler_rejects_short_tau(setup):
    cfg, scn, alloc = setup
    alloc.tau = cfg.n_streams - 1
    with pytest.raises(ConfigError):
        draw_sample_pilot(scn, alloc, cfg, make_rng(0))


def test_linear_combination_identity_per_realization(setup):
    # composite group estimate == sum_j sqrt(tau q_j) * member estimate j
    cfg, scn, alloc = setup
    for sampler in (draw_sample_pilot, draw_sample_statistical):
        s = sampler(scn, alloc, cfg, make_rng(9))
        for m in range(cfg.n_groups):
            combo = (np.sqrt(alloc.tau * alloc.q_ul[m]) * s.t_hat_user[m]).sum(axis=1)
            assert np.allclose(combo, s.t_hat_group[:, m], atol=1e-12)


def test_noiseless_single_member_estimate_aligns():
    cfg = cfg_small(noise_ul=1e-12, group_sizes=(1, 3), antennas_per_rau=84,
                    n_raus=3)
    scn = place_uniform(cfg, make_rng(4))
    alloc = default_allocation(cfg)
    s = draw_sample_pilot(scn, alloc, cfg, make_rng(1))
    t_true = s.t[0][:, 0]
    t_est = s.t_hat_group[:, 0]
    cos = np.abs(np.vdot(t_true, t_est)) / (np.linalg.norm(t_true) * np.linalg.norm(t_est))
    assert cos > 1 - 1e-3


def test_statistical_estimate_variance_matches_gain(setup):
    cfg, scn, alloc = setup
    g = estimate_gains(scn, alloc, cfg)
    batch = draw_batch_statistical(scn, alloc, cfg, make_rng(2), 10_000)
    got = np.mean(np.abs(batch.estimates[:, :, :cfg.n_unicast]) ** 2, axis=0)
    want = np.repeat(g.unicast, cfg.antennas_per_rau, axis=0)
    # average over each RAU block to tighten the estimate
    got_block = got.reshape(cfg.n_raus, cfg.antennas_per_rau, -1).mean(axis=1)
    assert np.allclose(got_block, g.unicast, rtol=0.03, atol=1e-6)
    assert want.shape == got.shape


def test_pilot_estimate_variance_matches_gain(setup):
    cfg, scn, alloc = setup
    g = estimate_gains(scn, alloc, cfg)
    batch = draw_batch_pilot(scn, alloc, cfg, make_rng(2), 10_000)
    got = np.mean(np.abs(batch.estimates[:, :, :cfg.n_unicast]) ** 2, axis=0)
    got_block = got.reshape(cfg.n_raus, cfg.antennas_per_rau, -1).mean(axis=1)
    assert np.allclose(got_block, g.unicast, rtol=0.03, atol=1e-6)


def test_two_paths_same_moments(setup):
    cfg, scn, alloc = setup
    n = 10_000
    a = draw_batch_pilot(scn, alloc, cfg, make_rng(31), n)
    b = draw_batch_statistical(scn, alloc, cfg, make_rng(32), n)
    for arr_a, arr_b in ((a.truths, b.truths), (a.estimates, b.estimates)):
        va = np.mean(np.abs(arr_a) ** 2, axis=(0, 1))
        vb = np.mean(np.abs(arr_b) ** 2, axis=(0, 1))
        assert np.allclose(va, vb, rtol=0.05, atol=1e-6)
    # cross second moment truth-estimate (the joint law, not just marginals)
    ca = np.mean((a.truths[:, :, :3].conj() * a.estimates[:, :, :3]).real, axis=(0, 1))
    cb = np.mean((b.truths[:, :, :3].conj() * b.estimates[:, :, :3]).real, axis=(0, 1))
    assert np.allclose(ca, cb, rtol=0.05, atol=1e-6)


def test_mmse_orthogonality(setup):
    # E[estimate * conj(error)] == 0; checked as a correlation coefficient
    # (gains span orders of magnitude), averaged per RAU block
    cfg, scn, alloc = setup
    batch = draw_batch_statistical(scn, alloc, cfg, make_rng(8), 10_000)
    est = batch.estimates[:, :, :cfg.n_unicast]
    err = batch.truths[:, :, :cfg.n_unicast] - est
    cross = np.mean(est * err.conj(), axis=0)
    scale = np.sqrt(np.mean(np.abs(est) ** 2, axis=0) * np.mean(np.abs(err) ** 2, axis=0))
    corr = np.abs(cross) / np.maximum(scale, 1e-30)
    corr_block = corr.reshape(cfg.n_raus, cfg.antennas_per_rau, -1).mean(axis=1)
    assert np.max(corr_block) < 0.02


def test_degenerate_zero_error_limit():
    cfg = cfg_small(noise_ul=0.0)
    scn = place_uniform(cfg, make_rng(4))
    alloc = default_allocation(cfg)
    s = draw_sample_statistical(scn, alloc, cfg, make_rng(3))
    assert np.allclose(s.c, s.c_hat, atol=1e-12)
