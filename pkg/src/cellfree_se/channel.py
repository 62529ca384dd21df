"""Channel generation and linear MMSE estimation.

Channels between all RAUs and a user are length N*L vectors whose per-entry
variance is the per-RAU large-scale gain repeated over the L antennas of each
RAU. Estimates are produced either by simulating the full pilot phase
(orthonormal pilots, despreading, per-RAU scalar MMSE filters) or by a fast
statistical path with the identical joint law of (truth, estimate).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import circular_gaussian

__all__ = [
    "EstimateGains",
    "ChannelSample",
    "ChannelBatch",
    "estimate_gains",
    "draw_sample_pilot",
    "draw_sample_statistical",
    "draw_batch_pilot",
    "draw_batch_statistical",
]


def unicast_estimate_var(beta, p_ul, tau, noise_ul):
    """Per-RAU variance of the unicast channel estimate.

    Broadcasts: beta (..., N, U), p_ul (..., U).
    """
    beta = np.asarray(beta, dtype=float)
    p = np.asarray(p_ul, dtype=float)[..., None, :]
    num = tau * p * beta**2
    den = tau * p * beta + noise_ul
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def unicast_estimate_var_grad(beta, p_ul, tau, noise_ul):
    """d(unicast estimate variance)/d(p_ul), same broadcasting."""
    beta = np.asarray(beta, dtype=float)
    p = np.asarray(p_ul, dtype=float)[..., None, :]
    den = (tau * p * beta + noise_ul) ** 2
    num = tau * beta**2 * noise_ul
    return np.divide(num, den, out=np.zeros_like(den), where=den > 0)


def group_pilot_sum(eta, q_ul, tau):
    """sum_j tau*q_j*eta_nj per RAU: eta (..., N, K), q_ul (..., K) -> (..., N)."""
    eta = np.asarray(eta, dtype=float)
    q = np.asarray(q_ul, dtype=float)[..., None, :]
    return (tau * q * eta).sum(axis=-1)


def member_estimate_var(eta, q_ul, tau, noise_ul):
    """Per-RAU variance of each group member's estimate (pilot contamination)."""
    eta = np.asarray(eta, dtype=float)
    q = np.asarray(q_ul, dtype=float)[..., None, :]
    den = (noise_ul + group_pilot_sum(eta, q_ul, tau))[..., None]
    num = tau * q * eta**2
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def group_estimate_var(eta, q_ul, tau, noise_ul):
    """Per-RAU variance of the composite group estimate."""
    total = group_pilot_sum(eta, q_ul, tau)
    den = total + noise_ul
    return np.divide(total**2, den, out=np.zeros_like(total), where=den > 0)


def profile_matched_member_gain(eta, q_ul, tau, noise_ul):
    """Effective per-member gain (sum_n kappa_n sqrt(tau q_k) eta_nk)^2 / upsilon.

    Diagnostic: equals the member estimate-gain sum exactly when every
    member's per-RAU profile is proportional to the group composite, and is
    smaller otherwise (the actual signal gain of a beam matched to the
    composite estimate). eta (..., N, K), q_ul (..., K) -> (..., K).
    """
    eta = np.asarray(eta, dtype=float)
    q = np.asarray(q_ul, dtype=float)[..., None, :]
    total = group_pilot_sum(eta, q_ul, tau)                     # (..., N)
    den = total + noise_ul
    kappa = np.divide(total, den, out=np.zeros_like(total), where=den > 0)
    s = (kappa[..., :, None] * np.sqrt(tau * q) * eta).sum(axis=-2)   # (..., K)
    upsilon = np.divide(total**2, den, out=np.zeros_like(total),
                        where=den > 0).sum(axis=-1, keepdims=True)
    return np.divide(s**2, upsilon, out=np.zeros_like(s), where=upsilon > 0)


@dataclass
class EstimateGains:
    """Second-order statistics of the channel estimates.

    ``unicast``/``member``/``group`` hold per-RAU estimate variances;
    the ``*_sum`` fields are their sums over RAUs, which is what the
    normalizations and the closed-form SINR consume.
    """

    unicast: np.ndarray      # (N, U)
    member: list             # per group, (N, K_m)
    group: np.ndarray        # (N, M)
    unicast_sum: np.ndarray  # (U,)
    group_sum: np.ndarray    # (M,)
    member_sum: list         # per group, (K_m,)


def estimate_gains(scn, alloc, cfg):
    """All equivalent estimate gains for one scenario and allocation."""
    tau, s = alloc.tau, cfg.noise_ul
    lam = unicast_estimate_var(scn.beta, alloc.p_ul, tau, s)
    member = [member_estimate_var(scn.eta[m], alloc.q_ul[m], tau, s)
              for m in range(len(scn.eta))]
    group = np.stack([group_estimate_var(scn.eta[m], alloc.q_ul[m], tau, s)
                      for m in range(len(scn.eta))], axis=1) \
        if scn.eta else np.zeros((scn.beta.shape[0], 0))
    return EstimateGains(
        unicast=lam,
        member=member,
        group=group,
        unicast_sum=lam.sum(axis=0),
        group_sum=group.sum(axis=0),
        member_sum=[x.sum(axis=0) for x in member],
    )


@dataclass
class ChannelBatch:
    """A batch of joint channel/estimate realizations (leading axis = batch).

    ``truths`` stacks every user's true channel, unicast users first and then
    multicast users flattened group by group; ``estimates`` stacks the
    estimated unicast channels followed by the composite group estimates
    (the columns a precoder consumes). ``member_estimates`` carries the
    per-user multicast estimates of each group.
    """

    truths: np.ndarray            # (R, NL, U + sum K_m)
    estimates: np.ndarray         # (R, NL, U + M)
    member_estimates: list        # per group, (R, NL, K_m)
    n_unicast: int
    group_sizes: tuple


@dataclass
class ChannelSample:
    """A single joint realization of channels and estimates."""

    c: np.ndarray                 # (NL, U) true unicast channels
    t: list                       # per group, (NL, K_m) true multicast channels
    c_hat: np.ndarray             # (NL, U) unicast estimates
    t_hat_group: np.ndarray       # (NL, M) composite group estimates
    t_hat_user: list              # per group, (NL, K_m) per-user estimates


def _expand(per_rau, n_antennas):
    """Repeat per-RAU values across each RAU's antennas: (N, k) -> (N*L, k)."""
    return np.repeat(np.asarray(per_rau, dtype=float), n_antennas, axis=0)


def _check_tau(alloc, cfg):
    if alloc.tau < cfg.n_streams:
        raise ConfigError(
            f"pilot length {alloc.tau} below the number of pilots needed "
            f"(M+U = {cfg.n_streams})")


def draw_batch_statistical(scn, alloc, cfg, rng, n_real):
    """Fast sampler: unicast via the orthogonality decomposition, multicast
    via true channels plus despread noise pushed through the MMSE filter.
    Joint law identical to :func:`draw_batch_pilot`.
    """
    _check_tau(alloc, cfg)
    L = cfg.antennas_per_rau
    n_ant = cfg.total_antennas
    u = cfg.n_unicast
    tau, s_ul = alloc.tau, cfg.noise_ul

    lam = unicast_estimate_var(scn.beta, alloc.p_ul, tau, s_ul)
    c_hat = circular_gaussian(rng, (n_real, n_ant, u)) * np.sqrt(_expand(lam, L))
    err_var = np.maximum(scn.beta - lam, 0.0)
    c = c_hat + circular_gaussian(rng, (n_real, n_ant, u)) * np.sqrt(_expand(err_var, L))

    truths = [c]
    t_hat_group = np.zeros((n_real, n_ant, cfg.n_groups), dtype=complex)
    member_est = []
    for m, k_m in enumerate(cfg.group_sizes):
        eta = scn.eta[m]
        t = circular_gaussian(rng, (n_real, n_ant, k_m)) * np.sqrt(_expand(eta, L))
        noise = circular_gaussian(rng, (n_real, n_ant), s_ul)
        y = (np.sqrt(tau * alloc.q_ul[m]) * t).sum(axis=2) + noise
        total = group_pilot_sum(eta, alloc.q_ul[m], tau)
        den = total + s_ul
        g_grp = np.divide(total, den, out=np.zeros_like(total), where=den > 0)
        t_hat_group[:, :, m] = _expand(g_grp[:, None], L)[:, 0] * y
        g_mem = np.divide(np.sqrt(tau * alloc.q_ul[m]) * eta, den[:, None],
                          out=np.zeros_like(eta), where=den[:, None] > 0)
        member_est.append(_expand(g_mem, L) * y[:, :, None])
        truths.append(t)

    estimates = np.concatenate([c_hat, t_hat_group], axis=2)
    return ChannelBatch(
        truths=np.concatenate(truths, axis=2),
        estimates=estimates,
        member_estimates=member_est,
        n_unicast=u,
        group_sizes=cfg.group_sizes,
    )


def draw_batch_pilot(scn, alloc, cfg, rng, n_real):
    """Reference sampler: forms the full received pilot block, despreads with
    orthonormal DFT pilots and applies the per-RAU MMSE filters.
    """
    _check_tau(alloc, cfg)
    L = cfg.antennas_per_rau
    n_ant = cfg.total_antennas
    u, m_groups = cfg.n_unicast, cfg.n_groups
    tau, s_ul = alloc.tau, cfg.noise_ul

    # first U columns of the tau-point unitary DFT are the unicast pilots,
    # the next M the group pilots
    idx = np.arange(tau)
    dft = np.exp(-2j * np.pi * np.outer(idx, idx) / tau) / np.sqrt(tau)
    pilots = dft[:, :u + m_groups]

    c = circular_gaussian(rng, (n_real, n_ant, u)) * np.sqrt(_expand(scn.beta, L))
    t = [circular_gaussian(rng, (n_real, n_ant, k)) * np.sqrt(_expand(scn.eta[m], L))
         for m, k in enumerate(cfg.group_sizes)]

    y_block = np.zeros((n_real, n_ant, tau), dtype=complex)
    for j in range(u):
        y_block += np.sqrt(tau * alloc.p_ul[j]) * c[:, :, j:j + 1] * pilots[:, j].conj()
    for m in range(m_groups):
        amp = (np.sqrt(tau * alloc.q_ul[m]) * t[m]).sum(axis=2)
        y_block += amp[:, :, None] * pilots[:, u + m].conj()
    y_block += circular_gaussian(rng, (n_real, n_ant, tau), s_ul)

    despread = y_block @ pilots  # (R, NL, U+M); column j recovers pilot j

    lam_f_num = np.sqrt(tau * alloc.p_ul) * scn.beta
    lam_f_den = tau * alloc.p_ul * scn.beta + s_ul
    f_un = np.divide(lam_f_num, lam_f_den, out=np.zeros_like(lam_f_num),
                     where=lam_f_den > 0)
    c_hat = _expand(f_un, L) * despread[:, :, :u]

    t_hat_group = np.zeros((n_real, n_ant, m_groups), dtype=complex)
    member_est = []
    for m in range(m_groups):
        eta = scn.eta[m]
        total = group_pilot_sum(eta, alloc.q_ul[m], tau)
        den = total + s_ul
        g_grp = np.divide(total, den, out=np.zeros_like(total), where=den > 0)
        y_m = despread[:, :, u + m]
        t_hat_group[:, :, m] = _expand(g_grp[:, None], L)[:, 0] * y_m
        g_mem = np.divide(np.sqrt(tau * alloc.q_ul[m]) * eta, den[:, None],
                          out=np.zeros_like(eta), where=den[:, None] > 0)
        member_est.append(_expand(g_mem, L) * y_m[:, :, None])

    return ChannelBatch(
        truths=np.concatenate([c] + t, axis=2),
        estimates=np.concatenate([c_hat, t_hat_group], axis=2),
        member_estimates=member_est,
        n_unicast=u,
        group_sizes=cfg.group_sizes,
    )


def _single(batch, cfg):
    u = cfg.n_unicast
    sizes = cfg.group_sizes
    offs = np.cumsum((u,) + sizes)
    t = [batch.truths[0, :, offs[m]:offs[m + 1]] for m in range(len(sizes))]
    return ChannelSample(
        c=batch.truths[0, :, :u],
        t=t,
        c_hat=batch.estimates[0, :, :u],
        t_hat_group=batch.estimates[0, :, u:],
        t_hat_user=[m[0] for m in batch.member_estimates],
    )


def draw_sample_pilot(scn, alloc, cfg, rng):
    """One joint realization via the full pilot-phase simulation."""
    return _single(draw_batch_pilot(scn, alloc, cfg, rng, 1), cfg)


def draw_sample_statistical(scn, alloc, cfg, rng):
    """One joint realization via the fast statistical path."""
    return _single(draw_batch_statistical(scn, alloc, cfg, rng, 1), cfg)
