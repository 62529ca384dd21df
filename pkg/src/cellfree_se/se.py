"""Deterministic SINR/SE maps driven by large-scale statistics only.

The SINR of every user is an explicit function of the power allocation and
the per-RAU gains; analytic partial derivatives with respect to all power
variables are provided for gradient-based allocators.
"""

import io
from dataclasses import dataclass

import numpy as np

from .channel import (
    group_pilot_sum,
    member_estimate_var,
    unicast_estimate_var,
    unicast_estimate_var_grad,
)
from .errors import ConfigError
from .precoding import PRECODERS

__all__ = [
    "SeReport",
    "array_gain",
    "closed_form_sinr",
    "se_from_sinr",
    "se_report",
    "se_report_to_csv",
    "sinr_unicast_arrays",
    "sinr_multicast_arrays",
]


def array_gain(kind, cfg):
    """Precoder-dependent array-gain coefficient J."""
    if kind not in PRECODERS:
        raise ValueError(f"unknown precoder kind {kind!r}")
    nl = cfg.total_antennas
    a = nl - cfg.n_streams
    if kind == "mrt":
        return float(cfg.antennas_per_rau)
    if a <= 0:
        raise ConfigError(f"N*L - M - U = {a} must be positive for {kind}")
    if kind == "zf":
        return float(a)
    return nl**2 / a


def _interference_denominator(gain_sum, p_dl, q_dl, cfg):
    """sigma_dl + (sum of all downlink powers) * (sum_n gains)/NL.

    gain_sum: (..., P) per-user summed gains; p_dl (..., U); q_dl (..., M).
    """
    total = np.asarray(p_dl).sum(axis=-1) + np.asarray(q_dl).sum(axis=-1)
    return cfg.noise_dl + gain_sum * total[..., None] / cfg.total_antennas


def sinr_unicast_arrays(kind, beta, lam_sum, p_dl, q_dl, cfg):
    """Closed-form unicast SINR; broadcasts over leading batch axes.

    beta (..., N, U); lam_sum (..., U) summed estimate variances.
    """
    j = array_gain(kind, cfg)
    den = _interference_denominator(np.asarray(beta).sum(axis=-2), p_dl, q_dl, cfg)
    return j * np.asarray(p_dl) * lam_sum / den


def sinr_multicast_arrays(kind, eta_m, zeta_m, q_dl_m, p_dl, q_dl, cfg):
    """Closed-form SINR of one group's members; broadcasts over batch axes.

    eta_m (..., N, K_m); zeta_m (..., K_m); q_dl_m (...,) the group's power.
    """
    j = array_gain(kind, cfg)
    den = _interference_denominator(np.asarray(eta_m).sum(axis=-2), p_dl, q_dl, cfg)
    return j * np.asarray(q_dl_m)[..., None] * zeta_m / den


def closed_form_sinr(kind, scn, gains, alloc, cfg):
    """Linear SINR for every unicast user and every multicast user."""
    sinr_un = sinr_unicast_arrays(kind, scn.beta, gains.unicast_sum,
                                  alloc.p_dl, alloc.q_dl, cfg)
    sinr_mu = [
        sinr_multicast_arrays(kind, scn.eta[m], gains.member_sum[m],
                              alloc.q_dl[m], alloc.p_dl, alloc.q_dl, cfg)
        for m in range(cfg.n_groups)
    ]
    return sinr_un, sinr_mu


def prelog(tau, cfg):
    if tau > cfg.coherence_length:
        raise ConfigError(
            f"pilot length {tau} exceeds coherence length {cfg.coherence_length}")
    return 1.0 - tau / cfg.coherence_length


def se_from_sinr(sinr, cfg, tau):
    """SE = (1 - tau/T) * log2(1 + sinr)."""
    return prelog(tau, cfg) * np.log2(1.0 + np.asarray(sinr, dtype=float))


@dataclass
class SeReport:
    """Per-user SINR and SE under one precoder."""

    kind: str
    sinr_unicast: np.ndarray    # (U,)
    sinr_multicast: list        # per group, (K_m,)
    se_unicast: np.ndarray
    se_multicast: list
    prelog: float

    def min_multicast_se(self):
        vals = [se.min() for se in self.se_multicast if se.size]
        return min(vals) if vals else 0.0

    def mean_unicast_se(self):
        return float(self.se_unicast.mean()) if self.se_unicast.size else 0.0


def se_report(kind, scn, gains, alloc, cfg):
    sinr_un, sinr_mu = closed_form_sinr(kind, scn, gains, alloc, cfg)
    return SeReport(
        kind=kind,
        sinr_unicast=sinr_un,
        sinr_multicast=sinr_mu,
        se_unicast=se_from_sinr(sinr_un, cfg, alloc.tau),
        se_multicast=[se_from_sinr(s, cfg, alloc.tau) for s in sinr_mu],
        prelog=prelog(alloc.tau, cfg),
    )


def se_report_to_csv(report):
    buf = io.StringIO()
    buf.write("# cellfree-se report v1\n")
    buf.write("kind,user_kind,group,index,sinr,se\n")
    for k, (s, e) in enumerate(zip(report.sinr_unicast, report.se_unicast)):
        buf.write(f"{report.kind},unicast,-1,{k},{float(s)!r},{float(e)!r}\n")
    for m, (sv, ev) in enumerate(zip(report.sinr_multicast, report.se_multicast)):
        for k, (s, e) in enumerate(zip(sv, ev)):
            buf.write(f"{report.kind},multicast,{m},{k},{float(s)!r},{float(e)!r}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Analytic gradients with respect to the power variables.
# ---------------------------------------------------------------------------

def sinr_gradients(kind, scn, alloc, cfg):
    """SINR values and partial derivatives w.r.t. every power variable.

    Returns a dict with, for unicast users: 'un' (U,), 'dun_dp_dl' (U, U),
    'dun_dq_dl' (U, M), 'dun_dp_ul' (U,) (own pilot only); and per group m:
    'mu' (K_m,), 'dmu_dp_dl' (K_m, U), 'dmu_dq_dl' (K_m, M),
    'dmu_dq_ul' (K_m, K_m) with entry [k, j] = d sinr_{m,k} / d q_{m,j}.
    """
    tau, s_ul = alloc.tau, cfg.noise_ul
    nl = cfg.total_antennas
    j = array_gain(kind, cfg)
    u, m_groups = cfg.n_unicast, cfg.n_groups
    total_dl = alloc.p_dl.sum() + alloc.q_dl.sum()

    lam = unicast_estimate_var(scn.beta, alloc.p_ul, tau, s_ul)
    theta = lam.sum(axis=0)
    b_sum = scn.beta.sum(axis=0) / nl                     # (U,)
    den_un = cfg.noise_dl + b_sum * total_dl
    sinr_un = j * alloc.p_dl * theta / den_un

    # d/dp_dl[u]: own-power term plus the shared denominator growth
    dun_dp = -(sinr_un * b_sum / den_un)[:, None] * np.ones((u, u))
    dun_dp[np.arange(u), np.arange(u)] += j * theta / den_un
    dun_dq = -(sinr_un * b_sum / den_un)[:, None] * np.ones((u, m_groups))
    dtheta = unicast_estimate_var_grad(scn.beta, alloc.p_ul, tau, s_ul).sum(axis=0)
    dun_dpul = j * alloc.p_dl * dtheta / den_un

    out = {"un": sinr_un, "dun_dp_dl": dun_dp, "dun_dq_dl": dun_dq,
           "dun_dp_ul": dun_dpul, "groups": []}

    for m in range(m_groups):
        eta = scn.eta[m]
        k_m = eta.shape[1]
        xi = member_estimate_var(eta, alloc.q_ul[m], tau, s_ul)
        zeta = xi.sum(axis=0)
        e_sum = eta.sum(axis=0) / nl                      # (K_m,)
        den = cfg.noise_dl + e_sum * total_dl
        sinr = j * alloc.q_dl[m] * zeta / den

        dmu_dq = -(sinr * e_sum / den)[:, None] * np.ones((k_m, m_groups))
        dmu_dq[:, m] += j * zeta / den
        dmu_dp = -(sinr * e_sum / den)[:, None] * np.ones((k_m, u))

        # d zeta_k / d q_j through the shared contamination denominator
        s_n = s_ul + group_pilot_sum(eta, alloc.q_ul[m], tau)       # (N,)
        inv2 = np.divide(1.0, s_n**2, out=np.zeros_like(s_n), where=s_n > 0)
        # cross part: - sum_n tau*q_k*eta_nk^2 * tau*eta_nj / S_n^2
        dzeta = -np.einsum("nk,nj,n->kj",
                           tau * alloc.q_ul[m] * eta**2, tau * eta, inv2)
        inv1 = np.divide(1.0, s_n, out=np.zeros_like(s_n), where=s_n > 0)
        dzeta[np.arange(k_m), np.arange(k_m)] += (tau * eta**2 * inv1[:, None]).sum(axis=0)
        dmu_dqul = j * alloc.q_dl[m] * dzeta / den[:, None]

        out["groups"].append({"mu": sinr, "dmu_dp_dl": dmu_dp,
                              "dmu_dq_dl": dmu_dq, "dmu_dq_ul": dmu_dqul})
    return out
