"""MRT, ZF and MMSE downlink precoders under average-power normalization.

The normalizing denominators are the closed-form expected squared norms, not
per-batch empirical estimates: the deterministic SINR expressions assume
exactly these scalings.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .numerics import gram, solve_hpd

PRECODERS = ("mrt", "zf", "mmse")

__all__ = [
    "PRECODERS",
    "PrecodeSet",
    "build_precoders",
    "build_precoders_batch",
    "expected_norm_closed_form",
    "stream_scales",
]


@dataclass
class PrecodeSet:
    """Per-realization precoding vectors for all streams."""

    kind: str
    v: np.ndarray    # (NL, U) unicast beams
    w: np.ndarray    # (NL, M) group beams


def _check_kind(kind):
    if kind not in PRECODERS:
        raise ValueError(f"unknown precoder kind {kind!r}, expected one of {PRECODERS}")


def _check_rank(kind, cfg):
    if kind in ("zf", "mmse") and cfg.total_antennas <= cfg.n_streams:
        raise ConfigError(
            f"{kind} needs N*L > M+U, got {cfg.total_antennas} <= {cfg.n_streams}")


def expected_norm_closed_form(kind, gains, cfg, stream):
    """Closed-form E[a^H a] of the unnormalized beam for one stream.

    Streams are indexed unicast users first (0..U-1), then groups.
    """
    _check_kind(kind)
    u = cfg.n_unicast
    g = gains.unicast_sum[stream] if stream < u else gains.group_sum[stream - u]
    if g <= 0:
        raise NumericalError(
            f"stream {stream} has zero estimate gain (no uplink pilot power)")
    a = cfg.total_antennas - cfg.n_streams
    if kind == "mrt":
        return cfg.antennas_per_rau * g
    if a <= 0:
        raise ConfigError(f"N*L - M - U = {a} must be positive for {kind}")
    if kind == "zf":
        return 1.0 / (a * g)
    return a * g / (a * g + cfg.noise_dl) ** 2


def stream_scales(kind, gains, alloc, cfg):
    """Normalizing amplitude per stream: sqrt(power / E[a^H a]).

    Streams with zero downlink power get amplitude 0 but keep their column.
    """
    _check_kind(kind)
    _check_rank(kind, cfg)
    power = np.concatenate([alloc.p_dl, alloc.q_dl])
    gain = np.concatenate([gains.unicast_sum, gains.group_sum])
    active = power > 0
    if np.any(active & (gain <= 0)):
        bad = int(np.nonzero(active & (gain <= 0))[0][0])
        raise NumericalError(
            f"stream {bad} has downlink power but zero estimate gain; "
            "cannot normalize")
    a = cfg.total_antennas - cfg.n_streams
    L = cfg.antennas_per_rau
    out = np.zeros(power.shape)
    g, p = gain[active], power[active]
    if kind == "mrt":
        out[active] = np.sqrt(p / (L * g))
    elif kind == "zf":
        out[active] = np.sqrt(a * p * g)
    else:
        out[active] = np.sqrt(p * (a * g + cfg.noise_dl) ** 2 / (a * g))
    return out


def build_precoders(kind, sample, gains, alloc, cfg):
    """Precoding vectors for one channel realization."""
    scales = stream_scales(kind, gains, alloc, cfg)
    q_hat = np.concatenate([sample.c_hat, sample.t_hat_group], axis=1)
    if kind == "mrt":
        cols = q_hat * scales
    else:
        g = gram(q_hat)
        if kind == "mmse":
            g = g + cfg.noise_dl * np.eye(g.shape[0])
        # X = Q (G)^-1, computed column-block wise via the Hermitian solve
        cols = solve_hpd(g, q_hat.conj().T).conj().T * scales
    u = cfg.n_unicast
    return PrecodeSet(kind=kind, v=cols[:, :u], w=cols[:, u:])


def build_precoders_batch(kind, batch, gains, alloc, cfg):
    """All precoder columns for a batch of realizations: (R, NL, U+M).

    Same construction as :func:`build_precoders`, using stacked LAPACK solves
    for throughput; equality with the per-realization path is covered by
    tests.
    """
    _check_kind(kind)
    _check_rank(kind, cfg)
    scales = stream_scales(kind, gains, alloc, cfg)
    q_hat = batch.estimates
    if kind == "mrt":
        return q_hat * scales
    g = np.einsum("rne,rnf->ref", q_hat.conj(), q_hat)
    if kind == "mmse":
        g = g + cfg.noise_dl * np.eye(g.shape[-1])
    # G is Hermitian: solve G X^H = Q^H, then X = Q G^-1
    x_h = np.linalg.solve(g, q_hat.conj().transpose(0, 2, 1))
    return x_h.conj().transpose(0, 2, 1) * scales
