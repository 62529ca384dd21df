"""Brute-force SINR estimation and expectation-term validation.

Every user's received inner products against every beam are accumulated
over many joint channel/estimate realizations with a streaming mean/variance
(Welford with pairwise merge). Chunks use realization-index-keyed substreams
and merge in index order, so results are byte-reproducible regardless of how
many worker threads run the chunks.
"""

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import draw_batch_pilot, draw_batch_statistical, estimate_gains
from .numerics import substream
from .precoding import build_precoders_batch
from .se import array_gain

__all__ = [
    "McEstimate",
    "McSinrReport",
    "estimate_sinr",
    "estimate_appendix_terms",
    "appendix_terms_to_csv",
]

_CHUNK = 500


@dataclass
class McEstimate:
    """A Monte Carlo mean with a 95% confidence half-width."""

    mean: float
    half_width_95: float
    n_samples: int


class _ProductStats:
    """Streaming mean/M2 of the complex products and their squared moduli."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape, dtype=complex)
        self.m2 = np.zeros(shape)
        self.mean_sq = np.zeros(shape)
        self.m2_sq = np.zeros(shape)

    def update(self, prod):
        """prod: (R, ...) batch of complex products."""
        r = prod.shape[0]
        b_mean = prod.mean(axis=0)
        b_m2 = (np.abs(prod - b_mean) ** 2).sum(axis=0)
        sq = np.abs(prod) ** 2
        b_mean_sq = sq.mean(axis=0)
        b_m2_sq = ((sq - b_mean_sq) ** 2).sum(axis=0)
        self._merge(r, b_mean, b_m2, b_mean_sq, b_m2_sq)

    def _merge(self, n_b, mean_b, m2_b, mean_sq_b, m2_sq_b):
        n_a = self.n
        n = n_a + n_b
        if n_a == 0:
            self.mean, self.m2 = mean_b, m2_b
            self.mean_sq, self.m2_sq = mean_sq_b, m2_sq_b
        else:
            d = mean_b - self.mean
            self.m2 = self.m2 + m2_b + np.abs(d) ** 2 * (n_a * n_b / n)
            self.mean = self.mean + d * (n_b / n)
            d = mean_sq_b - self.mean_sq
            self.m2_sq = self.m2_sq + m2_sq_b + d**2 * (n_a * n_b / n)
            self.mean_sq = self.mean_sq + d * (n_b / n)
        self.n = n

    def merge(self, other):
        self._merge(other.n, other.mean, other.m2, other.mean_sq, other.m2_sq)

    def hw_mean(self):
        return 1.96 * np.sqrt(self.m2 / (self.n * max(self.n - 1, 1)))

    def hw_mean_sq(self):
        return 1.96 * np.sqrt(self.m2_sq / (self.n * max(self.n - 1, 1)))


def _accumulate(kind, scn, alloc, cfg, n_real, rng_seed, sampler, threads):
    """Run the realization loop; returns gains and accumulated product stats."""
    gains = estimate_gains(scn, alloc, cfg)
    draw = draw_batch_pilot if sampler == "pilot" else draw_batch_statistical
    n_users = cfg.n_unicast + cfg.total_multicast_users
    n_streams = cfg.n_streams

    chunks = []
    start = 0
    while start < n_real:
        chunks.append((start, min(_CHUNK, n_real - start)))
        start += _CHUNK

    def run_chunk(args):
        index, (offset, size) = args
        rng = substream(rng_seed, "mc", sampler, index)
        batch = draw(scn, alloc, cfg, rng, size)
        beams = build_precoders_batch(kind, batch, gains, alloc, cfg)
        prod = np.einsum("rnp,rns->rps", batch.truths.conj(), beams)
        stats = _ProductStats((n_users, n_streams))
        stats.update(prod)
        return stats

    total = _ProductStats((n_users, n_streams))
    jobs = list(enumerate(chunks))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, jobs))
    else:
        results = [run_chunk(j) for j in jobs]
    for stats in results:  # merge in chunk order: thread-count independent
        total.merge(stats)
    return gains, total


def _user_tables(cfg):
    """User bookkeeping: kind, group, in-group index, own-stream index."""
    kinds, groups, indices, own = [], [], [], []
    for k in range(cfg.n_unicast):
        kinds.append("unicast")
        groups.append(-1)
        indices.append(k)
        own.append(k)
    for m, k_m in enumerate(cfg.group_sizes):
        for k in range(k_m):
            kinds.append("multicast")
            groups.append(m)
            indices.append(k)
            own.append(cfg.n_unicast + m)
    return kinds, np.array(groups), np.array(indices), np.array(own)


@dataclass
class McSinrReport:
    """Term-wise Monte Carlo statistics and the assembled SINR per user."""

    kind: str
    n_samples: int
    user_kinds: list
    user_groups: np.ndarray
    user_indices: np.ndarray
    own_stream: np.ndarray
    signal_mean: np.ndarray        # (P,) complex mean of own-beam product
    signal_mean_hw: np.ndarray
    signal_var: np.ndarray         # (P,) E|own|^2 - |E own|^2
    second_moment: np.ndarray      # (P, S) E|product|^2 per beam
    second_moment_hw: np.ndarray
    sinr: np.ndarray               # (P,)
    sinr_hw: np.ndarray

    def user_estimate(self, p):
        return McEstimate(float(self.sinr[p]), float(self.sinr_hw[p]), self.n_samples)


def estimate_sinr(kind, scn, alloc, cfg, n_real, rng_seed, sampler="statistical",
                  threads=1):
    """Empirical SINR for every user from n_real joint realizations.

    Numerator: |sample mean of the own-beam product|^2. Denominator:
    noise - numerator + sum over beams of the sample second moments.
    """
    if n_real < 2:
        raise ValueError("need at least 2 realizations")
    gains, stats = _accumulate(kind, scn, alloc, cfg, n_real, rng_seed,
                               sampler, threads)
    kinds, groups, indices, own = _user_tables(cfg)
    p_idx = np.arange(len(kinds))

    sig_mean = stats.mean[p_idx, own]
    sig_mean_hw = stats.hw_mean()[p_idx, own]
    num = np.abs(sig_mean) ** 2
    num_hw = 2 * np.abs(sig_mean) * sig_mean_hw
    den = cfg.noise_dl - num + stats.mean_sq.sum(axis=1)
    den = np.maximum(den, np.finfo(float).tiny)
    den_hw = np.sqrt((stats.hw_mean_sq() ** 2).sum(axis=1) + num_hw**2)
    sinr = num / den
    rel = np.zeros_like(sinr)
    ok = num > 0
    rel[ok] = np.sqrt((num_hw[ok] / num[ok]) ** 2 + (den_hw[ok] / den[ok]) ** 2)
    return McSinrReport(
        kind=kind,
        n_samples=stats.n,
        user_kinds=kinds,
        user_groups=groups,
        user_indices=indices,
        own_stream=own,
        signal_mean=sig_mean,
        signal_mean_hw=sig_mean_hw,
        signal_var=stats.mean_sq[p_idx, own] - num,
        second_moment=stats.mean_sq,
        second_moment_hw=stats.hw_mean_sq(),
        sinr=sinr,
        sinr_hw=sinr * rel,
    )


def _closed_form_terms(kind, scn, gains, alloc, cfg):
    """Reference values for every accumulated expectation term.

    Returns (signal_mean (P,), second_moment (P, S)) where the second
    moments are leak = power * sum_n(gain)/NL off the own beam and
    J*power*gain + leak on it.
    """
    j = array_gain(kind, cfg)
    nl = cfg.total_antennas
    kinds, groups, indices, own = _user_tables(cfg)
    n_users = len(kinds)
    power = np.concatenate([alloc.p_dl, alloc.q_dl])
    own_gain = np.concatenate(
        [gains.unicast_sum] + [gains.member_sum[m] for m in range(cfg.n_groups)])
    gain_cols = np.concatenate(
        [scn.beta] + [scn.eta[m] for m in range(cfg.n_groups)], axis=1)  # (N, P)
    gsum = gain_cols.sum(axis=0)

    p_idx = np.arange(n_users)
    signal = np.sqrt(j * power[own] * own_gain)
    second = power[None, :] * gsum[:, None] / nl
    second[p_idx, own] += j * power[own] * own_gain
    return signal, second


def estimate_appendix_terms(kind, scn, alloc, cfg, n_real, rng_seed,
                            sampler="statistical", threads=1):
    """Per-term (MC estimate, closed form, relative error) table.

    Rows: for each user, the real and imaginary parts of the own-beam mean,
    then the second moment against every beam.
    """
    gains, stats = _accumulate(kind, scn, alloc, cfg, n_real, rng_seed,
                               sampler, threads)
    kinds, groups, indices, own = _user_tables(cfg)
    cf_signal, cf_second = _closed_form_terms(kind, scn, gains, alloc, cfg)
    hw_mean = stats.hw_mean()
    hw_sq = stats.hw_mean_sq()

    rows = []

    def rel(mc, cf):
        return (mc - cf) / cf if cf != 0 else float("nan")

    for p, ukind in enumerate(kinds):
        user = f"{ukind}{'' if groups[p] < 0 else groups[p]}_{indices[p]}"
        s = own[p]
        mean = stats.mean[p, s]
        rows.append({
            "kind": kind, "term": "signal_mean_re", "user": user,
            "mc_mean": mean.real, "ci": hw_mean[p, s],
            "closed_form": cf_signal[p], "rel_err": rel(mean.real, cf_signal[p]),
        })
        rows.append({
            "kind": kind, "term": "signal_mean_im", "user": user,
            "mc_mean": mean.imag, "ci": hw_mean[p, s],
            "closed_form": 0.0, "rel_err": float("nan"),
        })
        for q in range(stats.mean_sq.shape[1]):
            term = "self_second_moment" if q == s else f"cross_second_moment_s{q}"
            rows.append({
                "kind": kind, "term": term, "user": user,
                "mc_mean": stats.mean_sq[p, q], "ci": hw_sq[p, q],
                "closed_form": cf_second[p, q],
                "rel_err": rel(stats.mean_sq[p, q], cf_second[p, q]),
            })
    return rows


def appendix_terms_to_csv(rows):
    buf = io.StringIO()
    buf.write("# cellfree-se mc-terms v1\n")
    buf.write("kind,term,user,mc_mean,ci,closed_form,rel_err\n")
    for r in rows:
        buf.write(f"{r['kind']},{r['term']},{r['user']},{float(r['mc_mean'])!r},"
                  f"{float(r['ci'])!r},{float(r['closed_form'])!r},"
                  f"{float(r['rel_err'])!r}\n")
    return buf.getvalue()
