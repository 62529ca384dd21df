"""Unsupervised neural power allocator.

A fully connected ReLU network maps the flattened large-scale gains of a
scenario to a power allocation. The output layer splits into two groups,
each normalized by a softmax and scaled by its power budget, so every
output satisfies the sum and box constraints by construction:

* group A (first M+U outputs): downlink powers [p_dl | q_dl], scaled to the
  joint downlink budget with the unicast/multicast sub-caps enforced by
  redistributing any excess to the other sub-block;
* group B (remaining outputs): pilot powers [p_ul | q_ul], scaled to the
  uplink budget with per-user caps enforced by iterative clipping, the
  leftover re-spread over unclipped users.

Training minimizes the negative rate (mean unicast rate plus worst multicast
rate, no prelog) with Adam; gradients are hand-derived all the way through
the closed-form SINR, the projections and the affine stack.
"""

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    group_pilot_sum,
    member_estimate_var,
    unicast_estimate_var,
    unicast_estimate_var_grad,
)
from .errors import NumericalError
from .numerics import substream
from .scenario import PowerAllocation, place_uniform
from .se import array_gain

__all__ = [
    "MlpParams",
    "TrainConfig",
    "OutputMap",
    "output_map",
    "mlp_init",
    "forward",
    "network_loss_and_grads",
    "batch_loss",
    "train",
    "save_model",
    "load_model",
    "scenario_features",
    "powers_to_allocation",
]

_CLIP_TOL = 1e-12


@dataclass
class MlpParams:
    """Dense layer weights/biases plus the input normalization."""

    weights: list                 # W_l of shape (n_out, n_in)
    biases: list                  # b_l of shape (n_out,)
    input_mean: np.ndarray
    input_std: np.ndarray

    @property
    def widths(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self):
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases],
                         self.input_mean.copy(), self.input_std.copy())


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    iterations: int = 2000
    hidden: tuple = (128, 128, 128)
    val_scenarios: int = 32
    val_every: int = 50
    norm_scenarios: int = 256
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class OutputMap:
    """Group structure and budgets of the constrained output layer."""

    n_unicast: int
    n_groups: int
    group_sizes: tuple
    dl_total: float
    dl_cap_unicast: float
    dl_cap_multicast: float
    ul_total: float
    ul_caps: np.ndarray           # per-entry caps of the pilot block

    @property
    def n_dl(self):
        return self.n_unicast + self.n_groups

    @property
    def n_out(self):
        return self.n_dl + self.n_unicast + sum(self.group_sizes)


def output_map(cfg, limits, dl_total=None, ul_total=None):
    """Budgets for the output layer from the configured power limits.

    ``ul_total`` defaults to the sum of the per-user pilot caps, which pins
    the pilot block at its caps; pass a smaller budget to let the network
    allocate pilots.
    """
    caps = np.concatenate([
        np.full(cfg.n_unicast, limits.p_ul_unicast_max),
        np.full(cfg.total_multicast_users, limits.p_ul_multicast_max),
    ])
    cap_sum = float(caps.sum())
    if dl_total is None:
        dl_total = min(limits.p_dl_total,
                       limits.p_dl_unicast_total + limits.p_dl_multicast_total)
    if ul_total is None:
        ul_total = cap_sum
    return OutputMap(
        n_unicast=cfg.n_unicast,
        n_groups=cfg.n_groups,
        group_sizes=cfg.group_sizes,
        dl_total=float(dl_total),
        dl_cap_unicast=float(limits.p_dl_unicast_total),
        dl_cap_multicast=float(limits.p_dl_multicast_total),
        ul_total=float(min(ul_total, cap_sum)),
        ul_caps=caps,
    )


def mlp_init(widths, rng):
    """He-initialized dense stack; widths = (n_in, hidden..., n_out)."""
    weights, biases = [], []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases,
                     np.zeros(widths[0]), np.ones(widths[0]))


def scenario_features(scn):
    """Flattened log10 gains: beta row-major, then each group's eta."""
    parts = [scn.beta.ravel()] + [e.ravel() for e in scn.eta]
    return np.log10(np.concatenate(parts))


def _mlp_raw(params, x):
    """Affine+ReLU stack on normalized input; returns output and caches."""
    h = (x - params.input_mean) / params.input_std
    acts = [h]
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def _mlp_backward(params, acts, d_out):
    """Gradients of the dense stack; d_out is dL/d(last layer output)."""
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    delta = d_out
    for i in range(len(params.weights) - 1, -1, -1):
        grads_w[i] = delta.T @ acts[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (acts[i] > 0)
    return grads_w, grads_b


def _softmax(g):
    e = np.exp(g - g.max())
    return e / e.sum()


def _project_item(g, omap):
    """Constrained powers for one raw output vector.

    Returns (powers, blocks) where blocks is a list of
    (indices, budget, within-block softmax) for the differentiable part;
    clipped coordinates sit at their caps with zero gradient.
    """
    k = omap.n_out
    n_dl, u = omap.n_dl, omap.n_unicast
    powers = np.zeros(k)
    blocks = []

    # downlink group: joint softmax, then push any sub-cap excess across
    s = _softmax(g[:n_dl])
    raw = omap.dl_total * s
    sum_un = raw[:u].sum()
    sum_mu = raw[u:].sum()
    if u and sum_un > omap.dl_cap_unicast + _CLIP_TOL:
        split = [(np.arange(u), omap.dl_cap_unicast),
                 (np.arange(u, n_dl), omap.dl_total - omap.dl_cap_unicast)]
    elif n_dl > u and sum_mu > omap.dl_cap_multicast + _CLIP_TOL:
        split = [(np.arange(u), omap.dl_total - omap.dl_cap_multicast),
                 (np.arange(u, n_dl), omap.dl_cap_multicast)]
    else:
        split = [(np.arange(n_dl), omap.dl_total)]
    for idx, budget in split:
        if len(idx) == 0:
            continue
        sb = _softmax(g[idx])
        powers[idx] = budget * sb
        blocks.append((idx, budget, sb))

    # pilot group: box projection by iterative clipping
    free = np.arange(n_dl, k)
    budget = omap.ul_total
    caps = omap.ul_caps
    while len(free):
        sb = _softmax(g[free])
        p = budget * sb
        over = p > caps[free - n_dl] + _CLIP_TOL
        if not np.any(over):
            powers[free] = p
            blocks.append((free, budget, sb))
            break
        clipped = free[over]
        powers[clipped] = caps[clipped - n_dl]
        budget -= caps[clipped - n_dl].sum()
        free = free[~over]
    return powers, blocks


def forward(params, x, omap):
    """Allocator output for a batch of feature vectors.

    Returns (powers (B, K), caches) where caches hold the activations and
    per-item projection blocks needed by the backward pass.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != params.weights[0].shape[1]:
        raise ValueError(
            f"input width {x.shape[1]} does not match network "
            f"({params.weights[0].shape[1]})")
    g, acts = _mlp_raw(params, x)
    if g.shape[1] != omap.n_out:
        raise ValueError(
            f"network output width {g.shape[1]} does not match the "
            f"allocation layout ({omap.n_out})")
    powers = np.zeros_like(g)
    item_blocks = []
    for i in range(len(g)):
        powers[i], blocks = _project_item(g[i], omap)
        item_blocks.append(blocks)
    return powers, (acts, item_blocks)


def _output_backward(d_powers, caches, params):
    """dL/d(pre-projection outputs) from dL/d(powers)."""
    acts, item_blocks = caches
    dg = np.zeros_like(d_powers)
    for i, blocks in enumerate(item_blocks):
        for idx, budget, sb in blocks:
            dp = d_powers[i, idx]
            inner = (sb * dp).sum()
            dg[i, idx] = budget * sb * (dp - inner)
    return dg


def powers_to_allocation(powers, cfg):
    """Split one output vector into a PowerAllocation (tau = M+U)."""
    u, m = cfg.n_unicast, cfg.n_groups
    q_ul, off = [], 2 * u + m
    for k in cfg.group_sizes:
        q_ul.append(powers[off:off + k])
        off += k
    return PowerAllocation(
        p_dl=powers[:u],
        q_dl=powers[u:u + m],
        p_ul=powers[u + m:2 * u + m],
        q_ul=q_ul,
        tau=cfg.n_streams,
    )


# ---------------------------------------------------------------------------
# Batched rate objective and its gradient w.r.t. the power outputs.
# ---------------------------------------------------------------------------

def _stack_gains(scenarios):
    beta = np.stack([s.beta for s in scenarios])
    eta = [np.stack([s.eta[m] for s in scenarios])
           for m in range(len(scenarios[0].eta))]
    return beta, eta


def _rates_and_power_grad(powers, beta, eta, kind, cfg):
    """Objective value per batch item and dL/d(powers).

    Objective per item: -(mean unicast rate + min multicast rate), rates
    log2(1+sinr) without the prelog. The min is handled by a subgradient on
    the (first) minimizing user.
    """
    b, _ = powers.shape
    u, m = cfg.n_unicast, cfg.n_groups
    tau, s_ul = cfg.n_streams, cfg.noise_ul
    nl = cfg.total_antennas
    j = array_gain(kind, cfg)
    ln2 = np.log(2.0)

    p_dl = powers[:, :u]
    q_dl = powers[:, u:u + m]
    p_ul = powers[:, u + m:2 * u + m]
    q_ul = powers[:, 2 * u + m:]
    total_dl = p_dl.sum(axis=1) + q_dl.sum(axis=1)

    d_powers = np.zeros_like(powers)
    rate_un = np.zeros((b, u))

    if u:
        lam = unicast_estimate_var(beta, p_ul, tau, s_ul)      # (B, N, U)
        theta = lam.sum(axis=1)                                # (B, U)
        b_sum = beta.sum(axis=1) / nl                          # (B, U)
        den = cfg.noise_dl + b_sum * total_dl[:, None]
        sinr_un = j * p_dl * theta / den
        rate_un = np.log2(1 + sinr_un)

        # dL/d sinr for the mean-unicast part: -(1/U)/((1+s) ln2) per item
        w_un = -1.0 / (u * ln2 * (1 + sinr_un))
        # own-power and shared-denominator terms
        d_powers[:, :u] += w_un * j * theta / den
        shared_un = (w_un * sinr_un * b_sum / den).sum(axis=1)  # (B,)
        d_powers[:, :u] -= shared_un[:, None]
        d_powers[:, u:u + m] -= shared_un[:, None]
        dtheta = unicast_estimate_var_grad(beta, p_ul, tau, s_ul).sum(axis=1)
        d_powers[:, u + m:2 * u + m] += w_un * j * p_dl * dtheta / den

    # multicast rates: track the minimum user per item
    min_rate = np.full(b, np.inf)
    min_group = np.full(b, -1, dtype=int)
    min_member = np.zeros(b, dtype=int)
    group_cache = []
    off = 0
    for g, k_m in enumerate(cfg.group_sizes):
        q_g = q_ul[:, off:off + k_m]                           # (B, K_m)
        xi = member_estimate_var(eta[g], q_g, tau, s_ul)       # (B, N, K_m)
        zeta = xi.sum(axis=1)
        e_sum = eta[g].sum(axis=1) / nl
        den_g = cfg.noise_dl + e_sum * total_dl[:, None]
        sinr_g = j * q_dl[:, g:g + 1] * zeta / den_g
        rate_g = np.log2(1 + sinr_g)
        arg = rate_g.argmin(axis=1)
        val = rate_g[np.arange(b), arg]
        better = val < min_rate
        min_rate[better] = val[better]
        min_group[better] = g
        min_member[better] = arg[better]
        group_cache.append((q_g, zeta, e_sum, den_g, sinr_g, off, k_m))
        off += k_m

    if m:
        # subgradient of the min-term through the active user only
        for g, (q_g, zeta, e_sum, den_g, sinr_g, off, k_m) in enumerate(group_cache):
            active = min_group == g
            if not np.any(active):
                continue
            rows = np.nonzero(active)[0]
            k_star = min_member[rows]
            s_star = sinr_g[rows, k_star]
            w = -1.0 / (ln2 * (1 + s_star))                    # (n_active,)
            zeta_star = zeta[rows, k_star]
            den_star = den_g[rows, k_star]
            e_star = e_sum[rows, k_star]
            # own group downlink power
            d_powers[rows, u + g] += w * j * zeta_star / den_star
            # shared denominator over all downlink powers
            shared = w * s_star * e_star / den_star
            d_powers[rows[:, None], np.arange(u + m)[None, :]] -= shared[:, None]
            # group pilot powers through the contamination coupling
            s_n = s_ul + group_pilot_sum(eta[g][rows], q_g[rows], tau)   # (n, N)
            inv1 = np.divide(1.0, s_n, out=np.zeros_like(s_n), where=s_n > 0)
            inv2 = inv1**2
            eta_rows = eta[g][rows]                                       # (n, N, K_m)
            eta_star = eta_rows[np.arange(len(rows)), :, k_star]          # (n, N)
            q_star = q_g[rows, k_star]
            dzeta = -np.einsum("rn,rnj,rn->rj",
                               tau * q_star[:, None] * eta_star**2,
                               tau * eta_rows, inv2)
            dzeta[np.arange(len(rows)), k_star] += (tau * eta_star**2 * inv1).sum(axis=1)
            d_powers[rows[:, None], 2 * u + m + off + np.arange(k_m)[None, :]] += (
                w[:, None] * j * q_dl[rows, g:g + 1] * dzeta / den_star[:, None])

    if m == 0:
        min_rate = np.zeros(b)
    objective = np.zeros(b)
    if u:
        objective -= rate_un.mean(axis=1)
    if m:
        objective -= min_rate
    return objective, d_powers, rate_un, min_rate


def batch_loss(params, omap, scenarios, kind, cfg):
    """Mean objective of the allocator over a batch of scenarios."""
    x = np.stack([scenario_features(s) for s in scenarios])
    powers, _ = forward(params, x, omap)
    beta, eta = _stack_gains(scenarios)
    obj, _, _, _ = _rates_and_power_grad(powers, beta, eta, kind, cfg)
    return float(obj.mean())


def network_loss_and_grads(params, omap, scenarios, kind, cfg):
    """Loss plus gradients for every weight and bias."""
    x = np.stack([scenario_features(s) for s in scenarios])
    powers, caches = forward(params, x, omap)
    beta, eta = _stack_gains(scenarios)
    obj, d_powers, _, _ = _rates_and_power_grad(powers, beta, eta, kind, cfg)
    loss = float(obj.mean())
    dg = _output_backward(d_powers / len(scenarios), caches, params)
    grads_w, grads_b = _mlp_backward(params, caches[0], dg)
    return loss, grads_w, grads_b


def _draw_scenarios(sampler, rng, n):
    return [sampler(rng) for _ in range(n)]


def train(cfg, limits, kind, train_cfg, seed, sampler=None, omap=None,
          log=None):
    """Adam training loop; returns the parameters with best validation loss.

    ``sampler(rng) -> Scenario`` defaults to uniform placement from ``cfg``.
    ``log``, when a list, receives dict rows (iter, train_loss, val_loss,
    wall_ms).
    """
    if sampler is None:
        sampler = lambda rng: place_uniform(cfg, rng)  # noqa: E731
    if omap is None:
        omap = output_map(cfg, limits)

    n_in = cfg.n_raus * (cfg.n_unicast + cfg.total_multicast_users)
    widths = (n_in, *train_cfg.hidden, omap.n_out)
    params = mlp_init(widths, substream(seed, "dnn", "init"))

    norm = _draw_scenarios(sampler, substream(seed, "dnn", "norm"),
                           train_cfg.norm_scenarios)
    feats = np.stack([scenario_features(s) for s in norm])
    params.input_mean = feats.mean(axis=0)
    params.input_std = np.maximum(feats.std(axis=0), 1e-6)

    val = _draw_scenarios(sampler, substream(seed, "dnn", "val"),
                          train_cfg.val_scenarios)

    m_w = [np.zeros_like(w) for w in params.weights]
    v_w = [np.zeros_like(w) for w in params.weights]
    m_b = [np.zeros_like(b) for b in params.biases]
    v_b = [np.zeros_like(b) for b in params.biases]
    b1, b2, eps = train_cfg.adam_beta1, train_cfg.adam_beta2, train_cfg.adam_eps

    best_val = np.inf
    best_params = params.copy()
    t0 = time.perf_counter()
    for it in range(1, train_cfg.iterations + 1):
        batch = _draw_scenarios(sampler, substream(seed, "dnn", "batch", it),
                                train_cfg.batch_size)
        loss, grads_w, grads_b = network_loss_and_grads(params, omap, batch,
                                                        kind, cfg)
        if not np.isfinite(loss):
            raise NumericalError(f"training diverged at iteration {it}")
        corr1 = 1 - b1**it
        corr2 = 1 - b2**it
        for i in range(len(params.weights)):
            m_w[i] = b1 * m_w[i] + (1 - b1) * grads_w[i]
            v_w[i] = b2 * v_w[i] + (1 - b2) * grads_w[i] ** 2
            params.weights[i] -= train_cfg.learning_rate * (
                m_w[i] / corr1) / (np.sqrt(v_w[i] / corr2) + eps)
            m_b[i] = b1 * m_b[i] + (1 - b1) * grads_b[i]
            v_b[i] = b2 * v_b[i] + (1 - b2) * grads_b[i] ** 2
            params.biases[i] -= train_cfg.learning_rate * (
                m_b[i] / corr1) / (np.sqrt(v_b[i] / corr2) + eps)

        val_loss = float("nan")
        if it % train_cfg.val_every == 0 or it == train_cfg.iterations:
            val_loss = batch_loss(params, omap, val, kind, cfg)
            if val_loss < best_val:
                best_val = val_loss
                best_params = params.copy()
        if log is not None:
            log.append({"iter": it, "train_loss": loss, "val_loss": val_loss,
                        "wall_ms": (time.perf_counter() - t0) * 1e3})
    if not np.isfinite(best_val):
        best_params = params.copy()
    return best_params


# ---------------------------------------------------------------------------
# Model persistence: magic, widths, weights row-major, biases, float64 LE.
# ---------------------------------------------------------------------------

_MAGIC = b"CFSEMLP1"


def save_model(params, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        widths = params.widths
        fh.write(struct.pack("<q", len(widths)))
        fh.write(struct.pack(f"<{len(widths)}q", *widths))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.input_mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.input_std, dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not an allocator model file")
        (n_widths,) = struct.unpack("<q", fh.read(8))
        widths = struct.unpack(f"<{n_widths}q", fh.read(8 * n_widths))
        weights, biases = [], []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            w = np.frombuffer(fh.read(8 * n_in * n_out), dtype="<f8").reshape(n_out, n_in)
            b = np.frombuffer(fh.read(8 * n_out), dtype="<f8")
            weights.append(w.copy())
            biases.append(b.copy())
        mean = np.frombuffer(fh.read(8 * widths[0]), dtype="<f8").copy()
        std = np.frombuffer(fh.read(8 * widths[0]), dtype="<f8").copy()
    return MlpParams(weights, biases, mean, std)
