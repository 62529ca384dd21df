"""Constrained NSGA-II for the two-objective power-allocation problem.

Objectives (both maximized): f1 = worst multicast user SE, f2 = average
unicast SE, evaluated through the closed-form SINR at pilot length M+U.
Constraint handling is constraint-domination: feasible beats infeasible,
lower total violation beats higher, feasible points compare by Pareto
dominance. An archive of every feasible non-dominated point found so far is
maintained; the returned front (and the per-generation hypervolume) come
from the archive, which makes the hypervolume non-decreasing by
construction.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import member_estimate_var, unicast_estimate_var
from .numerics import substream
from .scenario import PowerAllocation
from .se import array_gain, prelog

__all__ = [
    "Nsga2Params",
    "ParetoFront",
    "pack_allocation",
    "unpack_genes",
    "gene_bounds",
    "evaluate",
    "evaluate_population",
    "nondominated_sort",
    "crowding_distance",
    "hypervolume",
    "run_nsga2",
]


@dataclass
class Nsga2Params:
    population: int = 100
    generations: int = 200
    crossover_prob: float = 0.9
    crossover_eta: float = 15.0
    mutation_eta: float = 20.0
    mutation_prob: float = 0.0   # 0 -> 1/n_genes
    tournament: int = 2

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and >= 4")


@dataclass
class ParetoFront:
    """Non-dominated feasible points, ascending in f1."""

    f1: np.ndarray
    f2: np.ndarray
    genes: np.ndarray
    feasible: bool
    hypervolume_history: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.f1)

    def allocation(self, i, cfg):
        return unpack_genes(self.genes[i], cfg)

    def max_sum_index(self):
        return int(np.argmax(self.f1 + self.f2))


def _dims(cfg):
    u, km = cfg.n_unicast, cfg.total_multicast_users
    return u, km, u, cfg.n_groups


def gene_bounds(cfg, limits):
    """Box bounds of the flattened decision vector [p_ul|q_ul|p_dl|q_dl]."""
    u, km, _, m = _dims(cfg)
    lower = np.zeros(2 * u + km + m)
    upper = np.concatenate([
        np.full(u, limits.p_ul_unicast_max),
        np.full(km, limits.p_ul_multicast_max),
        np.full(u, limits.p_dl_unicast_total),
        np.full(m, limits.p_dl_multicast_total),
    ])
    return lower, upper


def pack_allocation(alloc):
    parts = [alloc.p_ul] + list(alloc.q_ul) + [alloc.p_dl, alloc.q_dl]
    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


def unpack_genes(genes, cfg):
    u, km, _, m = _dims(cfg)
    genes = np.asarray(genes, dtype=float)
    q_ul, off = [], u
    for k in cfg.group_sizes:
        q_ul.append(genes[off:off + k])
        off += k
    return PowerAllocation(
        p_ul=genes[:u],
        q_ul=q_ul,
        p_dl=genes[off:off + u],
        q_dl=genes[off + u:off + u + m],
        tau=cfg.n_streams,
    )


def _batch_rates(genes, kind, scn, cfg):
    """Vectorized closed-form SE over a population: genes (Y, D).

    Returns (se_unicast (Y, U), se_multicast (Y, sum K_m)).
    """
    y = genes.shape[0]
    u, km, _, m = _dims(cfg)
    tau = cfg.n_streams
    p_ul = genes[:, :u]
    q_ul_flat = genes[:, u:u + km]
    p_dl = genes[:, u + km:2 * u + km]
    q_dl = genes[:, 2 * u + km:]

    j = array_gain(kind, cfg)
    nl = cfg.total_antennas
    pl = prelog(tau, cfg)
    total_dl = p_dl.sum(axis=1) + q_dl.sum(axis=1)          # (Y,)

    lam_sum = unicast_estimate_var(scn.beta, p_ul, tau, cfg.noise_ul).sum(axis=-2)
    den_un = cfg.noise_dl + scn.beta.sum(axis=0) * total_dl[:, None] / nl
    se_un = pl * np.log2(1 + j * p_dl * lam_sum / den_un)

    se_mu = np.zeros((y, km))
    off = 0
    for g, k_m in enumerate(cfg.group_sizes):
        q_g = q_ul_flat[:, off:off + k_m]
        zeta = member_estimate_var(scn.eta[g], q_g, tau, cfg.noise_ul).sum(axis=-2)
        den = cfg.noise_dl + scn.eta[g].sum(axis=0) * total_dl[:, None] / nl
        se_mu[:, off:off + k_m] = pl * np.log2(
            1 + j * q_dl[:, g:g + 1] * zeta / den)
        off += k_m
    return se_un, se_mu


def evaluate_population(genes, kind, scn, cfg, limits):
    """(f1, f2, violation) for a population matrix of gene vectors."""
    genes = np.atleast_2d(np.asarray(genes, dtype=float))
    u, km, _, _ = _dims(cfg)
    se_un, se_mu = _batch_rates(genes, kind, scn, cfg)
    f1 = se_mu.min(axis=1) if km else np.zeros(len(genes))
    f2 = se_un.mean(axis=1) if u else np.zeros(len(genes))

    viol = np.zeros(len(genes))
    p_sum = genes[:, u + km:2 * u + km].sum(axis=1)
    q_sum = genes[:, 2 * u + km:].sum(axis=1)
    for total, cap in ((p_sum, limits.p_dl_unicast_total),
                       (q_sum, limits.p_dl_multicast_total),
                       (p_sum + q_sum, limits.p_dl_total)):
        if cap > 0:
            viol += np.maximum(0.0, (total - cap) / cap)
        else:
            viol += np.where(total > 0, np.inf, 0.0)
    if limits.se_min_unicast > 0 and u:
        viol += np.maximum(
            0.0, (limits.se_min_unicast - se_un) / limits.se_min_unicast).sum(axis=1)
    if limits.se_min_multicast > 0 and km:
        viol += np.maximum(
            0.0, (limits.se_min_multicast - se_mu) / limits.se_min_multicast).sum(axis=1)
    return f1, f2, viol


def evaluate(genes, kind, scn, cfg, limits):
    """Objectives and violation of a single gene vector."""
    f1, f2, viol = evaluate_population(genes, kind, scn, cfg, limits)
    return float(f1[0]), float(f2[0]), float(viol[0])


def _dominates(f1, f2, viol, a, b, tol=0.0):
    """Constraint-domination, maximizing both objectives."""
    fa, fb = viol[a] <= tol, viol[b] <= tol
    if fa != fb:
        return fa
    if not fa:
        return viol[a] < viol[b]
    if f1[a] < f1[b] or f2[a] < f2[b]:
        return False
    return f1[a] > f1[b] or f2[a] > f2[b]


def nondominated_sort(f1, f2, viol=None):
    """Ranks starting at 1 under constraint-domination."""
    n = len(f1)
    if viol is None:
        viol = np.zeros(n)
    dominated_by = [[] for _ in range(n)]
    n_dominating = np.zeros(n, dtype=int)
    for a in range(n):
        for b in range(a + 1, n):
            if _dominates(f1, f2, viol, a, b):
                dominated_by[a].append(b)
                n_dominating[b] += 1
            elif _dominates(f1, f2, viol, b, a):
                dominated_by[b].append(a)
                n_dominating[a] += 1
    ranks = np.zeros(n, dtype=int)
    current = [i for i in range(n) if n_dominating[i] == 0]
    r = 1
    while current:
        nxt = []
        for i in current:
            ranks[i] = r
            for j in dominated_by[i]:
                n_dominating[j] -= 1
                if n_dominating[j] == 0:
                    nxt.append(j)
        current = nxt
        r += 1
    return ranks


def crowding_distance(f1, f2):
    """Per-point crowding distance of one front (sum over both objectives)."""
    n = len(f1)
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for obj in (np.asarray(f1, dtype=float), np.asarray(f2, dtype=float)):
        order = np.argsort(obj, kind="stable")
        rng = obj[order[-1]] - obj[order[0]]
        dist[order[0]] = dist[order[-1]] = np.inf
        if rng <= 0:
            continue
        gaps = (obj[order[2:]] - obj[order[:-2]]) / rng
        dist[order[1:-1]] += gaps
    return dist


def hypervolume(f1, f2, ref=(0.0, 0.0)):
    """Dominated-area hypervolume for maximization against a reference point."""
    f1 = np.asarray(f1, dtype=float) - ref[0]
    f2 = np.asarray(f2, dtype=float) - ref[1]
    keep = (f1 > 0) & (f2 > 0)
    if not np.any(keep):
        return 0.0
    pts = sorted(zip(f1[keep], f2[keep]))
    hv, prev_x, best = 0.0, 0.0, 0.0
    # sweep ascending f1; the strip height is the best f2 at or beyond x
    f2s = [p[1] for p in pts]
    suffix_max = np.maximum.accumulate(f2s[::-1])[::-1]
    for i, (x, _) in enumerate(pts):
        hv += (x - prev_x) * suffix_max[i]
        prev_x = x
    return hv


def _pareto_filter(f1, f2):
    """Indices of the non-dominated subset (maximization)."""
    n = len(f1)
    keep = []
    for i in range(n):
        dominated = False
        for j in range(n):
            if j == i:
                continue
            if (f1[j] >= f1[i] and f2[j] >= f2[i]
                    and (f1[j] > f1[i] or f2[j] > f2[i])):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return np.array(keep, dtype=int)


class _Archive:
    """Feasible non-dominated points seen so far (deduplicated)."""

    def __init__(self):
        self.f1 = np.empty(0)
        self.f2 = np.empty(0)
        self.genes = None

    def update(self, f1, f2, viol, genes):
        ok = viol <= 0
        if not np.any(ok) and self.genes is None:
            return
        if np.any(ok):
            new_f1 = np.concatenate([self.f1, f1[ok]])
            new_f2 = np.concatenate([self.f2, f2[ok]])
            new_g = genes[ok] if self.genes is None else np.vstack([self.genes, genes[ok]])
        else:
            new_f1, new_f2, new_g = self.f1, self.f2, self.genes
        _, uniq = np.unique(np.stack([new_f1, new_f2]), axis=1, return_index=True)
        new_f1, new_f2, new_g = new_f1[uniq], new_f2[uniq], new_g[uniq]
        keep = _pareto_filter(new_f1, new_f2)
        self.f1, self.f2, self.genes = new_f1[keep], new_f2[keep], new_g[keep]

    def front(self, hv_history):
        order = np.argsort(self.f1, kind="stable")
        return ParetoFront(f1=self.f1[order], f2=self.f2[order],
                           genes=self.genes[order], feasible=True,
                           hypervolume_history=np.asarray(hv_history))


def _initial_population(cfg, limits, params, rng):
    """Downlink budgets split Dirichlet-uniform (always C3-feasible);
    pilot powers uniform in their boxes."""
    y = params.population
    u, km, _, m = _dims(cfg)
    p_ul = rng.random((y, u)) * limits.p_ul_unicast_max
    q_ul = rng.random((y, km)) * limits.p_ul_multicast_max
    tot_p = rng.random(y) * limits.p_dl_unicast_total
    tot_q = rng.random(y) * limits.p_dl_multicast_total
    joint = tot_p + tot_q
    over = joint > limits.p_dl_total
    scale = np.where(over & (joint > 0), limits.p_dl_total / np.maximum(joint, 1e-300), 1.0)
    tot_p, tot_q = tot_p * scale, tot_q * scale
    p_dl = rng.dirichlet(np.ones(u), size=y) * tot_p[:, None] if u else np.zeros((y, 0))
    q_dl = rng.dirichlet(np.ones(m), size=y) * tot_q[:, None] if m else np.zeros((y, 0))
    return np.hstack([p_ul, q_ul, p_dl, q_dl])


def _sbx(parents, lower, upper, params, rng):
    """Simulated binary crossover on consecutive parent pairs."""
    children = parents.copy()
    n_pairs = len(parents) // 2
    d = parents.shape[1]
    for i in range(n_pairs):
        if rng.random() >= params.crossover_prob:
            continue
        p1, p2 = children[2 * i], children[2 * i + 1]
        do = rng.random(d) < 0.5
        uu = rng.random(d)
        beta = np.where(uu <= 0.5,
                        (2 * uu) ** (1.0 / (params.crossover_eta + 1)),
                        (1.0 / (2 * (1 - uu))) ** (1.0 / (params.crossover_eta + 1)))
        c1 = 0.5 * ((1 + beta) * p1 + (1 - beta) * p2)
        c2 = 0.5 * ((1 - beta) * p1 + (1 + beta) * p2)
        p1[do] = c1[do]
        p2[do] = c2[do]
    return np.clip(children, lower, upper)


def _polynomial_mutation(pop, lower, upper, params, rng):
    pm = params.mutation_prob or 1.0 / pop.shape[1]
    span = upper - lower
    mask = rng.random(pop.shape) < pm
    uu = rng.random(pop.shape)
    delta = np.where(uu < 0.5,
                     (2 * uu) ** (1.0 / (params.mutation_eta + 1)) - 1.0,
                     1.0 - (2 * (1 - uu)) ** (1.0 / (params.mutation_eta + 1)))
    out = pop + mask * delta * span
    return np.clip(out, lower, upper)


def _tournament(ranks, crowd, y, params, rng):
    """Select y parent indices by (rank, crowding) tournaments."""
    picks = rng.integers(0, len(ranks), size=(y, params.tournament))
    best = picks[:, 0]
    for t in range(1, params.tournament):
        cand = picks[:, t]
        better = (ranks[cand] < ranks[best]) | (
            (ranks[cand] == ranks[best]) & (crowd[cand] > crowd[best]))
        best = np.where(better, cand, best)
    return best


def _truncate(f1, f2, viol, genes, y):
    """Elitist environmental selection to y individuals."""
    ranks = nondominated_sort(f1, f2, viol)
    crowd = np.zeros(len(f1))
    chosen = []
    for r in range(1, ranks.max() + 1):
        front = np.nonzero(ranks == r)[0]
        crowd[front] = crowding_distance(f1[front], f2[front])
        if len(chosen) + len(front) <= y:
            chosen.extend(front.tolist())
            if len(chosen) == y:
                break
        else:
            order = front[np.argsort(-crowd[front], kind="stable")]
            chosen.extend(order[: y - len(chosen)].tolist())
            break
    idx = np.array(chosen, dtype=int)
    return f1[idx], f2[idx], viol[idx], genes[idx], ranks[idx], crowd[idx]


def run_nsga2(kind, scn, cfg, limits, params, seed):
    """Full elitist loop; returns the archive front (feasible points) or,
    if nothing feasible was ever found, the lowest-violation set flagged
    infeasible."""
    lower, upper = gene_bounds(cfg, limits)
    rng_init = substream(seed, "nsga2", "init")
    genes = _initial_population(cfg, limits, params, rng_init)
    f1, f2, viol = evaluate_population(genes, kind, scn, cfg, limits)
    archive = _Archive()
    archive.update(f1, f2, viol, genes)
    hv_history = [hypervolume(archive.f1, archive.f2)]
    ranks = nondominated_sort(f1, f2, viol)
    crowd = np.zeros(len(f1))
    for r in np.unique(ranks):
        front = np.nonzero(ranks == r)[0]
        crowd[front] = crowding_distance(f1[front], f2[front])

    y = params.population
    for gen in range(params.generations):
        rng = substream(seed, "nsga2", "gen", gen)
        parents = genes[_tournament(ranks, crowd, y, params, rng)]
        offspring = _sbx(parents, lower, upper, params, rng)
        offspring = _polynomial_mutation(offspring, lower, upper, params, rng)
        g1, g2, gv = evaluate_population(offspring, kind, scn, cfg, limits)
        all_f1 = np.concatenate([f1, g1])
        all_f2 = np.concatenate([f2, g2])
        all_v = np.concatenate([viol, gv])
        all_g = np.vstack([genes, offspring])
        f1, f2, viol, genes, ranks, crowd = _truncate(all_f1, all_f2, all_v, all_g, y)
        archive.update(g1, g2, gv, offspring)
        hv_history.append(hypervolume(archive.f1, archive.f2))

    if len(archive.f1):
        return archive.front(hv_history)
    # nothing feasible: report the least-violating non-dominated set
    order = np.argsort(viol, kind="stable")[: max(1, y // 10)]
    sub = np.argsort(f1[order], kind="stable")
    return ParetoFront(f1=f1[order][sub], f2=f2[order][sub],
                       genes=genes[order][sub], feasible=False,
                       hypervolume_history=np.asarray(hv_history))
