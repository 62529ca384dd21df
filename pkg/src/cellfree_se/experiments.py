"""Experiment recipes: each produces deterministic CSV artifacts plus a
manifest (config echo, seed, content hashes) sufficient to re-run
bit-identically. Wall-clock measurements go to timings.txt / the training
log's wall_ms column only, so CSV content stays seed-determined.
"""

import dataclasses
import hashlib
import io
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .channel import estimate_gains, profile_matched_member_gain
from .configfile import config_echo
from .dnn import (
    TrainConfig,
    batch_loss,
    forward,
    output_map,
    powers_to_allocation,
    save_model,
    scenario_features,
    train,
)
from .monte_carlo import appendix_terms_to_csv, estimate_appendix_terms, estimate_sinr
from .numerics import make_rng, substream
from .nsga2 import Nsga2Params, run_nsga2, unpack_genes
from .precoding import PRECODERS
from .scenario import PowerAllocation, Scenario, default_allocation, place_uniform
from .se import array_gain, closed_form_sinr, se_from_sinr, se_report

__all__ = ["EXPERIMENTS", "run_experiment"]


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _csv(header, rows, schema):
    buf = io.StringIO()
    buf.write(f"# cellfree-se {schema} v1\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _write(out_dir, name, text):
    path = Path(out_dir) / name
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return name, digest


def _write_manifest(out_dir, experiment, cfg, limits, seed, params, files,
                    extra=None):
    manifest = {
        "experiment": experiment,
        "package_version": __version__,
        "seed": seed,
        "config": config_echo(cfg, limits),
        "params": params,
        "artifacts": dict(files),
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _kinds(params):
    kinds = params.get("kinds", list(PRECODERS))
    if isinstance(kinds, str):
        kinds = [kinds]
    for k in kinds:
        if k not in PRECODERS:
            raise ValueError(f"unknown precoder kind {k!r}")
    return kinds


# ---------------------------------------------------------------------------
# closed-form validation (spectral efficiency vs. antenna count)
# ---------------------------------------------------------------------------

def _profile_matched_sums(scn, alloc, cfg):
    out = []
    for m in range(cfg.n_groups):
        out.append(profile_matched_member_gain(
            scn.eta[m], alloc.q_ul[m], alloc.tau, cfg.noise_ul))
    return out


def validate_closed_form(cfg, limits, section, seed, out_dir, threads, plots):
    antennas = section.get("antennas", [20, 50, 100])
    n_real = section.get("realizations", 10000)
    kinds = _kinds(section)
    header = ["antennas_per_rau", "total_antennas", "kind", "user_kind",
              "group", "index", "sinr_cf", "sinr_mc", "sinr_mc_ci", "rel_err",
              "se_cf", "se_mc", "sinr_cf_profile_matched"]
    rows = []
    curves = {}
    for l_ant in antennas:
        cfg_l = cfg.with_overrides(antennas_per_rau=int(l_ant))
        scn = place_uniform(cfg_l, make_rng(cfg_l.rng_seed))
        alloc = default_allocation(cfg_l)
        gains = estimate_gains(scn, alloc, cfg_l)
        pm = _profile_matched_sums(scn, alloc, cfg_l)
        for kind in kinds:
            cf_un, cf_mu = closed_form_sinr(kind, scn, gains, alloc, cfg_l)
            rep = estimate_sinr(kind, scn, alloc, cfg_l, n_real,
                                rng_seed=seed, threads=threads)
            j = array_gain(kind, cfg_l)
            total = alloc.p_dl.sum() + alloc.q_dl.sum()
            cf_all = np.concatenate([cf_un] + cf_mu)
            pm_all = []
            for u in range(cfg_l.n_unicast):
                pm_all.append(cf_un[u])
            for m in range(cfg_l.n_groups):
                den = cfg_l.noise_dl + scn.eta[m].sum(axis=0) * total / cfg_l.total_antennas
                pm_all.extend(j * alloc.q_dl[m] * pm[m] / den)
            for p in range(len(rep.sinr)):
                mc = rep.sinr[p]
                rows.append((
                    cfg_l.antennas_per_rau, cfg_l.total_antennas, kind,
                    rep.user_kinds[p], int(rep.user_groups[p]),
                    int(rep.user_indices[p]), cf_all[p], mc, rep.sinr_hw[p],
                    (cf_all[p] - mc) / mc if mc > 0 else float("nan"),
                    se_from_sinr(cf_all[p], cfg_l, alloc.tau),
                    se_from_sinr(mc, cfg_l, alloc.tau),
                    pm_all[p],
                ))
            key = kind
            curves.setdefault(key, {"nl": [], "cf": [], "mc": []})
            curves[key]["nl"].append(cfg_l.total_antennas)
            curves[key]["cf"].append(float(np.mean(
                se_from_sinr(cf_all, cfg_l, alloc.tau))))
            curves[key]["mc"].append(float(np.mean(
                se_from_sinr(rep.sinr, cfg_l, alloc.tau))))
    files = [_write(out_dir, "validate_closed_form.csv",
                    _csv(header, rows, "validate"))]
    if plots:
        from .svgplot import line_chart
        series = []
        for kind, c in curves.items():
            series.append((f"{kind} closed form", c["nl"], c["cf"]))
            series.append((f"{kind} monte carlo", c["nl"], c["mc"]))
        line_chart(Path(out_dir) / "validate_closed_form.svg",
                   "Mean SE vs total antennas", "total antennas",
                   "SE (bit/s/Hz)", series)
    params = {"antennas": [int(a) for a in antennas],
              "realizations": int(n_real), "kinds": kinds}
    return files, params


# ---------------------------------------------------------------------------
# expectation-term table
# ---------------------------------------------------------------------------

def appendix_terms(cfg, limits, section, seed, out_dir, threads, plots):
    l_ant = section.get("antennas", 50)
    n_real = section.get("realizations", 10000)
    kinds = _kinds(section)
    cfg_l = cfg.with_overrides(antennas_per_rau=int(l_ant))
    scn = place_uniform(cfg_l, make_rng(cfg_l.rng_seed))
    alloc = default_allocation(cfg_l)
    files = []
    for kind in kinds:
        rows = estimate_appendix_terms(kind, scn, alloc, cfg_l, n_real,
                                       rng_seed=seed, threads=threads)
        files.append(_write(out_dir, f"terms_{kind}.csv",
                            appendix_terms_to_csv(rows)))
    params = {"antennas": int(l_ant), "realizations": int(n_real),
              "kinds": kinds}
    return files, params


# ---------------------------------------------------------------------------
# multicast vs unicast under identical placement (per-stream power fixed)
# ---------------------------------------------------------------------------

def _chunk_positions(positions, sizes):
    out, off = [], 0
    for k in sizes:
        out.append(positions[off:off + k])
        off += k
    return out


def unicast_vs_multicast(cfg, limits, section, seed, out_dir, threads, plots):
    antennas = section.get("antennas", [20, 50, 100])
    stream_power = float(section.get("stream_power", 2.0))
    noise_dl = float(section.get("noise_dl", 0.01))
    n_users = int(section.get("n_users", 20))
    n_groups = int(section.get("n_groups", 4))
    kinds = _kinds(section)
    if n_users % n_groups:
        raise ValueError("n_users must divide evenly into n_groups")
    k_m = n_users // n_groups
    sizes = (k_m,) * n_groups

    placer = cfg.with_overrides(
        n_unicast=n_users, n_groups=0, group_sizes=(),
        pilot_length=max(cfg.pilot_length, n_users), noise_dl=noise_dl,
        coherence_length=max(cfg.coherence_length, n_users))
    base = place_uniform(placer, make_rng(cfg.rng_seed))

    header = ["antennas_per_rau", "total_antennas", "kind", "mode", "group",
              "index", "sinr", "se"]
    rows = []
    means = {}
    for l_ant in antennas:
        cfg_un = placer.with_overrides(antennas_per_rau=int(l_ant),
                                       p_dl=stream_power)
        scn_un = base
        alloc_un = default_allocation(cfg_un)
        cfg_mu = cfg.with_overrides(
            antennas_per_rau=int(l_ant), n_unicast=0, n_groups=n_groups,
            group_sizes=sizes, pilot_length=n_groups, noise_dl=noise_dl,
            q_dl=stream_power)
        scn_mu = Scenario(
            rau_positions=base.rau_positions,
            unicast_positions=np.zeros((0, 2)),
            multicast_positions=_chunk_positions(base.unicast_positions, sizes),
            beta=np.zeros((cfg_mu.n_raus, 0)),
            eta=[c.T for c in _chunk_positions(base.beta.T, sizes)],
        )
        alloc_mu = default_allocation(cfg_mu)
        for kind in kinds:
            rep_un = se_report(kind, scn_un, estimate_gains(scn_un, alloc_un, cfg_un),
                               alloc_un, cfg_un)
            rep_mu = se_report(kind, scn_mu, estimate_gains(scn_mu, alloc_mu, cfg_mu),
                               alloc_mu, cfg_mu)
            for i, (s, e) in enumerate(zip(rep_un.sinr_unicast, rep_un.se_unicast)):
                rows.append((l_ant, cfg_un.total_antennas, kind, "unicast",
                             -1, i, s, e))
            for m in range(n_groups):
                for i, (s, e) in enumerate(zip(rep_mu.sinr_multicast[m],
                                               rep_mu.se_multicast[m])):
                    rows.append((l_ant, cfg_mu.total_antennas, kind,
                                 "multicast", m, i, s, e))
            key = (kind, l_ant)
            means[key] = (float(rep_un.se_unicast.mean()),
                          float(np.concatenate(rep_mu.se_multicast).mean()))
    files = [_write(out_dir, "unicast_vs_multicast.csv",
                    _csv(header, rows, "uni-vs-multi"))]
    if plots:
        from .svgplot import line_chart
        series = []
        for kind in kinds:
            xs = [placer.n_raus * a for a in antennas]
            series.append((f"{kind} unicast", xs,
                           [means[(kind, a)][0] for a in antennas]))
            series.append((f"{kind} multicast", xs,
                           [means[(kind, a)][1] for a in antennas]))
        line_chart(Path(out_dir) / "unicast_vs_multicast.svg",
                   "Per-user SE: multicast vs unicast", "total antennas",
                   "SE (bit/s/Hz)", series)
    params = {"antennas": [int(a) for a in antennas],
              "stream_power": stream_power, "noise_dl": noise_dl,
              "n_users": n_users, "n_groups": n_groups, "kinds": kinds}
    return files, params


# ---------------------------------------------------------------------------
# SE vs coherence length
# ---------------------------------------------------------------------------

def sweep_coherence(cfg, limits, section, seed, out_dir, threads, plots):
    t_values = section.get("coherence_values",
                           list(range(cfg.pilot_length, 301, 8)))
    kinds = _kinds(section)
    scn = place_uniform(cfg, make_rng(cfg.rng_seed))
    alloc = default_allocation(cfg)
    gains = estimate_gains(scn, alloc, cfg)
    header = ["kind", "coherence_length", "user_kind", "group", "index",
              "sinr", "se"]
    rows = []
    for kind in kinds:
        sinr_un, sinr_mu = closed_form_sinr(kind, scn, gains, alloc, cfg)
        for t in t_values:
            cfg_t = cfg.with_overrides(coherence_length=int(t))
            for k, s in enumerate(sinr_un):
                rows.append((kind, t, "unicast", -1, k, s,
                             se_from_sinr(s, cfg_t, alloc.tau)))
            for m, sv in enumerate(sinr_mu):
                for k, s in enumerate(sv):
                    rows.append((kind, t, "multicast", m, k, s,
                                 se_from_sinr(s, cfg_t, alloc.tau)))
    files = [_write(out_dir, "sweep_coherence.csv", _csv(header, rows, "sweep-T"))]
    if plots:
        from .svgplot import line_chart
        series = []
        for kind in kinds:
            per_t = {}
            for r in rows:
                if r[0] == kind:
                    per_t.setdefault(r[1], []).append(r[6])
            ts = sorted(per_t)
            series.append((kind, ts, [float(np.mean(per_t[t])) for t in ts]))
        line_chart(Path(out_dir) / "sweep_coherence.svg",
                   "Mean SE vs coherence length", "coherence length (symbols)",
                   "SE (bit/s/Hz)", series)
    params = {"coherence_values": [int(t) for t in t_values], "kinds": kinds}
    return files, params


# ---------------------------------------------------------------------------
# distributed (N RAUs) vs centralized (one RAU, same total antennas)
# ---------------------------------------------------------------------------

def distributed_vs_centralized(cfg, limits, section, seed, out_dir, threads,
                               plots):
    antennas = section.get("antennas", [10, 20, 50, 100])
    kinds = _kinds(section)
    scn = place_uniform(cfg, make_rng(cfg.rng_seed))
    header = ["mode", "n_raus", "antennas_per_rau", "total_antennas", "kind",
              "user_kind", "group", "index", "sinr", "se"]
    rows = []
    from .scenario import large_scale_gain

    def central_scenario():
        center = np.zeros((1, 2))

        def gains(users):
            if len(users) == 0:
                return np.zeros((1, 0))
            d = np.hypot(users[:, 0], users[:, 1])
            return large_scale_gain(cfg, np.maximum(d, 1e-12))[None, :]

        return Scenario(
            rau_positions=center,
            unicast_positions=scn.unicast_positions,
            multicast_positions=scn.multicast_positions,
            beta=gains(scn.unicast_positions),
            eta=[gains(p) for p in scn.multicast_positions],
        )

    scn_c = central_scenario()
    for l_ant in antennas:
        for mode, cfg_m, scn_m in (
                ("distributed", cfg.with_overrides(antennas_per_rau=int(l_ant)), scn),
                ("centralized", cfg.with_overrides(
                    n_raus=1, antennas_per_rau=int(l_ant) * cfg.n_raus), scn_c)):
            alloc = default_allocation(cfg_m)
            gains_m = estimate_gains(scn_m, alloc, cfg_m)
            for kind in kinds:
                rep = se_report(kind, scn_m, gains_m, alloc, cfg_m)
                for k, (s, e) in enumerate(zip(rep.sinr_unicast, rep.se_unicast)):
                    rows.append((mode, cfg_m.n_raus, cfg_m.antennas_per_rau,
                                 cfg_m.total_antennas, kind, "unicast", -1, k, s, e))
                for m in range(cfg_m.n_groups):
                    for k, (s, e) in enumerate(zip(rep.sinr_multicast[m],
                                                   rep.se_multicast[m])):
                        rows.append((mode, cfg_m.n_raus, cfg_m.antennas_per_rau,
                                     cfg_m.total_antennas, kind, "multicast",
                                     m, k, s, e))
    files = [_write(out_dir, "distributed_vs_centralized.csv",
                    _csv(header, rows, "dist-vs-central"))]
    if plots:
        from .svgplot import line_chart
        series = []
        for kind in kinds:
            for mode in ("distributed", "centralized"):
                pts = {}
                for r in rows:
                    if r[0] == mode and r[4] == kind and r[5] == "multicast":
                        pts.setdefault(r[3], []).append(r[9])
                xs = sorted(pts)
                series.append((f"{kind} {mode}", xs,
                               [float(np.mean(pts[x])) for x in xs]))
        line_chart(Path(out_dir) / "distributed_vs_centralized.svg",
                   "Multicast SE: distributed vs centralized",
                   "total antennas", "SE (bit/s/Hz)", series)
    params = {"antennas": [int(a) for a in antennas], "kinds": kinds}
    return files, params


# ---------------------------------------------------------------------------
# SE vs multicast downlink power at two noise levels
# ---------------------------------------------------------------------------

def sweep_multicast_power(cfg, limits, section, seed, out_dir, threads, plots):
    q_values = section.get("q_values",
                           [round(0.1 + 0.5 * i, 2) for i in range(20)])
    noise_levels = section.get("noise_levels", [cfg.noise_dl, 10.0])
    kinds = _kinds(section)
    scn = place_uniform(cfg, make_rng(cfg.rng_seed))
    header = ["noise_dl", "kind", "q_dl", "mean_se_unicast", "min_se_unicast",
              "mean_se_multicast", "min_se_multicast"]
    rows = []
    for noise in noise_levels:
        cfg_n = cfg.with_overrides(noise_dl=float(noise))
        for q in q_values:
            alloc = default_allocation(cfg_n.with_overrides(q_dl=float(q)))
            gains = estimate_gains(scn, alloc, cfg_n)
            for kind in kinds:
                rep = se_report(kind, scn, gains, alloc, cfg_n)
                mu = np.concatenate(rep.se_multicast)
                rows.append((noise, kind, q, rep.se_unicast.mean(),
                             rep.se_unicast.min(), mu.mean(), mu.min()))
    files = [_write(out_dir, "sweep_multicast_power.csv",
                    _csv(header, rows, "sweep-qdl"))]
    if plots:
        from .svgplot import line_chart
        series = []
        for noise in noise_levels:
            for kind in kinds:
                sel = [(r[2], r[3], r[5]) for r in rows
                       if r[0] == noise and r[1] == kind]
                xs = [s[0] for s in sel]
                series.append((f"{kind} uni n={noise:g}", xs, [s[1] for s in sel]))
                series.append((f"{kind} multi n={noise:g}", xs, [s[2] for s in sel]))
        line_chart(Path(out_dir) / "sweep_multicast_power.svg",
                   "SE vs multicast downlink power", "q_dl (W)",
                   "SE (bit/s/Hz)", series)
    params = {"q_values": [float(q) for q in q_values],
              "noise_levels": [float(n) for n in noise_levels], "kinds": kinds}
    return files, params


# ---------------------------------------------------------------------------
# Pareto front via NSGA-II
# ---------------------------------------------------------------------------

def _nsga_params(section):
    return Nsga2Params(
        population=int(section.get("population", 100)),
        generations=int(section.get("generations", 200)),
        crossover_prob=float(section.get("crossover_prob", 0.9)),
        crossover_eta=float(section.get("crossover_eta", 15.0)),
        mutation_eta=float(section.get("mutation_eta", 20.0)),
        mutation_prob=float(section.get("mutation_prob", 0.0)),
    )


def pareto(cfg, limits, section, seed, out_dir, threads, plots):
    kinds = _kinds(section)
    params = _nsga_params(section)
    scn = place_uniform(cfg, make_rng(cfg.rng_seed))
    n_genes = 2 * cfg.n_unicast + cfg.total_multicast_users + cfg.n_groups
    header = (["kind", "f1", "f2", "is_max_sum"]
              + [f"gene_{i}" for i in range(n_genes)])
    rows, hv_rows = [], []
    for kind in kinds:
        front = run_nsga2(kind, scn, cfg, limits, params, seed=seed)
        best = front.max_sum_index()
        for i in range(len(front)):
            rows.append((kind, front.f1[i], front.f2[i], int(i == best),
                         *front.genes[i]))
        for g, hv in enumerate(front.hypervolume_history):
            hv_rows.append((kind, g, hv))
    files = [
        _write(out_dir, "pareto_front.csv", _csv(header, rows, "pareto")),
        _write(out_dir, "pareto_hypervolume.csv",
               _csv(["kind", "generation", "hypervolume"], hv_rows, "pareto-hv")),
    ]
    if plots:
        from .svgplot import line_chart
        series = []
        for kind in kinds:
            pts = [(r[1], r[2]) for r in rows if r[0] == kind]
            series.append((kind, [p[0] for p in pts], [p[1] for p in pts]))
        line_chart(Path(out_dir) / "pareto_front.svg",
                   "Pareto trade-off: worst multicast SE vs mean unicast SE",
                   "min multicast SE (bit/s/Hz)", "mean unicast SE (bit/s/Hz)",
                   series)
    sec_params = {"kinds": kinds, "population": params.population,
                  "generations": params.generations}
    return files, sec_params


# ---------------------------------------------------------------------------
# neural allocator training and comparison against NSGA-II
# ---------------------------------------------------------------------------

def _dnn_setup(cfg, limits, section):
    cfg_d = cfg.with_overrides(
        n_unicast=int(section.get("n_unicast", 4)),
        n_groups=int(section.get("n_groups", 2)),
        group_sizes=tuple(section.get("group_sizes", [2, 2])),
        pilot_length=int(section.get("n_unicast", 4)) + int(section.get("n_groups", 2)),
    )
    dl_total = float(section.get("dl_total", 47.0))
    limits_d = dataclasses.replace(
        limits, p_dl_total=dl_total, p_dl_unicast_total=dl_total,
        p_dl_multicast_total=dl_total)
    tc = TrainConfig(
        learning_rate=float(section.get("learning_rate", 1e-3)),
        batch_size=int(section.get("batch_size", 64)),
        iterations=int(section.get("iterations", 2500)),
        hidden=tuple(section.get("hidden", [128, 128, 128])),
        val_scenarios=int(section.get("val_scenarios", 32)),
        val_every=int(section.get("val_every", 50)),
        norm_scenarios=int(section.get("norm_scenarios", 256)),
    )
    kind = section.get("kind", "mmse")
    return cfg_d, limits_d, tc, kind


def dnn_train(cfg, limits, section, seed, out_dir, threads, plots):
    cfg_d, limits_d, tc, kind = _dnn_setup(cfg, limits, section)
    log = []
    params = train(cfg_d, limits_d, kind, tc, seed=seed, log=log)
    save_model(params, Path(out_dir) / "allocator.bin")
    header = ["iter", "train_loss", "val_loss", "wall_ms"]
    rows = [(r["iter"], r["train_loss"], r["val_loss"], r["wall_ms"])
            for r in log]
    files = [_write(out_dir, "training_log.csv", _csv(header, rows, "train-log"))]
    with open(Path(out_dir) / "allocator.bin", "rb") as fh:
        files.append(("allocator.bin", hashlib.sha256(fh.read()).hexdigest()))
    if plots:
        from .svgplot import line_chart
        its = [r["iter"] for r in log]
        line_chart(Path(out_dir) / "training_loss.svg", "Training loss",
                   "iteration", "negative sum rate",
                   [("train", its, [r["train_loss"] for r in log])])
    sec = {"kind": kind, "iterations": tc.iterations,
           "batch_size": tc.batch_size, "hidden": list(tc.hidden),
           "dl_total": limits_d.p_dl_total}
    return files, sec


def dnn_vs_nsga2(cfg, limits, section, seed, out_dir, threads, plots):
    cfg_d, limits_d, tc, kind = _dnn_setup(cfg, limits, section)
    n_test = int(section.get("test_scenarios", 4))
    nsga_params = Nsga2Params(
        population=int(section.get("population", 60)),
        generations=int(section.get("generations", 80)),
    )

    t0 = time.perf_counter()
    params = train(cfg_d, limits_d, kind, tc, seed=seed)
    train_s = time.perf_counter() - t0
    omap = output_map(cfg_d, limits_d)

    from .dnn import _rates_and_power_grad, _stack_gains

    def objective(powers_vec, scn):
        beta, eta = _stack_gains([scn])
        obj, _, _, _ = _rates_and_power_grad(
            np.atleast_2d(powers_vec), beta, eta, kind, cfg_d)
        return -float(obj[0])

    header = ["scenario", "dnn_objective", "nsga2_objective", "ratio"]
    rows = []
    dnn_ms, nsga_s = [], []
    for i in range(n_test):
        scn = place_uniform(cfg_d, substream(seed, "dnn-test", i))
        x = scenario_features(scn)
        t0 = time.perf_counter()
        powers, _ = forward(params, x, omap)
        dnn_ms.append((time.perf_counter() - t0) * 1e3)
        dnn_obj = objective(powers[0], scn)

        t0 = time.perf_counter()
        front = run_nsga2(kind, scn, cfg_d, limits_d, nsga_params,
                          seed=seed + i)
        nsga_s.append(time.perf_counter() - t0)
        best = front.max_sum_index()
        alloc = unpack_genes(front.genes[best], cfg_d)
        nsga_powers = np.concatenate([alloc.p_dl, alloc.q_dl, alloc.p_ul]
                                     + list(alloc.q_ul))
        nsga_obj = objective(nsga_powers, scn)
        rows.append((i, dnn_obj, nsga_obj,
                     dnn_obj / nsga_obj if nsga_obj > 0 else float("nan")))

    files = [_write(out_dir, "dnn_vs_nsga2.csv", _csv(header, rows, "dnn-cmp"))]
    timings = io.StringIO()
    timings.write(f"dnn_train_s {train_s:.3f}\n")
    timings.write(f"dnn_forward_ms_mean {np.mean(dnn_ms):.6f}\n")
    timings.write(f"nsga2_run_s_mean {np.mean(nsga_s):.3f}\n")
    timings.write(
        f"inference_fraction_of_nsga2 {np.mean(dnn_ms) / 1e3 / np.mean(nsga_s):.8f}\n")
    path = Path(out_dir) / "timings.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(timings.getvalue())
    sec = {"kind": kind, "test_scenarios": n_test,
           "population": nsga_params.population,
           "generations": nsga_params.generations,
           "iterations": tc.iterations}
    return files, sec


EXPERIMENTS = {
    "validate_closed_form": validate_closed_form,
    "appendix_terms": appendix_terms,
    "unicast_vs_multicast": unicast_vs_multicast,
    "sweep_T": sweep_coherence,
    "distributed_vs_centralized": distributed_vs_centralized,
    "sweep_multicast_power": sweep_multicast_power,
    "pareto": pareto,
    "dnn_train": dnn_train,
    "dnn_vs_nsga2": dnn_vs_nsga2,
}


def run_experiment(name, cfg, limits, sections, seed, out_dir, threads=1,
                   plots=False):
    """Run one named experiment; returns the manifest path."""
    if name not in EXPERIMENTS:
        known = ", ".join(sorted(EXPERIMENTS))
        raise ValueError(f"unknown experiment {name!r}; expected one of {known}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    section = dict(sections.get(name, {}))
    if name in ("dnn_train", "dnn_vs_nsga2"):
        section = {**sections.get("dnn", {}), **section}
    if name == "pareto":
        section = {**sections.get("nsga2", {}), **section}
    files, params = EXPERIMENTS[name](cfg, limits, section, seed, out,
                                      threads, plots)
    return _write_manifest(out, name, cfg, limits, seed, params, files)
