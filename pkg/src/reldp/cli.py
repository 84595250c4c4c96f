"""Command-line surface for the accounting and training pipeline.

Subcommands:

* ``bounds``     divergence curves per bound, optionally composed over
                 iteration counts; CSVs plus rendered figures.
* ``calibrate``  invert the accountant: smallest noise multiplier hitting a
                 target privacy budget.
* ``cap-degree`` degree-cap an edge list and write the report.
* ``sample``     draw one mini-batch and print it (debug aid).
* ``train``      cap, train with noisy clipped SGD, write checkpoint,
                 ledger, metrics, loss curve and figure.
* ``sbm``        generate a synthetic block-model instance with features.
* ``verify``     run the certification oracles at fixed seeds.

Every command is deterministic given its flags; re-runs write byte-identical
files. ``--config FILE`` supplies flat ``key = value`` defaults (keys are
flag names with dashes as underscores); explicit flags win.

Exit codes: 0 success, 1 verification found a violation, 2 usage or input
error, 3 numeric failure, 4 capacity exhausted, 5 calibration failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np

from . import accountant, report
from .accountant import AccountantParams, calibrate_sigma, compose, rdp_to_dp
from .clipping import freq_clip, standard_clip
from .errors import (CalibrationError, CapacityError, EdgeListParseError,
                     EnumerationOverflowError, NumericError, ReldpError)
from .graph import Graph, cap_degrees, load_edge_list, load_features
from .models import (EncoderModel, LossSpec, init_model, load_model,
                     save_model, tuple_loss_grad)
from .oracle import check_sensitivity, fd_gradient, mc_psi, _clipped_sum
from .rng import make_rng
from .sampling import (build_batch, format_batch, neg_sample_wor,
                       neighboring_batches, poisson_positive)
from .synth import sbm_graph, write_sbm
from .training import (TrainConfig, LearningRate, dp_train, evaluate_ranking,
                       write_metrics_csv)

_USAGE, _VIOLATION, _NUMERIC, _CAPACITY, _CALIBRATION = 2, 1, 3, 4, 5


class UsageError(Exception):
    pass


def _parse_alpha_grid(spec: str) -> np.ndarray:
    """Grid entries separated by commas; ``a..b`` expands to integers."""
    out: list[float] = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if ".." in token:
            lo_s, hi_s = token.split("..", 1)
            try:
                lo, hi = int(lo_s), int(hi_s)
            except ValueError:
                raise UsageError(f"bad grid range {token!r}") from None
            if hi < lo:
                raise UsageError(f"empty grid range {token!r}")
            out.extend(float(a) for a in range(lo, hi + 1))
        else:
            try:
                out.append(float(token))
            except ValueError:
                raise UsageError(f"bad grid entry {token!r}") from None
    grid = np.unique(np.asarray(out, dtype=np.float64))
    if grid.size == 0 or np.any(grid <= 1.0):
        raise UsageError("alpha grid must be nonempty with every entry > 1")
    return grid


def _coerce(value: str):
    text = value.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _load_config(path: str) -> dict:
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key = value")
                key, _, val = line.partition("=")
                out[key.strip().replace("-", "_")] = _coerce(val)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    return out


def _build_parser(cfg: dict) -> argparse.ArgumentParser:
    def dflt(key, fallback):
        return cfg.get(key, fallback)

    def req(key):
        # a config-file value satisfies a required flag
        return key not in cfg

    parser = argparse.ArgumentParser(
        prog="reldp",
        description="entity-private relational learning: accounting, "
                    "training, verification")
    parser.add_argument("--config", help="flat key = value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_accountant_flags(p):
        p.add_argument("--n", type=int, default=dflt("n", 10**6),
                       help="node count (default 1e6)")
        p.add_argument("--m", type=int, default=dflt("m", 5 * 10**6),
                       help="edge count (default 5e6)")
        p.add_argument("--K", type=int, default=dflt("K", 5),
                       help="degree cap (default 5)")
        p.add_argument("--gamma", type=float, default=dflt("gamma", 1e-5),
                       help="positive sampling rate (default 1e-5)")
        p.add_argument("--kneg", type=int, default=dflt("kneg", 4),
                       help="negatives per positive (default 4)")

    b = sub.add_parser("bounds", help="write divergence curves as CSV")
    add_accountant_flags(b)
    b.add_argument("--sigma", type=float, default=dflt("sigma", 0.5))
    b.add_argument("--alphas", default=dflt("alphas", "1.25,1.5,1.75,2..256"))
    b.add_argument("--mode", default=dflt("mode", "all"),
                   choices=["adaptive", "standard", "naive", "all"])
    b.add_argument("--naive-loose", action="store_true",
                   default=dflt("naive_loose", False))
    b.add_argument("--iters", type=int, default=dflt("iters", None),
                   help="also write composed dp_<mode>.csv up to this T")
    b.add_argument("--delta", type=float, default=dflt("delta", None))
    b.add_argument("--out", default=dflt("out", None), required=req("out"))
    b.add_argument("--no-plot", action="store_true",
                   default=dflt("no_plot", False))

    c = sub.add_parser("calibrate", help="invert the accountant for sigma")
    add_accountant_flags(c)
    c.add_argument("--target-eps", type=float, required=req("target_eps"),
                   default=dflt("target_eps", None))
    c.add_argument("--delta", type=float, required=req("delta"),
                   default=dflt("delta", None))
    c.add_argument("--iters", type=int, required=req("iters"),
                   default=dflt("iters", None))
    c.add_argument("--mode", default=dflt("mode", "adaptive"),
                   choices=["adaptive", "standard", "naive"])
    c.add_argument("--out", default=dflt("out", None))

    g = sub.add_parser("cap-degree", help="degree-cap an edge list")
    g.add_argument("--edges", required=req("edges"),
                   default=dflt("edges", None))
    g.add_argument("--K", type=int, default=dflt("K", 5))
    g.add_argument("--seed", type=int, default=dflt("seed", 0))
    g.add_argument("--out", required=req("out"), default=dflt("out", None))

    s = sub.add_parser("sample", help="draw and print one mini-batch")
    s.add_argument("--edges", required=req("edges"),
                   default=dflt("edges", None))
    s.add_argument("--gamma", type=float, default=dflt("gamma", 0.5))
    s.add_argument("--kneg", type=int, default=dflt("kneg", 1))
    s.add_argument("--seed", type=int, default=dflt("seed", 0))
    s.add_argument("--out", default=dflt("out", None),
                   help="write the batch here instead of stdout")

    t = sub.add_parser("train", help="differentially private training")
    t.add_argument("--edges", required=req("edges"),
                   default=dflt("edges", None))
    t.add_argument("--features", required=req("features"),
                   default=dflt("features", None))
    t.add_argument("--K", type=int, default=dflt("K", 5))
    t.add_argument("--b", type=int, default=dflt("b", 64),
                   help="expected batch size")
    t.add_argument("--kneg", type=int, default=dflt("kneg", 4))
    t.add_argument("--C", type=float, default=dflt("C", 1.0),
                   help="clip norm; inf disables clipping")
    t.add_argument("--loss", default=dflt("loss", "infonce"),
                   choices=["infonce", "hinge"])
    t.add_argument("--margin", type=float, default=dflt("margin", 1.0))
    t.add_argument("--sigma", type=float, default=dflt("sigma", None))
    t.add_argument("--target-eps", type=float,
                   default=dflt("target_eps", None))
    t.add_argument("--delta", type=float, default=dflt("delta", None))
    t.add_argument("--iters", type=int, default=dflt("iters", 100))
    t.add_argument("--lr", type=float, default=dflt("lr", 0.1))
    t.add_argument("--lr-decay-every", type=int,
                   default=dflt("lr_decay_every", 0))
    t.add_argument("--lr-decay-factor", type=float,
                   default=dflt("lr_decay_factor", 1.0))
    t.add_argument("--momentum", type=float, default=dflt("momentum", 0.0))
    t.add_argument("--seed", type=int, default=dflt("seed", 0))
    t.add_argument("--clip-mode", default=dflt("clip_mode", "adaptive"),
                   choices=["adaptive", "standard"])
    t.add_argument("--encoder", default=dflt("encoder", "linear"),
                   choices=["linear", "two_layer"])
    t.add_argument("--hidden-dim", type=int, default=dflt("hidden_dim", 32))
    t.add_argument("--out-dim", type=int, default=dflt("out_dim", None),
                   help="embedding width (default: feature width)")
    t.add_argument("--score", default=dflt("score", "dot"),
                   choices=["dot", "cosine"])
    t.add_argument("--eval-candidates", type=int,
                   default=dflt("eval_candidates", 0),
                   help="rank against this many candidates after training "
                        "(0 skips evaluation)")
    t.add_argument("--out", required=req("out"), default=dflt("out", None))
    t.add_argument("--no-plot", action="store_true",
                   default=dflt("no_plot", False))

    y = sub.add_parser("sbm", help="generate a synthetic block-model graph")
    y.add_argument("--nodes", type=int, default=dflt("nodes", 200))
    y.add_argument("--communities", type=int, default=dflt("communities", 2))
    y.add_argument("--p-in", type=float, default=dflt("p_in", 0.10))
    y.add_argument("--p-out", type=float, default=dflt("p_out", 0.01))
    y.add_argument("--feature-dim", type=int, default=dflt("feature_dim", 16))
    y.add_argument("--feature-noise", type=float,
                   default=dflt("feature_noise", 0.5))
    y.add_argument("--seed", type=int, default=dflt("seed", 0))
    y.add_argument("--out", required=req("out"), default=dflt("out", None))

    v = sub.add_parser("verify", help="run certification oracles")
    v.add_argument("--suite", default=dflt("suite", "all"),
                   choices=["sensitivity", "psi", "grad", "sampling", "all"])
    v.add_argument("--out", default=dflt("out", "."),
                   help="directory for witness files on failure")

    return parser


# --------------------------------------------------------------------------
# bounds

def _cmd_bounds(args) -> int:
    if not 0.0 < args.gamma <= 1.0:
        raise UsageError("gamma must lie in (0, 1]")
    if args.sigma <= 0:
        raise UsageError("sigma must be positive")
    if args.iters is not None:
        if args.iters < 1:
            raise UsageError("iters must be >= 1")
        if args.delta is None:
            raise UsageError("--iters requires --delta")
    alphas = _parse_alpha_grid(str(args.alphas))
    params = AccountantParams(num_edges=args.m, num_nodes=args.n,
                              max_degree=args.K, gamma=args.gamma,
                              k_neg=args.kneg, sigma=args.sigma)
    modes = ["adaptive", "standard", "naive"] if args.mode == "all" \
        else [args.mode]
    os.makedirs(args.out, exist_ok=True)

    curves = {}
    for mode in modes:
        curve = accountant.rdp_curve(params, mode, alphas,
                                     loose_naive=args.naive_loose)
        curves[mode] = curve
        accountant.write_curve_csv(curve,
                                   os.path.join(args.out, f"rdp_{mode}.csv"))
    if not args.no_plot:
        report.plot_rdp_curves(os.path.join(args.out, "rdp_bounds.png"),
                               curves)

    if args.iters is not None:
        steps = np.unique(np.round(np.logspace(
            0, math.log10(args.iters), num=24)).astype(np.int64))
        eps_by_mode = {}
        for mode, curve in curves.items():
            results = [rdp_to_dp(compose(curve, int(T)), args.delta, int(T))
                       for T in steps]
            accountant.write_composite_csv(
                [(int(T), r.eps, r.best_alpha)
                 for T, r in zip(steps, results)],
                os.path.join(args.out, f"dp_{mode}.csv"))
            eps_by_mode[mode] = [r.eps for r in results]
        if not args.no_plot:
            report.plot_composed_dp(
                os.path.join(args.out, "dp_composite.png"), steps,
                eps_by_mode)
    return 0


def _cmd_calibrate(args) -> int:
    if not 0.0 < args.gamma <= 1.0:
        raise UsageError("gamma must lie in (0, 1]")
    params = AccountantParams(num_edges=args.m, num_nodes=args.n,
                              max_degree=args.K, gamma=args.gamma,
                              k_neg=args.kneg, sigma=1.0)
    sigma = calibrate_sigma(args.target_eps, args.delta, args.iters, params,
                            mode=args.mode)
    final = dataclasses.replace(params, sigma=sigma)
    curve = accountant.rdp_curve(final, args.mode)
    dp = rdp_to_dp(compose(curve, args.iters), args.delta, args.iters)
    text = (f"sigma = {sigma:.17g}\neps = {dp.eps:.17g}\n"
            f"delta = {dp.delta:.17g}\nbest_alpha = {dp.best_alpha:.17g}\n"
            f"iterations = {args.iters}\n")
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "calibration.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_cap_degree(args) -> int:
    graph = load_edge_list(args.edges)
    capped, rep = cap_degrees(graph, args.K, args.seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "capped_edges.tsv"), "w",
              encoding="utf-8") as fh:
        for u, v in capped.edges:
            fh.write(f"{u}\t{v}\n")
    with open(os.path.join(args.out, "cap_report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(rep.to_text())
    sys.stdout.write(rep.to_text())
    return 0


def _cmd_sample(args) -> int:
    graph = load_edge_list(args.edges)
    rng = make_rng(args.seed, 1)
    positives = poisson_positive(graph.edges, args.gamma, rng)
    batch = neg_sample_wor(positives, args.kneg, graph.active_nodes(), rng)
    text = format_batch(batch)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# train

def _cmd_train(args) -> int:
    if (args.sigma is None) == (args.target_eps is None):
        raise UsageError("give exactly one of --sigma or --target-eps")
    if args.target_eps is not None and args.delta is None:
        raise UsageError("--target-eps requires --delta")
    if args.iters < 1:
        raise UsageError("iters must be >= 1")

    graph = load_edge_list(args.edges)
    graph = load_features(args.features, graph)

    sigma = args.sigma
    if sigma is None:
        capped, _ = cap_degrees(graph, args.K, args.seed)
        if capped.num_edges == 0:
            raise UsageError("graph has no edges after capping")
        gamma = min(1.0, args.b / capped.num_edges)
        params = AccountantParams(num_edges=capped.num_edges,
                                  num_nodes=int(capped.active_nodes().size),
                                  max_degree=args.K, gamma=gamma,
                                  k_neg=args.kneg, sigma=1.0)
        sigma = calibrate_sigma(args.target_eps, args.delta, args.iters,
                                params, mode=args.clip_mode)

    cfg = TrainConfig(
        batch_size=args.b, iterations=args.iters, k_neg=args.kneg,
        max_degree=args.K, clip_norm=args.C, sigma=sigma,
        learning_rate=LearningRate(args.lr, args.lr_decay_every,
                                   args.lr_decay_factor),
        seed=args.seed, delta=args.delta, momentum=args.momentum,
        clip_mode=args.clip_mode, score_kind=args.score)
    loss = LossSpec(args.loss, args.margin)

    in_dim = graph.features.shape[1]
    out_dim = args.out_dim if args.out_dim else in_dim
    model = init_model(args.encoder, in_dim, out_dim, args.seed,
                       hidden_dim=args.hidden_dim
                       if args.encoder == "two_layer" else None)

    losses: list[float] = []
    model, ledger = dp_train(graph, cfg, loss, model=model,
                             callback=lambda _t, l: losses.append(l))

    os.makedirs(args.out, exist_ok=True)
    save_model(model, os.path.join(args.out, "model.rdpm"))
    ledger.write(os.path.join(args.out, "ledger"))
    with open(os.path.join(args.out, "loss.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("iteration,loss\n")
        for i, value in enumerate(losses):
            fh.write(f"{i},{value:.17g}\n")
    if not args.no_plot and losses:
        report.plot_loss(os.path.join(args.out, "loss.png"), losses)

    metrics = {
        "final_loss": losses[-1] if losses else math.nan,
        "sigma": sigma,
        "eps": ledger.dp_at_delta.eps,
        "delta": ledger.dp_at_delta.delta,
        "best_alpha": ledger.dp_at_delta.best_alpha,
        "iterations": ledger.iterations_so_far,
    }
    if args.eval_candidates:
        prec, mrr = evaluate_ranking(model, graph, args.eval_candidates,
                                     args.seed, args.score)
        metrics["prec_at_1"] = prec
        metrics["mrr"] = mrr
    write_metrics_csv(os.path.join(args.out, "metrics.csv"), metrics)

    dp = ledger.dp_at_delta
    sys.stdout.write(f"eps = {dp.eps:.17g}\ndelta = {dp.delta:.17g}\n"
                     f"best_alpha = {dp.best_alpha:.17g}\n")
    return 0


def _cmd_sbm(args) -> int:
    graph, labels = sbm_graph(args.nodes, args.communities, args.p_in,
                              args.p_out, args.feature_dim,
                              args.feature_noise, args.seed)
    os.makedirs(args.out, exist_ok=True)
    write_sbm(graph, labels,
              os.path.join(args.out, "edges.tsv"),
              os.path.join(args.out, "features.csv"),
              os.path.join(args.out, "labels.txt"))
    sys.stdout.write(f"nodes = {graph.num_nodes}\nedges = {graph.num_edges}\n")
    return 0


# --------------------------------------------------------------------------
# verify

def _verify_sensitivity(out_dir: str) -> tuple[bool, list[str]]:
    import itertools
    lines = []
    ok = True

    # (graph, exhaustive over every reachable batch, gradient sources)
    cases = {
        "triangle": (Graph(num_nodes=3, edges=np.array(
            [[0, 1], [0, 2], [1, 2]])), True, ("adversarial", "random")),
        "path4": (Graph(num_nodes=4, edges=np.array(
            [[0, 1], [1, 2], [2, 3]])), True, ("adversarial",)),
        "complete4": (Graph(num_nodes=4, edges=np.array(
            list(itertools.combinations(range(4), 2)))), True,
            ("adversarial",)),
        "star5": (Graph(num_nodes=5, edges=np.array(
            [[0, i] for i in range(1, 5)])), True, ("adversarial",)),
        "overlap5": (Graph(num_nodes=5, edges=np.array(
            [[0, 2], [0, 4], [1, 2], [1, 3]])), True, ("adversarial",)),
        "complete5": (Graph(num_nodes=5, edges=np.array(
            list(itertools.combinations(range(5), 2)))), False,
            ("adversarial", "random")),
    }
    drift_seen = False
    for name, (graph, exhaustive, sources) in cases.items():
        for mode in ("adaptive", "standard"):
            for source in sources:
                rep = check_sensitivity(
                    graph, mode, 1.0, source, seed=7, k_neg=1, gamma=0.6,
                    num_batches=24, trials=300,
                    exhaustive=exhaustive and source != "random")
                lines.append(f"[sensitivity] {name} {mode}/{source}: "
                             f"max_ratio={rep.max_ratio:.6f} "
                             f"violations={rep.violations} "
                             f"cases={rep.cases_checked}")
                if not rep.passed:
                    ok = False
                    drift_seen |= mode == "adaptive"
                    path = os.path.join(
                        out_dir, f"witness_{name}_{mode}_{source}.txt")
                    with open(path, "w", encoding="utf-8") as fh:
                        fh.write(rep.to_text())
                    lines.append(f"[sensitivity] FAIL: witness at {path}")
    if drift_seen:
        lines.append(
            "[sensitivity] note: adaptive thresholds divide by batch-level "
            "occurrence counts, and removing a node lowers the counts of "
            "surviving tuples; the loosened thresholds let the clipped sums "
            "drift apart by more than the clip norm on some 5-node inputs.")

    # Production clipping path vs the oracle's independent arithmetic, and
    # the production clipped sum driven through removal pairs against the
    # batch bound; a wrong clip factor in the library fails here.
    rng = make_rng(11, 5)
    graph = cases["complete5"][0]
    active = graph.active_nodes()
    worst = 0.0
    srng = make_rng(13, 1)
    for _ in range(40):
        positives = poisson_positive(graph.edges, 0.5, srng)
        try:
            batch = neg_sample_wor(positives, 1, active, srng)
        except CapacityError:
            continue
        if not batch.tuples:
            continue
        grads = [rng.normal(size=8) * 3.0 for _ in batch.tuples]
        by_tuple = dict(zip(batch.tuples, grads))
        prod = freq_clip(batch, grads, 1.0)
        orac = _clipped_sum(batch.tuples,
                            lambda t: by_tuple[t][None, :], 1.0, True)[0]
        gap = float(np.linalg.norm(prod - orac))
        if gap > 1e-12:
            ok = False
            lines.append(f"[sensitivity] FAIL: production freq_clip deviates "
                         f"from independent sum by {gap:.3e}")
        prod_std = standard_clip(grads, 1.0)
        orac_std = _clipped_sum(batch.tuples,
                                lambda t: by_tuple[t][None, :], 1.0, False)[0]
        gap = float(np.linalg.norm(prod_std - orac_std))
        if gap > 1e-12:
            ok = False
            lines.append(f"[sensitivity] FAIL: production standard_clip "
                         f"deviates from independent sum by {gap:.3e}")
        for removed in (int(v) for v in active):
            for neighbor in neighboring_batches(batch, removed, active):
                if not neighbor.tuples:
                    continue
                for t in neighbor.tuples:
                    if t not in by_tuple:
                        by_tuple[t] = rng.normal(size=8) * 3.0
                ngrads = [by_tuple[t] for t in neighbor.tuples]
                shift = float(np.linalg.norm(
                    prod - freq_clip(neighbor, ngrads, 1.0)))
                worst = max(worst, shift)
    lines.append(f"[sensitivity] production-path worst shift = {worst:.6f} "
                 f"(batch bound 1.0)")
    if worst > 1.0 + 1e-9:
        ok = False
        path = os.path.join(out_dir, "witness_production_clip.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"worst production clipped-sum shift {worst:.17g} "
                     f"exceeds the batch bound 1.0\n")
        lines.append(f"[sensitivity] FAIL: witness at {path}")
    return ok, lines


def _verify_psi() -> tuple[bool, list[str]]:
    ok = True
    lines = []
    worst = 0.0
    for alpha in (2, 3, 5, 8, 16):
        for q in (1e-4, 1e-2, 0.5):
            for sigma in (0.5, 1.0, 2.0):
                closed = accountant.log_psi_two_point(q, sigma, float(alpha))
                quad = accountant.log_psi_mixture(
                    [1.0 - q, q], [0.0, 1.0], sigma, float(alpha))
                # a log-moment gap is a relative gap on the moment itself
                worst = max(worst, abs(math.expm1(quad - closed)))
    lines.append(f"[psi] closed form vs quadrature: worst rel gap = "
                 f"{worst:.3e}")
    if worst > 1e-9:
        ok = False
        lines.append("[psi] FAIL: dual evaluators disagree")

    est, se = mc_psi(0.01, 1.0, 2.0, 10**6, seed=20260817)
    exact = accountant.psi_two_point(0.01, 1.0, 2.0)
    z = (est - exact) / se
    lines.append(f"[psi] Monte Carlo z-score at (q=0.01, sigma=1, alpha=2): "
                 f"{z:+.2f}")
    if abs(z) > 3.0:
        ok = False
        lines.append("[psi] FAIL: Monte Carlo outside 3 standard errors")
    return ok, lines


def _verify_grad() -> tuple[bool, list[str]]:
    from .sampling import EdgeTuple
    rng = make_rng(5)
    worst = 0.0
    for i in range(20):
        kind = "linear" if i % 2 == 0 else "two_layer"
        loss = LossSpec("infonce") if i % 3 else LossSpec("hinge", 0.7)
        feats = rng.normal(size=(6, 4))
        model = init_model(kind, 4, 3, seed=100 + i,
                           hidden_dim=5 if kind == "two_layer" else None)
        tup = EdgeTuple(positive=(0, 1),
                        negatives=((0, 2), (1, 3)))
        analytic = tuple_loss_grad(model, feats, tup, loss)[1]
        numeric = fd_gradient(model, feats, tup, loss, step=1e-5)
        denom = max(float(np.linalg.norm(numeric)), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric)) / denom)
    lines = [f"[grad] analytic vs central differences, 20 instances: worst "
             f"rel err = {worst:.3e}"]
    ok = worst < 1e-5
    if not ok:
        lines.append("[grad] FAIL: gradient mismatch")
    return ok, lines


def _verify_sampling() -> tuple[bool, list[str]]:
    from .sampling import partition_by_node
    ok = True
    lines = []
    graph = Graph(num_nodes=8, edges=np.array(
        [[0, 1], [0, 2], [1, 3], [2, 4], [3, 5], [5, 6], [6, 7], [2, 7]]))
    rng = make_rng(31, 1)
    active = graph.active_nodes()
    multi = 0
    node_hits = np.zeros(8)
    edge_hits = np.zeros(graph.num_edges)
    rounds = 20000
    for _ in range(rounds):
        positives = poisson_positive(graph.edges, 0.3, rng)
        mask = (positives[:, None, :] == graph.edges[None, :, :]).all(-1)
        edge_hits += mask.any(0)
        try:
            batch = neg_sample_wor(positives, 1, active, rng)
        except CapacityError:
            continue
        for node in batch.sampled_negative_nodes:
            node_hits[node] += 1
        for node in range(8):
            if len(partition_by_node(batch, node)[1]) > 1:
                multi += 1
    lines.append(f"[sampling] negative-only multiplicity >1: {multi} cases")
    if multi:
        ok = False
    se = math.sqrt(0.3 * 0.7 / rounds)
    worst_edge = float(np.abs(edge_hits / rounds - 0.3).max()) / se
    lines.append(f"[sampling] worst Poisson inclusion deviation = "
                 f"{worst_edge:.2f} sigma")
    if worst_edge > 4.0:
        ok = False
    return ok, lines


def _cmd_verify(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    suites = {
        "sensitivity": lambda: _verify_sensitivity(args.out),
        "psi": _verify_psi,
        "grad": _verify_grad,
        "sampling": _verify_sampling,
    }
    chosen = list(suites) if args.suite == "all" else [args.suite]
    all_ok = True
    for name in chosen:
        ok, lines = suites[name]()
        all_ok &= ok
        for line in lines:
            sys.stdout.write(line + "\n")
        sys.stdout.write(f"[{name}] {'ok' if ok else 'VIOLATION'}\n")
    return 0 if all_ok else _VIOLATION


_DISPATCH = {
    "bounds": _cmd_bounds,
    "calibrate": _cmd_calibrate,
    "cap-degree": _cmd_cap_degree,
    "sample": _cmd_sample,
    "train": _cmd_train,
    "sbm": _cmd_sbm,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        cfg = _load_config(known.config) if known.config else {}
        parser = _build_parser(cfg)
        args = parser.parse_args(argv)
        return _DISPATCH[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return _USAGE
    except (EdgeListParseError, EnumerationOverflowError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return _USAGE
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return _USAGE
    except NumericError as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return _NUMERIC
    except CapacityError as exc:
        sys.stderr.write(f"capacity error: {exc}\n")
        return _CAPACITY
    except CalibrationError as exc:
        sys.stderr.write(f"calibration failure: {exc}\n")
        return _CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
