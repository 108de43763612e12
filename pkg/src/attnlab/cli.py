"""Command-line interface: one subcommand per experiment.

Exit codes: 0 success, 1 experiment assertion failure or runtime error,
2 usage/config error. All outputs land in the configured directory: a JSON
report with the full config echo, RFC-4180 CSV payloads, and (unless
disabled) PNG figures rendered from the same payloads.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import analysis, bench, figures, train as training
from . import attention as at
from . import kernels as kn
from .config import ExperimentConfig, build_config
from .equiv import equivalence_suite, worst_case
from .errors import ConfigError, WitnessNotFoundError
from .reports import report_envelope, write_csv, write_json
from .tensor import Rng

ANCHORS = {
    "equiv": "fast-vs-explicit-equivalence",
    "collide": "collision-histogram",
    "witness": "collinear-witness",
    "localmass": "local-mass-profile",
    "mask": "locality-masking",
    "train": "toy-training-orderings",
    "bench": "complexity-scaling",
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        cfg = build_config(args.command, args.config, _overrides(args))
        _prepare_out_dir(cfg)
        handler = _HANDLERS[args.command]
        return handler(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # experiment failure
        traceback.print_exception(exc, file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="TOML config file; flags override it")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", type=str, default=None,
                        help="output directory (refused if non-empty, see --force)")
    common.add_argument("--workers", type=int, default=None,
                        help="worker budget hint; timed regions always pin 1")
    common.add_argument("--force", action="store_true", default=None,
                        help="allow writing into a non-empty output directory")
    common.add_argument("--no-figures", dest="figures", action="store_false",
                        default=None, help="skip PNG rendering")
    common.add_argument("--variant", type=str, default=None)
    common.add_argument("--kernel", type=str, default=None)
    common.add_argument("--window", type=int, default=None)
    common.add_argument("--n", type=int, default=None)
    common.add_argument("--d", type=int, default=None)
    common.add_argument("--threshold", type=float, default=None)
    common.add_argument("--separation", type=float, default=None)

    parser = argparse.ArgumentParser(
        prog="attnlab",
        description="attention-function diagnostics: equivalence, collisions, "
                    "locality, toy training, complexity",
    )
    sub = parser.add_subparsers(dest="command")
    p_equiv = sub.add_parser("equiv", parents=[common],
                             help="explicit-vs-fast equivalence gate")
    p_equiv.add_argument("--cases", dest="equiv_cases", type=int, default=None)
    p_equiv.add_argument("--perturb", type=float, default=None,
                         help="fault injection for the negative control")
    p_collide = sub.add_parser("collide", parents=[common],
                               help="collision counting over query pairs")
    p_collide.add_argument("--queries", type=int, default=None)
    p_collide.add_argument("--query-mode", dest="query_mode", type=str,
                           default=None, choices=("gaussian", "collinear"))
    sub.add_parser("witness", parents=[common],
                   help="constructive collinear witnesses per kernel")
    p_lm = sub.add_parser("localmass", parents=[common],
                          help="3x3 neighborhood mass profile")
    p_lm.add_argument("--layers", type=int, default=None)
    p_mask = sub.add_parser("mask", parents=[common],
                            help="masking ablation on the trained toy model")
    p_mask.add_argument("--masks", type=str, default=None)
    p_mask.add_argument("--train-seeds", dest="train_seeds", type=int, default=None)
    p_mask.add_argument("--epochs", type=int, default=None)
    p_train = sub.add_parser("train", parents=[common],
                             help="toy-task training comparisons")
    p_train.add_argument("--suite", type=str, default=None,
                         choices=("orderings", "kernels", "single"))
    p_train.add_argument("--train-seeds", dest="train_seeds", type=int, default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_bench = sub.add_parser("bench", parents=[common],
                             help="runtime scaling and window sweeps")
    p_bench.add_argument("--n-values", dest="n_values", type=str, default=None)
    p_bench.add_argument("--windows", type=str, default=None)
    p_bench.add_argument("--repetitions", type=int, default=None)
    return parser


def _overrides(args) -> dict:
    skip = {"command", "config"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _prepare_out_dir(cfg: ExperimentConfig) -> None:
    out = cfg.out_dir
    if out.exists() and any(out.iterdir()) and not cfg.force:
        raise ConfigError(
            f"output directory {out} is not empty; pass --force to overwrite"
        )
    out.mkdir(parents=True, exist_ok=True)


def _variant_from_config(cfg: ExperimentConfig, rng: Rng,
                         d: int) -> at.AttentionVariant:
    kernel = _kernel_from_config(cfg, rng, d)
    window = cfg.window or None
    kind = cfg.variant
    if kind == "softmax":
        return at.softmax(window=window, temperature=cfg.temperature)
    if kind == "linear":
        return at.linear(kernel, window=window)
    if kind == "inline":
        return at.inline(kernel, window=window)
    if kind == "inline_residual":
        predictor = at.ResidualPredictor.random(rng, d)
        return at.inline_residual(kernel, predictor, window=window)
    raise ConfigError(f"unknown variant '{kind}'")


def _kernel_from_config(cfg: ExperimentConfig, rng: Rng, d: int) -> kn.KernelSpec:
    kind = cfg.kernel
    if kind == "identity":
        return kn.identity()
    if kind == "relu":
        return kn.relu()
    if kind == "leaky_relu":
        return kn.leaky_relu()
    if kind == "exponential":
        return kn.exponential()
    if kind == "affine_relu":
        if cfg.kernel_params_file:
            from .reports import load_params

            a, b = load_params(cfg.kernel_params_file, [(d, d), (d,)])
            return kn.affine_relu(a, b)
        return kn.make_affine_relu(rng, d)
    raise ConfigError(f"unknown kernel '{kind}'")


# -- equiv ---------------------------------------------------------------


def cmd_equiv(cfg: ExperimentConfig) -> int:
    cases = equivalence_suite(cfg.seed, cases=cfg.equiv_cases,
                              perturb=cfg.perturb)
    worst = worst_case(cases)
    tolerance = cfg.equiv_tolerance
    payload = {
        "cases": len(cases),
        "tolerance": tolerance,
        "worst_max_abs_diff": worst,
        "passed": worst <= tolerance,
    }
    write_json(cfg.out_dir / "equiv.json",
               report_envelope(ANCHORS["equiv"], cfg.seed, cfg.echo(), payload))
    write_csv(cfg.out_dir / "equiv_cases.csv",
              ["case", "variant", "kernel", "n", "d", "max_abs_diff"],
              [(c.index, c.variant, c.kernel, c.n, c.d, c.max_abs_diff)
               for c in cases],
              anchor=ANCHORS["equiv"], seed=cfg.seed)
    print(f"equiv: {len(cases)} cases, worst diff {worst:.3e} "
          f"({'pass' if worst <= tolerance else 'FAIL'})")
    return 0 if worst <= tolerance else 1


# -- collide -------------------------------------------------------------


def _collinear_queries(rng: Rng, m: int, d: int) -> np.ndarray:
    """Groups of four collinear, elementwise-positive queries at scales 1..4."""
    groups = max(1, m // 4)
    base = np.abs(rng.gaussian(groups, d)) + 0.1
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    base *= 0.5  # pair distances stay above the 0.1 separation floor
    return np.concatenate([base * s for s in (1.0, 2.0, 3.0, 4.0)], axis=0)


def cmd_collide(cfg: ExperimentConfig) -> int:
    rng = Rng(cfg.seed)
    key_rng, query_rng, kernel_rng = rng.split(3)
    d = cfg.d
    keys = key_rng.gaussian(cfg.n, d)
    if cfg.query_mode == "collinear":
        queries = _collinear_queries(query_rng, cfg.queries, d)
    else:
        queries = query_rng.gaussian(cfg.queries, d)
    kernel = _kernel_from_config(cfg, kernel_rng, d)
    score_fns = {
        "softmax": lambda q, k: at.softmax_scores(q, k, cfg.temperature),
        f"linear-{kernel.kind}": lambda q, k: at.linear_scores(q, k, kernel),
        f"inline-{kernel.kind}": lambda q, k: at.inline_scores(q, k, kernel),
    }
    reports = {}
    rows = []
    for name, fn in score_fns.items():
        rep = analysis.count_collisions(fn, queries, keys,
                                        threshold=cfg.threshold,
                                        separation=cfg.separation)
        reports[name] = {
            "total_collisions": rep.total_collisions,
            "pairs_tested": rep.pairs_tested,
            "pairs_separated": rep.pairs_separated,
            "histogram_bins": rep.histogram_bins,
            "histogram_counts": rep.histogram_counts,
            "key_rank": rep.key_rank,
            "key_rank_augmented": rep.key_rank_augmented,
            "rank_preconditions_met": rep.rank_preconditions_met,
        }
        for (lo, hi), count in zip(rep.histogram_bins, rep.histogram_counts):
            rows.append((name, lo, hi, count))
    payload = {
        "threshold": cfg.threshold,
        "separation": cfg.separation,
        "query_mode": cfg.query_mode,
        "reports": reports,
    }
    write_json(cfg.out_dir / "collide.json",
               report_envelope(ANCHORS["collide"], cfg.seed, cfg.echo(), payload))
    write_csv(cfg.out_dir / "collide_hist.csv",
              ["variant", "bin_lo", "bin_hi", "queries"], rows,
              anchor=ANCHORS["collide"], seed=cfg.seed)
    if cfg.figures:
        figures.render_collision_histogram(cfg.out_dir / "collide_hist.png", reports)
    for name, rep in reports.items():
        print(f"collide[{name}]: {rep['total_collisions']} colliding pairs "
              f"of {rep['pairs_separated']} separated")
    return 0


# -- witness -------------------------------------------------------------


def cmd_witness(cfg: ExperimentConfig) -> int:
    d = cfg.d
    results = {}
    rows = []
    for kind_index, kind in enumerate(kn.KERNEL_KINDS):
        krng, wrng, key_rng = Rng(cfg.seed * 31 + kind_index).split(3)
        kernel = (kn.make_affine_relu(krng, d) if kind == "affine_relu"
                  else _kernel_from_config(
                      ExperimentConfig("witness", {**cfg.values, "kernel": kind}),
                      krng, d))
        try:
            wit = analysis.find_collinear_witness(kernel, wrng, d,
                                                  separation=cfg.separation)
        except WitnessNotFoundError as exc:
            results[kind] = {"found": False, "evaluations": exc.evaluations}
            rows.append((kind, False, "", "", "", exc.evaluations))
            continue
        keys = key_rng.gaussian(cfg.n, d)
        gap = float(np.linalg.norm(
            at.linear_scores(wit.p[None, :], keys, kernel)
            - at.linear_scores(wit.q[None, :], keys, kernel)))
        results[kind] = {
            "found": True,
            "alpha": wit.alpha,
            "residual": wit.residual,
            "score_gap": gap,
            "evaluations": wit.evaluations,
            "p": wit.p,
            "q": wit.q,
        }
        rows.append((kind, True, wit.alpha, wit.residual, gap, wit.evaluations))
    write_json(cfg.out_dir / "witness.json",
               report_envelope(ANCHORS["witness"], cfg.seed, cfg.echo(),
                               {"witnesses": results}))
    write_csv(cfg.out_dir / "witness.csv",
              ["kernel", "found", "alpha", "residual", "score_gap", "evaluations"],
              rows, anchor=ANCHORS["witness"], seed=cfg.seed)
    for kind, res in results.items():
        if res["found"]:
            print(f"witness[{kind}]: alpha={res['alpha']:.4g} "
                  f"residual={res['residual']:.2e} score_gap={res['score_gap']:.2e}")
        else:
            print(f"witness[{kind}]: not found ({res['evaluations']} evaluations)")
    return 0


# -- localmass -----------------------------------------------------------


def cmd_localmass(cfg: ExperimentConfig) -> int:
    rng = Rng(cfg.seed)
    grid = (cfg.grid_h, cfg.grid_w)
    cls_index = 0 if cfg.cls_token else None
    n_total = grid[0] * grid[1] + (1 if cfg.cls_token else 0)
    baseline = analysis.uniform_local_mass_baseline(n_total)
    kernel_rng, layer_rng = rng.split(2)
    kernel = _kernel_from_config(cfg, kernel_rng, cfg.d)
    rows = []
    per_source: dict[str, list[float]] = {}
    for layer, lrng in enumerate(layer_rng.split(cfg.layers), start=1):
        q_rng, k_rng = lrng.split(2)
        q = q_rng.gaussian(n_total, cfg.d)
        k = k_rng.gaussian(n_total, cfg.d)
        sources = {
            "uniform": np.full((n_total, n_total), 1.0 / n_total),
            "softmax": at.softmax_scores(q, k, cfg.temperature),
            f"linear-{kernel.kind}": at.linear_scores(q, k, kernel),
            f"inline-{kernel.kind}": at.inline_scores(q, k, kernel),
        }
        for name, scores in sources.items():
            mass = analysis.local_mass(scores, grid, cls_index)
            rows.append({"layer": layer, "source": name, "local_mass": mass,
                         "baseline": baseline})
            per_source.setdefault(name, []).append(mass)
    payload = {
        "baseline": baseline,
        "grid": list(grid),
        "tokens": n_total,
        "per_layer_mean": {k: v for k, v in per_source.items()},
    }
    write_json(cfg.out_dir / "localmass.json",
               report_envelope(ANCHORS["localmass"], cfg.seed, cfg.echo(), payload))
    write_csv(cfg.out_dir / "localmass.csv",
              ["layer", "source", "local_mass", "baseline"],
              [(r["layer"], r["source"], r["local_mass"], r["baseline"])
               for r in rows],
              anchor=ANCHORS["localmass"], seed=cfg.seed)
    if cfg.figures:
        figures.render_local_mass(cfg.out_dir / "localmass.png", rows, baseline)
    print(f"localmass: baseline {baseline:.6f} over {len(rows)} rows")
    return 0


# -- mask ----------------------------------------------------------------


def parse_mask_tag(tag: str) -> analysis.MaskSpec:
    if tag == "none":
        return analysis.mask_none()
    if tag.startswith("local"):
        return analysis.mask_local(int(tag[len("local"):]))
    if tag.startswith("rand"):
        return analysis.mask_random(int(tag[len("rand"):]))
    raise ConfigError(f"unknown mask tag '{tag}'")


def _train_datasets(cfg: ExperimentConfig):
    grid = (cfg.train_grid, cfg.train_grid)
    data_rng = Rng(cfg.seed)
    train_rng, test_rng = data_rng.split(2)
    train_ds = training.make_toy_dataset(train_rng, cfg.train_samples, grid,
                                         seed=cfg.seed)
    test_ds = training.make_toy_dataset(test_rng, cfg.test_samples, grid,
                                        seed=cfg.seed + 1)
    return train_ds, test_ds


def _train_config(cfg: ExperimentConfig) -> training.TrainConfig:
    return training.TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        momentum=cfg.momentum,
        seeds=tuple(cfg.seed + 1 + i for i in range(cfg.train_seeds)),
    )


def cmd_mask(cfg: ExperimentConfig) -> int:
    train_ds, test_ds = _train_datasets(cfg)
    tcfg = _train_config(cfg)
    specs = [(tag, parse_mask_tag(tag)) for tag in cfg.str_list("masks")]
    rows = []
    for seed in tcfg.seeds:
        rec = training.train_single(training.ModelVariant("softmax"),
                                    train_ds, test_ds, tcfg, seed,
                                    model_dim=cfg.model_dim,
                                    head_count=cfg.model_heads, depth=cfg.depth)
        model, params = rec.model, rec.params
        for tag, spec in specs:
            acc = model.accuracy(params, test_ds, mask_spec=spec,
                                 mask_rng=Rng(seed + 10_000))
            rows.append({"mask": tag, "seed": seed, "accuracy": acc})
    summary = _mask_summary(rows)
    payload = {"rows": rows, "summary": summary}
    write_json(cfg.out_dir / "mask.json",
               report_envelope(ANCHORS["mask"], cfg.seed, cfg.echo(), payload))
    write_csv(cfg.out_dir / "mask.csv", ["mask", "seed", "accuracy"],
              [(r["mask"], r["seed"], r["accuracy"]) for r in rows],
              anchor=ANCHORS["mask"], seed=cfg.seed)
    if cfg.figures:
        figures.render_mask_accuracy(cfg.out_dir / "mask.png", rows)
    for tag, _ in specs:
        accs = [r["accuracy"] for r in rows if r["mask"] == tag]
        print(f"mask[{tag}]: mean accuracy {np.mean(accs):.3f}")
    return 0


def _mask_summary(rows: list[dict]) -> dict:
    by_mask: dict[str, list[float]] = {}
    for r in rows:
        by_mask.setdefault(r["mask"], []).append(r["accuracy"])
    means = {m: float(np.mean(a)) for m, a in by_mask.items()}
    summary: dict = {"mean_accuracy": means}
    if "none" in by_mask and "local3" in by_mask and "rand9" in by_mask:
        clean = np.array(by_mask["none"])
        drop_local = clean - np.array(by_mask["local3"])
        drop_rand = clean - np.array(by_mask["rand9"])
        gap, pooled = training.ordering_gap(drop_local, drop_rand)
        summary["local3_vs_rand9"] = {
            "mean_drop_local3": float(drop_local.mean()),
            "mean_drop_rand9": float(drop_rand.mean()),
            "gap": gap,
            "pooled_std": pooled,
            "ordering_holds": bool(gap > pooled),
        }
    return summary


# -- train ---------------------------------------------------------------


_ORDERING_VARIANTS = [
    training.ModelVariant("softmax"),
    training.ModelVariant("softmax", confusion="f1"),
    training.ModelVariant("linear", "relu"),
    training.ModelVariant("inline", "relu"),
    training.ModelVariant("linear", "affine_relu"),
    training.ModelVariant("inline", "affine_relu"),
    training.ModelVariant("linear", "identity"),
    training.ModelVariant("inline", "identity"),
    training.ModelVariant("inline_residual", "identity"),
]

_KERNEL_VARIANTS = [
    training.ModelVariant("inline", "identity"),
    training.ModelVariant("inline", "relu"),
    training.ModelVariant("inline", "leaky_relu"),
    training.ModelVariant("inline", "exponential"),
]


def cmd_train(cfg: ExperimentConfig) -> int:
    train_ds, test_ds = _train_datasets(cfg)
    tcfg = _train_config(cfg)
    if cfg.suite == "orderings":
        variants = _ORDERING_VARIANTS
    elif cfg.suite == "kernels":
        variants = _KERNEL_VARIANTS
    else:
        variants = [training.ModelVariant(cfg.variant, cfg.kernel,
                                          window=cfg.window or None)]
    results = {}
    curve_rows = {}
    for spec in variants:
        res = training.train_eval(spec, train_ds, test_ds, tcfg,
                                  model_dim=cfg.model_dim,
                                  head_count=cfg.model_heads, depth=cfg.depth)
        results[spec.label] = res
        for run in res.runs:
            curve_rows[f"{spec.label}-seed{run.seed}"] = run.curve
            write_csv(cfg.out_dir / "curves" / f"{spec.label}-seed{run.seed}.csv",
                      ["step", "loss", "accuracy"], run.curve,
                      anchor=ANCHORS["train"], seed=run.seed)
        print(f"train[{spec.label}]: mean acc {res.mean_accuracy:.3f} "
              f"+- {res.std_accuracy:.3f}"
              + (" (diverged runs)" if res.any_diverged else ""))
    payload = {
        "results": {
            label: {
                "kind": res.variant.kind,
                "kernel": res.variant.kernel,
                "window": res.variant.window,
                "confusion": res.variant.confusion,
                "per_seed": {
                    str(r.seed): {
                        "accuracy": r.final_accuracy,
                        "diverged": r.diverged,
                        "diverged_step": r.diverged_step,
                    }
                    for r in res.runs
                },
                "mean_accuracy": res.mean_accuracy,
                "std_accuracy": res.std_accuracy,
            }
            for label, res in results.items()
        },
    }
    if cfg.suite == "orderings":
        payload["orderings"] = _ordering_summary(results)
    write_json(cfg.out_dir / "train.json",
               report_envelope(ANCHORS["train"], cfg.seed, cfg.echo(), payload))
    write_csv(cfg.out_dir / "train_summary.csv",
              ["variant", "kernel", "window", "seed", "accuracy", "diverged"],
              [(res.variant.kind, res.variant.kernel, res.variant.window or "",
                run.seed, run.final_accuracy, run.diverged)
               for res in results.values() for run in res.runs],
              anchor=ANCHORS["train"], seed=cfg.seed)
    if cfg.figures:
        figures.render_training_curves(cfg.out_dir / "train_curves.png", curve_rows)
    return 0


def _ordering_summary(results: dict) -> dict:
    def gap(high: str, low: str) -> dict:
        g, pooled = training.ordering_gap(results[high].accuracies,
                                          results[low].accuracies)
        return {"high": high, "low": low, "gap": g, "pooled_std": pooled,
                "holds": bool(g > pooled)}

    summary = {
        "inline_vs_linear_relu": gap("inline-relu", "linear-relu"),
        "inline_vs_linear_affine": gap("inline-affine_relu", "linear-affine_relu"),
        "residual_vs_plain_inline": gap("inline_residual-identity", "inline-identity"),
        "clean_vs_confused_softmax": gap("softmax", "softmax-f1"),
    }
    lin_id = results["linear-identity"]
    inl_id = results["inline-identity"]
    summary["identity_linear_fails"] = {
        "linear_diverged": bool(lin_id.any_diverged),
        "accuracy_gap": inl_id.mean_accuracy - lin_id.mean_accuracy,
        "holds": bool(lin_id.any_diverged
                      or inl_id.mean_accuracy - lin_id.mean_accuracy > 0.10),
    }
    return summary


# -- bench ---------------------------------------------------------------


def cmd_bench(cfg: ExperimentConfig) -> int:
    rng = Rng(cfg.seed)
    seq_rng, win_rng = rng.split(2)
    n_values = cfg.int_list("n_values")
    records = bench.sweep_sequence_length(bench.BENCH_VARIANTS, n_values,
                                          cfg.d, seq_rng,
                                          repetitions=cfg.repetitions)
    fits = []
    for tag in bench.BENCH_VARIANTS:
        subset = [r for r in records if r.variant == tag]
        if len([r for r in subset if not r.skipped]) >= 4:
            fits.append(bench.fit_slope(subset))
    side = cfg.bench_grid
    windows = [w for w in cfg.int_list("windows") if w <= side]
    win_records = bench.sweep_window_size(windows, (side, side), cfg.d, win_rng,
                                          repetitions=cfg.repetitions)
    rec_dicts = [vars(r) for r in records]
    win_dicts = [vars(r) for r in win_records]
    fit_dicts = [vars(f) for f in fits]
    payload = {"fits": fit_dicts,
               "sequence_records": rec_dicts,
               "window_records": win_dicts}
    write_json(cfg.out_dir / "bench.json",
               report_envelope(ANCHORS["bench"], cfg.seed, cfg.echo(), payload))
    header = ["variant", "N", "d", "h", "window", "median_seconds",
              "modeled_madds"]
    write_csv(cfg.out_dir / "bench_records.csv", header,
              [(r.variant, r.n, r.d, r.h, r.window or "", r.median_seconds,
                r.modeled_madds) for r in records],
              anchor=ANCHORS["bench"], seed=cfg.seed)
    write_csv(cfg.out_dir / "bench_windows.csv", header,
              [(r.variant, r.n, r.d, r.h, r.window or "", r.median_seconds,
                r.modeled_madds) for r in win_records],
              anchor=ANCHORS["bench"], seed=cfg.seed)
    if cfg.figures:
        figures.render_scaling(cfg.out_dir / "bench_scaling.png", rec_dicts,
                               fit_dicts)
        figures.render_window_sweep(cfg.out_dir / "bench_windows.png", win_dicts)
    for fit in fits:
        print(f"bench[{fit.variant}]: slope {fit.slope:.3f} "
              f"r2 {fit.r_squared:.4f}")
    return 0


_HANDLERS = {
    "equiv": cmd_equiv,
    "collide": cmd_collide,
    "witness": cmd_witness,
    "localmass": cmd_localmass,
    "mask": cmd_mask,
    "train": cmd_train,
    "bench": cmd_bench,
}


if __name__ == "__main__":
    raise SystemExit(main())
