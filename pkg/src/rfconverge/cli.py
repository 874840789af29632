"""Command-line interface.

Subcommands: split, train, convergence, vi-convergence, extrapolate,
recommend-size, oracle, coverage. Machine-readable results go to JSON files
in --output-dir, plot-ready curves to two-column CSV, and a short human
summary to stdout. Payload files are byte-identical across reruns with the
same arguments; timestamps live only in the sidecar manifest.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import convergence as conv
from . import data as dat
from . import forest as fst
from . import oracle as orc
from ._util import content_hash, dump_json, load_json, write_curve_csv
from .cart import TreeParams


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(outdir: Path, name: str, args: argparse.Namespace, extra: dict | None = None):
    payload = {
        "created_at": _utc_now(),
        "command": name,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
    }
    if extra:
        payload.update(extra)
    dump_json(payload, outdir / f"{name.replace('-', '_')}_manifest.json")


def _outdir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(args) -> dat.Dataset:
    if args.input is None:
        raise ValueError("--input CSV is required for this subcommand")
    if args.label is None:
        raise ValueError("--label (name or index) is required with --input")
    return dat.load_csv(args.input, args.label, header=not args.no_header)


def _tree_params(args) -> TreeParams:
    return TreeParams(mtry=args.mtry, min_leaf=args.min_leaf, max_depth=args.max_depth)


def _dataset_hash(ds: dat.Dataset) -> str:
    return content_hash(ds.features, ds.labels)


# --------------------------------------------------------------------------
# subcommands


def cmd_split(args) -> int:
    out = _outdir(args)
    full = _load_dataset(args)
    part = dat.split_dataset(full, args.train_frac, args.holdout_ratio, args.seed)
    (out / "partition.json").write_text(part.to_json() + "\n", encoding="utf-8")
    dat.save_csv(out / "train.csv", full.subset(part.train_indices))
    if part.holdout_indices.size:
        dat.save_csv(out / "holdout.csv", full.subset(part.holdout_indices))
    dat.save_csv(out / "test.csv", full.subset(part.test_indices))
    _write_manifest(out, "split", args, {"input_hash": _dataset_hash(full)})
    print(
        f"split: N={full.n} -> train={part.train_indices.size} "
        f"holdout={part.holdout_indices.size} test={part.test_indices.size}"
    )
    return 0


def cmd_train(args) -> int:
    out = _outdir(args)
    train = _load_dataset(args)
    params = _tree_params(args)
    ens = fst.train_ensemble(train, args.t, params, args.seed, threads=args.threads)
    oob = fst.oob_structure(ens)
    summary = {
        "t": ens.t,
        "n": train.n,
        "p": train.p,
        "master_seed": int(args.seed),
        "params": {
            "mtry": params.resolved_mtry(train.p),
            "min_leaf": params.min_leaf,
            "max_depth": params.max_depth,
        },
        "mean_oob_fraction": float(oob.mask.mean()),
        "empty_oob_fraction": oob.empty_fraction(),
    }
    dump_json(summary, out / "train_summary.json")
    if args.save_ensemble:
        dump_json(ens.to_dict(), out / "ensemble.json")
    if args.eval is not None:
        ev = dat.load_csv(args.eval, args.eval_label or args.label, header=not args.no_header)
        pm = fst.predict_matrix(ens, ev.features, ev.labels, threads=args.threads)
        fst.save_prediction_matrix(out / "pred_eval.bin", pm)
        fst.matrix_to_csv(out / "pred_eval.csv", pm.values)
    if args.pred_train:
        pm = fst.predict_matrix(ens, train.features, train.labels, threads=args.threads)
        fst.save_prediction_matrix(out / "pred_train.bin", pm)
        fst.matrix_to_csv(out / "pred_train.csv", pm.values)
    if args.vi_rule is not None:
        if args.vi_rule == "impurity":
            vi = fst.impurity_vi_matrix(ens, train, threads=args.threads)
        else:
            vi = fst.permutation_importance(ens, train, args.seed, threads=args.threads)
        fst.save_vi_matrix(out / "vi_matrix.bin", vi)
        fst.matrix_to_csv(out / "vi_matrix.csv", vi.values)
    _write_manifest(out, "train", args, {"input_hash": _dataset_hash(train)})
    print(f"train: t={ens.t} on n={train.n}, p={train.p}; "
          f"mean OOB fraction {summary['mean_oob_fraction']:.4f}")
    return 0


def _emit_estimate(out: Path, args, est: conv.ConvergenceEstimate, stem: str) -> None:
    dump_json(est.to_dict(), out / f"{stem}.json")
    print(
        f"{est.mode}: t0={est.t0} effective_t0={est.effective_t0:.4f} "
        f"alpha={est.alpha} q_hat={est.q_hat:.6g}"
    )
    if args.t_final is not None:
        ts, vals = conv.extrapolation_curve(est, args.t_final)
        write_curve_csv(out / f"{stem}_curve.csv", ts, vals)
    if args.epsilon is not None:
        t_rec = conv.recommend_size(est, args.epsilon)
        dump_json(
            {
                "epsilon": float(args.epsilon),
                "recommended_t": int(t_rec),
                "mode": est.mode,
                "t0": int(est.t0),
                "q_hat": float(est.q_hat),
            },
            out / f"{stem}_recommendation.json",
        )
        print(f"recommended ensemble size for epsilon={args.epsilon}: {t_rec}")


def cmd_convergence(args) -> int:
    out = _outdir(args)
    cfg = conv.BootstrapConfig(B=args.B, alpha=args.alpha, seed=args.seed)
    hashes: dict = {}
    if args.pred_matrix is not None:
        if args.mode == "oob":
            raise ValueError(
                "oob mode needs the training data (--input); "
                "--pred-matrix alone only supports --mode holdout"
            )
        pm = fst.load_prediction_matrix(args.pred_matrix)
        est = conv.bootstrap_mse_quantile(pm, cfg)
    else:
        train = _load_dataset(args)
        hashes["input_hash"] = _dataset_hash(train)
        params = _tree_params(args)
        ens = fst.train_ensemble(train, args.t0, params, args.seed, threads=args.threads)
        if args.mode == "oob":
            pm = fst.predict_matrix(ens, train.features, train.labels, threads=args.threads)
            est = conv.bootstrap_mse_quantile_oob(pm, fst.oob_structure(ens).mask, cfg, train.n)
        else:
            if args.holdout is None:
                raise ValueError("--mode holdout requires --holdout CSV (or --pred-matrix)")
            hold = dat.load_csv(args.holdout, args.label, header=not args.no_header)
            pm = fst.predict_matrix(ens, hold.features, hold.labels, threads=args.threads)
            est = conv.bootstrap_mse_quantile(pm, cfg)
    _emit_estimate(out, args, est, "convergence_estimate")
    _write_manifest(out, "convergence", args, hashes)
    return 0


def cmd_vi_convergence(args) -> int:
    out = _outdir(args)
    cfg = conv.BootstrapConfig(B=args.B, alpha=args.alpha, seed=args.seed)
    hashes: dict = {}
    if args.vi_matrix is not None:
        vi = fst.load_vi_matrix(args.vi_matrix)
    else:
        train = _load_dataset(args)
        hashes["input_hash"] = _dataset_hash(train)
        params = _tree_params(args)
        ens = fst.train_ensemble(train, args.t0, params, args.seed, threads=args.threads)
        if args.vi_rule == "impurity":
            vi = fst.impurity_vi_matrix(ens, train, threads=args.threads)
        else:
            vi = fst.permutation_importance(ens, train, args.seed, threads=args.threads)
    est = conv.bootstrap_vi_quantile(vi, cfg)
    _emit_estimate(out, args, est, "vi_estimate")
    _write_manifest(out, "vi-convergence", args, hashes)
    return 0


def cmd_extrapolate(args) -> int:
    out = _outdir(args)
    est = conv.ConvergenceEstimate.from_dict(load_json(args.estimate))
    ts, vals = conv.extrapolation_curve(est, args.t_final, args.t_start)
    write_curve_csv(out / "extrapolation_curve.csv", ts, vals)
    _write_manifest(out, "extrapolate", args)
    print(f"extrapolated {est.mode} estimate over t in [{ts[0]}, {ts[-1]}]")
    return 0


def cmd_recommend_size(args) -> int:
    out = _outdir(args)
    est = conv.ConvergenceEstimate.from_dict(load_json(args.estimate))
    t_rec = conv.recommend_size(est, args.epsilon)
    dump_json(
        {
            "epsilon": float(args.epsilon),
            "recommended_t": int(t_rec),
            "mode": est.mode,
            "t0": int(est.t0),
            "q_hat": float(est.q_hat),
        },
        out / "recommendation.json",
    )
    _write_manifest(out, "recommend-size", args)
    print(f"recommended ensemble size for epsilon={args.epsilon}: {t_rec}")
    return 0


def _synthetic_provenance(args) -> dict:
    return {
        "source": "synthetic",
        "generator": args.generator,
        "n": args.n,
        "p": args.p,
        "noise_sd": args.noise_sd,
        "data_seed": args.data_seed,
        "eval_n": args.eval_n,
    }


def _data_from_provenance(prov: dict, args=None):
    """Rebuild (train, eval_points, eval_labels, holdout) from a provenance block."""
    if prov["source"] == "synthetic":
        train = orc.generate_synthetic(
            orc.SyntheticSpec(
                prov["generator"], prov["n"], prov["p"], prov["noise_sd"], prov["data_seed"]
            )
        )
        ev = orc.generate_synthetic(
            orc.SyntheticSpec(
                prov["generator"], prov["eval_n"], prov["p"], prov["noise_sd"],
                prov["data_seed"] + 1,
            )
        )
        hold = orc.generate_synthetic(
            orc.SyntheticSpec(
                prov["generator"],
                max(prov["n"] // 6, 2),
                prov["p"],
                prov["noise_sd"],
                prov["data_seed"] + 2,
            )
        )
        return train, ev.features, ev.labels, hold
    # CSV source: re-split the referenced file deterministically.
    path = prov["path"] if args is None or args.input is None else args.input
    full = dat.load_csv(path, prov["label"], header=prov["header"])
    if content_hash(full.features, full.labels) != prov["hash"]:
        raise ValueError(f"{path}: contents differ from the dataset used by the oracle report")
    part = dat.split_dataset(full, prov["train_frac"], prov["holdout_ratio"], prov["split_seed"])
    train = full.subset(part.train_indices)
    test = full.subset(part.test_indices)
    hold = full.subset(part.holdout_indices) if part.holdout_indices.size else None
    return train, test.features, test.labels, hold


def cmd_oracle(args) -> int:
    out = _outdir(args)
    if args.runs < 2:
        raise ValueError(f"need at least 2 oracle runs, got {args.runs}")
    if args.input is not None:
        full = _load_dataset(args)
        prov = {
            "source": "csv",
            "path": str(args.input),
            "label": args.label,
            "header": not args.no_header,
            "train_frac": args.train_frac,
            "holdout_ratio": args.holdout_ratio,
            "split_seed": args.split_seed,
            "hash": _dataset_hash(full),
        }
    else:
        prov = _synthetic_provenance(args)
    train, eval_points, eval_labels, _ = _data_from_provenance(prov, args)
    params = _tree_params(args)
    grid = (
        [int(s) for s in args.t_grid.split(",")]
        if args.t_grid
        else orc.default_grid(args.t_max)
    )
    if args.kind == "mse":
        report = orc.true_quantile_curve(
            train, eval_points, eval_labels, params, args.runs, grid,
            args.t_max, args.alpha, args.seed, threads=args.threads,
            store_paths=args.store_paths,
        )
    else:
        report = orc.true_vi_quantile_curve(
            train, params, args.vi_rule, args.runs, grid, args.t_max,
            args.alpha, args.seed, threads=args.threads, store_paths=args.store_paths,
        )
    payload = report.to_dict()
    payload["data"] = prov
    payload["params"] = {
        "mtry": params.resolved_mtry(train.p),
        "min_leaf": params.min_leaf,
        "max_depth": params.max_depth,
    }
    payload["seed"] = int(args.seed)
    dump_json(payload, out / "oracle_report.json")
    write_curve_csv(out / "true_curve.csv", report.curve.ts, report.curve.values)
    _write_manifest(out, "oracle", args, {"input_hash": _dataset_hash(train)})
    limit = report.mse_inf_hat if args.kind == "mse" else None
    print(
        f"oracle: {args.kind} curve over {len(grid)} sizes, runs={args.runs}, "
        f"t_max={args.t_max}" + (f", mse_inf_hat={limit:.6g}" if limit is not None else "")
    )
    return 0


def cmd_coverage(args) -> int:
    out = _outdir(args)
    if args.oracle_report is None:
        raise ValueError("--oracle-report (a prior oracle run) is required")
    report = load_json(args.oracle_report)
    if report.get("mse_inf_hat") is None:
        raise ValueError("the oracle report lacks mse_inf_hat (run the mse oracle first)")
    train, eval_points, eval_labels, hold = _data_from_provenance(report["data"], args)
    params = _tree_params(args)
    boot = conv.BootstrapConfig(B=args.B, alpha=args.alpha, seed=0)
    res = orc.coverage_check(
        train,
        eval_points,
        eval_labels,
        params,
        args.mode,
        boot,
        args.runs,
        args.t_check,
        args.seed,
        report["mse_inf_hat"],
        holdout_points=None if hold is None else hold.features,
        holdout_labels=None if hold is None else hold.labels,
        threads=args.threads,
    )
    payload = res.to_dict()
    payload["oracle_report"] = str(args.oracle_report)
    dump_json(payload, out / "coverage.json")
    _write_manifest(out, "coverage", args, {"input_hash": _dataset_hash(train)})
    print(
        f"coverage: {res.coverage:.3f} over {res.runs} runs "
        f"(target >= {1.0 - args.alpha:.2f}, mode={args.mode}, t_check={args.t_check})"
    )
    return 0


# --------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker cap; output is identical for any value")
    p.add_argument("--output-dir", default=".", help="directory for result files")


def _add_csv_input(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--input", required=required, help="training CSV")
    p.add_argument("--label", help="label column name or 0-based index")
    p.add_argument("--no-header", action="store_true", help="CSV has no header row")


def _add_tree_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mtry", type=int, default=None, help="candidate columns per split (default ceil(p/3))")
    p.add_argument("--min-leaf", type=int, default=5, help="minimum bag weight per leaf (default 5)")
    p.add_argument("--max-depth", type=int, default=None, help="depth cap (default unbounded)")


def _add_bootstrap(p: argparse.ArgumentParser) -> None:
    p.add_argument("--B", type=int, default=50, help="bootstrap replicates (default 50)")
    p.add_argument("--alpha", type=float, default=0.1, help="quantile level 1-alpha (default alpha=0.1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rfconverge",
        description="Train bagged regression ensembles and bound their distance "
        "from the infinite-ensemble limit by bootstrap.",
    )
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("split", help="partition a CSV into train/holdout/test")
    _add_csv_input(p)
    p.add_argument("--train-frac", type=float, default=0.5)
    p.add_argument("--holdout-ratio", type=float, default=1.0 / 6.0)
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train an ensemble; optionally dump matrices")
    _add_csv_input(p)
    p.add_argument("--t", type=int, required=True, help="ensemble size")
    _add_tree_params(p)
    p.add_argument("--eval", help="CSV of points to fill a prediction matrix on")
    p.add_argument("--eval-label", help="label column of --eval (defaults to --label)")
    p.add_argument("--pred-train", action="store_true", help="dump predictions on the training points")
    p.add_argument("--vi-rule", choices=["impurity", "permutation"], help="dump a VI matrix under this rule")
    p.add_argument("--save-ensemble", action="store_true", help="dump tree structures as JSON (debug format)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convergence", help="bootstrap quantile of the MSE convergence gap")
    _add_csv_input(p, required=False)
    p.add_argument("--mode", choices=["oob", "holdout"], default="oob")
    p.add_argument("--holdout", help="holdout CSV (holdout mode)")
    p.add_argument("--pred-matrix", help="precomputed prediction matrix (.bin, holdout mode)")
    p.add_argument("--t0", type=int, default=500, help="initial ensemble size (default 500)")
    _add_tree_params(p)
    _add_bootstrap(p)
    p.add_argument("--t-final", type=int, default=None, help="emit extrapolation curve up to this size")
    p.add_argument("--epsilon", type=float, default=None, help="tolerance for the size recommendation")
    _add_common(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("vi-convergence", help="bootstrap quantile of the uniform VI gap")
    _add_csv_input(p, required=False)
    p.add_argument("--vi-rule", choices=["impurity", "permutation"], default="impurity")
    p.add_argument("--vi-matrix", help="precomputed VI matrix (.bin)")
    p.add_argument("--t0", type=int, default=500)
    _add_tree_params(p)
    _add_bootstrap(p)
    p.add_argument("--t-final", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_vi_convergence)

    p = sub.add_parser("extrapolate", help="extrapolate a saved estimate over a size range")
    p.add_argument("--estimate", required=True, help="convergence estimate JSON")
    p.add_argument("--t-final", type=int, required=True)
    p.add_argument("--t-start", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_extrapolate)

    p = sub.add_parser("recommend-size", help="smallest t meeting a tolerance under extrapolation")
    p.add_argument("--estimate", required=True, help="convergence estimate JSON")
    p.add_argument("--epsilon", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_recommend_size)

    p = sub.add_parser("oracle", help="Monte Carlo ground-truth quantile curves")
    p.add_argument("--kind", choices=["mse", "vi"], default="mse")
    p.add_argument("--generator", choices=["friedman1", "linear", "constant"], default="friedman1")
    p.add_argument("--n", type=int, default=300, help="synthetic training size")
    p.add_argument("--p", type=int, default=10, help="synthetic feature count")
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic data draw")
    p.add_argument("--eval-n", type=int, default=600, help="synthetic evaluation-set size")
    p.add_argument("--input", help="use a CSV instead of a synthetic generator")
    p.add_argument("--label", help="label column of --input")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--train-frac", type=float, default=0.5, help="CSV mode: training fraction")
    p.add_argument("--holdout-ratio", type=float, default=1.0 / 6.0, help="CSV mode: holdout carve ratio")
    p.add_argument("--split-seed", type=int, default=0, help="CSV mode: partition seed")
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--t-max", type=int, default=800)
    p.add_argument("--t-grid", help="comma-separated sizes (default geometric from 25)")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--vi-rule", choices=["impurity", "permutation"], default="impurity")
    p.add_argument("--store-paths", action="store_true", help="retain per-run gap paths in the report")
    _add_tree_params(p)
    _add_common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("coverage", help="empirical coverage of the bootstrap bound")
    p.add_argument("--oracle-report", required=True, help="oracle_report.json from a prior run")
    p.add_argument("--input", help="CSV override when the report references a moved file")
    p.add_argument("--mode", choices=["oob", "holdout"], default="oob")
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--t-check", type=int, default=200)
    _add_bootstrap(p)
    _add_tree_params(p)
    _add_common(p)
    p.set_defaults(func=cmd_coverage)

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
