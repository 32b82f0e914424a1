"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime or numeric
error.  Every command writes a ``manifest.json`` with the parameters, seeds
and input digests needed to reproduce it.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (DatasetManifest, file_digest, load_dataset, load_result, save_result,
                     write_dataset)
from .errors import ConfigError, DrmcError
from .inference import (DEFAULT_TOP_N, GoldLabels, average_f1, geometric_grid, pr_curve,
                        pr_curve_csv, predict_probabilities, rank_predictions, restrict,
                        top_n_csv, top_n_table)
from .matrix import Variant
from .rank_selection import curves_csv, estimate_rank
from .solver import SolverConfig, solve, solve_to_rank
from .synth import SyntheticSpec, generate

logger = logging.getLogger("drmc")


def _solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--variant", choices=["drmcb", "drmc1"], default="drmcb")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0)
    g.add_argument("--eta-mu", type=float, default=0.01)
    g.add_argument("--mu-f", type=float, default=0.01)
    g.add_argument("--tau-z", type=float, default=0.5)
    g.add_argument("--tau-b", type=float, default=0.5)
    g.add_argument("--epsilon", type=float, default=1e-4)
    g.add_argument("--max-inner", type=int, default=500)
    g.add_argument("--truncated-svd", action="store_true")
    g.add_argument("--keep-iterate", choices=["latest", "earliest"], default="latest",
                   help="which iterate represents a rank visited more than once")


def _data_args(p, need_gold=False):
    g = p.add_argument_group("data")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset text file (features and training labels)")
    src.add_argument("--manifest", help="dataset manifest JSON")
    g.add_argument("--gold", help="gold test-label file")
    g.add_argument("--theta", type=int, default=None)
    g.add_argument("--errata-filter", action="store_true", default=None)
    g.add_argument("--zero-fraction", type=float, default=None,
                   help="observe only this fraction of zero feature cells (0 = nonzeros only)")


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"drmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="complete the joint matrix")
    _data_args(p)
    _solver_args(p)
    p.add_argument("--target-rank", type=int, default=None)
    _common(p)

    p = sub.add_parser("estimate-rank", help="k-fold cross-validated rank selection")
    _data_args(p)
    _solver_args(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--grid", choices=["dense", "geometric"], default="dense")
    _common(p)

    p = sub.add_parser("evaluate", help="Top-N precision and precision-recall curve")
    _data_args(p)
    p.add_argument("--result", required=True, help="result file written by 'solve'")
    p.add_argument("--top-n", type=int, nargs="+", default=list(DEFAULT_TOP_N))
    p.add_argument("--grid", choices=["dense", "geometric"], default="dense")
    _common(p)

    p = sub.add_parser("generate", help="write a seeded synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--feature-noise", type=float, default=0.0)
    p.add_argument("--label-flip", type=float, default=0.0)
    _common(p)

    p = sub.add_parser("reproduce",
                       help="full protocol on a converted dataset: CV rank, solve, Top-N report")
    _data_args(p)
    _solver_args(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--top-n", type=int, nargs="+", default=list(DEFAULT_TOP_N))
    p.add_argument("--grid", choices=["dense", "geometric"], default="geometric")
    _common(p)
    return parser


def _solver_config(args) -> SolverConfig:
    cfg = SolverConfig(lam=args.lam, eta_mu=args.eta_mu, mu_final=args.mu_f, tau_z=args.tau_z,
                       tau_b=args.tau_b, epsilon=args.epsilon, max_inner_iters=args.max_inner,
                       variant=Variant.parse(args.variant), seed=args.seed,
                       truncated_svd=args.truncated_svd)
    cfg.validate()
    return cfg


def _manifest(args) -> DatasetManifest:
    if args.manifest:
        m = DatasetManifest.load(args.manifest)
        if args.gold:
            m.gold = args.gold
    else:
        m = DatasetManifest(features=args.data, gold=args.gold)
    if args.theta is not None:
        m.theta = args.theta
    if args.errata_filter is not None:
        m.errata_filter = args.errata_filter
    if args.zero_fraction is not None:
        m.zero_fraction = args.zero_fraction
    m.seed = args.seed
    return m


def _input_digests(manifest: DatasetManifest, extra=()) -> dict:
    out = {}
    for path in (manifest.features, manifest.train_labels, manifest.gold, *extra):
        if path:
            out[str(path)] = file_digest(path)
    return out


def _write_run_manifest(out: Path, args, extra: dict) -> None:
    record = {
        "command": args.command,
        "arguments": {k: v for k, v in vars(args).items() if k != "func"},
        "seed": args.seed,
        "code_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
    }
    record.update(extra)
    (out / "manifest.json").write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def _evaluate(result, inst, gold: GoldLabels, n_set, grid_kind):
    P = predict_probabilities(result, inst)
    P, gold = restrict(P, gold)
    ranking = rank_predictions(P)
    grid = geometric_grid(len(ranking)) if grid_kind == "geometric" else None
    rows = top_n_table(ranking, gold, n_set)
    points = pr_curve(ranking, gold)
    avg = average_f1(ranking, gold, grid)
    return rows, points, avg


def cmd_solve(args) -> int:
    out = Path(args.out)
    cfg = _solver_config(args)
    manifest = _manifest(args)
    inst, _ = load_dataset(manifest)
    cfg.validate(inst)
    out.mkdir(parents=True, exist_ok=True)
    if args.target_rank is not None:
        result = solve_to_rank(inst, cfg, args.target_rank, keep=args.keep_iterate)
    else:
        result = solve(inst, cfg)
    save_result(result, out / "result.bin")
    (out / "trace.csv").write_text(result.trace.to_csv())
    _write_run_manifest(out, args, {
        "solver_config": cfg.to_dict(), "config_digest": cfg.digest(),
        "dataset": asdict(manifest), "input_digests": _input_digests(manifest),
        "final_rank": result.final_rank, "mu_schedule": result.trace.mus,
        "result_digest": file_digest(out / "result.bin"),
    })
    print(f"solved {inst.n_items}x{result.Z.shape[1]} ({cfg.variant.value}): "
          f"rank {result.final_rank}, {len(result.trace.records)} iterations")
    return 0


def cmd_estimate_rank(args) -> int:
    out = Path(args.out)
    cfg = _solver_config(args)
    manifest = _manifest(args)
    inst, _ = load_dataset(manifest)
    cfg.validate(inst)
    estimate, curves = estimate_rank(inst, cfg, k=args.folds, seed=args.seed,
                                     threads=args.threads, errata_filter=manifest.errata_filter,
                                     grid=args.grid, keep=args.keep_iterate)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rank_estimate.json").write_text(estimate.to_json())
    (out / "fold_curves.csv").write_text(curves_csv(curves))
    _write_run_manifest(out, args, {
        "solver_config": cfg.to_dict(), "dataset": asdict(manifest),
        "input_digests": _input_digests(manifest), "grid": args.grid,
    })
    print(f"rank {estimate.mean:.1f} +- {estimate.std:.1f} ({estimate.chosen})")
    return 0


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    manifest = _manifest(args)
    if not manifest.gold:
        raise ConfigError("evaluate needs gold labels (--gold or a manifest with 'gold')")
    if not Path(args.result).is_file():
        raise ConfigError(f"result file not found: {args.result}")
    inst, gold = load_dataset(manifest)
    result = load_result(args.result)
    if result.Z.shape[0] != inst.n_items or result.Z.blocks.t != inst.t:
        raise ConfigError("result dimensions do not match the dataset")
    rows, points, avg = _evaluate(result, inst, gold, args.top_n, args.grid)
    out.mkdir(parents=True, exist_ok=True)
    (out / "top_n.csv").write_text(top_n_csv(rows))
    (out / "pr_curve.csv").write_text(pr_curve_csv(points))
    _write_run_manifest(out, args, {
        "top_n_set": list(args.top_n), "grid": args.grid, "average_f1": avg,
        "dataset": asdict(manifest),
        "input_digests": _input_digests(manifest, extra=(args.result,)),
    })
    for n, p, r, f in rows:
        print(f"Top-{n}: precision {p:.3f} recall {r:.3f} f1 {f:.3f}")
    return 0


def cmd_generate(args) -> int:
    spec = SyntheticSpec(n=args.n, m=args.m, d=args.d, t=args.t, rank=args.rank,
                         feature_noise=args.feature_noise, label_flip=args.label_flip,
                         seed=args.seed)
    inst, gold, truth = generate(spec)
    out = Path(args.out)
    manifest = write_dataset(inst, gold, out)
    np.save(out / "ground_truth.npy", truth)
    _write_run_manifest(out, args, {
        "synthetic_spec": asdict(spec),
        "outputs": {name: file_digest(out / name)
                    for name in ("data.txt", "data_gold.txt", "data.json")},
    })
    print(f"wrote {manifest.features} and {manifest.gold}")
    return 0


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    cfg = _solver_config(args)
    manifest = _manifest(args)
    inst, gold = load_dataset(manifest)
    if gold is None:
        raise ConfigError("reproduce needs gold labels")
    cfg.validate(inst)
    estimate, curves = estimate_rank(inst, cfg, k=args.folds, seed=args.seed,
                                     threads=args.threads, errata_filter=manifest.errata_filter,
                                     grid=args.grid, keep=args.keep_iterate)
    result = solve_to_rank(inst, cfg, estimate.chosen, keep=args.keep_iterate)
    rows, points, avg = _evaluate(result, inst, gold, args.top_n, args.grid)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rank_estimate.json").write_text(estimate.to_json())
    (out / "fold_curves.csv").write_text(curves_csv(curves))
    save_result(result, out / "result.bin")
    (out / "trace.csv").write_text(result.trace.to_csv())
    (out / "top_n.csv").write_text(top_n_csv(rows))
    (out / "pr_curve.csv").write_text(pr_curve_csv(points))
    _write_run_manifest(out, args, {
        "solver_config": cfg.to_dict(), "dataset": asdict(manifest),
        "input_digests": _input_digests(manifest), "average_f1": avg,
        "rank_estimate": json.loads(estimate.to_json()),
    })
    print(f"rank {estimate.mean:.1f} +- {estimate.std:.1f} ({estimate.chosen})")
    for n, p, r, f in rows:
        print(f"Top-{n}: precision {p:.3f}")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "estimate-rank": cmd_estimate_rank,
    "evaluate": cmd_evaluate,
    "generate": cmd_generate,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("drmc: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"drmc: error: {exc}", file=sys.stderr)
        return 2
    except DrmcError as exc:
        print(f"drmc: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
