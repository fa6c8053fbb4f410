"""Command-line experiment runner.

Subcommands: gen-data, train, sweep, eval, mask-demo, gamma-ablate.  Every
subcommand accepts --config (JSON), --seed, and --out; failures exit nonzero
with a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment as xp
from .attention import AttentionInput, PatchGrid, masked_cls_attention, patch_mask, read_boxes
from .classifier import load_classifier
from .data import load_dataset, save_dataset
from .embeddings import save_embeddings
from .evaluation import mean_ap
from .taxonomy import load_taxonomy, save_taxonomy, tag_frequency_bands

DEFAULT_GAMMA_GRID = (50.0, 100.0, 150.0, 300.0, 500.0)


def _load_config(args) -> xp.ExperimentConfig:
    if args.config:
        config = xp.load_config(args.config)
    else:
        config = xp.ExperimentConfig()
    if args.seed is not None:
        config = replace(config, seeds=(args.seed,))
    return config


def _cmd_gen_data(args) -> int:
    config = _load_config(args)
    seed = config.seeds[0]
    inputs = xp.build_seed_inputs(config, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "taxonomy.txt", "w", encoding="utf-8") as fh:
        save_taxonomy(inputs.taxonomy, fh)
    with open(out / "embeddings.txt", "w", encoding="utf-8") as fh:
        save_embeddings(inputs.embeddings, inputs.taxonomy.labels(), fh)
    with open(out / "train.txt", "w", encoding="utf-8") as fh:
        save_dataset(inputs.train_data, fh)
    with open(out / "test.txt", "w", encoding="utf-8") as fh:
        save_dataset(inputs.test_data, fh)
    print(f"wrote taxonomy, embeddings, and datasets for seed {seed} to {out}")
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args)
    config = replace(
        config,
        init_grid=(args.init,) if args.init else config.init_grid[:1],
        loss_grid=(args.loss,) if args.loss else config.loss_grid[:1],
        gamma_grid=(args.gamma,) if args.gamma is not None else config.gamma_grid[:1],
    )
    results = xp.run_experiment(config, args.out)
    for r in results:
        print(
            f"seed {r.seed} init={r.init} loss={r.loss} gamma={r.gamma:g} "
            f"map={r.eval_result.overall:.4f}"
        )
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    results = xp.run_experiment(config, args.out)
    print(f"ran {len(results)} cell runs; summary at {Path(args.out) / 'summary.csv'}")
    return 0


def _cmd_eval(args) -> int:
    with open(args.taxonomy, encoding="utf-8") as fh:
        taxonomy = load_taxonomy(fh)
    classifier = load_classifier(args.checkpoint, taxonomy.labels())
    dataset = load_dataset(args.data)
    bands = None
    if args.train_data:
        train_data = load_dataset(args.train_data)
        bands = tag_frequency_bands(taxonomy, train_data.train_counts, args.bands)
    result = xp.evaluate_classifier(classifier, dataset, bands)
    print(f"map {result.overall:.6f}")
    for t, v in sorted(result.band_maps.items()):
        print(f"few@{t} " + ("undefined" if v is None else f"{v:.6f}"))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = [f"map {repr(result.overall)}"]
        lines += [
            f"few@{t} " + ("undefined" if v is None else repr(v))
            for t, v in sorted(result.band_maps.items())
        ]
        lines.append("per_class_ap")
        lines += [
            f"{c} " + ("undefined" if np.isnan(ap) else repr(float(ap)))
            for c, ap in enumerate(result.per_class_ap)
        ]
        (out / "eval.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_mask_demo(args) -> int:
    boxes = read_boxes(args.boxes)
    grid = PatchGrid(args.width, args.height, args.patch_size)
    mask = patch_mask(boxes, grid)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    n_tokens = grid.n_patches + 1
    q = rng.standard_normal((n_tokens, args.dim))
    k = rng.standard_normal((n_tokens, args.dim))
    v = rng.standard_normal((n_tokens, args.dim))
    weights, output = masked_cls_attention(AttentionInput(q, k, v), mask)
    print(f"grid {grid.rows}x{grid.cols} patches={grid.n_patches} in_region={int(mask.in_region.sum())}")
    print("token in_region cls_weight")
    print(f"cls - {weights[0]:.6f}")
    for j in range(grid.n_patches):
        flag = "yes" if mask.in_region[j] else "no"
        print(f"patch{j} {flag} {weights[j + 1]:.6f}")
    print("cls_output " + " ".join(f"{x:.6f}" for x in output))
    return 0


def _cmd_gamma_ablate(args) -> int:
    config = _load_config(args)
    grid = tuple(args.gammas) if args.gammas else DEFAULT_GAMMA_GRID
    config = replace(config, gamma_grid=grid)
    results = xp.run_experiment(config, args.out)
    rows = []
    for gamma in grid:
        values = np.array([r.eval_result.overall for r in results if r.gamma == gamma])
        rows.append((gamma, float(values.mean()), float(values.std())))
        print(f"gamma {gamma:g} map_mean {values.mean():.4f} map_std {values.std():.4f}")
    lines = ["gamma,map_mean,map_std"] + [f"{g:g},{repr(m)},{repr(s)}" for g, m, s in rows]
    (Path(args.out) / "gamma_map.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hoihead",
        description="Synthetic experiment runner for the verb-object classification head.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON experiment config; defaults are used if omitted")
        p.add_argument("--seed", type=int, default=None, help="override the config's seed list")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("gen-data", help="emit taxonomy, embeddings, and dataset files")
    common(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train one (init, loss, gamma) cell")
    common(p)
    p.add_argument("--init", choices=("embedding", "random"))
    p.add_argument("--loss", choices=("lse_sign", "bce", "weighted_bce", "focal"))
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="run the full init x loss x gamma grid")
    common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("eval", help="score a checkpoint against a dataset file")
    common(p, out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--train-data", help="optional train set for few-shot bands")
    p.add_argument("--bands", type=int, nargs="+", default=[1, 5, 10])
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("mask-demo", help="print CLS attention weights for a box list")
    common(p, out_required=False)
    p.add_argument("--boxes", required=True, help="text file, one 'x0 y0 x1 y1' box per line")
    p.add_argument("--width", type=int, default=224)
    p.add_argument("--height", type=int, default=224)
    p.add_argument("--patch-size", type=int, default=32)
    p.add_argument("--dim", type=int, default=16)
    p.set_defaults(func=_cmd_mask_demo)

    p = sub.add_parser("gamma-ablate", help="sweep the logit scale grid and emit mAP per gamma")
    common(p)
    p.add_argument("--gammas", type=float, nargs="+")
    p.set_defaults(func=_cmd_gamma_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
