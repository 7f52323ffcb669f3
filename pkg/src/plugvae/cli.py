"""Command-line interface.

Subcommands wire the full workflow: ``pretrain`` the global autoencoder,
``train-plugin`` per-condition plug-ins against a frozen checkpoint,
``generate`` conditional or unconditional text, ``evaluate`` generations,
and ``make-synthetic`` for a desk-scale corpus.

Every command is reproducible byte-for-byte under a fixed ``--seed``.
Exit codes: 0 success, 1 usage/input error, 2 runtime or training failure.
Relative checkpoint paths resolve under ``$PLUGVAE_CHECKPOINT_ROOT`` when
that variable is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .checkpoint import (
    PluginMismatchError,
    load_autoencoder,
    load_plugin,
    save_autoencoder,
    save_plugin,
)
from .corpus import ConditionDataset, LabeledSample, encode_text, make_condition_sets, read_labeled, read_unlabeled, tokenize
from .evaluation import evaluate, train_condition_classifier
from .generation import plugin_generate, unconditional_generate
from .plugin import train_plugin
from .pretrain import TextAutoencoder, TrainingDivergedError
from .seeding import derive_seed
from .synthetic import make_synthetic_corpus

CHECKPOINT_ROOT_ENV = "PLUGVAE_CHECKPOINT_ROOT"


def _checkpoint_path(value: str) -> Path:
    """Resolve a checkpoint directory, honoring the checkpoint-root env var."""
    path = Path(value)
    root = os.environ.get(CHECKPOINT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _read_generated(path: Path) -> list[str]:
    """Read one-text-per-line output, preserving empty generations."""
    content = path.read_text(encoding="utf-8")
    if content == "":
        return []
    if content.endswith("\n"):
        content = content[:-1]
    return content.split("\n")


def cmd_pretrain(args: argparse.Namespace) -> int:
    texts = read_unlabeled(args.corpus)
    ae = TextAutoencoder(
        d_g=args.d_g,
        emb_dim=args.emb_dim,
        gru_hidden=args.gru_hidden,
        dec_layers=args.dec_layers,
        dec_heads=args.dec_heads,
        dec_ff=args.dec_ff,
        lambda_coeff=args.lambda_coeff,
        wdiv_k=args.wdiv_k,
        wdiv_p=args.wdiv_p,
        batch_size=args.batch_size,
        lr=args.lr,
        adam_beta1=args.adam_beta1,
        epochs=args.epochs,
        max_len=args.max_len,
        max_vocab=args.max_vocab,
        seed=args.seed,
    )
    ae.fit(texts, verbose=1)
    out = _checkpoint_path(args.out)
    digest = save_autoencoder(out, ae)
    print(f"saved checkpoint to {out} ({ae.parameter_count()} parameters)")
    print(f"digest {digest}")
    return 0


def cmd_train_plugin(args: argparse.Namespace) -> int:
    pretrain_dir = _checkpoint_path(args.pretrain)
    ae = load_autoencoder(pretrain_dir)
    digest = ae.digest()
    pairs = read_labeled(args.labeled)
    labeled = [
        LabeledSample(tuple(encode_text(tokenize(s), ae.vocab_, ae.max_len)), label)
        for label, s in pairs
    ]
    out_root = _checkpoint_path(args.out)

    datasets = []
    for condition in args.condition:
        positives, negatives = make_condition_sets(
            labeled,
            condition,
            args.n_per_condition,
            seed=derive_seed(args.seed, "condition-sets", condition),
            balance_negatives=args.balance_negatives,
        )
        datasets.append(
            ConditionDataset(
                name=condition,
                positives=ae.encode_ids(positives),
                negatives=None if args.no_negatives else ae.encode_ids(negatives),
            )
        )

    def run(dataset: ConditionDataset):
        plugin = train_plugin(
            dataset,
            pretrain_digest=digest,
            d_c=args.d_c,
            gamma=args.gamma,
            beta_max=args.beta_max,
            beta_warmup_iters=args.beta_warmup_iters,
            total_iters=args.total_iters,
            batch_size=args.batch_size,
            lr=args.lr,
            adam_beta1=args.adam_beta1,
            negative_ceiling=args.negative_ceiling,
            seed=derive_seed(args.seed, "plugin", dataset.name),
        )
        save_plugin(
            out_root / dataset.name,
            plugin,
            condition=dataset.name,
            pretrain_digest=digest,
            used_negatives=dataset.negatives is not None,
        )
        return plugin

    if len(datasets) == 1:
        plugins = [run(datasets[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(datasets)) as pool:
            plugins = list(pool.map(run, datasets))

    for dataset, plugin in zip(datasets, plugins):
        print(
            f"{dataset.name}: {plugin.parameter_count()} parameters, "
            f"final loss {plugin.loss_trace_[-1]:.4f}, "
            f"saved to {out_root / dataset.name}"
        )
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    ae = load_autoencoder(_checkpoint_path(args.pretrain))
    if args.unconditional:
        condition = "unconditional"
        texts = unconditional_generate(ae, args.n, seed=args.seed, max_len=args.max_len)
    else:
        plugin, meta = load_plugin(_checkpoint_path(args.plugin), ae.digest())
        condition = meta["condition"]
        texts = plugin_generate(plugin, ae, args.n, seed=args.seed, max_len=args.max_len)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.jsonl:
        lines = [
            json.dumps(
                {"condition": condition, "seed_index": i, "text": t}, sort_keys=True
            )
            for i, t in enumerate(texts)
        ]
    else:
        lines = texts
    out.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print(f"wrote {len(texts)} generations to {out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    per_condition = {}
    for spec in args.input:
        if "=" not in spec:
            raise ValueError(f"--input expects CONDITION=FILE, got {spec!r}")
        condition, path = spec.split("=", 1)
        per_condition[condition] = _read_generated(Path(path))

    classifier = None
    if args.task != "length":
        if not args.labeled:
            raise ValueError(f"task {args.task!r} requires --labeled data for the classifier")
        classifier = train_condition_classifier(read_labeled(args.labeled), seed=args.seed)
        print(f"classifier validation accuracy: {classifier.validation_accuracy_:.4f}")

    report = evaluate(per_condition, task=args.task, classifier=classifier)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_table(), encoding="utf-8")
    print(report.to_table(), end="")
    return 0


def cmd_make_synthetic(args: argparse.Namespace) -> int:
    info = make_synthetic_corpus(
        args.out,
        n_unlabeled=args.n_unlabeled,
        n_labeled_per_condition=args.n_labeled,
        seed=args.seed,
    )
    print(f"wrote {info['unlabeled_path']} and {info['labeled_path']}")
    print(f"length histogram: {info['length_histogram']}")
    return 0


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 (not 2) on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plugvae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train the global text autoencoder")
    p.add_argument("--corpus", required=True, help="unlabeled corpus, one sentence per line")
    p.add_argument("--out", required=True, help="checkpoint directory to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-g", type=int, default=128, help="global latent dimension")
    p.add_argument("--emb-dim", type=int, default=256)
    p.add_argument("--gru-hidden", type=int, default=256)
    p.add_argument("--dec-layers", type=int, default=3)
    p.add_argument("--dec-heads", type=int, default=8)
    p.add_argument("--dec-ff", type=int, default=1024)
    p.add_argument("--lambda-coeff", type=float, default=20.0)
    p.add_argument("--wdiv-k", type=float, default=2.0)
    p.add_argument("--wdiv-p", type=float, default=6.0)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--adam-beta1", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--max-len", type=int, default=15)
    p.add_argument("--max-vocab", type=int, default=8900)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train-plugin", help="train per-condition plug-in VAEs")
    p.add_argument("--pretrain", required=True, help="autoencoder checkpoint directory")
    p.add_argument("--labeled", required=True, help="TSV of label<TAB>sentence")
    p.add_argument(
        "--condition",
        required=True,
        nargs="+",
        help="condition name(s); plug-ins train concurrently and save to OUT/<name>",
    )
    p.add_argument("--out", required=True, help="directory receiving one subdir per condition")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-c", type=int, default=20, help="condition latent dimension")
    p.add_argument("--gamma", type=float, default=0.1, help="negative-sample weight")
    p.add_argument("--beta-max", type=float, default=5.0)
    p.add_argument("--beta-warmup-iters", type=int, default=10000)
    p.add_argument("--total-iters", type=int, default=20000)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--adam-beta1", type=float, default=0.5)
    p.add_argument(
        "--negative-ceiling",
        type=float,
        default=None,
        help="clamp the negative term at CEILING * positive loss (off by default)",
    )
    p.add_argument("--n-per-condition", type=int, default=200)
    p.add_argument(
        "--no-negatives",
        action="store_true",
        help="single-condition mode: ignore samples of other conditions",
    )
    p.add_argument(
        "--balance-negatives",
        action="store_true",
        help="subsample negatives down to the positive count",
    )
    p.set_defaults(func=cmd_train_plugin)

    p = sub.add_parser("generate", help="generate text from a plug-in or the prior")
    p.add_argument("--pretrain", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--plugin", help="plug-in checkpoint directory")
    group.add_argument("--unconditional", action="store_true")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True, help="output file, one sentence per line")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--jsonl", action="store_true", help="write JSON lines instead of plain text")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated text files")
    p.add_argument("--task", choices=("length", "classifier"), default="length")
    p.add_argument(
        "--input",
        required=True,
        nargs="+",
        help="CONDITION=FILE pairs of generated text",
    )
    p.add_argument("--labeled", help="TSV for classifier training (non-length tasks)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("make-synthetic", help="write a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-unlabeled", type=int, default=10000)
    p.add_argument("--n-labeled", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (TrainingDivergedError, PluginMismatchError) as exc:
        print(f"plugvae: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"plugvae: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
