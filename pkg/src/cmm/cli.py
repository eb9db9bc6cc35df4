"""Command-line entry point: ``cmm {gen,train,eval,ablate,verify}``.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.
The seed resolves as --seed flag, then $CMM_SEED, then 0.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import checks, evaluate as ev, model as model_lib, synth, trainer
from .objective import Strategy

STRATEGIES = [s.value for s in Strategy]


def resolve_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("CMM_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise SystemExit(_usage_error(f"CMM_SEED must be an integer, got {env!r}"))
    return 0


def _usage_error(msg: str) -> int:
    print(f"cmm: error: {msg}", file=sys.stderr)
    return 2


def _parse_mix(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"mix must be three comma-separated numbers, got {text!r}")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("mix needs exactly three values: ROTO,RXTO,ROTX")
    return parts


def _parse_hidden(text: str) -> tuple[int, ...]:
    text = text.strip()
    return tuple(int(h) for h in text.split(",")) if text else ()


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="cmm", description=__doc__, formatter_class=fmt)
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for ablate (1 keeps runs bit-reproducible and serial)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write synthetic train/test splits", formatter_class=fmt)
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--seed", type=int, default=None, help="root seed (else $CMM_SEED, else 0)")
    g.add_argument("--d", type=int, default=8)
    g.add_argument("--n", type=int, default=4000, help="training-split size")
    g.add_argument("--n-test", type=int, default=1000)
    g.add_argument("--mix", type=_parse_mix, default=(0.5, 0.5, 0.0),
                   help="training-split regime mix ROTO,RXTO,ROTX")
    g.add_argument("--signal", type=float, default=4.0)
    g.add_argument("--sigma", type=float, default=1.0)

    t = sub.add_parser("train", help="train one strategy on DIR/train.jsonl", formatter_class=fmt)
    t.add_argument("--data", required=True, type=Path)
    t.add_argument("--strategy", required=True, choices=STRATEGIES)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True, type=Path, help="checkpoint path (.json)")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--tau", type=float, default=0.1)
    t.add_argument("--hidden", type=_parse_hidden, default=(16,), help="comma-separated widths")
    t.add_argument("--checkpoint-every", type=int, default=0,
                   help="also write intermediate checkpoints every K epochs (0: final only)")

    e = sub.add_parser("eval", help="score a checkpoint on DIR/test_*.jsonl", formatter_class=fmt)
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--ckpt", required=True, type=Path)
    e.add_argument("--strategy", required=True, choices=STRATEGIES)
    e.add_argument("--hard-gate", action="store_true", help="sign-threshold K_mode at inference")
    e.add_argument("--pr-out", type=Path, default=None, help="write precision-recall points CSV")

    a = sub.add_parser("ablate", help="four-strategy ablation over several seeds", formatter_class=fmt)
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--runs", type=int, default=5)
    a.add_argument("--out", type=Path, default=Path("reports"))
    a.add_argument("--epochs", type=int, default=30)
    a.add_argument("--lr", type=float, default=0.05)
    a.add_argument("--batch", type=int, default=64)
    a.add_argument("--tau", type=float, default=0.1)
    a.add_argument("--signal", type=float, default=4.0)
    a.add_argument("--sigma", type=float, default=1.0)
    a.add_argument("--n-train", type=int, default=4000)
    a.add_argument("--n-test", type=int, default=1000)
    a.add_argument("--pr-curves", action="store_true", help="also write pr_points.csv")

    v = sub.add_parser("verify", help="run the invariant suites", formatter_class=fmt)
    v.add_argument("--checkpoint", type=Path, default=None, help="also validate this checkpoint file")
    return p


def cmd_gen(args) -> int:
    seed = resolve_seed(args.seed)
    cfgs = synth.split_configs(seed, d=args.d, signal=args.signal, sigma=args.sigma,
                               n_train=args.n, n_test=args.n_test, train_mix=args.mix)
    splits = {name: synth.generate(cfg) for name, cfg in cfgs.items()}
    synth.write_splits(splits, args.out)
    for name, ds in splits.items():
        counts = " ".join(f"{r}={c}" for r, c in ds.regime_counts().items())
        print(f"{name:<10} n={len(ds):<5} {counts}")
    return 0


def cmd_train(args) -> int:
    seed = resolve_seed(args.seed)
    data = synth.read_jsonl(args.data / "train.jsonl")
    cfg = trainer.TrainConfig(strategy=args.strategy, epochs=args.epochs, batch_size=args.batch,
                              learning_rate=args.lr, momentum=args.momentum, seed=seed,
                              checkpoint_every=args.checkpoint_every,
                              checkpoint_dir=str(args.out.parent / (args.out.stem + "_epochs")))
    init_model = model_lib.init(seed, data.d, args.hidden, args.tau)
    try:
        trained, trace = trainer.train(init_model, data, cfg)
    except trainer.TrainingDiverged as exc:
        print(f"cmm: training diverged: {exc}", file=sys.stderr)
        return 1
    args.out.parent.mkdir(parents=True, exist_ok=True)
    model_lib.save(trained, args.out, metadata={"train_config": cfg.to_dict(),
                                               "data": str(args.data)})
    trainer.write_trace_csv(trace, args.out.with_name(args.out.stem + ".loss.csv"))
    if trace:
        last = trace[-1]
        print(f"epoch {last.epoch}: l_total={last.l_total:.6f} l_cmm={last.l_cmm:.6f} "
              f"l_rgb={last.l_rgb:.6f} l_thermal={last.l_thermal:.6f}")
    return 0


def cmd_eval(args) -> int:
    m = model_lib.load(args.ckpt)
    files = sorted(args.data.glob("test_*.jsonl"))
    if not files:
        print(f"cmm: no test_*.jsonl files in {args.data}", file=sys.stderr)
        return 1
    pr_rows = []
    print(f"{'split':<12}{'accuracy':>10}{'ap':>10}")
    for f in files:
        ds = synth.read_jsonl(f)
        prob, pred = ev.predict(m, ds, args.strategy, hard_gate=args.hard_gate)
        acc = float((pred == ds.labels).mean())
        ap = ev.average_precision(prob, ds.labels)
        print(f"{f.stem:<12}{acc:>10.4f}{ap:>10.4f}")
        pr_rows.extend((f.stem, *pt) for pt in ev.precision_recall_points(prob, ds.labels))
    if args.pr_out:
        with args.pr_out.open("w") as fh:
            fh.write("split,threshold,precision,recall\n")
            for split, thr, prec, rec in pr_rows:
                fh.write(f"{split},{thr!r},{float(prec)!r},{float(rec)!r}\n")
    return 0


def cmd_ablate(args) -> int:
    cfg = ev.AblationConfig(root_seed=resolve_seed(args.seed), n_seeds=args.runs, tau=args.tau,
                            signal=args.signal, sigma=args.sigma, n_train=args.n_train,
                            n_test=args.n_test, epochs=args.epochs, batch_size=args.batch,
                            learning_rate=args.lr)
    try:
        result = ev.run_ablation(cfg, workers=max(1, args.threads), pr_points=args.pr_curves)
    except trainer.TrainingDiverged as exc:
        print(f"cmm: training diverged: {exc}", file=sys.stderr)
        return 1
    paths = ev.write_report(result, args.out)
    print(f"mean AP over {cfg.n_seeds} seed(s):")
    print(ev.format_means(result, "ap"))
    print(f"mean accuracy over {cfg.n_seeds} seed(s):")
    print(ev.format_means(result, "accuracy"))
    for kind, p in paths.items():
        print(f"wrote {kind}: {p}")
    return 0


def cmd_verify(args) -> int:
    ok, failure = checks.run_all(args.checkpoint)
    if not ok:
        print(json.dumps(failure, indent=1, default=str), file=sys.stderr)
        return 1
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, model_lib.CheckpointError) as exc:
        print(f"cmm: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cmm: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
