"""Command-line entry point: gen / train / eval / bench.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
failure (non-finite loss or gradient). All artifacts of a run live under
one output location together with an echo of the fully resolved config.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .model import Model, ModelConfig
from .signals import DatasetSpec, MODULATION_CLASSES, iq_to_ap
from .sigset import SigsetError, build_dataset, read_sigset
from .checkpoint import CheckpointError, load_model, save_checkpoint
from .flops import count_flops
from .shrinkage import bias_mse_experiment
from .training import TrainHyper, evaluate, prepare_data, train
from .report import emit_report, write_history_csv
from . import tensor as T

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


class UsageError(Exception):
    pass


def parse_snr_grid(text: str) -> list[int]:
    """Either 'lo:hi:step' (inclusive) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"bad SNR range {text!r}, expected lo:hi:step")
        lo, hi, step = (int(p) for p in parts)
        return list(range(lo, hi + 1, step))
    return [int(p) for p in text.split(",")]


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line {line!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def resolve(args, key: str, file_cfg: dict, default, cast=str):
    """Flag wins over config file wins over default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return cast(file_cfg[key])
    return default


def echo_config(path: str, resolved: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, v in resolved.items():
            f.write(f"{k}={v}\n")


def cmd_gen(args) -> int:
    file_cfg = read_config_file(args.config) if args.config else {}
    classes = resolve(args, "classes", file_cfg, "bpsk,qpsk,8psk,16qam,pam4,4ask,cpfsk,gfsk")
    snrs = resolve(args, "snrs", file_cfg, "-20:18:4")
    spec = DatasetSpec(
        classes=[c.strip().lower() for c in classes.split(",")],
        snr_grid=parse_snr_grid(snrs),
        samples_per_cell=int(resolve(args, "per_cell", file_cfg, 500, int)),
        length=int(resolve(args, "length", file_cfg, 128, int)),
        sps=int(resolve(args, "sps", file_cfg, 8, int)),
        rolloff=float(resolve(args, "rolloff", file_cfg, 0.35, float)),
        cfo_max=float(resolve(args, "cfo_max", file_cfg, 0.01, float)),
        master_seed=int(resolve(args, "seed", file_cfg, 0, int)),
    )
    spec.validate()
    reader = build_dataset(spec, args.out)
    echo_config(args.out + ".config", {
        "classes": ",".join(spec.classes), "snrs": ",".join(map(str, spec.snr_grid)),
        "per_cell": spec.samples_per_cell, "length": spec.length, "sps": spec.sps,
        "rolloff": spec.rolloff, "cfo_max": spec.cfo_max, "seed": spec.master_seed,
    })
    print(f"wrote {reader.num_samples} samples "
          f"({len(spec.classes)} classes x {len(spec.snr_grid)} SNRs x {spec.samples_per_cell}) "
          f"to {args.out}")
    return EXIT_OK


def _load_split_data(data_path, manifest_path):
    reader = read_sigset(data_path)
    from .signals import read_manifest
    manifest = read_manifest(manifest_path or str(data_path) + ".manifest")
    return reader, prepare_data(reader), manifest


def cmd_train(args) -> int:
    file_cfg = read_config_file(args.config) if args.config else {}
    reader, data, manifest = _load_split_data(args.data, args.manifest)
    hyper = TrainHyper(
        batch_size=int(resolve(args, "batch_size", file_cfg, 64, int)),
        epochs=int(resolve(args, "epochs", file_cfg, 200, int)),
        lr=float(resolve(args, "lr", file_cfg, 1e-3, float)),
        seed=int(resolve(args, "seed", file_cfg, 0, int)),
    )
    variant = resolve(args, "variant", file_cfg, "dual")
    threshold = resolve(args, "threshold", file_cfg, "garrote")
    cfg = ModelConfig(length=reader.length, num_classes=len(reader.classes),
                      thresholding=threshold, variant=variant)
    model = Model(cfg, seed=hyper.seed)
    out = args.out
    os.makedirs(out, exist_ok=True)
    echo_config(os.path.join(out, "config.txt"), {
        **cfg.to_dict(), "data": args.data, "batch_size": hyper.batch_size,
        "epochs": hyper.epochs, "lr": hyper.lr, "seed": hyper.seed,
        "deterministic": int(args.deterministic),
    })
    state = train(model, data, manifest["train"], manifest["val"], hyper,
                  log=None if args.quiet else print)
    write_history_csv(os.path.join(out, "history.csv"), state.history)
    save_checkpoint(model, os.path.join(out, "model.amcw"), metadata={
        "classes": ",".join(reader.classes),
        "best_val_loss": repr(state.best_val_loss),
        "epochs_run": len(state.history),
        "seed": hyper.seed,
    })
    report = evaluate(model, data, manifest["val"], time_samples=0,
                      classes=reader.classes)
    from .report import write_summary
    write_summary(os.path.join(out, "summary.txt"), report,
                  extra={"best_val_loss": repr(state.best_val_loss),
                         "epochs_run": len(state.history)})
    print(f"trained {len(state.history)} epochs, best val loss {state.best_val_loss:.4f}, "
          f"val accuracy {report.average_accuracy:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, meta = load_model(args.checkpoint)
    reader, data, manifest = _load_split_data(args.data, args.manifest)
    if len(reader.classes) != model.cfg.num_classes:
        raise SigsetError(
            f"dataset has {len(reader.classes)} classes, model head has {model.cfg.num_classes}")
    idx = manifest[args.split]
    report = evaluate(model, data, idx, time_samples=args.time_samples,
                      classes=reader.classes)
    os.makedirs(args.out, exist_ok=True)
    echo_config(os.path.join(args.out, "config.txt"), {
        "checkpoint": args.checkpoint, "data": args.data, "split": args.split,
        "time_samples": args.time_samples,
    })
    emit_report(report, args.out)
    print(f"average accuracy {report.average_accuracy:.4f}, "
          f"max accuracy {report.max_accuracy:.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.bias_experiment:
        res = bias_mse_experiment(args.theta, args.tau, args.sigma, args.n,
                                  seed=args.seed or 0)
        print("estimator  bias        mse")
        print(f"soft       {res['bias_soft']:<11.6f} {res['mse_soft']:.6f}")
        print(f"garrote    {res['bias_garrote']:<11.6f} {res['mse_garrote']:.6f}")
        print(f"predicted: soft bias ~= tau = {args.tau}, "
              f"garrote bias ~= tau^2/theta = {args.tau ** 2 / args.theta:.6f}")
        return EXIT_OK
    if args.checkpoint:
        model, _ = load_model(args.checkpoint)
        cfg = model.cfg
    else:
        cfg = ModelConfig()
        model = Model(cfg, seed=args.seed or 0)
        # one training-mode pass seeds the BN running stats for timing
        rng0 = np.random.default_rng(0)
        warm = rng0.normal(size=(8, cfg.length, 2)).astype(np.float32)
        with T.no_grad():
            model.forward(warm, warm, train=True)
    print(f"trainable parameters: {model.count_params()}")
    totals = {}
    for L in (128, 1024):
        table, total = count_flops(cfg, L)
        totals[L] = total
        print(f"\nFLOPs at L={L}: {total}")
        if args.flops:
            for name, n in table:
                print(f"  {name:<24} {n}")
    print(f"\nFLOPs(1024)/FLOPs(128) = {totals[1024] / totals[128]:.3f}")
    # median single-sample forward time
    rng = np.random.default_rng(0)
    iq = rng.normal(size=(2, cfg.length)).astype(np.float32)
    sample = {"iq": np.ascontiguousarray(iq.T)[None],
              "ap": np.ascontiguousarray(iq_to_ap(iq).T)[None]}
    times = []
    with T.no_grad():
        for k in range(args.time_samples + 50):
            t0 = time.perf_counter()
            model.forward(sample["iq"][0], sample["ap"][0])
            if k >= 50:
                times.append(time.perf_counter() - t0)
    print(f"median inference time: {np.median(times) * 1e3:.3f} ms/sample")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        echo_config(os.path.join(args.out, "config.txt"),
                    {**cfg.to_dict(), "checkpoint": args.checkpoint or ""})
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="shrinknet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic SIGSET dataset")
    g.add_argument("--classes")
    g.add_argument("--snrs")
    g.add_argument("--per-cell", dest="per_cell", type=int)
    g.add_argument("--length", type=int)
    g.add_argument("--sps", type=int)
    g.add_argument("--rolloff", type=float)
    g.add_argument("--cfo-max", dest="cfo_max", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model on a SIGSET dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--manifest")
    t.add_argument("--variant", choices=["dual", "single"])
    t.add_argument("--threshold", choices=["garrote", "soft"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--deterministic", action="store_true")
    t.add_argument("--quiet", action="store_true")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--manifest")
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.add_argument("--time-samples", dest="time_samples", type=int, default=1000)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="parameter/FLOP/timing/bias tables")
    b.add_argument("--checkpoint")
    b.add_argument("--flops", action="store_true", help="print the per-layer FLOP table")
    b.add_argument("--bias-experiment", dest="bias_experiment", action="store_true")
    b.add_argument("--theta", type=float, default=5.0)
    b.add_argument("--tau", type=float, default=1.0)
    b.add_argument("--sigma", type=float, default=0.1)
    b.add_argument("--n", type=int, default=100000)
    b.add_argument("--seed", type=int)
    b.add_argument("--time-samples", dest="time_samples", type=int, default=200)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    threads = os.environ.get("SHRINKNET_THREADS")
    if threads:
        # numerics are single-threaded already; cap BLAS pools to match
        os.environ.setdefault("OMP_NUM_THREADS", threads)
        os.environ.setdefault("OPENBLAS_NUM_THREADS", threads)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SigsetError, CheckpointError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
