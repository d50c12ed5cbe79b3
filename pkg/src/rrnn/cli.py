"""Command-line interface.

Subcommands: ingest, train, eval, bench, keygen, encrypt, split-key,
host-transform, geometry. Every run is reproducible: the seed and full
configuration are embedded in all emitted reports, and repeating a command
with the same inputs yields byte-identical model files and metrics CSVs.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import bench, geometry, kernel, model_io, network, obfuscation, pipeline, rng
from .idx import IdxError, load_split
from .ridge import NumericalError

DATA_DIR_ENV = "RRNN_DATA_DIR"
DEFAULT_LAYERS = {"baseline": 1, "rrnn": 15, "rrkn": 20}
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    """Bad flag combination or inconsistent configuration."""


def parse_seed(text: str) -> int:
    """Seeds are decimal or 0x-prefixed hex."""
    t = text.strip().lower()
    try:
        return int(t, 16) if t.startswith("0x") else int(t, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None


def _csv_ints(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _csv_floats(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part]


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--dataset",
        choices=["mnist", "fmnist", "custom-idx"],
        default="mnist",
        help="which dataset the data directory holds (affects the default lambda)",
    )
    p.add_argument(
        "--data-dir",
        default=None,
        help=f"directory with the four IDX files (default ${DATA_DIR_ENV} or ./data)",
    )


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=int, default=1, help="integer image upscale factor")
    p.add_argument("--sqrt", action="store_true", help="square-root raw intensities first")
    p.add_argument("--fft", action="store_true", help="append the magnitude spectrum")
    p.add_argument(
        "--float32", action="store_true", help="store features in 32-bit (solves stay 64-bit)"
    )


def _resolve_data_dir(args) -> str:
    return args.data_dir or os.environ.get(DATA_DIR_ENV) or "./data"


def _pipeline_config(args) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        scale=args.scale,
        use_sqrt=args.sqrt,
        use_fft=args.fft,
        dtype="float32" if args.float32 else "float64",
    )


def _default_lambda(dataset: str) -> float:
    return bench.DEFAULT_LAMBDA.get(dataset, 0.0)


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(threads)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=threads)
    except ImportError:
        pass  # env vars above cover pools that have not started yet


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrnn",
        description="Residual random network classifiers: train, evaluate, reproduce.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset directory, optionally export features")
    _add_dataset_args(p)
    _add_pipeline_args(p)
    p.add_argument("--split", choices=["train", "test", "both"], default="both")
    p.add_argument("--features-out", help="write the feature matrix as .npy (single split only)")
    p.add_argument("--labels-out", help="write the labels as .npy (single split only)")

    p = sub.add_parser("train", help="train a model and write a model file")
    _add_dataset_args(p)
    _add_pipeline_args(p)
    p.add_argument("--algo", choices=["baseline", "rrnn", "rrkn"], default="rrnn")
    group = p.add_mutually_exclusive_group()
    group.add_argument(
        "--proj-factor", type=int, help="layer width as a multiple q of the feature length"
    )
    group.add_argument("--hidden", type=int, help="explicit layer width J (baseline/rrnn)")
    group.add_argument("--kernel-size", type=int, help="samples per kernel block J (rrkn)")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="ridge regularization (default 0 for mnist, 10 for fmnist)")
    p.add_argument("--mu", type=float, default=network.DEFAULT_MU,
                   help="residual step size in (0, 1]; baseline always uses 1")
    p.add_argument("--layers", type=int, default=None,
                   help="layer budget (default 1 baseline, 15 rrnn, 20 rrkn)")
    p.add_argument("--eps", type=float, default=0.0,
                   help="stop once the residual norm drops below this")
    p.add_argument("--seed", type=parse_seed, default=0, help="master seed (decimal or 0x-hex)")
    p.add_argument("--phi", choices=list(kernel.PHI_KINDS), default="tanh_scaled",
                   help="kernel nonlinearity (rrkn)")
    p.add_argument("--projection-scale", type=float, default=None,
                   help="override the sqrt(D) factor inside tanh")
    p.add_argument("--encrypt-key", help="secret key file; train on encrypted features")
    p.add_argument("--no-embed-blocks", action="store_true",
                   help="rrkn: store block indices only, not the sample rows")
    p.add_argument("--track-test", action="store_true",
                   help="record test accuracy after every layer (slower)")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    p.add_argument("--metrics", help="write metrics to PREFIX.csv and PREFIX.json")
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("eval", help="evaluate a model file on a dataset split")
    _add_dataset_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--key", help="secret key file; encrypt rows before scoring")
    p.add_argument("--scale", type=int, default=None,
                   help="assert the model was trained at this scale")
    p.add_argument("--sqrt", action="store_true", default=None,
                   help="assert the model used sqrt preprocessing")
    p.add_argument("--fft", action="store_true", default=None,
                   help="assert the model used FFT augmentation")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    p.add_argument("--metrics", help="write metrics to PREFIX.csv and PREFIX.json")

    p = sub.add_parser("bench", help="reproduce a published table or figure as CSV")
    p.add_argument("--table", required=True, choices=list(bench.TABLE_NAMES))
    p.add_argument("--data-dir", default=None,
                   help="parent directory containing mnist/ and fmnist/ subdirectories")
    p.add_argument("--mnist-dir", default=None)
    p.add_argument("--fmnist-dir", default=None)
    p.add_argument("--datasets", default="mnist,fmnist",
                   help="comma-separated subset of mnist,fmnist")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated master seeds")
    p.add_argument("--extended", action="store_true",
                   help="add sweep rows beyond the printed grids (no reference values)")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="override the per-dataset regularization default")
    p.add_argument("--float32", action="store_true", help="store features in 32-bit")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    p.add_argument("--out", help="CSV path (default: print to stdout)")

    p = sub.add_parser("keygen", help="generate a secret orthonormal key file")
    p.add_argument("--dim", type=int, required=True, help="key dimension (final feature length)")
    p.add_argument("--seed", type=parse_seed, default=0)
    p.add_argument("--stream", type=int, default=0, help="substream id under the seed")
    p.add_argument("--store-matrix", action="store_true",
                   help="embed the matrix instead of relying on the seed")
    p.add_argument("--out", required=True)

    p = sub.add_parser("encrypt", help="apply a key file to a .npy feature matrix")
    p.add_argument("--key", required=True, help="secret key (or user half for the query step)")
    p.add_argument("--in", dest="infile", required=True, help=".npy feature matrix or vector")
    p.add_argument("--out", required=True)

    p = sub.add_parser("split-key", help="issue per-user split keys for a secret key")
    p.add_argument("--key", required=True, help="secret key file")
    p.add_argument("--users", type=int, default=1, help="how many user keys to issue")
    p.add_argument("--seed", type=parse_seed, default=0,
                   help="base seed; user n's host seed is substream n+1")
    p.add_argument("--out-dir", required=True, help="directory for user-<n>.rrkq files")
    p.add_argument("--registry", required=True,
                   help="JSON file mapping user id to the host-side seed")

    p = sub.add_parser("host-transform", help="complete a user's encrypted query")
    p.add_argument("--registry", help="registry JSON written by split-key")
    p.add_argument("--user", type=int, help="user id to look up in the registry")
    p.add_argument("--host-seed", type=parse_seed, default=None,
                   help="host seed directly, instead of registry lookup")
    p.add_argument("--dim", type=int, default=None,
                   help="key dimension (required with --host-seed)")
    p.add_argument("--in", dest="infile", required=True, help=".npy from the user-side step")
    p.add_argument("--out", required=True)

    p = sub.add_parser("geometry", help="unit-sphere geometry table: exact values and Monte Carlo")
    p.add_argument("--dims", type=_csv_ints, default=[16, 128, 784],
                   help="comma-separated dimensions")
    p.add_argument("--eps", type=float, default=1e-3, help="shell width")
    p.add_argument("--delta", type=_csv_floats, default=[0.1, 0.2],
                   help="comma-separated orthogonality thresholds")
    p.add_argument("--pairs", type=int, default=20000, help="Monte Carlo pair count")
    p.add_argument("--seed", type=parse_seed, default=0)
    p.add_argument("--out", help="CSV path (default: print to stdout)")

    return parser


# ---------------------------------------------------------------- commands


def _load_features(args, cfg: pipeline.PipelineConfig, split: str):
    data_dir = _resolve_data_dir(args)
    image_set = load_split(data_dir, split)
    return pipeline.run_pipeline(image_set.images, cfg), image_set.labels


def cmd_ingest(args) -> int:
    cfg = _pipeline_config(args)
    splits = ["train", "test"] if args.split == "both" else [args.split]
    if (args.features_out or args.labels_out) and len(splits) != 1:
        raise ConfigError("--features-out/--labels-out need --split train or test")
    report = {"data_dir": _resolve_data_dir(args), "dataset": args.dataset,
              "fingerprint": cfg.fingerprint(), "splits": {}}
    for split in splits:
        x, labels = _load_features(args, cfg, split)
        histogram = {str(k): int(c) for k, c in zip(*np.unique(labels, return_counts=True))}
        report["splits"][split] = {
            "samples": int(x.shape[0]),
            "feature_length": int(x.shape[1]),
            "label_histogram": histogram,
        }
        if args.features_out:
            np.save(args.features_out, x)
        if args.labels_out:
            np.save(args.labels_out, labels)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _resolve_width(args, dim: int, n: int) -> int:
    if args.algo == "rrkn":
        if args.hidden is not None:
            raise ConfigError("--hidden applies to baseline/rrnn; use --kernel-size for rrkn")
        if args.kernel_size is not None:
            return args.kernel_size
        q = args.proj_factor if args.proj_factor is not None else 1
        return min(q * dim, n)
    if args.kernel_size is not None:
        raise ConfigError("--kernel-size applies to rrkn; use --proj-factor or --hidden")
    if args.hidden is not None:
        return args.hidden
    q = args.proj_factor if args.proj_factor is not None else 1
    return q * dim


def _load_secret_key(path: str) -> obfuscation.SecretKey:
    key = model_io.load_key(path)
    if not isinstance(key, obfuscation.SecretKey):
        raise ConfigError(
            f"{path} is a user half-key; only the full secret key can encrypt directly"
        )
    return key


def _write_metrics(prefix: str, trace, sidecar: dict) -> None:
    with open(prefix + ".csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["layer", "residual_norm", "train_accuracy", "test_accuracy"])
        for t, norm in enumerate(trace.residual_norms):
            test_acc = ""
            if trace.eval_accuracy is not None:
                test_acc = repr(trace.eval_accuracy[t])
            writer.writerow([t, repr(norm), repr(trace.train_accuracy[t]), test_acc])
    with open(prefix + ".json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_train(args) -> int:
    _apply_threads(args.threads)
    cfg = _pipeline_config(args)
    lam = args.lam if args.lam is not None else _default_lambda(args.dataset)
    layers = args.layers if args.layers is not None else DEFAULT_LAYERS[args.algo]
    timings: dict[str, float] = {}

    started = time.perf_counter()
    train_x, train_labels = _load_features(args, cfg, "train")
    test_x, test_labels = _load_features(args, cfg, "test")
    timings["load_and_pipeline"] = time.perf_counter() - started

    key = None
    if args.encrypt_key:
        key = _load_secret_key(args.encrypt_key)
        train_x = obfuscation.encrypt_matrix(train_x, key)
        test_x = obfuscation.encrypt_matrix(test_x, key)

    classes = int(train_labels.max()) + 1
    train_y = pipeline.one_hot_encode(train_labels, classes)
    width = _resolve_width(args, train_x.shape[1], train_x.shape[0])
    eval_data = (test_x, test_labels) if args.track_test else None

    started = time.perf_counter()
    train_fingerprint = None
    if args.algo == "rrkn":
        model, trace = kernel.train_rrkn(
            train_x, train_y, block_size=width, lam=lam, layers=layers,
            epsilon=args.eps, master_seed=args.seed, phi=args.phi,
            eval_data=eval_data, embed_blocks=not args.no_embed_blocks,
        )
        if args.no_embed_blocks:
            train_fingerprint = model_io.feature_fingerprint(train_x)
    else:
        mu = 1.0 if args.algo == "baseline" else args.mu
        model, trace = network.train_rrnn(
            train_x, train_y, width=width, lam=lam, mu=mu, layers=layers,
            epsilon=args.eps, master_seed=args.seed, eval_data=eval_data,
            projection_scale=args.projection_scale,
        )
    timings["train"] = time.perf_counter() - started

    started = time.perf_counter()
    if args.algo == "rrkn":
        scores = kernel.predict_scores(model, test_x, train_x=train_x)
    else:
        scores = network.predict_scores(model, test_x)
    test_accuracy = network.accuracy(scores, test_labels)
    timings["eval"] = time.perf_counter() - started

    tmp = args.out + ".tmp"
    model_io.save_model(tmp, model, cfg, trace=trace, train_fingerprint=train_fingerprint)
    os.replace(tmp, args.out)

    summary = {
        "algorithm": rng.ALGORITHM_ID,
        "config": {
            "algo": args.algo, "dataset": args.dataset, "epsilon": args.eps,
            "fingerprint": cfg.fingerprint(), "lambda": lam,
            "layers_budget": layers, "mu": None if args.algo == "rrkn" else model.mu,
            "phi": args.phi if args.algo == "rrkn" else None,
            "seed": args.seed, "width": width,
            "encrypted": bool(args.encrypt_key),
        },
        "final_test_accuracy": test_accuracy,
        "layers_trained": trace.layer_count,
        "model": args.out,
        "residual_norms": trace.residual_norms,
        "stop_reason": trace.stop_reason,
    }
    if args.metrics:
        _write_metrics(args.metrics, trace, summary | {"wall_seconds": timings})
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    _apply_threads(args.threads)
    model, meta = model_io.load_model(args.model)
    cfg = model_io.pipeline_from_meta(meta)
    for flag, name, value in (
        (args.scale, "scale", cfg.scale),
        (args.sqrt, "sqrt", cfg.use_sqrt),
        (args.fft, "fft", cfg.use_fft),
    ):
        if flag is not None and flag != value:
            raise ConfigError(
                f"model was trained with {name}={value}, refusing to evaluate at {name}={flag}"
            )
    x, labels = _load_features(args, cfg, args.split)
    if args.key:
        key = _load_secret_key(args.key)
        x = obfuscation.encrypt_matrix(x, key)

    if isinstance(model, kernel.RrknModel):
        needs_train = any(layer.block is None for layer in model.layers)
        train_x = None
        if needs_train:
            train_x, _ = _load_features(args, cfg, "train")
            if args.key:
                train_x = obfuscation.encrypt_matrix(train_x, key)
            recorded = meta.get("train_fingerprint")
            if recorded and model_io.feature_fingerprint(train_x) != recorded:
                raise ConfigError(
                    "training features do not match the fingerprint recorded in the model"
                )
        scores = kernel.predict_scores(model, x, train_x=train_x)
    else:
        scores = network.predict_scores(model, x)
    acc = network.accuracy(scores, labels)

    summary = {
        "accuracy": acc,
        "dataset": args.dataset,
        "fingerprint": cfg.fingerprint(),
        "model": args.model,
        "samples": int(x.shape[0]),
        "split": args.split,
        "encrypted": bool(args.key),
    }
    if args.metrics:
        with open(args.metrics + ".csv", "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["split", "samples", "accuracy"])
            writer.writerow([args.split, x.shape[0], repr(acc)])
        with open(args.metrics + ".json", "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    _apply_threads(args.threads)
    datasets = tuple(d for d in args.datasets.split(",") if d)
    for ds in datasets:
        if ds not in bench.DATASETS:
            raise ConfigError(f"unknown dataset {ds!r}")
    parent = args.data_dir or os.environ.get(DATA_DIR_ENV) or "./data"
    data_dirs = {
        "mnist": args.mnist_dir or os.path.join(parent, "mnist"),
        "fmnist": args.fmnist_dir or os.path.join(parent, "fmnist"),
    }
    result = bench.run_bench(
        args.table,
        data_dirs,
        seeds=[int(s) for s in args.seeds.split(",") if s],
        datasets=datasets,
        extended=args.extended,
        lam_override=args.lam,
        dtype="float32" if args.float32 else "float64",
    )
    text = result.to_csv()
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        print(text, end="")
    return 0


def cmd_keygen(args) -> int:
    if args.dim < 1:
        raise ConfigError(f"--dim must be >= 1, got {args.dim}")
    key = obfuscation.generate_key(rng.SeedSpec(args.seed, args.stream), args.dim)
    model_io.save_secret_key(args.out, key, include_matrix=args.store_matrix)
    print(json.dumps({"dim": args.dim, "out": args.out, "seed": args.seed,
                      "stream": args.stream}, sort_keys=True))
    return 0


def cmd_encrypt(args) -> int:
    key = model_io.load_key(args.key)
    x = np.load(args.infile)
    if isinstance(key, obfuscation.SecretKey):
        out = obfuscation.encrypt_matrix(x, key)
    else:
        out = obfuscation.user_transform(key, x)
    np.save(args.out, out)
    print(json.dumps({"in": args.infile, "kind": type(key).__name__,
                      "out": args.out, "rows": int(np.atleast_2d(out).shape[0])},
                     sort_keys=True))
    return 0


def cmd_split_key(args) -> int:
    if args.users < 1:
        raise ConfigError(f"--users must be >= 1, got {args.users}")
    key = _load_secret_key(args.key)
    os.makedirs(args.out_dir, exist_ok=True)
    registry = {"dim": key.dim, "users": {}}
    written = []
    for n in range(1, args.users + 1):
        host_seed = rng.derive_substream(args.seed, n)
        split = obfuscation.split_key(key, host_seed, user_id=n)
        path = os.path.join(args.out_dir, f"user-{n:04d}.rrkq")
        model_io.save_user_key(path, split)
        registry["users"][str(n)] = host_seed
        written.append(path)
    with open(args.registry, "w") as f:
        json.dump(registry, f, indent=2, sort_keys=True)
        f.write("\n")
    print(json.dumps({"registry": args.registry, "user_keys": written}, sort_keys=True))
    return 0


def cmd_host_transform(args) -> int:
    if args.host_seed is not None:
        if args.dim is None:
            raise ConfigError("--host-seed needs --dim")
        host_seed, dim = args.host_seed, args.dim
    else:
        if not args.registry or args.user is None:
            raise ConfigError("pass --registry and --user, or --host-seed and --dim")
        with open(args.registry) as f:
            registry = json.load(f)
        try:
            host_seed = registry["users"][str(args.user)]
        except KeyError:
            raise ConfigError(f"user {args.user} not in {args.registry}") from None
        dim = registry["dim"]
    x = np.load(args.infile)
    split = obfuscation.SplitKey(
        user_id=args.user or 0, host_seed=host_seed,
        user_matrix=np.empty((0, 0)), dim=dim,
    )
    np.save(args.out, obfuscation.host_transform(x, split))
    print(json.dumps({"dim": dim, "in": args.infile, "out": args.out}, sort_keys=True))
    return 0


def cmd_geometry(args) -> int:
    rows = []
    for m in args.dims:
        metrics = geometry.unit_ball_metrics(m)
        for delta in args.delta:
            empirical, bound = geometry.orthogonality_experiment(
                rng.SeedSpec(args.seed, m), m, args.pairs, delta
            )
            rows.append({
                "dim": m,
                "surface_area": repr(metrics.surface_area),
                "volume": repr(metrics.volume),
                "eps": args.eps,
                "shell_fraction": repr(geometry.shell_fraction(m, args.eps)),
                "delta": delta,
                "empirical_orthogonal": repr(empirical),
                "chernoff_bound": repr(geometry.orthogonality_bound(m, delta)),
                "expected_abs_cosine": repr(geometry.expected_abs_cosine(m)),
            })
    fieldnames = list(rows[0].keys()) if rows else []
    if args.out:
        f = open(args.out, "w", newline="")
    else:
        f = sys.stdout
    try:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            f.close()
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "keygen": cmd_keygen,
    "encrypt": cmd_encrypt,
    "split-key": cmd_split_key,
    "host-transform": cmd_host_transform,
    "geometry": cmd_geometry,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (IdxError, model_io.ContainerError) as e:  # corrupt or mismatched files
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as e:  # inconsistent flags or parameters
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:  # missing files, unreadable paths
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
