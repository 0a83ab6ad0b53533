"""Command-line pipeline: prepare, train, evaluate, explain, report.

Every command writes a manifest.json naming the tool version, every seed
it consumed, and the thread count, so runs can be reproduced byte for
byte (timestamps aside).
"""

from __future__ import annotations

import argparse
import contextlib
import gzip
import json
import os
import sys
import time
from dataclasses import dataclass, asdict, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import dataset as ds
from . import metrics
from . import mlp
from . import preprocess as pp
from . import shap as kshap
from .errors import (
    BadBudgetError,
    BadDimsError,
    EmptyInputError,
    NonFiniteLossError,
    ShapeMismatchError,
    SingularSystemError,
    ZidsError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# variant -> (label granularity, class weights on, default hidden layers)
VARIANTS = {
    "base": ("fine", False, (256, 112)),
    "weighted-base": ("fine", True, (256, 112)),
    "truncated": ("coarse", False, (112,)),
    "weighted-truncated": ("coarse", True, (112,)),
}


class ConfigError(ZidsError):
    """Bad flag or config-file value; exits with the usage code."""


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


@dataclass
class ExperimentConfig:
    """Every knob of the pipeline, with reproduction-ready defaults.

    The master seed fills any per-stage seed left unset. The explain
    sample defaults to the background sample (same rows in both roles).
    """

    data_path: str = "data/kddcup.data"
    prepared_dir: str = "prepared"
    output_dir: Optional[str] = None
    variant: str = "truncated"
    hidden_dims: Optional[list[int]] = None
    epochs: int = 20
    batch_size: int = 1024
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    test_fraction: float = 0.33
    seed: int = 0
    split_seed: Optional[int] = None
    train_seed: Optional[int] = None
    background_n: int = 50
    explain_n: int = 50
    budget: Optional[int] = None
    background_seed: Optional[int] = None
    explain_seed: Optional[int] = None
    coalition_seed: Optional[int] = None
    top_k: int = 5

    def resolved(self) -> "ExperimentConfig":
        cfg = ExperimentConfig(**asdict(self))
        if cfg.variant not in VARIANTS:
            raise ConfigError(
                f"variant must be one of {sorted(VARIANTS)}: {cfg.variant!r}"
            )
        if cfg.split_seed is None:
            cfg.split_seed = cfg.seed
        if cfg.train_seed is None:
            cfg.train_seed = cfg.seed
        if cfg.background_seed is None:
            cfg.background_seed = cfg.seed
        if cfg.explain_seed is None:
            cfg.explain_seed = cfg.background_seed
        if cfg.coalition_seed is None:
            cfg.coalition_seed = cfg.seed
        if cfg.output_dir is None:
            cfg.output_dir = str(Path("runs") / cfg.variant)
        if not 0.0 < cfg.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0, 1): {cfg.test_fraction}")
        for field_name in ("epochs", "batch_size", "background_n", "explain_n", "top_k"):
            if getattr(cfg, field_name) < 1:
                raise ConfigError(f"{field_name} must be >= 1")
        if cfg.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0: {cfg.learning_rate}")
        if cfg.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd: {cfg.optimizer!r}")
        if cfg.budget is not None and cfg.budget < 2:
            raise ConfigError(f"budget must be >= 2: {cfg.budget}")
        return cfg


_CONFIG_FIELDS = {f.name for f in fields(ExperimentConfig)}


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file first, then explicit flags on top, then defaults."""
    values = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        unknown = set(doc) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        values.update(doc)
    for name in _CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.resolved()


def _parse_hidden_dims(text: str) -> list[int]:
    try:
        dims = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"hidden dims must be comma-separated integers: {text!r}")
    if not dims or any(d < 1 for d in dims):
        raise ConfigError(f"hidden dims must be positive: {text!r}")
    return dims


@contextlib.contextmanager
def _locked_dir(path: Path):
    """One command per output directory; stale locks must be removed by hand."""
    path.mkdir(parents=True, exist_ok=True)
    lock = path / ".zids.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory is locked by {lock}; remove the file if no "
            "other command is running"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield path
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock)


def _thread_info() -> dict:
    info = {"cpu_count": os.cpu_count()}
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        if var in os.environ:
            info[var] = os.environ[var]
    return info


def _write_manifest(out_dir: Path, command: str, body: dict) -> None:
    doc = {
        "tool": f"zids {__version__}",
        "command": command,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "threads": _thread_info(),
    }
    doc.update(body)
    (out_dir / "manifest.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _open_data(path: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def cmd_prepare(args) -> int:
    cfg = load_config(args)
    data_path = cfg.data_path
    out_dir = Path(args.out if args.out is not None else cfg.prepared_dir)
    taxonomy = ds.default_taxonomy()

    with _locked_dir(out_dir):
        # Pass 1: vocabularies, fine labels, category counts. Streaming,
        # no record objects retained.
        vocab_sets: dict[int, set] = {p: set() for p in ds.CATEGORICAL_POSITIONS}
        label_index: dict[str, int] = {}
        y_tmp: list[int] = []
        with _open_data(data_path) as stream:
            for record in ds.iter_kdd(stream):
                taxonomy.category_of(record.label)  # total-coverage check
                for pos in ds.CATEGORICAL_POSITIONS:
                    vocab_sets[pos].add(record.values[pos])
                y_tmp.append(label_index.setdefault(record.label, len(label_index)))
        n = len(y_tmp)
        if n == 0:
            raise EmptyInputError(f"no records in {data_path}")

        fine_names = sorted(label_index)
        remap = np.empty(len(fine_names), dtype=np.int32)
        for label, tmp_idx in label_index.items():
            remap[tmp_idx] = fine_names.index(label)
        y_fine = remap[np.asarray(y_tmp, dtype=np.int32)]
        del y_tmp

        fine_to_cat = np.asarray(
            [ds.CATEGORIES.index(taxonomy.category_of(l)) for l in fine_names],
            dtype=np.int32,
        )
        y_coarse = fine_to_cat[y_fine]
        counts = {
            category: int((y_coarse == i).sum())
            for i, category in enumerate(ds.CATEGORIES)
        }

        schema = ds.schema_from_vocabularies(
            {ds.FEATURE_NAMES[p]: sorted(vocab_sets[p]) for p in ds.CATEGORICAL_POSITIONS}
        )
        d = pp.encoded_width(schema)

        # The split is stratified on the fine labels; the coarse view
        # rides on the same rows.
        train_idx, test_idx = pp.split_indices(
            y_fine, len(fine_names), cfg.test_fraction, cfg.split_seed
        )
        dest_is_test = np.zeros(n, dtype=bool)
        dest_is_test[test_idx] = True
        dest_pos = np.empty(n, dtype=np.int64)
        dest_pos[train_idx] = np.arange(train_idx.size)
        dest_pos[test_idx] = np.arange(test_idx.size)

        # Pass 2: encode rows straight into the preallocated split matrices.
        x_train = np.zeros((train_idx.size, d), dtype=np.float32)
        x_test = np.zeros((test_idx.size, d), dtype=np.float32)
        n_cont = len(ds.CONTINUOUS_POSITIONS)
        cat_offsets = {}
        base = n_cont
        for pos in ds.CATEGORICAL_POSITIONS:
            vocab = schema.vocabularies[ds.FEATURE_NAMES[pos]]
            cat_offsets[pos] = (base, {v: i for i, v in enumerate(vocab)})
            base += len(vocab)

        with _open_data(data_path) as stream:
            for i, record in enumerate(ds.iter_kdd(stream)):
                row = x_test[dest_pos[i]] if dest_is_test[i] else x_train[dest_pos[i]]
                values = record.values
                for ci, pos in enumerate(ds.CONTINUOUS_POSITIONS):
                    row[ci] = float(values[pos])
                for pos in ds.CATEGORICAL_POSITIONS:
                    offset, index = cat_offsets[pos]
                    row[offset + index[values[pos]]] = 1.0

        scaling = pp.fit_scaling(x_train, n_cont)
        pp.apply_scaling(x_train, scaling)
        pp.apply_scaling(x_test, scaling)

        for name, x, idx in (
            ("train", x_train, train_idx),
            ("test", x_test, test_idx),
        ):
            pp.write_container(
                out_dir / f"{name}.zids",
                x,
                scaling,
                [
                    pp.LabelColumn("coarse", list(ds.CATEGORIES), y_coarse[idx]),
                    pp.LabelColumn("fine", fine_names, y_fine[idx]),
                ],
            )

        (out_dir / "schema.json").write_text(schema.to_json() + "\n", encoding="utf-8")
        (out_dir / "counts.csv").write_bytes(ds.counts_csv(counts))
        _write_manifest(
            out_dir,
            "prepare",
            {
                "config": {
                    "data_path": str(data_path),
                    "test_fraction": cfg.test_fraction,
                },
                "seeds": {"split": cfg.split_seed},
                "data": {
                    "rows": n,
                    "train_rows": int(train_idx.size),
                    "test_rows": int(test_idx.size),
                    "encoded_width": d,
                    "fine_classes": len(fine_names),
                    "coarse_classes": len(ds.CATEGORIES),
                    "vocabulary_sizes": schema.vocabulary_sizes(),
                    "category_counts": counts,
                },
            },
        )
    print(
        f"prepared {n} rows -> {train_idx.size} train / {test_idx.size} test, "
        f"width {d}, at {out_dir}"
    )
    return EXIT_OK


def _load_split(prepared: Path, column: str):
    train = pp.read_container(prepared / "train.zids", column)
    test = pp.read_container(prepared / "test.zids", column)
    if train.d != test.d or train.class_names != test.class_names:
        raise ShapeMismatchError("train and test containers disagree")
    return train, test


def cmd_train(args) -> int:
    cfg = load_config(args)
    prepared = Path(cfg.prepared_dir)
    out_dir = Path(cfg.output_dir)
    granularity, weighted, default_hidden = VARIANTS[cfg.variant]
    column = "fine" if granularity == "fine" else "coarse"

    with _locked_dir(out_dir):
        train_ds, test_ds = _load_split(prepared, column)
        hidden = cfg.hidden_dims if cfg.hidden_dims is not None else list(default_hidden)
        dims = [train_ds.d] + list(hidden) + [train_ds.k]
        weights = pp.class_weights(train_ds.y, train_ds.k) if weighted else None
        try:
            train_config = mlp.TrainConfig(
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                learning_rate=cfg.learning_rate,
                optimizer=cfg.optimizer,
                seed=cfg.train_seed,
                class_weights=weights,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

        model = mlp.init(dims, cfg.train_seed)
        # Per the training regime, the full test split doubles as the
        # per-epoch validation set.
        model, history = mlp.train(model, train_ds, test_ds, train_config)

        mlp.save(model, out_dir / "model.zmlp")
        (out_dir / "history.csv").write_bytes(mlp.history_csv(history))
        _write_manifest(
            out_dir,
            "train",
            {
                "config": {
                    "variant": cfg.variant,
                    "granularity": granularity,
                    "weighted": weighted,
                    "dims": dims,
                    "epochs": cfg.epochs,
                    "batch_size": cfg.batch_size,
                    "learning_rate": cfg.learning_rate,
                    "optimizer": cfg.optimizer,
                    "prepared_dir": str(prepared),
                },
                "seeds": {"train": cfg.train_seed},
                "model": {
                    "parameter_count": mlp.count_parameters(model),
                    "class_names": train_ds.class_names,
                    "class_weights": None if weights is None else list(weights.w),
                },
                "result": {
                    "final_val_accuracy": history[-1].val_accuracy,
                    "final_val_loss": history[-1].val_loss,
                },
            },
        )
    print(
        f"trained {cfg.variant}: {mlp.count_parameters(model)} parameters, "
        f"val_accuracy {history[-1].val_accuracy:.4f}, at {out_dir}"
    )
    return EXIT_OK


def _pick_column(path: Path, n_classes: int) -> pp.EncodedDataset:
    """The container label column whose class count matches the model."""
    x, scaling, columns = pp.read_container_columns(path)
    for column in columns:
        if len(column.class_names) == n_classes:
            return pp.EncodedDataset(
                x=x, y=column.y, class_names=list(column.class_names), scaling=scaling
            )
    raise ShapeMismatchError(
        f"no label column with {n_classes} classes in {path}; "
        f"available: {[(c.name, len(c.class_names)) for c in columns]}"
    )


def cmd_evaluate(args) -> int:
    model = mlp.load(args.model)
    test_path = Path(args.test)
    out_dir = Path(args.out)
    with _locked_dir(out_dir):
        test_ds = _pick_column(test_path, model.n_classes)
        if test_ds.d != model.dims[0]:
            raise ShapeMismatchError(
                f"container width {test_ds.d} vs model width {model.dims[0]}"
            )
        preds = np.empty(test_ds.n, dtype=np.int64)
        chunk = 65536
        for start in range(0, test_ds.n, chunk):
            preds[start : start + chunk] = mlp.predict(
                model, test_ds.x[start : start + chunk]
            )
        cm = metrics.confusion(test_ds.y, preds, test_ds.k, test_ds.class_names)
        rep = metrics.report(cm)
        for fmt in ("text", "csv", "json"):
            suffix = {"text": "txt", "csv": "csv", "json": "json"}[fmt]
            (out_dir / f"report.{suffix}").write_bytes(metrics.render_report(rep, fmt))
        (out_dir / "confusion.csv").write_bytes(metrics.render_confusion_csv(cm))
        _write_manifest(
            out_dir,
            "evaluate",
            {
                "config": {"model": str(args.model), "test": str(test_path)},
                "seeds": {},
                "result": {
                    "accuracy": rep.accuracy,
                    "macro_recall": rep.macro_avg.recall,
                    "total_support": rep.total_support,
                },
            },
        )
    print(f"accuracy {rep.accuracy:.4f} over {rep.total_support} rows, at {out_dir}")
    return EXIT_OK


def cmd_explain(args) -> int:
    cfg = load_config(args)
    model = mlp.load(args.model)
    prepared = Path(cfg.prepared_dir)
    out_dir = Path(cfg.output_dir)
    with _locked_dir(out_dir):
        test_ds = pp.read_container(prepared / "test.zids", "coarse")
        if model.n_classes != test_ds.k:
            raise ShapeMismatchError(
                f"explain needs a coarse model: model has {model.n_classes} "
                f"classes, container {test_ds.k}"
            )
        if test_ds.d != model.dims[0]:
            raise ShapeMismatchError(
                f"container width {test_ds.d} vs model width {model.dims[0]}"
            )
        schema = ds.FeatureSchema.from_json(
            (prepared / "schema.json").read_text(encoding="utf-8")
        )
        feature_names = pp.encoded_feature_names(schema)

        bg_idx = pp.sample_indices(test_ds.n, cfg.background_n, cfg.background_seed)
        fg_idx = pp.sample_indices(test_ds.n, cfg.explain_n, cfg.explain_seed)
        background = test_ds.x[bg_idx].astype(np.float64)
        foreground = test_ds.x[fg_idx].astype(np.float64)

        def model_fn(z):
            return mlp.forward(model, z)

        expl = kshap.kernel_shap(
            model_fn,
            foreground,
            background,
            budget=cfg.budget,
            seed=cfg.coalition_seed,
            feature_names=feature_names,
            class_names=test_ds.class_names,
        )
        residuals = kshap.efficiency_residuals(expl, model_fn(foreground))
        per_class_residual = {
            name: float(residuals[c].max())
            for c, name in enumerate(test_ds.class_names)
        }
        for c, name in enumerate(test_ds.class_names):
            (out_dir / f"shap_{name}.csv").write_bytes(kshap.explanation_csv(expl, c))
        (out_dir / "top5.csv").write_bytes(kshap.top_features_csv(expl, cfg.top_k))
        _write_manifest(
            out_dir,
            "explain",
            {
                "config": {
                    "model": str(args.model),
                    "prepared_dir": str(prepared),
                    "background_n": cfg.background_n,
                    "explain_n": cfg.explain_n,
                    "budget": cfg.budget
                    if cfg.budget is not None
                    else 2 * test_ds.d + 2048,
                    "top_k": cfg.top_k,
                },
                "seeds": {
                    "background": cfg.background_seed,
                    "explain": cfg.explain_seed,
                    "coalitions": cfg.coalition_seed,
                },
                "samples": {
                    "background_indices": [int(i) for i in bg_idx],
                    "explained_indices": [int(i) for i in fg_idx],
                },
                "efficiency_max_residual": per_class_residual,
            },
        )
        worst = max(per_class_residual.values())
        for name, value in per_class_residual.items():
            print(f"efficiency residual {name}: {value:.3e}", file=sys.stderr)
    print(f"explained {cfg.explain_n} rows, max residual {worst:.3e}, at {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    rep = metrics.report_from_dict(doc)
    sys.stdout.write(metrics.render_report(rep, "text").decode("utf-8"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zids", description=__doc__)
    parser.add_argument("--version", action="version", version=f"zids {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_config_flags(p, names):
        p.add_argument("--config", help="JSON config file; flags override it")
        if "data_path" in names:
            p.add_argument("--data", dest="data_path", help="KDD99 CSV (optionally .gz)")
        if "prepared_dir" in names:
            p.add_argument("--prepared", dest="prepared_dir", help="prepared data dir")
        if "output_dir" in names:
            p.add_argument("--out", dest="output_dir", help="output directory")
        if "seed" in names:
            p.add_argument("--seed", type=int, help="master seed for all unset seeds")
        if "test_fraction" in names:
            p.add_argument("--test-fraction", dest="test_fraction", type=float)
        if "variant" in names:
            p.add_argument("--variant", choices=sorted(VARIANTS))
        if "train" in names:
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", dest="batch_size", type=int)
            p.add_argument("--learning-rate", dest="learning_rate", type=float)
            p.add_argument("--optimizer", choices=["adam", "sgd"])
            p.add_argument(
                "--hidden-dims",
                dest="hidden_dims",
                type=_parse_hidden_dims,
                help="comma-separated hidden layer sizes, e.g. 256,112",
            )
            p.add_argument("--train-seed", dest="train_seed", type=int)
        if "split_seed" in names:
            p.add_argument("--split-seed", dest="split_seed", type=int)
        if "shap" in names:
            p.add_argument("--background-n", dest="background_n", type=int)
            p.add_argument("--explain-n", dest="explain_n", type=int)
            p.add_argument("--budget", type=int)
            p.add_argument("--background-seed", dest="background_seed", type=int)
            p.add_argument("--explain-seed", dest="explain_seed", type=int)
            p.add_argument("--coalition-seed", dest="coalition_seed", type=int)
            p.add_argument("--top-k", dest="top_k", type=int)

    p = sub.add_parser("prepare", help="parse, encode, split, and write containers")
    add_config_flags(p, {"data_path", "seed", "test_fraction", "split_seed"})
    p.add_argument("--out", help="output directory for prepared artifacts")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one of the four experiment variants")
    add_config_flags(
        p, {"prepared_dir", "output_dir", "seed", "variant", "train"}
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="classification report and confusion matrix")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--test", required=True, help="test container (.zids)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="KernelSHAP attributions for a coarse model")
    p.add_argument("--model", required=True, help="trained model file")
    add_config_flags(p, {"prepared_dir", "output_dir", "seed", "shap"})
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report", help="pretty-print an existing report.json")
    p.add_argument("--report", required=True, help="path to report.json")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, BadDimsError, BadBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLossError, SingularSystemError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ZidsError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
