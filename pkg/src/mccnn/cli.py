"""Command-line entry point: train, predict, evaluate, baseline, gradcheck, reproduce-baselines.

Configuration is layered: built-in defaults < ``--config`` key=value file <
``MCCNN_<KEY>`` environment variables < command-line flags.
Exit status: 0 success, 1 validation/assertion failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from sklearn.pipeline import Pipeline

from . import model as mdl
from .embeddings import HashedRandom, SequenceEmbedder, load_precomputed, load_static_table
from .estimator import MCCNNClassifier
from .evaluation import (
    ConstantClassifier, LinearSVMBaseline, TfidfFeatures, confusion_matrix, evaluate,
    metrics_from_confusion,
)
from .numerics import relative_error
from .text_pipeline import (
    Example, LabelSchema, SubwordVocabulary, TweetTokenizer, build_vocabulary, class_distribution, get_schema,
    load_dataset,
)
from .training import stratified_split

ENV_PREFIX = "MCCNN_"
COMMANDS = ("train", "predict", "evaluate", "baseline", "gradcheck", "reproduce-baselines")
GRADCHECK_TOLERANCE = 1e-4
BASELINE_TOLERANCE = 5e-4


class CLIError(Exception):
    """Validation failure; ``kind`` is a short machine-readable tag."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _int_list(value) -> tuple[int, ...]:
    if isinstance(value, (tuple, list)):
        return tuple(int(v) for v in value)
    return tuple(int(v) for v in str(value).split(",") if v.strip())


@dataclass(frozen=True)
class RunConfig:
    # model
    embedding_dim: int = 32
    filter_sizes: tuple[int, ...] = (1, 2, 3, 4)
    groups_per_size: tuple[int, ...] = (10, 6, 4, 2)
    group_size: int = 7
    filter_activation: str = "sigmoid"
    hidden_size: int = 10
    hidden_activation: str = "tanh"
    ensemble_size: int = 5
    max_tokens: int = 80
    # training
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    dev_fraction: float = 0.1
    seed: int = 0
    parallel_members: int = 1
    # data and assets
    format: str = "olid"
    subtask: str = "a"
    dataset: str = ""
    dev_dataset: str = ""
    eval_dataset: str = ""
    train_dataset: str = ""
    vocabulary: str = ""
    embedding_kind: str = "hashed"
    embeddings: str = ""
    checkpoint: str = ""
    output: str = ""
    # baselines
    baseline: str = "mfc"
    constant_label: str = ""
    baseline_epochs: int = 10
    baseline_learning_rate: float = 0.1

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def coerce(cls, key: str, raw):
        types = {f.name: f.type for f in fields(cls)}
        if key not in types:
            raise CLIError("config", f"unknown config key {key!r}")
        t = types[key]
        try:
            if t == "tuple[int, ...]":
                return _int_list(raw)
            if t == "int":
                return int(raw)
            if t == "float":
                return float(raw)
            return str(raw)
        except ValueError:
            raise CLIError("config", f"invalid value {raw!r} for {key}") from None

    def dump(self) -> str:
        lines = []
        for key in self.keys():
            val = getattr(self, key)
            if isinstance(val, tuple):
                val = ",".join(str(v) for v in val)
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{key}={val}")
        return "\n".join(lines) + "\n"


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CLIError("config", f"{path}: line {lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = RunConfig.coerce(key, val)
    return values


def resolve_config(config_path, flag_values: dict, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values = {}
    if config_path:
        if not Path(config_path).is_file():
            raise CLIError("path", f"config file not found: {config_path}")
        values.update(read_config_file(config_path))
    for key in RunConfig.keys():
        env_key = ENV_PREFIX + key.upper()
        if env_key in environ:
            values[key] = RunConfig.coerce(key, environ[env_key])
    for key, val in flag_values.items():
        if val is not None:
            values[key] = RunConfig.coerce(key, val)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise CLIError("config", str(exc)) from None


# -- helpers -----------------------------------------------------------------

def _require(cfg: RunConfig, *keys):
    for key in keys:
        if not getattr(cfg, key):
            raise CLIError("usage", f"missing required setting {key}")


def _check_inputs(cfg: RunConfig, *keys):
    for key in keys:
        val = getattr(cfg, key)
        if val and not Path(val).is_file():
            raise CLIError("path", f"{key} file not found: {val}")


def _check_output(path):
    if path:
        parent = Path(path).resolve().parent
        if not parent.is_dir():
            raise CLIError("path", f"output directory does not exist: {parent}")


def _provider(cfg: RunConfig):
    if cfg.embedding_kind == "hashed":
        return HashedRandom(cfg.embedding_dim, cfg.seed)
    if cfg.embedding_kind == "static":
        _require(cfg, "embeddings")
        return load_static_table(cfg.embeddings)
    if cfg.embedding_kind == "precomputed":
        _require(cfg, "embeddings")
        return load_precomputed(cfg.embeddings)
    raise CLIError("config", f"unknown embedding_kind {cfg.embedding_kind!r}")


def _tokenizer(cfg: RunConfig, vocab=None) -> TweetTokenizer:
    if vocab is None:
        vocab = SubwordVocabulary.load(cfg.vocabulary)
    return TweetTokenizer(vocab=vocab, max_tokens=cfg.max_tokens).fit([])


def _labels(dataset):
    return np.array([ex.label for ex in dataset], dtype=np.int64)


def _fmt(x: float) -> str:
    return f"{x:.4f}"


# -- commands ----------------------------------------------------------------

def cmd_train(cfg: RunConfig, out) -> int:
    _require(cfg, "dataset", "checkpoint")
    _check_inputs(cfg, "dataset", "dev_dataset", "vocabulary", "embeddings")
    _check_output(cfg.checkpoint)
    schema = get_schema(cfg.format, cfg.subtask)
    data = load_dataset(cfg.dataset, cfg.format, cfg.subtask)
    if cfg.dev_dataset:
        train, dev = data, load_dataset(cfg.dev_dataset, cfg.format, cfg.subtask)
    else:
        train, dev = stratified_split(data, cfg.dev_fraction, cfg.seed, num_classes=len(schema))

    if cfg.vocabulary:
        vocab = SubwordVocabulary.load(cfg.vocabulary)
    else:
        vocab = build_vocabulary(ex.text for ex in train)
        vocab_path = cfg.checkpoint + ".vocab"
        vocab.save(vocab_path)
        cfg = RunConfig(**{**cfg.__dict__, "vocabulary": vocab_path})
    provider = _provider(cfg)
    front = Pipeline([("tokens", _tokenizer(cfg, vocab)), ("embed", SequenceEmbedder(provider))])
    X_train, X_dev = front.transform(train), front.transform(dev)

    clf = MCCNNClassifier(
        n_classes=len(schema), filter_sizes=cfg.filter_sizes, groups_per_size=cfg.groups_per_size,
        group_size=cfg.group_size, filter_activation=cfg.filter_activation,
        hidden_size=cfg.hidden_size, hidden_activation=cfg.hidden_activation,
        ensemble_size=cfg.ensemble_size, learning_rate=cfg.learning_rate, beta1=cfg.beta1,
        beta2=cfg.beta2, epsilon=cfg.epsilon, batch_size=cfg.batch_size, max_epochs=cfg.max_epochs,
        patience=cfg.patience, dev_fraction=cfg.dev_fraction, random_state=cfg.seed,
        n_jobs=cfg.parallel_members)
    clf.fit(X_train, _labels(train), X_dev, _labels(dev))
    clf.save(cfg.checkpoint)

    Path(cfg.checkpoint + ".config").write_text(cfg.dump(), encoding="utf-8")
    with open(cfg.checkpoint + ".history.tsv", "w", encoding="utf-8") as fh:
        for i, hist in enumerate(clf.histories_):
            fh.write(f"# member {i}\n")
            fh.write(hist.to_tsv())

    report = metrics_from_confusion(confusion_matrix(_labels(dev), clf.predict(X_dev), len(schema)))
    print(f"trained {cfg.ensemble_size} member(s) on {len(train)} examples; dev {len(dev)} examples", file=out)
    for i, hist in enumerate(clf.histories_):
        print(f"member {i}: epochs {hist.n_epochs} best_epoch {hist.best_epoch} "
              f"dev_macro_f1 {_fmt(hist.dev_macro_f1[hist.best_epoch])}", file=out)
    print("dev metrics (ensemble):", file=out)
    print(report.format_text(schema.classes), file=out)
    print(f"checkpoint={cfg.checkpoint}", file=out)
    print(f"config={cfg.checkpoint}.config", file=out)
    return 0


def _load_classifier(cfg: RunConfig):
    _require(cfg, "checkpoint", "vocabulary")
    _check_inputs(cfg, "checkpoint", "vocabulary", "embeddings")
    try:
        clf = MCCNNClassifier.load(cfg.checkpoint)
    except mdl.CheckpointError as exc:
        raise CLIError("checkpoint", str(exc)) from None
    provider = _provider(cfg)
    if provider.dim != clf.ensemble_.config.embedding_dim:
        raise CLIError("config", f"embedding dimension {provider.dim} does not match checkpoint "
                                 f"({clf.ensemble_.config.embedding_dim})")
    return Pipeline([("tokens", _tokenizer(cfg)), ("embed", SequenceEmbedder(provider)), ("clf", clf)])


def cmd_predict(cfg: RunConfig, out) -> int:
    _require(cfg, "dataset")
    _check_inputs(cfg, "dataset")
    _check_output(cfg.output)
    schema = get_schema(cfg.format, cfg.subtask)
    pipe = _load_classifier(cfg)
    if pipe.named_steps["clf"].ensemble_.config.num_classes != len(schema):
        raise CLIError("config", "checkpoint class count does not match the selected subtask")
    data = load_dataset(cfg.dataset, cfg.format, cfg.subtask, labeled=False)
    probs = pipe.predict_proba(data)
    lines = ["id\tlabel\t" + "\t".join(f"p_{c}" for c in schema.classes)]
    for ex, p in zip(data, probs):
        lines.append(f"{ex.id}\t{schema.classes[int(np.argmax(p))]}\t" + "\t".join(repr(float(v)) for v in p))
    text = "\n".join(lines) + "\n"
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return 0


def _baseline_pipeline(cfg: RunConfig, schema, train):
    y = _labels(train)
    if cfg.baseline == "mfc":
        clf = ConstantClassifier("most_frequent", n_classes=len(schema))
    elif cfg.baseline == "constant":
        _require(cfg, "constant_label")
        clf = ConstantClassifier("constant", schema.index(cfg.constant_label), len(schema))
    elif cfg.baseline == "linear-tfidf":
        vocab = SubwordVocabulary.load(cfg.vocabulary) if cfg.vocabulary else None
        pipe = Pipeline([
            ("tokens", TweetTokenizer(vocab=vocab, max_tokens=cfg.max_tokens)),
            ("tfidf", TfidfFeatures()),
            ("svm", LinearSVMBaseline(epochs=cfg.baseline_epochs,
                                      learning_rate=cfg.baseline_learning_rate, random_state=cfg.seed)),
        ])
        return pipe.fit(train, y)
    else:
        raise CLIError("config", f"unknown baseline {cfg.baseline!r}")
    return clf.fit(train, y)


def _report(out, title, schema, report, dist=None):
    print(title, file=out)
    if dist is not None:
        print("gold distribution: " + ", ".join(f"{k}={v}" for k, v in dist.items()), file=out)
    print(report.format_text(schema.classes), file=out)


def cmd_evaluate(cfg: RunConfig, out) -> int:
    _require(cfg, "dataset")
    _check_inputs(cfg, "dataset", "train_dataset", "checkpoint", "vocabulary", "embeddings")
    schema = get_schema(cfg.format, cfg.subtask)
    if cfg.checkpoint:
        predictor = _load_classifier(cfg)
        title = f"evaluation of {cfg.checkpoint}"
    else:
        _require(cfg, "train_dataset")
        train = load_dataset(cfg.train_dataset, cfg.format, cfg.subtask)
        predictor = _baseline_pipeline(cfg, schema, train)
        title = f"evaluation of {cfg.baseline} baseline"
    gold = load_dataset(cfg.dataset, cfg.format, cfg.subtask)
    if not gold:
        raise CLIError("data", "evaluation dataset is empty")
    _report(out, title, schema, evaluate(predictor, gold, schema), class_distribution(gold, schema))
    return 0


def cmd_baseline(cfg: RunConfig, out) -> int:
    _require(cfg, "dataset")
    _check_inputs(cfg, "dataset", "eval_dataset", "vocabulary")
    schema = get_schema(cfg.format, cfg.subtask)
    data = load_dataset(cfg.dataset, cfg.format, cfg.subtask)
    if cfg.eval_dataset:
        train, test = data, load_dataset(cfg.eval_dataset, cfg.format, cfg.subtask)
    else:
        train, test = stratified_split(data, cfg.dev_fraction, cfg.seed, num_classes=len(schema))
    predictor = _baseline_pipeline(cfg, schema, train)
    _report(out, f"{cfg.baseline} baseline trained on {len(train)} examples, scored on {len(test)}",
            schema, evaluate(predictor, test, schema), class_distribution(test, schema))
    return 0


def gradcheck_cases(seed: int):
    """Three seeded (model, sequence, class) cases; the second has T below the widest filter."""
    rng = np.random.default_rng(seed)
    cases = []
    specs = [
        dict(embedding_dim=int(rng.integers(2, 6)), filter_sizes=(1, 2, 3),
             groups_per_size=tuple(int(g) for g in rng.integers(1, 3, 3)), group_size=int(rng.integers(2, 5)),
             hidden_size=int(rng.integers(3, 7)), num_classes=int(rng.integers(2, 4)),
             filter_activation=str(rng.choice(["sigmoid", "tanh"]))),
        dict(embedding_dim=3, filter_sizes=(1, 4), groups_per_size=(2, 1), group_size=3,
             hidden_size=4, num_classes=3),
        dict(embedding_dim=4, num_classes=2),
    ]
    lengths = [int(rng.integers(4, 9)), int(rng.integers(1, 4)), int(rng.integers(5, 12))]
    for spec, T in zip(specs, lengths):
        cfg = mdl.ModelConfig(seed=int(rng.integers(1 << 31)), **spec)
        model = mdl.init_model(cfg)
        for name, arr in model.params.items():
            if name.endswith(".biases"):
                arr[:] = rng.normal(0.0, 0.5, arr.shape)
        seq = rng.normal(size=(T, cfg.embedding_dim))
        cases.append((model, seq, int(rng.integers(cfg.num_classes))))
    return cases


def cmd_gradcheck(cfg: RunConfig, out) -> int:
    worst = 0.0
    for i, (model, seq, cls) in enumerate(gradcheck_cases(cfg.seed)):
        _, grads = mdl.model_gradients(model, seq, cls)
        numeric = mdl.finite_difference_gradients(model, seq, cls, eps=1e-5)
        err = max(relative_error(grads[k], numeric[k]) for k in grads)
        worst = max(worst, err)
        c = model.config
        print(f"case {i}: d={c.embedding_dim} sizes={list(c.filter_sizes)} groups={list(c.groups_per_size)} "
              f"group_size={c.group_size} T={seq.shape[0]} C={c.num_classes} "
              f"params={model.n_parameters()} max_rel_error={err:.3e}", file=out)
    status = "PASS" if worst <= GRADCHECK_TOLERANCE else "FAIL"
    print(f"{status} max_relative_error={worst:.3e} tolerance={GRADCHECK_TOLERANCE:.0e}", file=out)
    if status == "FAIL":
        raise CLIError("gradcheck", f"max relative error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:.0e}")
    return 0


# (row name, class names, gold counts per 10,000, predicted class, reported macro-F1, reported accuracy)
BASELINE_ROWS = [
    ("All NOT", ("NOT", "OFF"), (7209, 2791), 0, 0.4189, 0.7209),
    ("All OFF", ("NOT", "OFF"), (7209, 2791), 1, 0.2182, 0.2790),
    ("All TIN", ("TIN", "UNT"), (8875, 1125), 0, 0.4702, 0.8875),
    ("All UNT", ("TIN", "UNT"), (8875, 1125), 1, 0.1011, 0.1125),
    ("All GRP", ("GRP", "IND", "OTH"), (3662, 4695, 1643), 0, 0.1787, 0.3662),
    ("All IND", ("GRP", "IND", "OTH"), (3662, 4695, 1643), 1, 0.2130, 0.4695),
    ("All OTH", ("GRP", "IND", "OTH"), (3662, 4695, 1643), 2, 0.0941, 0.1643),
    ("HatEval MFC", ("NOT_HS", "HS"), (5790, 4210), None, 0.367, 0.579),
]


def synthesize(counts) -> list[Example]:
    return [Example(f"s{c}-{i}", "", c) for c, n in enumerate(counts) for i in range(n)]


def reproduce_baselines():
    """Yield (name, reported_f1, reported_acc, got_f1, got_acc, ok) for every baseline row."""
    for name, classes, counts, cls, f1, acc in BASELINE_ROWS:
        schema = LabelSchema(name, classes)
        data = synthesize(counts)
        if cls is None:
            predictor = ConstantClassifier("most_frequent", n_classes=len(classes)).fit(data, _labels(data))
        else:
            predictor = ConstantClassifier("constant", cls, len(classes)).fit()
        rep = evaluate(predictor, data, schema)
        ok = abs(rep.macro_f1 - f1) <= BASELINE_TOLERANCE and abs(rep.accuracy - acc) <= BASELINE_TOLERANCE
        yield name, f1, acc, rep.macro_f1, rep.accuracy, ok


def cmd_reproduce_baselines(cfg: RunConfig, out) -> int:
    failed = []
    for name, f1, acc, got_f1, got_acc, ok in reproduce_baselines():
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name} {f1:.4f} {acc:.4f} got {got_f1:.4f} {got_acc:.4f}", file=out)
        if not ok:
            failed.append(name)
    if failed:
        raise CLIError("assertion", f"baseline rows outside {BASELINE_TOLERANCE}: {', '.join(failed)}")
    return 0


HANDLERS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "gradcheck": cmd_gradcheck,
    "reproduce-baselines": cmd_reproduce_baselines,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mccnn", description="Grouped-softmax CNN text classifier toolkit.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--deterministic-output", action="store_true",
                        help="suppress timing lines so stdout is byte-stable")
    for f in fields(RunConfig):
        parser.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                            metavar=f.name.upper())
    return parser


def main(argv=None, out=None, environ=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    flags = {k: getattr(args, k) for k in RunConfig.keys()}
    start = time.perf_counter()
    try:
        cfg = resolve_config(args.config, flags, environ)
        status = HANDLERS[args.command](cfg, out)
    except CLIError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return 2 if exc.kind == "usage" else 1
    except (ValueError, KeyError, IndexError, FileNotFoundError) as exc:
        msg = str(exc).strip("'\"").replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    if not args.deterministic_output:
        print(f"elapsed_seconds={time.perf_counter() - start:.3f}", file=out)
    return status


if __name__ == "__main__":
    sys.exit(main())
