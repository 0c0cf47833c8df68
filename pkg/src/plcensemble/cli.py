"""Command-line front end: simulate, train, predict, evaluate, compare.

Exit codes: 0 ok, 2 usage or invalid configuration, 3 I/O failure (missing,
unwritable or malformed files), 4 data mismatch (wrong column count).

Every command accepts ``--config FILE`` with flat ``key = value`` lines.
Keys are the long flag names with dashes turned into underscores
(``strategy``, ``resamples``, ...) plus dotted detector keys such as
``ocsvm.nu``, ``ocnn.epochs`` or ``iforest.contamination``. Explicit flags win
over the file.

All randomness descends from ``--seed``: each component draws from
``derive_seed(seed, name)`` (SeedSequence over the seed and a CRC-32 of the
component name), so e.g. the OCNN initialisation does not move when the
isolation-forest settings change.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import fields
from pathlib import Path

from . import ensemble as ens
from .dataset import (
    DEFAULT_CYCLE,
    FEATURE_NAMES,
    LabeledSet,
    load_csv,
    make_paper_splits,
    standard_test_configs,
    read_keyvalue_file,
    write_csv,
)
from .detectors import IforestParams, OcnnParams, OcsvmParams
from .errors import (
    DimensionMismatch,
    EmptyFile,
    InvalidConfig,
    InvalidParams,
    LengthMismatch,
    MalformedCsv,
    ModelFormatError,
    NonConvergence,
)
from .evaluation import compare_models, confusion, histogram_export, metrics, training_flag_bound
from .seeding import derive_seed

logger = logging.getLogger("plcensemble")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MISMATCH = 0, 2, 3, 4

_PARAM_TYPES = {"ocsvm": OcsvmParams, "ocnn": OcnnParams, "iforest": IforestParams, "meta": IforestParams}
_SCALAR_KEYS = {
    "seed": int,
    "out": str,
    "cycle_length_ticks": int,
    "strategy": str,
    "learner": str,
    "ridge_lambda": float,
    "knn_k": int,
    "resamples": int,
    "bins": int,
    "hist": str,
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration


def _coerce(section: str, name: str, raw: str):
    cls = _PARAM_TYPES[section]
    types = {f.name: f.type for f in fields(cls)}
    if name not in types:
        raise InvalidConfig(f"unknown key {section}.{name}")
    t = str(types[name])
    if raw.strip().lower() in ("none", "") and "None" in t:
        return None
    try:
        return int(raw) if t.startswith("int") else float(raw)
    except ValueError:
        raise InvalidConfig(f"{section}.{name}: cannot parse {raw!r}") from None


def load_run_config(path: str | None) -> dict:
    """Parse a key=value file into scalar keys and per-detector override dicts."""
    conf: dict = {section: {} for section in _PARAM_TYPES}
    if path is None:
        return conf
    for key, raw in read_keyvalue_file(path).items():
        if "." in key:
            section, name = key.split(".", 1)
            if section not in _PARAM_TYPES:
                raise InvalidConfig(f"unknown config section {section!r}")
            conf[section][name] = _coerce(section, name, raw)
        elif key in _SCALAR_KEYS:
            try:
                conf[key] = _SCALAR_KEYS[key](raw)
            except ValueError:
                raise InvalidConfig(f"{key}: cannot parse {raw!r}") from None
        else:
            raise InvalidConfig(f"unknown config key {key!r}")
    return conf


def _setting(args, conf: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return conf.get(key, default)


def _detector_params(conf: dict, seed: int) -> ens.DetectorParams:
    try:
        return ens.DetectorParams(
            ocsvm=OcsvmParams(**conf["ocsvm"]),
            ocnn=OcnnParams(**{"rng_seed": derive_seed(seed, "ocnn"), **conf["ocnn"]}),
            iforest=IforestParams(**{"rng_seed": derive_seed(seed, "iforest"), **conf["iforest"]}),
        )
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from exc


def _strategy(args, conf: dict, seed: int) -> ens.VotingStrategy:
    name = _setting(args, conf, "strategy", "stacking")
    aliases = {"max": "maxscore", "wv": "weighted", "soft_voting": "soft"}
    name = aliases.get(name, name)
    if name.startswith("wv-"):
        name, learner = "weighted", name[3:]
    else:
        learner = _setting(args, conf, "learner", "ols")
    try:
        meta = IforestParams(**{"rng_seed": derive_seed(seed, "meta_iforest"), **conf["meta"]})
        return ens.VotingStrategy(
            kind=ens.StrategyKind(name),
            learner=ens.WeightLearner(learner),
            ridge_lambda=float(_setting(args, conf, "ridge_lambda", 1.0)),
            knn_k=int(_setting(args, conf, "knn_k", 5)),
            meta=meta,
        )
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc


# ---------------------------------------------------------------------------
# file helpers


def _read_csv(path: str) -> LabeledSet:
    try:
        return load_csv(path)
    except (OSError, MalformedCsv, EmptyFile) as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc


def _read_model(path: str) -> ens.EnsembleModel:
    try:
        return ens.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ModelFormatError) as exc:
        raise CliError(EXIT_IO, f"cannot read model {path}: {exc}") from exc


def _write_text(path: str | Path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _check_width(model: ens.EnsembleModel, data: LabeledSet, path: str) -> None:
    if data.X.shape[1] != model.feature_count:
        raise DimensionMismatch(
            f"{path} has {data.X.shape[1]} feature columns, model expects {model.feature_count}"
        )


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, conf: dict) -> int:
    seed = int(_setting(args, conf, "seed", 0))
    out = Path(_setting(args, conf, "out", "data"))
    cycle = int(_setting(args, conf, "cycle_length_ticks", DEFAULT_CYCLE))
    train, tests = make_paper_splits(seed, cycle)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "train.csv", train)
        for i, ts in enumerate(tests, start=1):
            write_csv(out / f"test{i}.csv", ts)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write to {out}: {exc}") from exc
    print(f"train.csv: {train.n_samples} rows")
    for i, ts in enumerate(tests, start=1):
        print(f"test{i}.csv: {ts.n_samples} rows, {ts.n_anomalies} anomalies")
    return EXIT_OK


def cmd_train(args, conf: dict) -> int:
    seed = int(_setting(args, conf, "seed", 0))
    strategy = _strategy(args, conf, seed)
    params = _detector_params(conf, seed)
    out = _setting(args, conf, "out", "model.json")
    data = _read_csv(args.train)
    if data.n_anomalies:
        print(
            f"warning: {args.train} has {data.n_anomalies} rows labeled anomalous; "
            "labels are ignored (unsupervised fit on all rows)",
            file=sys.stderr,
        )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = ens.fit_ensemble(data.X, strategy, params)
    for w in caught:
        kind = "did not converge" if issubclass(w.category, NonConvergence) else "warning"
        print(f"warning: {kind}: {w.message}", file=sys.stderr)
    _write_text(out, ens.dumps(model))
    print(f"strategy: {strategy.name}")
    for d, fr in zip(model.detectors, model.ranges):
        print(f"{d.kind.value}: training score range [{fr.min:.6g}, {fr.max:.6g}]")
    if model.weights is not None:
        print("weights: " + ", ".join(f"{d.kind.value}={w:.6f}" for d, w in zip(model.detectors, model.weights)))
    if model.meta is not None:
        m = model.meta.params
        print(f"meta-detector: iforest n_estimators={m.n_estimators} max_samples={m.max_samples} contamination={m.contamination}")
    print(f"model written to {out}")
    return EXIT_OK


def cmd_predict(args, conf: dict) -> int:
    model = _read_model(args.model)
    data = _read_csv(args.data)
    _check_width(model, data, args.data)
    labels, final = ens.predict_ensemble(model, data.X)
    lines = ["label,score"] + [f"{int(lab)},{s!r}" for lab, s in zip(labels, final.tolist())]
    text = "\n".join(lines) + "\n"
    out = _setting(args, conf, "out", None)
    if out:
        _write_text(out, text)
        print(f"{labels.sum()} of {labels.size} rows flagged anomalous; predictions written to {out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args, conf: dict) -> int:
    model = _read_model(args.model)
    data = _read_csv(args.data)
    _check_width(model, data, args.data)
    labels, final = ens.predict_ensemble(model, data.X)
    c = confusion(data.labels, labels)
    counts_report = metrics(c)
    print(f"strategy: {model.strategy.name}")
    print(f"TP={c.tp} TN={c.tn} FP={c.fp} FN={c.fn}")
    for name, value in counts_report.as_dict().items():
        print(f"{name}: {value:.6f}")
    if counts_report.undefined:
        print("undefined (reported as 0): " + ", ".join(counts_report.undefined))
    n_normal = c.tp + c.fn
    fn_rate = c.fn / n_normal if n_normal else 0.0
    print(f"fn_rate: {fn_rate:.6f} (bound on training data: {training_flag_bound(model):.6f})")
    hist = _setting(args, conf, "hist", None)
    if hist:
        export = histogram_export(final, data.labels, labels, int(_setting(args, conf, "bins", 20)))
        try:
            export.to_csv(hist)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {hist}: {exc}") from exc
        print(f"histogram written to {hist}")
    return EXIT_OK


def cmd_compare(args, conf: dict) -> int:
    if len(args.models) < 2:
        raise CliError(EXIT_USAGE, "compare needs at least two model files")
    seed = int(_setting(args, conf, "seed", 0))
    resamples = int(_setting(args, conf, "resamples", 20))
    cycle = int(_setting(args, conf, "cycle_length_ticks", DEFAULT_CYCLE))
    models = [_read_model(p) for p in args.models]
    widths = {m.feature_count for m in models}
    if widths != {len(FEATURE_NAMES)}:
        raise DimensionMismatch(f"models expect {sorted(widths)} features; synthetic test sets have {len(FEATURE_NAMES)}")
    names = [f"{Path(p).stem}:{m.strategy.name}" for p, m in zip(args.models, models)]
    try:
        result = compare_models(models, standard_test_configs(seed, cycle), resamples, seed, names)
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
    print(f"{result.resamples} replicates x {result.n_specs} test-set specs")
    print(result.to_text())
    out = _setting(args, conf, "out", None)
    if out:
        try:
            result.to_csv(out)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {out}: {exc}") from exc
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--config", default=None, help="key=value config file; flags override it")
    common.add_argument("--out", default=None, help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="plcensemble", description="Score-level anomaly-detection ensembles for PLC telemetry.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write synthetic train.csv and test1..5.csv")
    p.add_argument("--cycle-length-ticks", dest="cycle_length_ticks", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="fit an ensemble on a CSV of normal rows")
    p.add_argument("train", help="training CSV")
    p.add_argument("--strategy", default=None, help="majority | maxscore | soft | weighted | stacking (default) | wv-<learner>")
    p.add_argument("--learner", default=None, help="weight learner for weighted voting: rmse | ols | ridge | knn")
    p.add_argument("--ridge-lambda", dest="ridge_lambda", type=float, default=None)
    p.add_argument("--knn-k", dest="knn_k", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="label rows of a CSV with a trained model")
    p.add_argument("model")
    p.add_argument("data")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="metrics of a model on a labeled CSV")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--hist", default=None, help="write the score histogram CSV here")
    p.add_argument("--bins", type=int, default=None, help="histogram bins (default 20)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[common], help="compare models on resampled synthetic test sets")
    p.add_argument("models", nargs="+")
    p.add_argument("--resamples", type=int, default=None, help="replicates per test-set spec (default 20)")
    p.add_argument("--cycle-length-ticks", dest="cycle_length_ticks", type=int, default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        conf = load_run_config(args.config)
        return args.func(args, conf)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InvalidConfig, InvalidParams) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DimensionMismatch, LengthMismatch) as exc:
        print(f"error: data mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
