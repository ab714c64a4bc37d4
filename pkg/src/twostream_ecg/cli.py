"""Command-line front end: generate | preprocess | train | evaluate | predict.

Configuration is one JSON file (``--config``) plus flag overrides; flags
win.  The whole configuration is validated before anything is written.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import datasets as ds
from .annotations import format_annotations
from .errors import CheckpointError, DataError, EcgError, NumericError
from .framing import METHODS, frames_to_csv
from .metrics import confusion, report
from .models import MODEL_KINDS, FusionFC, IdentifiedStream, Module, TemporalStream
from .nn import checkpoint
from .nn.optim import LrSchedule
from .nn.ops import softmax
from .records import load_record, write_wfdb_record
from .training import (IDENTIFIED_BATCH, TEMPORAL_BATCH, TrainConfig, fused_probs, split_records,
                       train, train_fusion)

log = logging.getLogger("twostream_ecg")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("generate", "preprocess", "train", "evaluate", "predict")
MANIFEST = "manifest.csv"
PREPARED = "prepared.npz"
SYNTH_KEYS = {"preset", "classes", "records_per_class", "fs", "duration_s"}


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    data_dir: str | None = None
    out_dir: str | None = None
    seed: int = 0
    lead: int = 0
    method: str = "r_centered"
    model: str = "identified"
    task: str = "rhythm"
    labels: str = "record"  # record: one label per record; beat: annotation classes per beat
    peaks: str = "detect"  # detect | annotations
    epochs: int = 60
    batch_size: int | None = None  # default 1000 for the identified stream, 600 otherwise
    lr: float = 0.01
    lr_drop_factor: float = 0.1
    lr_drop_period: int = 20
    split: list = field(default_factory=lambda: [7, 2, 1])  # train : test : valid
    synthesis: dict = field(default_factory=dict)
    checkpoint: str | None = None
    init_checkpoint: str | None = None
    identified_checkpoint: str | None = None
    temporal_checkpoint: str | None = None
    record: str | None = None
    eval_split: str = "test"

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    @property
    def split_ratios(self) -> tuple[float, float, float]:
        total = float(sum(self.split))
        return tuple(v / total for v in self.split)

    def train_config(self) -> TrainConfig:
        batch = self.batch_size or (IDENTIFIED_BATCH if self.model == "identified" else TEMPORAL_BATCH)
        return TrainConfig(
            epochs=self.epochs, batch_size=batch, seed=self.seed, split=self.split_ratios, task=self.task,
            schedule=LrSchedule(self.lr, self.lr_drop_factor, self.lr_drop_period),
        )

    def validate(self, command: str) -> None:
        def need(key):
            if getattr(self, key) in (None, ""):
                raise ConfigError(f"{command} needs '{key}'")

        def choice(key, options):
            if getattr(self, key) not in options:
                raise ConfigError(f"{key} must be one of {', '.join(options)}, got {getattr(self, key)!r}")

        for key in ("seed", "lead", "epochs", "lr_drop_period"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"{key} must be a non-negative integer, got {v!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size is not None and (not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        for key in ("lr", "lr_drop_factor"):
            v = getattr(self, key)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not np.isfinite(v) or v < 0:
                raise ConfigError(f"{key} must be a non-negative number, got {v!r}")
        if (not isinstance(self.split, (list, tuple)) or len(self.split) != 3
                or any(not isinstance(v, (int, float)) or v < 0 for v in self.split) or sum(self.split) <= 0):
            raise ConfigError(f"split must be three non-negative numbers (train, test, valid), got {self.split!r}")
        choice("method", METHODS)
        choice("model", MODEL_KINDS)
        choice("task", ("rhythm", "identity"))
        choice("labels", ("record", "beat"))
        choice("peaks", ("detect", "annotations"))
        choice("eval_split", ("train", "test", "valid"))
        if self.labels == "beat" and self.model != "identified":
            raise ConfigError("beat-level labels are only supported for the identified stream")
        if self.task == "identity" and self.model != "identified":
            raise ConfigError("identity pre-training applies to the identified stream only")

        if command == "generate":
            need("data_dir")
            self.synthesis_params()
        elif command in ("preprocess", "train", "evaluate"):
            need("data_dir")
            if not (Path(self.data_dir) / MANIFEST).is_file():
                raise ConfigError(f"no {MANIFEST} in data_dir {self.data_dir}")
        if command == "train":
            need("out_dir")
            if self.model == "fusion_fc" or self.model == "fusion_avg":
                missing = [k for k in ("identified_checkpoint", "temporal_checkpoint") if not getattr(self, k)]
                if missing:
                    raise ConfigError(f"{self.model} needs both stream checkpoints; missing {', '.join(missing)}")
        if command == "evaluate":
            need("checkpoint")
            need("out_dir")
        if command == "predict":
            need("checkpoint")
            need("record")

    def synthesis_params(self):
        syn = dict(self.synthesis)
        unknown = sorted(set(syn) - SYNTH_KEYS)
        if unknown:
            raise ConfigError(f"unknown synthesis key(s): {', '.join(unknown)}")
        if ("preset" in syn) == ("classes" in syn):
            raise ConfigError("synthesis needs exactly one of 'preset' or 'classes'")
        if "preset" in syn:
            if syn["preset"] not in ds.TASKS:
                raise ConfigError(f"unknown preset {syn['preset']!r}; known: {', '.join(ds.TASKS)}")
            classes = ds.TASKS[syn["preset"]]
        else:
            try:
                classes = tuple(ds.ClassSpec.from_dict(c) for c in syn["classes"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad synthesis class: {exc}") from None
        if len({c.label for c in classes}) != len(classes):
            raise ConfigError("synthesis class labels must be unique")
        n = syn.get("records_per_class", 100)
        if not isinstance(n, int) or n < 1:
            raise ConfigError(f"records_per_class must be a positive integer, got {n!r}")
        try:
            params = ds.task_params(classes, n, self.seed, int(syn.get("fs", 500)),
                                    float(syn.get("duration_s", 10.0)))
            for p in params:
                p.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid synthesis parameters: {exc}") from None
        return params


# -- dataset helpers -------------------------------------------------------------------

def read_manifest(data_dir) -> list[tuple[str, str]]:
    text = (Path(data_dir) / MANIFEST).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0][:2]] != ["record", "label"]:
        raise DataError(f"{MANIFEST} must start with a 'record,label' header")
    out = [(r[0].strip(), r[1].strip() if len(r) > 1 else "") for r in rows[1:] if r]
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate record names in {MANIFEST}")
    return out


def manifest_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["record", "label"])
    w.writerows(rows)
    return buf.getvalue()


def _prepare_one(path, label, cfg: PipelineConfig) -> ds.PreparedRecord:
    rec = load_record(path, cfg.lead)
    return ds.prepare_record(rec, label, use_annotations=cfg.peaks == "annotations")


def prepared_dataset(cfg: PipelineConfig) -> list[ds.PreparedRecord]:
    """Prepared records for the manifest, from the preprocess cache when it matches."""
    rows = read_manifest(cfg.data_dir)
    base = Path(cfg.data_dir)
    cache = base / PREPARED
    want = {"lead": cfg.lead, "peaks": cfg.peaks, "manifest": rows}
    if cache.is_file():
        prepared, meta = ds.load_prepared(cache)
        if meta == json.loads(json.dumps(want)):
            return prepared
        log.info("ignoring stale %s", cache)
    missing = [n for n, _ in rows if not (base / f"{n}.hea").is_file()]
    if missing:
        raise DataError(f"missing record(s): {', '.join(missing)}")
    return [_prepare_one(base / n, lab or None, cfg) for n, lab in rows]


def class_names_for(prepared, cfg: PipelineConfig) -> list[str]:
    if cfg.task == "identity":
        return [p.name for p in prepared]
    if cfg.labels == "beat":
        labs = {b.label for p in prepared for b in p.beats}
    else:
        labs = {p.label for p in prepared}
    if None in labs:
        raise DataError("some records or beats have no label")
    return sorted(labs)


# -- model io ---------------------------------------------------------------------------

def _prefixed(prefix, state):
    return {f"{prefix}.{k}": v for k, v in state.items()}


def _unprefixed(prefix, params):
    p = prefix + "."
    return {k[len(p):]: v for k, v in params.items() if k.startswith(p)}


@dataclass
class LoadedModel:
    kind: str
    class_names: list[str]
    method: str
    meta: dict
    identified: IdentifiedStream | None = None
    temporal: TemporalStream | None = None
    fusion: FusionFC | None = None

    def probs(self, first_frames, sequences) -> np.ndarray:
        if self.kind == "identified":
            return _batched(self.identified, first_frames)
        if self.kind == "temporal":
            return _batched(self.temporal, sequences)
        return fused_probs(self.kind, self.identified, self.temporal, first_frames, sequences, self.fusion)


def _batched(model: Module, x, batch=1000):
    return np.concatenate([softmax(model.logits(x[i : i + batch])[0].data) for i in range(0, len(x), batch)])


def load_model(path) -> LoadedModel:
    try:
        params, meta = checkpoint.load(path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    kind = meta.get("kind")
    if kind not in MODEL_KINDS or "class_names" not in meta:
        raise CheckpointError(f"{path}: not a model checkpoint")
    names = list(meta["class_names"])
    m = LoadedModel(kind, names, meta.get("method", "r_centered"), meta)
    if kind in ("identified", "fusion_avg", "fusion_fc"):
        m.identified = IdentifiedStream(len(names))
        m.identified.load_state_dict(_unprefixed("identified", params))
    if kind in ("temporal", "fusion_avg", "fusion_fc"):
        m.temporal = TemporalStream(len(names))
        m.temporal.load_state_dict(_unprefixed("temporal", params))
    if kind == "fusion_fc":
        m.fusion = FusionFC(len(names))
        m.fusion.load_state_dict(_unprefixed("fusion", params))
    return m


def _check_classes(model: LoadedModel, names: list[str]) -> None:
    if model.class_names != names:
        raise DataError(f"checkpoint classes {model.class_names} do not match dataset classes {names}")


# -- commands ---------------------------------------------------------------------------

def cmd_generate(cfg: PipelineConfig) -> int:
    params = cfg.synthesis_params()
    out = Path(cfg.data_dir)
    rows = []
    for p in params:
        syn = ds.synthesize(p)
        header, data = write_wfdb_record(syn.record)
        checkpoint.atomic_write(out / f"{p.name}.hea", header)
        checkpoint.atomic_write(out / f"{p.name}.dat", data)
        checkpoint.atomic_write(out / f"{p.name}.ann", format_annotations((r, "N") for r in syn.r_peaks))
        rows.append((p.name, p.class_label))
    checkpoint.atomic_write(out / MANIFEST, manifest_csv(rows))
    log.info("wrote %d records to %s", len(rows), out)
    return EXIT_OK


def cmd_preprocess(cfg: PipelineConfig) -> int:
    rows = read_manifest(cfg.data_dir)
    base = Path(cfg.data_dir)
    missing = [n for n, _ in rows if not (base / f"{n}.hea").is_file()]
    if missing:
        raise DataError(f"missing record(s): {', '.join(missing)}")
    prepared = [_prepare_one(base / n, lab or None, cfg) for n, lab in rows]
    out = Path(cfg.out_dir or cfg.data_dir)
    ds.save_prepared(out / PREPARED, prepared, {"lead": cfg.lead, "peaks": cfg.peaks, "manifest": rows})
    checkpoint.atomic_write(out / "beats.csv", frames_to_csv([b for p in prepared for b in p.beats]))
    log.info("prepared %d records, %d beats", len(prepared), sum(len(p.beats) for p in prepared))
    return EXIT_OK


def _split(prepared, cfg: PipelineConfig) -> dict[str, list[str]]:
    names = [p.name for p in prepared]
    labels = None if cfg.labels == "beat" or cfg.task == "identity" else [p.label for p in prepared]
    return split_records(names, labels, cfg.split_ratios, cfg.seed)


def _identity_arrays(prepared, names, seed):
    """Beat-level 7:2:1 cut inside each record; class = record."""
    x, y, part = [], [], []
    from .rng import make_rng

    rng = make_rng(seed, 11)
    for k, p in enumerate(prepared):
        n = len(p.beats)
        order = rng.permutation(n)
        n_tr, n_te = int(round(0.7 * n)), int(round(0.2 * n))
        for rank, j in enumerate(order):
            x.append(p.beats[j].samples)
            y.append(k)
            part.append("train" if rank < n_tr else "test" if rank < n_tr + n_te else "valid")
    x, y, part = np.array(x), np.array(y), np.array(part)
    return {s: (x[part == s], y[part == s]) for s in ("train", "test", "valid")}


def _inputs(arrs: ds.ArraySet, cfg: PipelineConfig, kind: str):
    if cfg.labels == "beat":
        return arrs.beats, arrs.beat_labels
    x = arrs.first_frames if kind == "identified" else arrs.sequences[cfg.method]
    return x, arrs.labels


def cmd_train(cfg: PipelineConfig) -> int:
    tc = cfg.train_config()
    prepared = prepared_dataset(cfg)
    names = class_names_for(prepared, cfg)
    out = Path(cfg.out_dir)
    meta = {"kind": cfg.model, "class_names": names, "method": cfg.method, "seed": cfg.seed,
            "labels": cfg.labels, "task": cfg.task}

    if cfg.task == "identity":
        parts = _identity_arrays(prepared, names, cfg.seed)
        model = IdentifiedStream(len(names), seed=cfg.seed)
        result = train(model, parts["train"], parts["valid"], tc)
        meta["split"] = {"train": [p.name for p in prepared], "test": [], "valid": []}
        return _finish_train(out, model, _prefixed("identified", result.params), meta, result)

    split = _split(prepared, cfg)
    meta["split"] = split
    arrays = {}
    for part in ("train", "valid"):
        sub = ds.subset(prepared, split[part])
        if not sub:
            raise DataError(f"{part} split is empty")
        arrays[part] = ds.to_arrays(sub, names, beat_level=cfg.labels == "beat")

    if cfg.model in ("identified", "temporal"):
        if cfg.model == "identified":
            model = IdentifiedStream(len(names), seed=cfg.seed)
            if cfg.init_checkpoint:
                _init_from(model, cfg.init_checkpoint)
        else:
            model = TemporalStream(len(names), seed=cfg.seed)
        result = train(model, _inputs(arrays["train"], cfg, cfg.model), _inputs(arrays["valid"], cfg, cfg.model), tc)
        return _finish_train(out, model, _prefixed(cfg.model, result.params), meta, result)

    ident = load_model(cfg.identified_checkpoint)
    temp = load_model(cfg.temporal_checkpoint)
    for m, want in ((ident, "identified"), (temp, "temporal")):
        if m.kind != want:
            raise CheckpointError(f"expected a {want} checkpoint, got {m.kind}")
        _check_classes(m, names)
        if m.meta.get("split") != split:
            raise DataError(f"the {want} checkpoint was trained on a different split")
    meta["method"] = temp.method
    params = {**_prefixed("identified", ident.identified.state_dict()),
              **_prefixed("temporal", temp.temporal.state_dict())}
    if cfg.model == "fusion_avg":
        checkpoint.atomic_write(out / "split.json", json.dumps(split, indent=2) + "\n")
        checkpoint.save(out / f"{cfg.model}.ckpt", params, meta)
        return EXIT_OK
    tr, va = arrays["train"], arrays["valid"]
    fusion, result = train_fusion(
        ident.identified, temp.temporal,
        (tr.first_frames, tr.sequences[temp.method], tr.labels),
        (va.first_frames, va.sequences[temp.method], va.labels), tc,
    )
    params.update(_prefixed("fusion", result.params))
    return _finish_train(out, fusion, params, meta, result)


def _init_from(model: IdentifiedStream, path) -> None:
    """Start from an identity-pretrained stream; the output layer is re-initialised."""
    src = load_model(path)
    if src.identified is None:
        raise CheckpointError(f"{path} holds no identified stream")
    state = src.identified.state_dict()
    for k in ("fc2.W", "fc2.b"):
        state[k] = model.params[k].data
    model.load_state_dict(state)


def _finish_train(out: Path, model, params, meta, result) -> int:
    checkpoint.atomic_write(out / "history.csv", result.history_csv())
    checkpoint.atomic_write(out / "split.json", json.dumps(meta["split"], indent=2) + "\n")
    meta = {**meta, "best_epoch": result.best_epoch, "best_valid_loss": result.best_valid_loss}
    checkpoint.save(out / f"{meta['kind']}.ckpt", params, meta)
    log.info("best epoch %d valid loss %.4f", result.best_epoch, result.best_valid_loss)
    return EXIT_OK


def cmd_evaluate(cfg: PipelineConfig) -> int:
    model = load_model(cfg.checkpoint)
    prepared = prepared_dataset(cfg)
    labels = model.meta.get("labels", "record")
    names = class_names_for(prepared, PipelineConfig(labels=labels, task=model.meta.get("task", "rhythm")))
    _check_classes(model, names)
    split = model.meta.get("split")
    if not split:
        raise CheckpointError("checkpoint carries no split manifest")
    chosen = split[cfg.eval_split]
    if cfg.eval_split != "train" and set(chosen) & set(split["train"]):
        raise DataError("evaluation split overlaps the training records")
    sub = ds.subset(prepared, chosen)
    if not sub:
        raise DataError(f"{cfg.eval_split} split is empty")
    arrs = ds.to_arrays(sub, names, beat_level=labels == "beat")
    if labels == "beat":
        probs = _batched(model.identified, arrs.beats)
        truth, ids = arrs.beat_labels, [f"{arrs.names[r]}:{k}" for k, r in enumerate(arrs.beat_records)]
    else:
        probs = model.probs(arrs.first_frames, arrs.sequences[model.method])
        truth, ids = arrs.labels, arrs.names
    pred = np.argmax(probs, axis=1)
    cm = confusion(truth, pred, len(names), names)
    rep = report(cm)
    out = Path(cfg.out_dir)
    checkpoint.atomic_write(out / "report.csv", rep.to_csv())
    checkpoint.atomic_write(out / "report.json", rep.to_json())
    checkpoint.atomic_write(out / "confusion.csv", cm.to_csv())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["item", "true", "predicted", *[f"p_{n}" for n in names]])
    for i, t, p, pr in zip(ids, truth, pred, probs):
        w.writerow([i, names[t], names[p], *[repr(float(v)) for v in pr]])
    checkpoint.atomic_write(out / "predictions.csv", buf.getvalue())
    log.info("accuracy %.4f on %d items", rep.overall.accuracy, cm.total)
    return EXIT_OK


def cmd_predict(cfg: PipelineConfig, stream=None) -> int:
    model = load_model(cfg.checkpoint)
    path = Path(cfg.record)
    base = path.with_suffix("") if path.suffix in {".hea", ".dat", ".ann"} else path
    try:
        prep = _prepare_one(base, None, cfg)
    except OSError as exc:
        raise DataError(f"cannot read record {cfg.record}: {exc}") from None
    if not prep.beats:
        raise DataError(f"no usable beat found in {prep.name}")
    probs = model.probs(prep.first_frame[None], prep.sequence(model.method)[None])[0]
    k = int(np.argmax(probs))
    line = {"record": prep.name, "class_name": model.class_names[k],
            "probs": {n: float(p) for n, p in zip(model.class_names, probs)}}
    (stream or sys.stdout).write(json.dumps(line) + "\n")
    return EXIT_OK


HANDLERS = {"generate": cmd_generate, "preprocess": cmd_preprocess, "train": cmd_train,
            "evaluate": cmd_evaluate, "predict": cmd_predict}


# -- argument parsing -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twostream-ecg", description="Two-stream ECG classification toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--model", choices=MODEL_KINDS)
        p.add_argument("--lead", type=int)
        p.add_argument("--data-dir", dest="data_dir")
        p.add_argument("--out-dir", dest="out_dir")
        if name == "train":
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", dest="batch_size", type=int)
            p.add_argument("--identified-checkpoint", dest="identified_checkpoint")
            p.add_argument("--temporal-checkpoint", dest="temporal_checkpoint")
            p.add_argument("--init-checkpoint", dest="init_checkpoint")
        if name in ("evaluate", "predict"):
            p.add_argument("--checkpoint")
        if name == "evaluate":
            p.add_argument("--split", dest="eval_split", choices=("train", "test", "valid"))
        if name == "predict":
            p.add_argument("record", nargs="?")
    return parser


OVERRIDES = ("seed", "method", "model", "lead", "data_dir", "out_dir", "epochs", "batch_size",
             "identified_checkpoint", "temporal_checkpoint", "init_checkpoint", "checkpoint",
             "eval_split", "record")


def load_config(args) -> PipelineConfig:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    for key in OVERRIDES:
        v = getattr(args, key, None)
        if v is not None:
            raw[key] = v
    try:
        cfg = PipelineConfig.from_dict(raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate(args.command)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EcgError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
