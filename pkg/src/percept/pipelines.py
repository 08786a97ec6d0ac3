"""The three model recipes, end-to-end training/evaluation runs and model files."""

import json
import logging
import os
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import audio, imaging
from .audio import FeatureScaler, MfccConfig
from .layers import (
    LSTM,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    Network,
    ReLU,
    Softmax,
    build_params,
    infer_shapes,
    spec_from_dict,
    spec_to_dict,
)
from .metrics import Metrics, confusion_matrix, metrics_from_confusion
from .tensor import Prng
from .training import Adam, EarlyStopper, fit, split_dataset, write_history_csv

log = logging.getLogger(__name__)

TASKS = ("eye", "fer", "speaker")
LOSS_KIND = {"eye": "binary", "fer": "categorical", "speaker": "sparse"}


class DataError(Exception):
    """Dataset missing, unreadable or unusable for the requested task."""


# ---------------------------------------------------------------- architectures


def build_eye_model(input_size=64):
    if input_size % 4:
        raise ValueError("eye input size must be divisible by 4")
    return [
        Conv2D(16, 3, 3, 1, "same"), ReLU(), MaxPool2D(2, 2),
        Conv2D(32, 3, 3, 1, "same"), ReLU(), MaxPool2D(2, 2),
        Flatten(), Dense(64), ReLU(), Dropout(0.5), Dense(2), Softmax(),
    ]


def build_fer_model(n_classes=7):
    return [
        Conv2D(32, 3, 3, 1, "same"), BatchNorm(), ReLU(), MaxPool2D(2, 2),
        Conv2D(64, 3, 3, 1, "same"), BatchNorm(), ReLU(), MaxPool2D(2, 2),
        Flatten(), Dense(128), ReLU(), Dropout(0.5), Dense(n_classes), Softmax(),
    ]


def build_speaker_model(n_coeffs=13, n_speakers=5):
    if n_speakers < 2:
        raise ValueError("speaker identification needs at least 2 speakers")
    return [LSTM(128), Dense(64), ReLU(), Dense(n_speakers), Softmax()]


# ---------------------------------------------------------------- configuration


TASK_DEFAULTS = {
    "eye": {"epochs": 15, "batch_size": 32, "augment": True, "patience": None},
    "fer": {"epochs": 20, "batch_size": 64, "augment": False, "patience": None},
    "speaker": {"epochs": 30, "batch_size": 32, "augment": False, "patience": 5},
}


@dataclass
class PipelineConfig:
    task: str
    data: str
    seed: int
    epochs: int = None
    batch_size: int = None
    split: tuple = (0.7, 0.15, 0.15)
    augment: bool = None
    augment_params: imaging.AugmentParams = field(default_factory=imaging.AugmentParams)
    lr: float = 1e-3
    patience: int = None
    min_delta: float = 0.0
    image_size: int = 64
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    feature_cache: str = None
    layers: list = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        for key, value in TASK_DEFAULTS[self.task].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        self.split = tuple(self.split)

    def snapshot(self):
        d = asdict(self)
        d["split"] = list(self.split)
        d["augment_params"]["zoom_range"] = list(self.augment_params.zoom_range)
        return d


def config_from_snapshot(d):
    d = dict(d)
    d["mfcc"] = MfccConfig(**d["mfcc"])
    ap = dict(d["augment_params"])
    ap["zoom_range"] = tuple(ap["zoom_range"])
    d["augment_params"] = imaging.AugmentParams(**ap)
    d["split"] = tuple(d["split"])
    return PipelineConfig(**d)


def model_specs(config, n_classes, n_coeffs=13):
    if config.layers:
        return [spec_from_dict(d) for d in config.layers]
    if config.task == "eye":
        return build_eye_model(config.image_size)
    if config.task == "fer":
        return build_fer_model(n_classes)
    return build_speaker_model(n_coeffs, n_classes)


# ---------------------------------------------------------------- datasets


@dataclass
class Dataset:
    task: str
    x: np.ndarray
    labels: np.ndarray
    label_names: list
    splits: tuple = None
    scaler: FeatureScaler = None
    seq_len: int = None
    diagnostics: list = field(default_factory=list)


def detect_task(path):
    """Guess the task a dataset file belongs to from its content."""
    try:
        with open(path, newline="") as fh:
            header = fh.readline().strip()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if header == "emotion,pixels,Usage":
        return "fer"
    if header == "path,label":
        rows = imaging.read_manifest(path)
        if not rows:
            raise DataError(f"{path}: manifest lists no files")
        ext = os.path.splitext(rows[0][0])[1].lower()
        if ext == ".wav":
            return "speaker"
        if ext == ".pgm":
            return "eye"
    raise DataError(f"{path}: cannot tell which task this dataset belongs to")


def _manifest(path):
    try:
        rows = imaging.read_manifest(path)
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: manifest lists no files")
    return rows


def load_eye_dataset(path, image_size=64):
    rows = _manifest(path)
    names = sorted({label for _, label in rows})
    images, labels = [], []
    for p, label in rows:
        try:
            img = imaging.read_pgm(p)
        except (OSError, imaging.PgmError) as exc:
            raise DataError(f"cannot read image {p}: {exc}") from exc
        images.append(imaging.resize_bilinear(img, image_size, image_size))
        labels.append(names.index(label))
    return Dataset("eye", np.stack(images)[:, None].astype(np.float32), np.array(labels), names)


def load_fer_dataset(path):
    try:
        with open(path) as fh:
            records, errors = imaging.parse_fer_csv(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read FER csv {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    diagnostics = [f"{path}:{line}: {msg}" for line, msg in errors]
    for d in diagnostics:
        log.warning(d)
    if not records:
        raise DataError(f"{path}: no valid FER rows")
    x = np.stack([r.image for r in records])[:, None].astype(np.float32)
    labels = np.array([r.emotion for r in records])
    return Dataset("fer", x, labels, list(imaging.FER_EMOTIONS), diagnostics=diagnostics)


def clip_features(rows, mfcc_config):
    """MFCC matrices (float32) for every readable clip; unreadable clips become diagnostics."""
    names = sorted({label for _, label in rows})
    feats, labels, diagnostics = [], [], []
    for p, label in rows:
        try:
            buf = audio.read_wav(p)
            feats.append(audio.mfcc(buf, mfcc_config).astype(np.float32))
        except (OSError, ValueError) as exc:
            diagnostics.append(f"skipped {p}: {exc}")
            log.warning("skipped %s: %s", p, exc)
            continue
        labels.append(names.index(label))
    labels = np.array(labels, dtype=np.int64)
    missing = [n for k, n in enumerate(names) if not np.any(labels == k)]
    if missing:
        raise DataError(f"no readable clips for class(es) {missing}")
    return feats, labels, names, diagnostics


def fit_speaker_scaler(feats, train_idx):
    rows = np.concatenate([feats[i] for i in train_idx], axis=0)
    sc = audio.scaler_fit(rows)
    # round to the float32 values a model file stores so reloaded models scale identically
    return FeatureScaler(sc.mean.astype(np.float32).astype(np.float64), sc.std.astype(np.float32).astype(np.float64))


def speaker_inputs(feats, scaler, seq_len):
    """Scale each clip, then truncate or zero-pad it to ``seq_len`` frames."""
    n_coeffs = feats[0].shape[1]
    x = np.zeros((len(feats), seq_len, n_coeffs), dtype=np.float32)
    for i, f in enumerate(feats):
        scaled = audio.scaler_transform(scaler, f)[:seq_len]
        x[i, :scaled.shape[0]] = scaled
    return x


def median_length(feats):
    return int(sorted(f.shape[0] for f in feats)[len(feats) // 2])


def featurize_speaker_dataset(rows, mfcc_config, split=(0.7, 0.15, 0.15), split_seed=0, cache_path=None,
                              scaler=None, seq_len=None):
    """Per-clip MFCC sequences, scaled with a scaler fitted on the training split only.

    A given ``scaler``/``seq_len`` (from a trained model) is applied as is.
    """
    feats = labels = names = None
    diagnostics = []
    if cache_path and os.path.exists(cache_path):
        records = audio.read_feature_cache(cache_path)
        feats = [f for _, f in records]
        labels = np.array([lab for lab, _ in records], dtype=np.int64)
        names = sorted({label for _, label in rows})
    else:
        feats, labels, names, diagnostics = clip_features(rows, mfcc_config)
        if cache_path:
            audio.write_feature_cache(cache_path, zip(labels, feats))
    splits = split_dataset(labels, split, split_seed, n_classes=len(names))
    if scaler is None:
        scaler = fit_speaker_scaler(feats, splits[0])
    seq_len = seq_len or median_length(feats)
    x = speaker_inputs(feats, scaler, seq_len)
    return Dataset("speaker", x, labels, names, splits, scaler, seq_len, diagnostics)


def load_dataset(config, split_seed, scaler=None, seq_len=None):
    if not os.path.exists(config.data):
        raise DataError(f"dataset path {config.data} does not exist")
    if config.task == "speaker":
        ds = featurize_speaker_dataset(
            _manifest(config.data), config.mfcc, config.split, split_seed, config.feature_cache, scaler, seq_len
        )
        return ds
    ds = load_eye_dataset(config.data, config.image_size) if config.task == "eye" else load_fer_dataset(config.data)
    ds.splits = split_dataset(ds.labels, config.split, split_seed, n_classes=len(ds.label_names))
    return ds


# ---------------------------------------------------------------- models & reports


@dataclass
class TrainedModel:
    task: str
    specs: list
    params: list
    label_names: list
    input_shape: tuple
    scaler: FeatureScaler = None
    config: dict = field(default_factory=dict)

    def network(self):
        return Network(self.specs, self.input_shape, params=self.params)

    def predict_proba(self, x, batch_size=256):
        return self.network().predict(np.asarray(x, dtype=np.float32), batch_size)


@dataclass
class EvalReport:
    confusion: np.ndarray
    metrics: Metrics
    label_names: list
    samples: list

    def to_dict(self):
        d = {"labels": list(self.label_names), **self.metrics.to_dict(self.label_names)}
        d["confusion"] = self.confusion.tolist()
        d["samples"] = [{"true": t, "predicted": p, "confidence": c} for t, p, c in self.samples]
        return d


def evaluate_model(model, x, labels):
    p = model.predict_proba(x)
    pred = np.argmax(p, axis=1)
    cm = confusion_matrix(labels, pred, len(model.label_names))
    samples = [(int(t), int(k), float(p[i, k])) for i, (t, k) in enumerate(zip(labels, pred))]
    return EvalReport(cm, metrics_from_confusion(cm), list(model.label_names), samples)


def confusion_pgm(cm, cell=32):
    """Row-normalised heat map, ``cell`` pixels per matrix entry."""
    cm = np.asarray(cm, dtype=np.float64)
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    gray = np.round(255.0 * norm).astype(np.uint8)
    return imaging.encode_pgm(np.kron(gray, np.ones((cell, cell), dtype=np.uint8)))


def write_report(report, out_dir, task=None):
    os.makedirs(out_dir, exist_ok=True)
    d = report.to_dict()
    if task:
        d = {"task": task, **d}
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(d, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "confusion.csv"), "w") as fh:
        fh.write("true\\predicted," + ",".join(report.label_names) + "\n")
        for name, row in zip(report.label_names, report.confusion):
            fh.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
    with open(os.path.join(out_dir, "confusion.pgm"), "wb") as fh:
        fh.write(confusion_pgm(report.confusion))


def read_confusion_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    return np.array([[int(v) for v in line.split(",")[1:]] for line in lines[1:]], dtype=np.int64)


# ---------------------------------------------------------------- runs


@dataclass
class RunResult:
    model: TrainedModel
    history: list
    report: EvalReport
    fit: object
    dataset: Dataset


def _seeds(seed):
    master = Prng(seed)
    return master.next_u64(), master.spawn(), master.spawn()


def run_training(config, out_dir=None):
    """Split, train, evaluate on the test split and optionally write every artifact."""
    split_seed, init_prng, train_prng = _seeds(config.seed)
    ds = load_dataset(config, split_seed)
    train_idx, val_idx, test_idx = ds.splits
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise DataError("training or test split is empty")
    n_classes = len(ds.label_names)
    specs = model_specs(config, n_classes, ds.x.shape[-1])
    input_shape = ds.x.shape[1:]
    net = Network(specs, input_shape, init_prng)
    if net.output_shape != (n_classes,):
        raise ValueError(f"network emits {net.output_shape}, dataset has {n_classes} classes")

    stopper = None
    if config.patience is not None and config.patience >= 0 and len(val_idx):
        stopper = EarlyStopper(config.patience, config.min_delta, initial_params=net.params)
    augment = None
    if config.augment and config.task in ("eye", "fer"):
        params = config.augment_params

        def augment(batch, prng):
            return imaging.augment_batch(batch, params, prng)

    result = fit(
        net,
        (ds.x[train_idx], ds.labels[train_idx]),
        (ds.x[val_idx], ds.labels[val_idx]),
        LOSS_KIND[config.task],
        Adam(lr=config.lr),
        config.epochs,
        config.batch_size,
        train_prng,
        stopper=stopper,
        augment=augment,
    )
    snap = config.snapshot()
    if ds.seq_len is not None:
        snap["seq_len"] = ds.seq_len
    model = TrainedModel(config.task, specs, net.params, ds.label_names, tuple(input_shape), ds.scaler, snap)
    report = evaluate_model(model, ds.x[test_idx], ds.labels[test_idx])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_model(model, os.path.join(out_dir, "model.prcp"))
        write_history_csv(result.history, os.path.join(out_dir, "history.csv"))
        write_report(report, out_dir, config.task)
    return RunResult(model, result.history, report, result, ds)


def evaluate_on_dataset(model, data_path):
    """Re-create the model's split of ``data_path`` and score its test part."""
    task = detect_task(data_path)
    if task != model.task:
        raise DataError(f"model was trained for task {model.task!r} but the dataset is a {task!r} dataset")
    config = config_from_snapshot({k: v for k, v in model.config.items() if k != "seq_len"})
    config = replace(config, data=data_path)
    split_seed, _, _ = _seeds(config.seed)
    ds = load_dataset(config, split_seed, scaler=model.scaler, seq_len=model.config.get("seq_len"))
    if list(ds.label_names) != list(model.label_names):
        raise DataError(f"dataset labels {ds.label_names} differ from model labels {model.label_names}")
    test_idx = ds.splits[2]
    if len(test_idx) == 0:
        raise DataError("test split is empty")
    return evaluate_model(model, ds.x[test_idx], ds.labels[test_idx])


# ---------------------------------------------------------------- model files


MODEL_MAGIC = b"PRCP"
MODEL_VERSION = 1


class ModelFileError(ValueError):
    pass


class BadMagic(ModelFileError):
    pass


class UnsupportedVersion(ModelFileError):
    pass


class CorruptModel(ModelFileError):
    pass


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _named_tensors(model):
    out = []
    for i, params in enumerate(model.params):
        for name, arr in params.items():
            out.append((f"layer{i}.{name}", arr))
    if model.scaler is not None:
        out.append(("scaler.mean", model.scaler.mean))
        out.append(("scaler.std", model.scaler.std))
    return out


def encode_model(model):
    parts = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION), _pack_str(model.task)]
    parts.append(struct.pack("<I", len(model.specs)))
    parts += [_pack_str(json.dumps(spec_to_dict(s), sort_keys=True)) for s in model.specs]
    parts.append(struct.pack("<I", len(model.label_names)))
    parts += [_pack_str(n) for n in model.label_names]
    meta = {"input_shape": list(model.input_shape), "config": model.config}
    parts.append(_pack_str(json.dumps(meta, sort_keys=True)))
    tensors = _named_tensors(model)
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        arr = np.asarray(arr, dtype="<f4")
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def save_model(model, path):
    data = encode_model(model)
    with open(path, "wb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CorruptModel(f"model file truncated at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def string(self):
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptModel(f"invalid UTF-8 in model file: {exc}") from None


def decode_model(data):
    r = _Reader(bytes(data))
    if len(data) < 4 or r.take(4) != MODEL_MAGIC:
        raise BadMagic("not a model file (bad magic)")
    version = r.u32()
    if version != MODEL_VERSION:
        raise UnsupportedVersion(f"unsupported model file version {version}")
    task = r.string()
    try:
        specs = [spec_from_dict(json.loads(r.string())) for _ in range(r.u32())]
        labels = [r.string() for _ in range(r.u32())]
        meta = json.loads(r.string())
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise CorruptModel(f"bad layer table or metadata: {exc}") from None
    tensors = {}
    for _ in range(r.u32()):
        name = r.string()
        ndim = r.u32()
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        count = int(np.prod(dims)) if ndim else 1
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(r.data):
        raise CorruptModel("trailing bytes after the last tensor")

    input_shape = tuple(meta["input_shape"])
    try:
        expected = build_params(specs, input_shape, Prng(0))
        infer_shapes(specs, input_shape)
    except ValueError as exc:
        raise CorruptModel(f"inconsistent layer table: {exc}") from None
    params = []
    for i, exp in enumerate(expected):
        layer = {}
        for name, ref in exp.items():
            key = f"layer{i}.{name}"
            if key not in tensors:
                raise CorruptModel(f"missing tensor {key}")
            if tensors[key].shape != ref.shape:
                raise CorruptModel(f"tensor {key} has shape {tensors[key].shape}, expected {ref.shape}")
            layer[name] = tensors.pop(key)
        params.append(layer)
    scaler = None
    if "scaler.mean" in tensors:
        scaler = FeatureScaler(tensors.pop("scaler.mean").astype(np.float64), tensors.pop("scaler.std").astype(np.float64))
    if tensors:
        raise CorruptModel(f"unexpected tensors {sorted(tensors)}")
    out_shape = infer_shapes(specs, input_shape)[-1]
    if out_shape != (len(labels),):
        raise CorruptModel(f"output width {out_shape} does not match {len(labels)} labels")
    return TrainedModel(task, specs, params, labels, input_shape, scaler, meta["config"])


def load_model(path):
    with open(path, "rb") as fh:
        return decode_model(fh.read())
