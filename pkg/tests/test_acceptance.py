"""Acceptance gate: one test per release criterion, each printing a PASS/FAIL line.

Run just the gate with ``pytest tests/test_acceptance.py -v``; the verdict lines
are repeated in the terminal summary under "acceptance gate".
"""

import json
import time

import numpy as np
from gradcases import LAYER_CASES, PIPELINE_CASES
from oracles import conv_reference, dct_reference, naive_dft_power
from percept import audio, cli, synthetic, training
from percept.gradcheck import check_network
from percept.layers import Conv2D, Dense, Network, Softmax, conv2d_forward
from percept.metrics import binary_scores, metrics_from_confusion
from percept.pipelines import PipelineConfig, run_training
from percept.tensor import Prng

RESULTS = []


def verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1


def test_gradient_integrity():
    start = time.perf_counter()
    worst = {}
    for name, (specs, shape, batch, scale) in {**LAYER_CASES, **PIPELINE_CASES}.items():
        for seed in range(10):
            errors, _ = check_network(specs, shape, seed, batch=batch, h=1e-3, input_scale=scale, max_coords=30)
            worst[name] = max(worst.get(name, 0.0), max(errors.values()))
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    ok = worst[top] < 1e-4 and elapsed < 60
    verdict("gradient integrity", ok,
            f"{len(worst)} cases x 10 seeds, worst rel err {worst[top]:.2e} ({top}), {elapsed:.1f}s")


# ---------------------------------------------------------------- 2


def test_oracle_equivalence():
    rng = np.random.default_rng(2024)
    conv_cases = conv_bad = 0
    for c in (1, 2, 3):
        for side in range(3, 9):
            for k in (1, 2, 3):
                for stride in (1, 2):
                    for padding in ("valid", "same"):
                        x = rng.standard_normal((1, c, side, side)).astype(np.float32)
                        w = rng.standard_normal((2, c, k, k)).astype(np.float32)
                        b = rng.standard_normal(2).astype(np.float32)
                        got = conv2d_forward(x, {"W": w, "b": b}, Conv2D(2, k, k, stride, padding))[0]
                        conv_cases += 1
                        conv_bad += not np.array_equal(got, conv_reference(x, w, b, stride, padding))
    fft_err = 0.0
    for n in (1, 2, 4, 8, 16, 32, 64, 128, 256):
        for length in {n, max(1, n // 2 + 1)}:
            frame = rng.standard_normal(length)
            fft_err = max(fft_err, float(np.max(np.abs(audio.power_spectrum(frame, n) - naive_dft_power(frame, n)))))
    dct_err = 0.0
    for n in (2, 13, 26, 40, 64):
        v = rng.standard_normal(n) * 10
        dct_err = max(dct_err, float(np.max(np.abs(audio.dct2(v, min(13, n)) - dct_reference(v, min(13, n))))))
    ce_bad = 0
    for _ in range(200):
        n, k = int(rng.integers(1, 9)), int(rng.integers(2, 10))
        z = rng.standard_normal((n, k)) * 3
        p = np.exp(z - z.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        labels = rng.integers(0, k, n)
        ls, gs = training.sparse_categorical_cross_entropy(p, labels)
        ld, gd = training.categorical_cross_entropy(p, training.one_hot_rows(labels, k))
        ce_bad += not (ls == ld and np.array_equal(gs, gd))
    ok = conv_bad == 0 and fft_err <= 1e-9 and dct_err <= 1e-9 and ce_bad == 0
    verdict("oracle equivalence", ok,
            f"conv {conv_cases - conv_bad}/{conv_cases} exact, FFT err {fft_err:.1e}, DCT err {dct_err:.1e}, "
            f"sparse CE mismatches {ce_bad}/200")


# ---------------------------------------------------------------- 3


def test_mfcc_shape_and_determinism():
    clip = synthetic.tone_clip(147.0, Prng(11))
    raw = audio.encode_wav(clip)
    a = audio.mfcc(audio.parse_wav(raw))
    b = audio.mfcc(audio.parse_wav(bytes(raw)))
    ok = a.shape == (98, 13) and a.tobytes() == b.tobytes()
    verdict("MFCC shape/determinism", ok, f"shape {list(a.shape)}, bit-identical {a.tobytes() == b.tobytes()}")


# ---------------------------------------------------------------- 4


def test_metric_fixtures():
    acc = metrics_from_confusion([[1, 1], [0, 2]]).accuracy
    p, r, f1 = binary_scores(3, 1, 2)
    diag = metrics_from_confusion(np.diag([5, 3, 9]))
    ok = (acc == 0.75 and abs(p - 0.75) <= 1e-9 and abs(r - 0.60) <= 1e-9 and abs(f1 - 0.666667) <= 1e-6
          and abs(f1 - 2 / 3) <= 1e-9 and np.all(diag.f1 == 1.0))
    verdict("metric fixtures", ok, f"accuracy {acc}, P {p:.6f}, R {r:.6f}, F1 {f1:.6f}, diagonal F1 {diag.f1.tolist()}")


# ---------------------------------------------------------------- 5-7


def test_speaker_analog(speaker_full):
    start = time.perf_counter()
    run = run_training(PipelineConfig("speaker", speaker_full, seed=1))
    elapsed = time.perf_counter() - start
    m = run.report.metrics
    ok = m.accuracy >= 0.95 and m.weighted_f1 >= 0.95 and len(run.history) <= 30 and elapsed < 300
    verdict("speaker analog", ok,
            f"test acc {m.accuracy:.4f}, weighted F1 {m.weighted_f1:.4f}, {len(run.history)} epochs, {elapsed:.0f}s")


def test_eye_analog(tmp_path_factory):
    manifest = synthetic.make_eye_dataset(tmp_path_factory.mktemp("eye_full"), n_images=400, size=64, seed=5)
    run = run_training(PipelineConfig("eye", manifest, seed=1))
    m = run.report.metrics
    ok = run.dataset.x.shape[0] == 400 and m.accuracy >= 0.95 and np.all(m.f1 >= 0.93)
    verdict("eye analog", ok, f"test acc {m.accuracy:.4f}, per-class F1 {np.round(m.f1, 4).tolist()}, "
            f"augment {run.model.config['augment']}")


def test_fer_smoke(tmp_path_factory):
    path = synthetic.make_fer_csv(tmp_path_factory.mktemp("fer_full") / "fer.csv", per_class=40, seed=5)
    run = run_training(PipelineConfig("fer", path, seed=1))
    train_idx = run.dataset.splits[0]
    # capacity check in inference mode: dropout off, batch norm on running statistics
    pred = np.argmax(run.model.predict_proba(run.dataset.x[train_idx]), axis=1)
    train_acc = float(np.mean(pred == run.dataset.labels[train_idx]))
    test_acc = run.report.metrics.accuracy
    cfg = run.model.config
    ok = cfg["epochs"] == 20 and cfg["batch_size"] == 64 and train_acc >= 0.90 and test_acc > 0.43
    verdict("FER smoke", ok, f"train acc {train_acc:.4f}, test acc {test_acc:.4f}, "
            f"{cfg['epochs']} epochs at batch {cfg['batch_size']}")


# ---------------------------------------------------------------- 8


def _config(path, data, epochs):
    path.write_text(f'task = "speaker"\ndata = "{data}"\nseed = 9\nlog_level = "warning"\n\n[train]\nepochs = {epochs}\n')
    return str(path)


def test_determinism(speaker_small, tmp_path):
    cfg = _config(tmp_path / "run.toml", speaker_small, 3)
    codes = [cli.main(["train", "--config", cfg, "--out", str(tmp_path / d), "--quiet"]) for d in "ab"]
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("model.prcp", "report.json")}
    ok = codes == [0, 0] and all(same.values())
    verdict("determinism", ok, f"exit codes {codes}, identical bytes {same}")


# ---------------------------------------------------------------- 9


def test_early_stopping_trace(monkeypatch):
    losses = iter([1.0, 0.9, 0.95, 0.91, 0.92, 0.5, 0.4])
    seen = {}
    net = Network([Dense(3), Dense(2), Softmax()], (4,), Prng(0))

    def scripted(network, x, y, loss_kind, batch_size=256):
        seen[len(seen) + 1] = [{k: v.copy() for k, v in layer.items()} for layer in network.params]
        return next(losses), 0.0

    monkeypatch.setattr(training, "evaluate", scripted)
    rng = np.random.default_rng(0)
    data = (rng.standard_normal((16, 4)).astype(np.float32), rng.integers(0, 2, 16))
    stopper = training.EarlyStopper(patience=2, initial_params=net.params)
    result = training.fit(net, data, data, "sparse", training.Adam(0.05), 10, 4, Prng(1), stopper=stopper)
    restored = all(np.array_equal(net.params[i][k], seen[2][i][k]) for i in range(2) for k in net.params[i])
    moved = not all(np.array_equal(net.params[i][k], seen[5][i][k]) for i in range(2) for k in net.params[i])
    ok = len(result.history) == 5 and result.stopped_early and result.best_epoch == 2 and restored and moved
    verdict("early-stopping trace", ok, f"stopped after epoch {len(result.history)}, best epoch {result.best_epoch}, "
            f"weights equal epoch-2 snapshot {restored}")


# ---------------------------------------------------------------- 10


def _self_consistent(report):
    cm = np.array(report["confusion"], dtype=np.float64)
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.nan_to_num(tp / cm.sum(axis=0))
        recall = np.nan_to_num(tp / support)
        f1 = np.nan_to_num(2 * precision * recall / (precision + recall))
    worst = abs(report["accuracy"] - tp.sum() / cm.sum())
    worst = max(worst, abs(report["macro_f1"] - f1.mean()), abs(report["weighted_f1"] - (f1 * support).sum() / cm.sum()))
    for k, name in enumerate(report["labels"]):
        row = report["per_class"][name]
        worst = max(worst, abs(row["precision"] - precision[k]), abs(row["recall"] - recall[k]),
                    abs(row["f1"] - f1[k]))
        worst = max(worst, abs(row["support"] - support[k]))
    return worst


def test_end_to_end_cli(speaker_small, tmp_path):
    cfg = _config(tmp_path / "run.toml", speaker_small, 4)
    out = tmp_path / "out"
    wav = tmp_path / "probe.wav"
    audio.write_wav(synthetic.tone_clip(262.0, Prng(4)), wav)
    steps = [
        ["featurize", "--config", cfg, "--out", str(out), "--quiet"],
        ["train", "--config", cfg, "--out", str(out), "--quiet"],
        ["eval", str(out / "model.prcp"), speaker_small, "--out", str(out / "eval"), "--quiet"],
        ["plot", str(wav), "--out", str(out / "plot"), "--quiet"],
    ]
    codes = [cli.main(step) for step in steps]
    declared = ["features.mfcc", "scaler.json", "model.prcp", "history.csv", "report.json", "confusion.csv",
                "confusion.pgm", "eval/report.json", "eval/confusion.csv", "eval/confusion.pgm", "plot/waveform.csv",
                "plot/spectrogram.csv", "plot/spectrogram.pgm", "plot/mfcc.csv", "plot/mfcc.pgm"]
    missing = [name for name in declared if not (out / name).exists()]
    err = max(_self_consistent(json.loads((out / p).read_text())) for p in ("report.json", "eval/report.json")) \
        if not missing else float("inf")
    ok = codes == [0, 0, 0, 0] and not missing and err <= 1e-9
    verdict("end-to-end CLI", ok, f"exit codes {codes}, missing artifacts {missing}, report inconsistency {err:.1e}")

