"""Acceptance suite: one test per criterion, one pass/fail line each.

Criteria 1, 9, and 10 are data-independent and always run. Criteria 2-8
reproduce the MNIST experiments and need the real IDX files (see
conftest.mnist_location); without them they print a SKIP line and skip —
the dataset cannot be downloaded inside the test sandbox. The same
pipeline logic is exercised end to end on synthetic data in
test_integration_synth.py.

Expected wall-clock with MNIST present: roughly 3 hours, dominated by
the code-length sweep (7 retrainings) and the extra overlap baselines.
"""

import itertools
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import MNIST_SKIP_REASON, mnist_location
from keynet import cli, models, nn
from keynet.attacks import (
    AttackConfig,
    carlini_l2,
    fgsm,
    run_attack,
    select_correctly_classified,
)
from keynet.codebook import (
    decode,
    dichotomy_count,
    encode,
    generate_codebook,
    match_with_tolerance,
)
from keynet.data import load_mnist, noisy_variants, random_inputs
from keynet.evaluate import (
    eval_accuracy,
    eval_detection_rate,
    eval_fooling_rate,
    overlap_analysis,
)

MNIST_DIR = mnist_location()

BASELINE_EPOCHS = 3
KNET_EPOCHS = 3
SWEEP_EPOCHS = 2
OVERLAP_EPOCHS = 2


def _line(criterion, status, detail=""):
    print(f"\n[criterion {criterion:>2}] {status}  {detail}", flush=True)


def _require_mnist(criterion):
    if MNIST_DIR is None:
        _line(criterion, "SKIP", MNIST_SKIP_REASON)
        pytest.skip(MNIST_SKIP_REASON)


# ----------------------------------------------------------- criterion 1

def _gradcheck_configs(rng):
    """>= 20 random configurations covering every layer kind and both
    losses."""
    configs = []
    for i in range(10):
        r = np.random.default_rng(1000 + i)
        h = int(r.integers(6, 10))
        c = int(r.integers(1, 3))
        k = int(r.integers(2, 4))
        stride = int(r.integers(1, 3))
        pad = "same" if r.uniform() < 0.5 else "valid"
        conv = nn.Conv2D(c, 3, k, stride=stride, padding=pad, rng=r)
        oh, ow, oc = conv.out_shape((h, h, c))
        layers = [conv, nn.ReLU(), nn.Flatten(),
                  nn.Dense(oh * ow * oc, 6, rng=r)]
        configs.append((nn.Network(layers=layers, head="softmax",
                                   loss="cross_entropy", input_shape=(h, h, c)),
                        6))
    for i in range(10):
        r = np.random.default_rng(2000 + i)
        h = int(r.integers(6, 10))
        k = int(r.integers(2, 4))
        conv = nn.Conv2D(1, 2, k, stride=1,
                         padding="same" if r.uniform() < 0.5 else "valid",
                         rng=r)
        oh, ow, oc = conv.out_shape((h, h, 1))
        layers = [conv, nn.Sigmoid(), nn.Flatten(),
                  nn.Dense(oh * ow * oc, 8, rng=r), nn.ReLU(),
                  nn.Dense(8, 5, rng=r)]
        configs.append((nn.Network(layers=layers, head="sigmoid",
                                   loss="squared_code", input_shape=(h, h, 1)),
                        5))
    return configs


def test_criterion_01_gradient_fidelity():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    checked = 0
    for j, (net, width) in enumerate(_gradcheck_configs(rng)):
        r = np.random.default_rng(3000 + j)
        x = r.uniform(0.05, 0.95, (2, *net.input_shape)).astype(np.float32)
        if net.loss == "cross_entropy":
            targets = nn.one_hot(r.integers(0, width, 2), width)
        else:
            targets = r.integers(0, 2, (2, width)).astype(np.float32)
        res = nn.finite_diff_gradcheck(net, x, targets, h=1e-5,
                                       num_coords=120, rng=r)
        worst = max(worst, res.max_rel_error)
        checked += 1
        assert res.max_rel_error <= 1e-4, (j, res)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed <= 60
    _line(1, "PASS" if ok else "FAIL",
          f"{checked} configs, worst rel err {worst:.2e}, {elapsed:.1f}s")
    assert ok


# -------------------------------------------------- criteria 2-8 fixtures
#
# These return None when the dataset is absent so the criterion tests can
# print their SKIP line before calling pytest.skip (a skip raised inside
# the fixture would bypass the test body entirely).

@pytest.fixture(scope="session")
def mnist_data():
    if MNIST_DIR is None:
        return None
    train_set, test_set = load_mnist(MNIST_DIR)
    assert len(train_set) == 60000 and len(test_set) == 10000
    return train_set, test_set


@pytest.fixture(scope="session")
def mnist_baseline(mnist_data):
    if mnist_data is None:
        return None
    train_set, _ = mnist_data
    net = models.build_network("baseline1", seed=0)
    cfg = models.TrainConfig(learning_rate=0.02, batch_size=64,
                             epochs=BASELINE_EPOCHS, seed=0)
    start = time.perf_counter()
    models.train(net, train_set.images, train_set.labels, cfg)
    return net, time.perf_counter() - start


@pytest.fixture(scope="session")
def mnist_codebook():
    return generate_codebook(10, 30, seed=7)


@pytest.fixture(scope="session")
def mnist_knet(mnist_data, mnist_baseline, mnist_codebook):
    if mnist_data is None:
        return None
    train_set, _ = mnist_data
    knet = models.derive_key_network(mnist_baseline[0], mnist_codebook,
                                     seed=3)
    models.train(knet, train_set.images, train_set.labels,
                 models.key_retrain_config(epochs=KNET_EPOCHS, seed=1),
                 codebook=mnist_codebook)
    return knet


@pytest.fixture(scope="session")
def mnist_attack_pool(mnist_data, mnist_baseline):
    if mnist_data is None:
        return None
    _, test_set = mnist_data
    idx = select_correctly_classified(mnist_baseline[0], test_set.images,
                                      test_set.labels, 500)
    return test_set.images[idx], test_set.labels[idx]


def test_criterion_02_baseline_accuracy(mnist_data, mnist_baseline):
    _require_mnist(2)
    _, test_set = mnist_data
    net, seconds = mnist_baseline
    acc = models.accuracy(net, test_set.images, test_set.labels)
    ok = acc >= 0.97 and seconds <= 30 * 60
    _line(2, "PASS" if ok else "FAIL",
          f"test accuracy {acc:.4f} (floor 0.97), trained in {seconds:.0f}s")
    assert ok


def test_criterion_03_key_network_accuracy(mnist_data, mnist_baseline,
                                           mnist_knet, mnist_codebook):
    _require_mnist(3)
    _, test_set = mnist_data
    base_acc = models.accuracy(mnist_baseline[0], test_set.images,
                               test_set.labels)
    kacc = eval_accuracy(mnist_knet, mnist_codebook, test_set.images,
                         test_set.labels)
    ok = base_acc - kacc <= 0.015
    _line(3, "PASS" if ok else "FAIL",
          f"baseline {base_acc:.4f} vs key network {kacc:.4f} "
          f"(gap {base_acc - kacc:+.4f}, cap 0.015)")
    assert ok


def test_criterion_04_fgsm_row(mnist_baseline, mnist_knet, mnist_codebook,
                               mnist_attack_pool):
    _require_mnist(4)
    images, labels = mnist_attack_pool
    net = mnist_baseline[0]
    start = time.perf_counter()
    b03 = run_attack(net, images, labels, AttackConfig(kind="fgsm",
                                                       epsilon=0.3))
    b02 = run_attack(net, images, labels, AttackConfig(kind="fgsm",
                                                       epsilon=0.2))
    elapsed = time.perf_counter() - start
    fool03 = eval_fooling_rate(net, b03)
    det03 = eval_detection_rate(mnist_knet, mnist_codebook, b03)
    fool02 = eval_fooling_rate(net, b02)
    ok = (fool03 >= 0.70 and det03 >= 0.90 and 0.35 <= fool02 <= 0.65
          and elapsed <= 5 * 60)
    _line(4, "PASS" if ok else "FAIL",
          f"eps=0.3 fool {fool03:.4f} det {det03:.4f}; "
          f"eps=0.2 fool {fool02:.4f}; {elapsed:.0f}s on {len(images)}")
    assert ok


def test_criterion_05_deepfool_row(mnist_baseline, mnist_knet,
                                   mnist_codebook, mnist_attack_pool):
    _require_mnist(5)
    images, labels = mnist_attack_pool
    net = mnist_baseline[0]
    start = time.perf_counter()
    batch = run_attack(net, images, labels, AttackConfig(kind="deepfool"))
    elapsed = time.perf_counter() - start
    fool = eval_fooling_rate(net, batch)
    det = eval_detection_rate(mnist_knet, mnist_codebook, batch)
    ok = fool >= 0.95 and det >= 0.90 and elapsed <= 15 * 60
    _line(5, "PASS" if ok else "FAIL",
          f"fool {fool:.4f} det {det:.4f}; {elapsed:.0f}s on {len(images)}")
    assert ok


def test_criterion_06_carlini_row(mnist_baseline, mnist_knet,
                                  mnist_codebook, mnist_attack_pool):
    _require_mnist(6)
    images, labels = mnist_attack_pool
    images, labels = images[:100], labels[:100]
    net = mnist_baseline[0]
    start = time.perf_counter()
    rates = {}
    for kappa in (0.0, 0.1, 0.2):
        batch = run_attack(net, images, labels,
                           AttackConfig(kind="carlini", kappa=kappa))
        rates[kappa] = (eval_fooling_rate(net, batch),
                        eval_detection_rate(mnist_knet, mnist_codebook,
                                            batch))
    elapsed = time.perf_counter() - start
    fool0, det0 = rates[0.0]
    ok = (fool0 >= 0.95 and det0 >= 0.85
          and rates[0.1][1] <= rates[0.0][1] + 0.02
          and rates[0.2][1] <= rates[0.1][1] + 0.02
          and elapsed <= 60 * 60)
    _line(6, "PASS" if ok else "FAIL",
          f"kappa=0 fool {fool0:.4f} det {det0:.4f}; "
          f"det trend {rates[0.0][1]:.4f} -> {rates[0.1][1]:.4f} -> "
          f"{rates[0.2][1]:.4f}; {elapsed:.0f}s")
    assert ok


def test_criterion_07_code_length_sweep(mnist_data, mnist_baseline):
    _require_mnist(7)
    train_set, test_set = mnist_data
    net = mnist_baseline[0]
    idx = select_correctly_classified(net, test_set.images, test_set.labels,
                                      300)
    pools = {
        "fgsm": (test_set.images[idx], test_set.labels[idx]),
        "deepfool": (test_set.images[idx], test_set.labels[idx]),
        "carlini": (test_set.images[idx][:100], test_set.labels[idx][:100]),
    }

    def attack_fn(cfg):
        images, labels = pools[cfg.kind]
        return run_attack(net, images, labels, cfg)

    configs = [AttackConfig(kind="fgsm", epsilon=0.3),
               AttackConfig(kind="deepfool"),
               AttackConfig(kind="carlini", kappa=0.0)]
    from keynet.evaluate import code_length_sweep

    points = code_length_sweep(
        net, [5, 10, 20, 30, 40, 50, 60], train_set, test_set, configs,
        models.key_retrain_config(epochs=SWEEP_EPOCHS, seed=0), seed=0,
        attack_fn=attack_fn)
    by_t = {p.code_length: p for p in points}
    acc_ok = abs(by_t[60].accuracy - by_t[5].accuracy) <= 0.015
    det_ok = all(rate >= 0.93
                 for t in (40, 50, 60)
                 for rate in by_t[t].detection_rates.values())
    trend_ok = all(by_t[40].detection_rates[k] >= by_t[5].detection_rates[k]
                   for k in by_t[40].detection_rates)
    ok = acc_ok and det_ok and trend_ok
    summary = "; ".join(
        f"t={p.code_length} acc={p.accuracy:.4f} "
        f"det={min(p.detection_rates.values()):.4f}" for p in points)
    _line(7, "PASS" if ok else "FAIL", summary)
    assert ok


def test_criterion_08_overlap_analysis(mnist_data, mnist_baseline,
                                       mnist_knet, mnist_codebook):
    _require_mnist(8)
    train_set, test_set = mnist_data
    reference = mnist_baseline[0]
    others = {}
    for arch in ("baseline2", "baseline3", "baseline4"):
        other = models.build_network(arch, seed=17)
        models.train(other, train_set.images, train_set.labels,
                     models.TrainConfig(learning_rate=0.02, batch_size=64,
                                        epochs=OVERLAP_EPOCHS, seed=17))
        others[arch] = other

    n = 10000
    rand_counts = overlap_analysis(reference, others, random_inputs(n, 4),
                                   knet=mnist_knet, cb=mnist_codebook)
    rng = np.random.default_rng(5)
    idx = rng.choice(len(test_set.images), size=100, replace=False)
    noisy = noisy_variants(test_set.images[idx], k=100, seed=5)
    noise_counts = overlap_analysis(reference, others, noisy,
                                    knet=mnist_knet, cb=mnist_codebook)

    rand_ok = (all(rand_counts[a] >= 0.30 * n for a in others)
               and rand_counts["knet"] <= 0.01 * n)
    noise_ok = (all(noise_counts[a] >= 0.90 * n for a in others)
                and noise_counts["knet"] <= 0.30 * n)
    ok = rand_ok and noise_ok
    _line(8, "PASS" if ok else "FAIL",
          f"random {rand_counts}; noisy {noise_counts} (n={n})")
    assert ok


# ----------------------------------------------------------- criterion 9

def _fast_mnist_shaped_net(seed=0):
    rng = np.random.default_rng(seed)
    return nn.Network(layers=[
        nn.Conv2D(1, 8, 5, stride=2, padding="same", rng=rng),
        nn.ReLU(),
        nn.Conv2D(8, 16, 3, stride=2, padding="same", rng=rng),
        nn.ReLU(),
        nn.Flatten(),
        nn.Dense(7 * 7 * 16, 10, rng=rng),
    ], head="softmax", loss="cross_entropy", input_shape=(28, 28, 1))


def test_criterion_09_exact_invariants():
    start = time.perf_counter()
    net = _fast_mnist_shaped_net()
    rng = np.random.default_rng(0)

    # fgsm ball/box invariants over 1000 random inputs
    for i in range(1000):
        x = rng.uniform(0, 1, (28, 28, 1)).astype(np.float32)
        y = int(rng.integers(0, 10))
        eps = float(rng.uniform(0.05, 0.4))
        r = float(rng.uniform(0.05, 0.4)) if i % 2 else None
        x_adv = fgsm(net, x, y, eps, r)
        bound = min(eps, r) if r is not None else eps
        assert np.abs(x_adv - x).max() <= bound + 1e-6
        assert x_adv.min() >= 0.0 and x_adv.max() <= 1.0

    # carlini outputs stay in the box by construction
    for i in range(10):
        x = rng.uniform(0, 1, (28, 28, 1)).astype(np.float32)
        y = int(rng.integers(0, 10))
        res = carlini_l2(net, x, y, kappa=0.0, binary_search_steps=2,
                         max_inner_iter=15)
        assert res.x_adv.min() >= 0.0 and res.x_adv.max() <= 1.0

    # codebook roundtrip + tolerant matching, exhaustive for t <= 10
    for t in range(4, 11):
        cb = generate_codebook(10, t, seed=t)
        for y in range(10):
            assert decode(cb, encode(cb, y)) == y
        nomatch = 0
        for bits in itertools.product((0, 1), repeat=t):
            code = np.array(bits, dtype=np.uint8)
            got = match_with_tolerance(cb, code, 0)
            assert got == decode(cb, code)
            if got is None:
                nomatch += 1
        assert nomatch == 2 ** t - 10

    # dichotomy count vs brute force for m <= 12
    for m in range(2, 13):
        seen = set()
        for bits in itertools.product((0, 1), repeat=m):
            if 0 < sum(bits) < m:
                seen.add(min(bits, tuple(1 - b for b in bits)))
        assert dichotomy_count(m) == len(seen)

    elapsed = time.perf_counter() - start
    ok = elapsed <= 120
    _line(9, "PASS" if ok else "FAIL",
          f"fgsm ball/box x1000, carlini box x10, codebooks t=4..10, "
          f"dichotomies m<=12; {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------- criterion 10

def _run_pipeline(data_dir, root):
    """A small but complete pipeline run: train both nets, generate a
    codebook, attack, detect. Returns the artifact paths to compare."""
    out = str(root / "runs")
    cb_file = str(root / "codebook.json")
    steps = [
        ["train-baseline", "--arch", "1", "--epochs", "1", "--seed", "0",
         "--data-dir", data_dir, "--out", out, "--run-name", "base"],
        ["gen-codebook", "--t", "16", "--seed", "11",
         "--out-file", cb_file],
        ["train-knet", "--baseline", f"{out}/base/baseline1.ckpt",
         "--codebook", cb_file, "--epochs", "2", "--seed", "1",
         "--data-dir", data_dir, "--out", out, "--run-name", "knet"],
        ["attack", "--kind", "fgsm", "--baseline",
         f"{out}/base/baseline1.ckpt", "--n", "25", "--eps", "0.3",
         "--data-dir", data_dir, "--out", out, "--run-name", "adv"],
        ["detect", "--knet", f"{out}/knet/knet.ckpt",
         "--codebook", cb_file, "--adv-dir", f"{out}/adv/adv-fgsm",
         "--data-dir", data_dir, "--out", out, "--run-name", "rep"],
    ]
    for argv in steps:
        assert cli.main(argv) == 0, argv
    return {
        "baseline.ckpt": f"{out}/base/baseline1.ckpt",
        "knet.ckpt": f"{out}/knet/knet.ckpt",
        "codebook.json": cb_file,
        "report.json": f"{out}/rep/report.json",
        "report.csv": f"{out}/rep/report.csv",
        "adv-metadata.json": f"{out}/adv/adv-fgsm/metadata.json",
    }


def test_criterion_10_determinism(synth_idx_dir, tmp_path):
    """Two identical pipeline runs must produce bit-identical artifacts.

    The dataset is the in-repo synthetic IDX directory (MNIST cannot be
    fetched here); determinism is a property of the pipeline, not of the
    data, and the run covers training, codebook generation, attack
    generation and report writing end to end.
    """
    a = _run_pipeline(synth_idx_dir, tmp_path / "a")
    b = _run_pipeline(synth_idx_dir, tmp_path / "b")
    mismatched = [name for name in a
                  if open(a[name], "rb").read() != open(b[name], "rb").read()]
    ok = not mismatched
    _line(10, "PASS" if ok else "FAIL",
          "bit-identical: " + ", ".join(sorted(a)) if ok
          else f"mismatch in {mismatched}")
    assert ok


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "keynet.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "train-baseline" in out.stdout
