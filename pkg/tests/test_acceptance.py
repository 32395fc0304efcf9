"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one [PASS]/[FAIL] line in the terminal summary (see
conftest.pytest_terminal_summary).
"""

import math
import struct
import time

import numpy as np
import pytest
from scipy import stats

from leakscope import (
    BadMagicError,
    DimensionMismatchError,
    EmbeddingSet,
    EncryptionParams,
    ExperimentConfig,
    MineConfig,
    PatchSpec,
    Seeds,
    TruncatedPayloadError,
    UnsupportedVersionError,
    decrypt,
    emit_reports,
    encrypt,
    entropy,
    estimate_mi,
    generate_synthetic_corpus,
    JointHistogram,
    mutual_information_plugin,
    read_embeddings,
    relative_distance_to_max,
    run_sweep,
    SamplePairSet,
    theoretic_upper_bound,
    write_embeddings,
)
from leakscope import pixel_mi_curve

from test_histogram import brute_force_mi_bits
from test_mine import GRADCHECK_FIXTURES, fd_probe


def linear_fit_r2(levels, values):
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    design = np.vstack([levels, np.ones_like(levels)]).T
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    predicted = design @ coef
    residual = ((values - predicted) ** 2).sum()
    total = ((values - values.mean()) ** 2).sum()
    return 1.0 - residual / total, coef[0]


def test_p1_encryption_round_trip():
    """decrypt(encrypt(img)) bit-exact, clear bits preserved, under 1 s."""
    rng = np.random.default_rng(1)
    planes = [rng.integers(0, 256, (64, 64), dtype=np.uint8) for _ in range(100)]
    started = time.perf_counter()
    for index, plane in enumerate(planes):
        for bits in range(9):
            params = EncryptionParams(bits=bits, seed=index * 16 + bits)
            cipher = encrypt(plane, params)
            assert np.array_equal(decrypt(cipher, params), plane)
            low_mask = (1 << (8 - bits)) - 1
            assert np.all((cipher & low_mask) == (plane & low_mask))
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"round trips took {elapsed:.2f}s"


def test_p2_linear_law_on_uniform_plane():
    """Plug-in MI within 0.05 bits of 8-s; slope in [-1.02, -0.98]."""
    plane = np.random.default_rng(99).integers(0, 256, (512, 512), dtype=np.uint8)
    curve = pixel_mi_curve(plane, seed=4242)
    for level, estimate in curve:
        assert abs(estimate.value - theoretic_upper_bound(level)) <= 0.05
    _, slope = linear_fit_r2([s for s, _ in curve], [e.value for _, e in curve])
    assert -1.02 <= slope <= -0.98


def test_p3_plugin_matches_brute_force():
    """Plug-in MI equals double-loop KL on every alphabet up to 16x16."""
    rng = np.random.default_rng(7)
    for bins_a in range(1, 17):
        for bins_b in range(1, 17):
            counts = rng.integers(0, 30, (bins_a, bins_b))
            if counts.sum() == 0:
                counts[0, 0] = 1
            hist = JointHistogram(counts)
            plugin = mutual_information_plugin(hist).value
            assert abs(plugin - brute_force_mi_bits(counts)) <= 1e-9
    values = np.repeat(np.arange(16), 5)
    rng.shuffle(values)
    hist = JointHistogram(
        np.bincount(values * 16 + values, minlength=256).reshape(16, 16)
    )
    identity = mutual_information_plugin(hist).value
    assert abs(identity - entropy(np.bincount(values, minlength=16))) <= 1e-9


def test_p4_gaussian_oracle():
    """Neural estimate near the closed form for rho=0.9; near 0 when independent."""
    rng = np.random.default_rng(2024)
    n = 10000
    rho = 0.9
    x = rng.normal(size=(n, 1))
    y = rho * x + math.sqrt(1 - rho**2) * rng.normal(size=(n, 1))
    closed_form = -0.5 * math.log(1 - rho**2)  # 0.8304 nats
    started = time.perf_counter()
    trace = estimate_mi(SamplePairSet(x, y), MineConfig(seed=11))
    elapsed = time.perf_counter() - started
    assert abs(trace.final_mi - closed_form) <= 0.10
    assert elapsed < 60.0, f"training took {elapsed:.1f}s"

    x_ind = rng.normal(size=(n, 1))
    y_ind = rng.normal(size=(n, 1))
    null_trace = estimate_mi(SamplePairSet(x_ind, y_ind), MineConfig(seed=7))
    assert abs(null_trace.final_mi) <= 0.05


def test_p5_gradient_correctness():
    """Analytic gradients match central finite differences on 200+ probes."""
    total_probes = 0
    for seed, in_dim, hidden in GRADCHECK_FIXTURES:
        worst, probes = fd_probe(seed, in_dim, hidden)
        assert worst < 1e-4, f"fixture {(seed, in_dim, hidden)}: worst {worst:.2e}"
        total_probes += probes
    assert total_probes >= 200


def test_p6_shape_reproduction_on_natural_images(natural_corpus_dir, tmp_path):
    """Histogram curve linear in s; neural pixel curve monotone but nonlinear."""
    config = ExperimentConfig(
        dataset_dir=str(natural_corpus_dir),
        n_images=10,
        s_levels=tuple(range(9)),
        estimators=("HistPixel", "MinePixel"),
        seeds=Seeds(keystream=1000, sampling=50, training=0),
        output_dir=str(tmp_path / "p6"),
        mine=MineConfig(epochs=30, batch_size=200, hidden_dims=(64, 64)),
        mine_samples=2000,
        block=8,
    )
    result = run_sweep(config)
    assert not result.failures
    curve = {(row[0], row[1]): row[2] for row in result.mean_curve()}
    levels = list(range(9))
    hist_curve = [curve[("HistPixel", s)] for s in levels]
    mine_curve = [curve[("MinePixel", s)] for s in levels]

    hist_r2, _ = linear_fit_r2(levels, hist_curve)
    mine_r2, _ = linear_fit_r2(levels, mine_curve)
    rank_corr = stats.spearmanr(levels, mine_curve).statistic

    assert hist_r2 >= 0.98, f"histogram curve r2 {hist_r2:.4f}"
    assert rank_corr <= -0.9, f"neural curve spearman {rank_corr:.3f}"
    assert mine_r2 < hist_r2, f"neural r2 {mine_r2:.4f} not below histogram {hist_r2:.4f}"


def test_p7_relative_distance_transform():
    """Hand fixture plus min-zero/nonnegative properties."""
    (_, series), = relative_distance_to_max([(0, [2.0, 5.0, 3.0])])
    assert series.tolist() == [3.0, 0.0, 2.0]
    rng = np.random.default_rng(3)
    collection = [(s, rng.normal(size=12)) for s in range(4)]
    transformed = relative_distance_to_max(collection)
    values = np.concatenate([v for _, v in transformed])
    assert values.min() == 0.0
    assert np.all(values >= 0.0)


def test_p8_embedding_file_round_trip(tmp_path):
    """LKE1 write/read is byte-exact; corruption hits the right category."""
    rng = np.random.default_rng(4)
    original = EmbeddingSet(
        rng.normal(size=(50, 512)).astype(np.float32),
        encoder_id="clip-vit-b32",
        source_image="img.png",
        s_level=5,
        metadata={"patch_size": 224, "seed": 1, "normalized": False},
    )
    path = tmp_path / "set.lke"
    write_embeddings(original, path)
    loaded = read_embeddings(path)
    assert loaded.vectors.tobytes() == original.vectors.tobytes()
    assert (loaded.encoder_id, loaded.source_image, loaded.s_level) == ("clip-vit-b32", "img.png", 5)

    blob = path.read_bytes()

    corrupted = tmp_path / "magic.lke"
    corrupted.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(BadMagicError):
        read_embeddings(corrupted)

    versioned = bytearray(blob)
    struct.pack_into("<H", versioned, 4, 9)
    corrupted.write_bytes(bytes(versioned))
    with pytest.raises(UnsupportedVersionError):
        read_embeddings(corrupted)

    corrupted.write_bytes(blob[: len(blob) - 64])
    with pytest.raises(TruncatedPayloadError):
        read_embeddings(corrupted)

    with pytest.raises(DimensionMismatchError):
        read_embeddings(path, expected_dim=2048)


def test_p9_builtin_embedding_pipeline(tmp_path):
    """Deterministic builtin-embedding sweep with sane endpoint behavior."""
    corpus = tmp_path / "corpus"
    generate_synthetic_corpus(corpus, 5, size=(96, 96), seed=11)

    def sweep(out_dir):
        config = ExperimentConfig(
            dataset_dir=str(corpus),
            n_images=5,
            s_levels=(0, 4, 8),
            estimators=("MineEmbedBuiltin", "CosineEmbed"),
            seeds=Seeds(5, 6, 7),
            output_dir=str(out_dir),
            mine=MineConfig(epochs=60, batch_size=50, hidden_dims=(64, 64)),
            patches=PatchSpec(patch_size=32, n_patches=50),
        )
        result = run_sweep(config)
        emit_reports(result, config.output_dir)
        return result

    first = sweep(tmp_path / "run1")
    second = sweep(tmp_path / "run2")
    for name in ("curve.csv", "traces.csv", "reldist.csv"):
        assert (tmp_path / "run1" / name).read_bytes() == (tmp_path / "run2" / name).read_bytes()

    curve = {(row[0], row[1]): row[2] for row in first.mean_curve()}
    assert curve[("CosineEmbed", 0)] == 1.0
    assert curve[("MineEmbedBuiltin", 8)] <= curve[("MineEmbedBuiltin", 0)]
