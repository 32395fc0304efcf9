import json

import numpy as np
import pytest
from click.testing import CliRunner

from leakscope import entropy, load_image, read_embeddings, save_image
from leakscope.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def gray_png(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (96, 96), dtype=np.uint8)
    path = tmp_path / "plain.png"
    save_image(img, path)
    return path


def invoke(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def test_encrypt_decrypt_roundtrip(runner, gray_png, tmp_path):
    enc = tmp_path / "enc.png"
    dec = tmp_path / "dec.png"
    invoke(runner, ["encrypt", "--input", str(gray_png), "--bits", "5", "--seed", "9",
                    "--mode", "shifted", "--output", str(enc)])
    invoke(runner, ["decrypt", "--input", str(enc), "--bits", "5", "--seed", "9",
                    "--mode", "shifted", "--output", str(dec)])
    assert np.array_equal(load_image(dec), load_image(gray_png))
    assert not np.array_equal(load_image(enc), load_image(gray_png))


def test_mi_hist_self_information(runner, gray_png):
    result = invoke(runner, ["mi", "hist", "--a", str(gray_png), "--b", str(gray_png)])
    payload = json.loads(result.output)
    img = load_image(gray_png)
    assert payload["value"] == pytest.approx(
        entropy(np.bincount(img.ravel(), minlength=256)), abs=1e-9
    )
    assert payload["units"] == "bits"
    assert payload["sample_count"] == img.size


def test_mi_curve_csv(runner, gray_png, tmp_path):
    out = tmp_path / "curve.csv"
    invoke(runner, ["mi", "curve", "--input", str(gray_png), "--seed", "3", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0] == "s,mi_bits,upper_bound_bits,sample_count"
    assert len(lines) == 10
    for line in lines[1:]:
        level, _, bound, count = line.split(",")
        assert float(bound) == 8.0 - int(level)
        assert int(count) == 96 * 96


def test_mi_mine_with_trace_and_reldist(runner, gray_png, tmp_path):
    trace1 = tmp_path / "t1.csv"
    trace2 = tmp_path / "t2.csv"
    base = ["mi", "mine", "--a", str(gray_png), "--b", str(gray_png),
            "--epochs", "3", "--batch", "64", "--hidden", "8,8", "--block", "4",
            "--samples", "128", "--seed", "1"]
    r1 = invoke(runner, base + ["--trace", str(trace1)])
    float(r1.output.strip())  # final MI is printed as a bare number
    invoke(runner, ["mi", "mine", "--a", str(gray_png), "--b", str(gray_png),
                    "--epochs", "3", "--batch", "64", "--hidden", "8,8", "--block", "4",
                    "--samples", "128", "--seed", "2", "--trace", str(trace2)])
    lines = trace1.read_text().splitlines()
    assert lines[0] == "epoch,mi"
    assert len(lines) == 4

    rel = tmp_path / "rel.csv"
    invoke(runner, ["mi", "reldist", "--traces", f"{trace1},{trace2}", "--out", str(rel)])
    rows = rel.read_text().splitlines()
    assert rows[0] == "trace,epoch,value"
    values = [float(r.split(",")[2]) for r in rows[1:]]
    assert min(values) == 0.0
    assert len(values) == 6


def test_embed_and_cosine(runner, gray_png, tmp_path):
    lke_a = tmp_path / "a.lke"
    lke_b = tmp_path / "b.lke"
    coords = tmp_path / "coords.json"
    args = ["embed", "builtin", "--input", str(gray_png), "--patches", "6",
            "--patch-size", "32", "--seed", "4", "--out", str(lke_a),
            "--coords-out", str(coords)]
    invoke(runner, args)
    invoke(runner, ["embed", "builtin", "--input", str(gray_png), "--patches", "6",
                    "--patch-size", "32", "--seed", "4", "--out", str(lke_b)])
    loaded = read_embeddings(lke_a)
    assert loaded.dim == 64 and loaded.n_vectors == 6
    assert loaded.encoder_id == "builtin-conv-v1"
    manifest = json.loads(coords.read_text())
    assert manifest["images"]["plain.png"]

    result = invoke(runner, ["sim", "cosine", "--a", str(lke_a), "--b", str(lke_b)])
    payload = json.loads(result.output)
    assert payload["mean"] == 1.0
    assert len(payload["per_patch"]) == 6


def test_mine_embed_cli(runner, gray_png, tmp_path):
    lke = tmp_path / "a.lke"
    invoke(runner, ["embed", "builtin", "--input", str(gray_png), "--patches", "12",
                    "--patch-size", "24", "--seed", "4", "--out", str(lke)])
    result = invoke(runner, ["mi", "mine-embed", "--a", str(lke), "--b", str(lke),
                             "--epochs", "2", "--batch", "12", "--hidden", "8", "--seed", "5"])
    float(result.output.strip())


def test_embed_coords_directory(runner, tmp_path):
    for name in ("x.png", "y.png"):
        save_image(
            np.random.default_rng(len(name)).integers(0, 256, (48, 48), dtype=np.uint8),
            tmp_path / name,
        )
    out = tmp_path / "coords.json"
    invoke(runner, ["embed", "coords", "--inputs", str(tmp_path), "--patches", "4",
                    "--patch-size", "16", "--seed", "8", "--out", str(out)])
    manifest = json.loads(out.read_text())
    assert set(manifest["images"]) == {"x.png", "y.png"}
    assert all(len(v) == 4 for v in manifest["images"].values())


def test_synth_and_experiment_flags(runner, tmp_path):
    corpus = tmp_path / "corpus"
    invoke(runner, ["synth", "--out", str(corpus), "--n", "2", "--size", "64x64",
                    "--kinds", "uniform,blobs", "--seed", "3"])
    out = tmp_path / "out"
    invoke(runner, ["experiment", "--dataset-dir", str(corpus), "--n-images", "2",
                    "--s-levels", "0,8", "--estimators", "HistPixel",
                    "--output-dir", str(out), "--seed-keystream", "1",
                    "--seed-sampling", "2", "--seed-training", "3"])
    assert (out / "curve.csv").exists()
    assert (out / "run.json").exists()
    lines = (out / "curve.csv").read_text().splitlines()
    assert len(lines) == 3  # header + two levels


def test_experiment_ingested_flags(runner, tmp_path):
    import numpy as np

    from leakscope import EmbeddingSet, write_embeddings

    corpus = tmp_path / "corpus"
    invoke(runner, ["synth", "--out", str(corpus), "--n", "1", "--size", "64x64",
                    "--kinds", "uniform", "--seed", "3"])
    emb = tmp_path / "emb"
    emb.mkdir()
    rng = np.random.default_rng(0)
    for level in (0, 2):
        write_embeddings(
            EmbeddingSet(rng.normal(size=(8, 4)).astype(np.float32), "clip-vit-b32",
                         "uniform_000.png", level, {"patch_size": None, "seed": None}),
            emb / f"uniform_000.s{level}.clip-vit-b32.lke",
        )
    out = tmp_path / "out"
    invoke(runner, ["experiment", "--dataset-dir", str(corpus), "--n-images", "1",
                    "--s-levels", "0,2", "--estimators", "MineEmbedIngested",
                    "--output-dir", str(out), "--ingested-dir", str(emb),
                    "--ingested-encoder", "clip-vit-b32"])
    run_meta = json.loads((out / "run.json").read_text())
    assert run_meta["failures"] == []
    lines = (out / "curve.csv").read_text().splitlines()
    assert len(lines) == 3


def test_experiment_config_file(runner, tmp_path):
    corpus = tmp_path / "corpus"
    invoke(runner, ["synth", "--out", str(corpus), "--n", "1", "--size", "64x64",
                    "--kinds", "uniform", "--seed", "3"])
    out = tmp_path / "out"
    toml = tmp_path / "run.toml"
    toml.write_text(
        "\n".join(
            [
                f'dataset_dir = "{corpus}"',
                "n_images = 1",
                "s_levels = [0]",
                'estimators = ["HistPixel"]',
                f'output_dir = "{out}"',
            ]
        )
    )
    invoke(runner, ["experiment", "--config", str(toml)])
    assert (out / "curve.csv").exists()
