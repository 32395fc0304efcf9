"""Command-line interface (`leakscope`)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import click
import numpy as np

from .crypto import MASKED_LOW, SHIFTED_HIGH, EncryptionParams, decrypt_image, encrypt_image
from .embedding import (
    EmbeddingSet,
    PatchSpec,
    mean_cosine_similarity,
    read_embeddings,
    sample_patch_coords,
    sample_patches,
    write_coordinate_manifest,
    write_embeddings,
    BuiltinConvEncoder,
)
from .experiment import (
    ExperimentConfig,
    Seeds,
    derive_seed,
    emit_reports,
    generate_synthetic_corpus,
    run_sweep,
    SYNTH_KINDS,
)
from .histogram import build_joint_histogram, mutual_information_plugin, pixel_mi_curve, theoretic_upper_bound
from .images import load_image, save_image, to_grayscale
from .mine import MineConfig, SamplePairSet, estimate_mi, relative_distance_to_max, sample_pixel_pairs

_MODES = {"masked": MASKED_LOW, "shifted": SHIFTED_HIGH}

seed_option = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
mode_option = click.option(
    "--mode", type=click.Choice(sorted(_MODES)), default="masked", show_default=True
)


def _hidden_dims(text):
    dims = tuple(int(part) for part in str(text).split(",") if part.strip())
    if not dims:
        raise click.BadParameter("expected a comma-separated list like 256,256")
    return dims


@click.group()
@click.version_option()
def main():
    """Information-leakage estimation for selectively encrypted images."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--bits", type=click.IntRange(0, 8), required=True)
@seed_option
@mode_option
@click.option("--output", "output_path", required=True, type=click.Path())
def encrypt(input_path, bits, seed, mode, output_path):
    """Encrypt the leading bit-planes of an image."""
    params = EncryptionParams(bits=bits, seed=seed, shift_mode=_MODES[mode])
    save_image(encrypt_image(load_image(input_path), params), output_path)
    click.echo(output_path)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--bits", type=click.IntRange(0, 8), required=True)
@seed_option
@mode_option
@click.option("--output", "output_path", required=True, type=click.Path())
def decrypt(input_path, bits, seed, mode, output_path):
    """Recover the original image (same flags as encrypt)."""
    params = EncryptionParams(bits=bits, seed=seed, shift_mode=_MODES[mode])
    save_image(decrypt_image(load_image(input_path), params), output_path)
    click.echo(output_path)


@main.group()
def mi():
    """Mutual-information estimators."""


@mi.command("hist")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
@click.option("--bins", type=int, default=256, show_default=True)
@click.option("--units", type=click.Choice(["bits", "nats"]), default="bits", show_default=True)
def mi_hist(path_a, path_b, bins, units):
    """Plug-in MI between two aligned images (grayscale pixel values)."""
    a = to_grayscale(load_image(path_a))
    b = to_grayscale(load_image(path_b))
    if a.shape != b.shape:
        raise click.ClickException(f"images must share dimensions, got {a.shape} vs {b.shape}")
    scale = 256 // bins if bins < 256 else 1
    hist = build_joint_histogram(a.ravel() // scale, b.ravel() // scale, bins, bins)
    est = mutual_information_plugin(hist, units=units)
    click.echo(
        json.dumps(
            {
                "value": est.value,
                "units": est.units,
                "estimator": est.estimator,
                "sample_count": est.sample_count,
            }
        )
    )


@mi.command("curve")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@seed_option
@mode_option
@click.option("--out", "out_path", required=True, type=click.Path())
def mi_curve(input_path, seed, mode, out_path):
    """Plug-in MI per encryption level, with the analytic upper bound."""
    plane = to_grayscale(load_image(input_path))
    curve = pixel_mi_curve(plane, seed, shift_mode=_MODES[mode])
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("s", "mi_bits", "upper_bound_bits", "sample_count"))
        for level, est in curve:
            writer.writerow(
                (level, f"{est.value:.12g}", f"{theoretic_upper_bound(level):.12g}", est.sample_count)
            )
    click.echo(out_path)


def mine_options(command):
    for option in reversed(
        [
            click.option("--epochs", type=int, default=100, show_default=True),
            click.option("--batch", type=int, default=256, show_default=True),
            click.option("--hidden", default="256,256", show_default=True),
            click.option("--lr", type=float, default=1e-3, show_default=True),
            click.option("--ema-rate", type=float, default=0.01, show_default=True),
            click.option(
                "--units", type=click.Choice(["nats", "bits"]), default="nats", show_default=True
            ),
            click.option("--trace", "trace_path", type=click.Path(), default=None),
            seed_option,
        ]
    ):
        command = option(command)
    return command


def _write_trace(trace, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("epoch", "mi"))
        for epoch, value in enumerate(trace.per_epoch_mi, start=1):
            writer.writerow((epoch, f"{value:.12g}"))


@mi.command("mine")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
@click.option("--block", type=int, default=8, show_default=True)
@click.option("--samples", type=int, default=5000, show_default=True)
@mine_options
def mi_mine(path_a, path_b, block, samples, epochs, batch, hidden, lr, ema_rate, units, trace_path, seed):
    """Neural MI estimate between co-located pixel blocks of two images."""
    a = to_grayscale(load_image(path_a))
    b = to_grayscale(load_image(path_b))
    pairs = sample_pixel_pairs(a, b, block=block, n_samples=samples, seed=seed)
    cfg = MineConfig(
        epochs=epochs,
        batch_size=batch,
        learning_rate=lr,
        hidden_dims=_hidden_dims(hidden),
        ema_rate=ema_rate,
        seed=seed,
        units=units,
    )
    trace = estimate_mi(pairs, cfg)
    if trace_path:
        _write_trace(trace, trace_path)
    click.echo(f"{trace.final_mi:.6f}")


@mi.command("mine-embed")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
@mine_options
def mi_mine_embed(path_a, path_b, epochs, batch, hidden, lr, ema_rate, units, trace_path, seed):
    """Neural MI estimate between two embedding files (LKE1)."""
    set_a = read_embeddings(path_a)
    set_b = read_embeddings(path_b, expected_dim=set_a.dim)
    if set_a.n_vectors != set_b.n_vectors:
        raise click.ClickException(
            f"embedding counts differ: {set_a.n_vectors} vs {set_b.n_vectors}"
        )
    cfg = MineConfig(
        epochs=epochs,
        batch_size=min(batch, set_a.n_vectors),
        learning_rate=lr,
        hidden_dims=_hidden_dims(hidden),
        ema_rate=ema_rate,
        seed=seed,
        units=units,
    )
    trace = estimate_mi(
        SamplePairSet(set_a.vectors.astype(np.float64), set_b.vectors.astype(np.float64)), cfg
    )
    if trace_path:
        _write_trace(trace, trace_path)
    click.echo(f"{trace.final_mi:.6f}")


@mi.command("reldist")
@click.option("--traces", "trace_paths", required=True, help="comma-separated trace CSVs")
@click.option("--out", "out_path", required=True, type=click.Path())
def mi_reldist(trace_paths, out_path):
    """Distance of every trace value from the maximum across all traces."""
    labeled = []
    for part in trace_paths.split(","):
        path = Path(part.strip())
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            series = [float(row["mi"]) for row in reader]
        labeled.append((path.stem, series))
    transformed = relative_distance_to_max(labeled)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("trace", "epoch", "value"))
        for label, series in transformed:
            for epoch, value in enumerate(series, start=1):
                writer.writerow((label, epoch, f"{value:.12g}"))
    click.echo(out_path)


@main.group()
def embed():
    """Patch embeddings (built-in frozen encoder) and coordinate manifests."""


@embed.command("builtin")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--patches", "n_patches", type=int, default=50, show_default=True)
@click.option("--patch-size", type=int, default=224, show_default=True)
@seed_option
@click.option("--encoder-seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@click.option("--s-level", type=click.IntRange(0, 8), default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--coords-out", type=click.Path(), default=None)
def embed_builtin(input_path, n_patches, patch_size, seed, encoder_seed, s_level, out_path, coords_out):
    """Embed seeded random patches of one image and write an LKE1 file."""
    img = load_image(input_path)
    name = Path(input_path).name
    spec = PatchSpec(patch_size=patch_size, n_patches=n_patches, seed=derive_seed(seed, name))
    patches = sample_patches(img, spec)
    encoder = BuiltinConvEncoder(seed=encoder_seed).fit()
    vectors = encoder.transform(patches)
    embedding_set = EmbeddingSet(
        vectors=vectors,
        encoder_id=encoder.encoder_id,
        source_image=name,
        s_level=s_level,
        metadata={"patch_size": patch_size, "seed": seed, "normalized": False},
    )
    write_embeddings(embedding_set, out_path)
    if coords_out:
        coords = sample_patch_coords(img.shape[1], img.shape[0], spec)
        write_coordinate_manifest(coords_out, {name: coords}, patch_size, seed)
    click.echo(out_path)


@embed.command("coords")
@click.option("--inputs", "inputs_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--patches", "n_patches", type=int, default=50, show_default=True)
@click.option("--patch-size", type=int, default=224, show_default=True)
@seed_option
@click.option("--out", "out_path", required=True, type=click.Path())
def embed_coords(inputs_dir, n_patches, patch_size, seed, out_path):
    """Write the patch coordinate manifest for every decodable image in a directory."""
    entries = {}
    for path in sorted(Path(inputs_dir).iterdir()):
        if not path.is_file():
            continue
        try:
            img = load_image(path)
        except Exception:
            continue
        spec = PatchSpec(patch_size=patch_size, n_patches=n_patches, seed=derive_seed(seed, path.name))
        entries[path.name] = sample_patch_coords(img.shape[1], img.shape[0], spec)
    if not entries:
        raise click.ClickException(f"no decodable images in {inputs_dir}")
    write_coordinate_manifest(out_path, entries, patch_size, seed)
    click.echo(out_path)


@main.group()
def sim():
    """Embedding-space similarity metrics."""


@sim.command("cosine")
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
def sim_cosine(path_a, path_b):
    """Mean patch-wise cosine similarity between two embedding files."""
    set_a = read_embeddings(path_a)
    set_b = read_embeddings(path_b, expected_dim=set_a.dim)
    mean, sims = mean_cosine_similarity(set_a, set_b)
    click.echo(json.dumps({"mean": mean, "per_patch": sims}))


@main.command("experiment")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--dataset-dir", default=None)
@click.option("--n-images", type=int, default=None)
@click.option("--s-levels", default=None, help="comma-separated levels, e.g. 0,4,8")
@click.option("--estimators", default=None, help="comma-separated estimator names")
@click.option("--output-dir", default=None)
@click.option("--seed-keystream", type=int, default=None)
@click.option("--seed-sampling", type=int, default=None)
@click.option("--seed-training", type=int, default=None)
@click.option("--ingested-dir", default=None, help="directory of {stem}.s{level}.{encoder}.lke files")
@click.option("--ingested-encoder", default=None)
def experiment_cmd(config_path, dataset_dir, n_images, s_levels, estimators, output_dir, seed_keystream, seed_sampling, seed_training, ingested_dir, ingested_encoder):
    """Run the full sweep described by a TOML config (flags override it)."""
    if config_path:
        cfg = ExperimentConfig.from_toml(config_path)
    else:
        cfg = ExperimentConfig()
    overrides = {}
    if dataset_dir is not None:
        overrides["dataset_dir"] = dataset_dir
    if n_images is not None:
        overrides["n_images"] = n_images
    if s_levels is not None:
        overrides["s_levels"] = tuple(int(v) for v in s_levels.split(","))
    if estimators is not None:
        overrides["estimators"] = tuple(e.strip() for e in estimators.split(","))
    if output_dir is not None:
        overrides["output_dir"] = output_dir
    if ingested_dir is not None:
        overrides["ingested_dir"] = ingested_dir
    if ingested_encoder is not None:
        overrides["ingested_encoder"] = ingested_encoder
    seeds = cfg.seeds
    if seed_keystream is not None or seed_sampling is not None or seed_training is not None:
        seeds = Seeds(
            keystream=seed_keystream if seed_keystream is not None else seeds.keystream,
            sampling=seed_sampling if seed_sampling is not None else seeds.sampling,
            training=seed_training if seed_training is not None else seeds.training,
        )
        overrides["seeds"] = seeds
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    result = run_sweep(cfg)
    paths = emit_reports(result, cfg.output_dir)
    for path in paths:
        click.echo(str(path))
    if result.failures:
        click.echo(f"{len(result.failures)} cell(s) failed; see run.json", err=True)


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--n", type=int, default=5, show_default=True)
@click.option("--size", default="256x256", show_default=True)
@click.option("--kinds", default=",".join(SYNTH_KINDS), show_default=True)
@seed_option
def synth(out_dir, n, size, kinds, seed):
    """Generate a seeded synthetic test corpus (uniform, gradient, checker, blobs)."""
    width, height = (int(v) for v in size.lower().split("x"))
    kind_list = tuple(k.strip() for k in kinds.split(",") if k.strip())
    paths = generate_synthetic_corpus(out_dir, n, size=(height, width), kinds=kind_list, seed=seed)
    for path in paths:
        click.echo(str(path))


if __name__ == "__main__":
    main()
