"""Command-line interface (`lke-export`)."""

from __future__ import annotations

import click

from .export import ExportJob, run_export
from .models import MODEL_IDS


@click.command()
@click.option("--model", type=click.Choice(MODEL_IDS), required=True)
@click.option("--mode", type=click.Choice(["whole", "patches"]), default="whole", show_default=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), default=None,
              help="patch coordinate manifest from the consumer's sampler")
@click.option("--inputs", "inputs_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "output_dir", type=click.Path(), required=True)
@click.option("--weights", default="pretrained", show_default=True,
              help="'pretrained' or 'random:<seed>' (identical architecture, seeded init)")
@click.option("--shift", "shift_mode", type=click.Choice(["masked", "shifted"]),
              default="shifted", show_default=True)
@click.option("--normalize", is_flag=True, help="L2-normalize feature vectors")
@click.option("--batch-size", type=int, default=8, show_default=True)
def main(model, mode, manifest_path, inputs_dir, output_dir, weights, shift_mode, normalize, batch_size):
    """Export CLIP/ResNet features of selectively encrypted images to LKE1 files."""
    job = ExportJob(
        inputs_dir=inputs_dir,
        output_dir=output_dir,
        model=model,
        mode=mode,
        weights=weights,
        shift_mode=shift_mode,
        manifest_path=manifest_path,
        normalize=normalize,
        batch_size=batch_size,
    )
    written = run_export(job)
    for path in written:
        click.echo(str(path))
    if job.errors:
        click.echo(f"{len(job.errors)} error(s) recorded in export_errors.json", err=True)
        raise SystemExit(1)


if __name__ == "__main__":
    main()
