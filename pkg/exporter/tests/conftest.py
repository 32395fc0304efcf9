import subprocess
import sys

import pytest

LEVELS = (0, 4, 8)


def leakscope(*args):
    """Invoke the consumer's CLI (its external interface)."""
    subprocess.run(
        [sys.executable, "-m", "leakscope.cli", *map(str, args)],
        check=True,
        capture_output=True,
    )


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Ten images with encrypted variants at s in {0, 4, 8}.

    Files follow the `{stem}.s{level}.png` convention; level 0 encrypts zero
    bit-planes, i.e. it is the plain image.
    """
    plain = tmp_path_factory.mktemp("plain")
    leakscope("synth", "--out", plain, "--n", "10", "--size", "256x256", "--seed", "77")
    encrypted = tmp_path_factory.mktemp("inputs")
    for path in sorted(plain.glob("*.png")):
        for level in LEVELS:
            leakscope(
                "encrypt",
                "--input", path,
                "--bits", level,
                "--seed", 9000 + level,
                "--output", encrypted / f"{path.stem}.s{level}.png",
            )
    return encrypted


@pytest.fixture(scope="session")
def clip_export(tmp_path_factory, corpus_dir):
    """One whole-image CLIP export of the corpus, reused across tests."""
    from lke_export import ExportJob, run_export

    out = tmp_path_factory.mktemp("clip_out")
    job = ExportJob(
        inputs_dir=str(corpus_dir),
        output_dir=str(out),
        model="clip-vit-b32",
        mode="whole",
        weights="random:3",
    )
    written = run_export(job)
    assert not job.errors
    return out, written
