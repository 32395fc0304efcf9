import numpy as np
import pytest

from leakscope import save_image, to_grayscale


def _natural_crops():
    """Ten 512x512 grayscale crops of locally bundled photographs.

    Sources: scikit-image's packaged sample photos plus matplotlib's
    grace_hopper portrait. Crops favor textured, well-exposed regions; the
    selection is pinned so every run sees the same corpus.
    """
    import matplotlib.cbook as cbook
    import skimage.data as skd
    from PIL import Image

    def crop(img, row, col):
        return img[row : row + 512, col : col + 512]

    hopper = np.asarray(Image.open(cbook.get_sample_data("grace_hopper.jpg", asfileobj=False)))
    retina = to_grayscale(skd.retina())
    return {
        "camera": skd.camera(),
        "astronaut": to_grayscale(skd.astronaut()),
        "grass": skd.grass(),
        "gravel": skd.gravel(),
        "ihc": to_grayscale(skd.immunohistochemistry()),
        "hopper_top": crop(to_grayscale(hopper), 0, 0),
        "hopper_bottom": crop(to_grayscale(hopper), 88, 0),
        "retina_upper": crop(retina, 260, 260),
        "retina_lower": crop(retina, 639, 260),
        "brick": skd.brick(),
    }


@pytest.fixture(scope="session")
def natural_corpus_dir(tmp_path_factory):
    """Directory of ten natural 512x512 grayscale photographs as PNGs."""
    corpus = tmp_path_factory.mktemp("natural")
    for name, img in _natural_crops().items():
        assert img.shape == (512, 512)
        save_image(img, corpus / f"{name}.png")
    return corpus


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" not in str(getattr(report, "nodeid", "")):
                continue
            name = report.nodeid.split("::")[-1]
            if not name.startswith("test_p"):
                continue
            criterion = name.split("_")[1].upper()
            label = "PASS" if status == "passed" else "FAIL"
            lines.append((criterion, f"[{label}] {criterion} — {name[len('test_') + len(criterion) + 1:]}"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
