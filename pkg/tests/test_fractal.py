import csv

import numpy as np
import pytest

from tonewton.fractal import (
    BLACK, PALETTE, WHITE, FractalImage, FractalSpec, label_color, pixel_centers, pixel_index, read_ppm,
    render, write_image,
)
from tonewton.objectives import HIMMELBLAU_MINIMA


@pytest.fixture(scope="module")
def himmelblau_80():
    return render(FractalSpec("himmelblau", "ton", resolution=(80, 80)))


def test_quadratic_has_a_single_label():
    img = render(FractalSpec("quadratic", "ton", resolution=(12, 9)))
    assert img.labels.shape == (9, 12)
    assert np.all(img.labels == 0)


def test_pixel_centers_and_index_round_trip():
    window = ((-1.0, 3.0), (0.0, 2.0))
    C = pixel_centers(window, (4, 2))
    assert np.allclose(C[0, 0], [-0.5, 1.5])  # top-left cell
    assert np.allclose(C[1, 3], [2.5, 0.5])
    for i in range(2):
        for j in range(4):
            assert pixel_index(window, (4, 2), C[i, j]) == (i, j)


def test_minima_pixels_get_their_own_basin():
    # a window whose pixel grid hits the four minima exactly: each starts converged
    for k, p in enumerate(HIMMELBLAU_MINIMA):
        window = ((p[0] - 1.0, p[0] + 1.0), (p[1] - 1.0, p[1] + 1.0))
        img = render(FractalSpec("himmelblau", "ton", window=window, resolution=(3, 3)))
        assert img.label_at(p) == k
        assert np.allclose(img.catalogue[k].point, p)


def test_minima_labels_in_default_window(himmelblau_80):
    for k, p in enumerate(HIMMELBLAU_MINIMA):
        assert himmelblau_80.label_at(p) == k


def test_cross_between_minima_does_not_converge(himmelblau_80):
    L = himmelblau_80.labels
    diag = np.concatenate([np.diag(L), np.diag(np.fliplr(L))])
    assert np.mean(diag == -1) >= 0.01


def test_catalogue_invariants(himmelblau_80):
    img = himmelblau_80
    assert img.labels.max() < len(img.catalogue)
    assert img.labels.min() >= -1
    pts = np.array([c.point for c in img.catalogue])
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(len(pts)) * 1e9
    assert d.min() > img.spec.match_radius


def test_palette():
    assert label_color(0) == BLACK == (0, 0, 0)
    assert label_color(-1) == WHITE == (255, 255, 255)
    assert label_color(1) == PALETTE[0]
    assert label_color(len(PALETTE) + 1) == PALETTE[0]


def test_two_by_two_black_image(tmp_path):
    spec = FractalSpec("quadratic", resolution=(2, 2))
    img = FractalImage(spec, ((0.0, 1.0), (0.0, 1.0)), np.zeros((2, 2), dtype=int))
    ppm, grid, cat = write_image(img, tmp_path / "tiny.ppm")
    data = open(ppm, "rb").read()
    header = b"P6\n2 2\n255\n"
    assert data.startswith(header)
    assert data[len(header):] == bytes(12)
    assert open(grid).read().splitlines() == ["0,0", "0,0"]


def test_non_converged_pixels_are_white(tmp_path):
    spec = FractalSpec("quadratic", resolution=(2, 2))
    img = FractalImage(spec, ((0.0, 1.0), (0.0, 1.0)), np.array([[-1, 0], [0, -1]]))
    ppm, _, _ = write_image(img, tmp_path / "mixed")
    px = read_ppm(ppm)
    assert tuple(px[0, 0]) == WHITE and tuple(px[0, 1]) == BLACK


def test_csv_sidecars(tmp_path, himmelblau_80):
    ppm, grid, cat = write_image(himmelblau_80, tmp_path / "him.ppm")
    rows = list(csv.reader(open(grid)))
    assert len(rows) == himmelblau_80.height
    assert all(len(r) == himmelblau_80.width for r in rows)
    assert np.array_equal(np.array(rows, dtype=int), himmelblau_80.labels)
    cat_rows = list(csv.reader(open(cat)))
    assert cat_rows[0] == ["label", "x", "y", "name", "r", "g", "b"]
    assert len(cat_rows) == len(himmelblau_80.catalogue) + 1
    assert read_ppm(ppm).shape == (80, 80, 3)


def test_write_reports_path_on_failure(tmp_path):
    img = FractalImage(FractalSpec("quadratic", resolution=(2, 2)), ((0.0, 1.0), (0.0, 1.0)),
                       np.zeros((2, 2), dtype=int))
    with pytest.raises(OSError, match="nowhere"):
        write_image(img, tmp_path / "nowhere" / "x.ppm")


def test_render_is_deterministic(tmp_path):
    spec = FractalSpec("bohachevsky", "ton", resolution=(24, 24))
    a, b = render(spec), render(spec)
    assert np.array_equal(a.labels, b.labels)
    pa = write_image(a, tmp_path / "a.ppm")
    pb = write_image(b, tmp_path / "b.ppm")
    for x, y in zip(pa, pb):
        assert open(x, "rb").read() == open(y, "rb").read()


def test_result_independent_of_workers_and_chunking():
    base = render(FractalSpec("himmelblau", "newton2", resolution=(30, 20)))
    other = render(FractalSpec("himmelblau", "newton2", resolution=(30, 20), workers=3, chunk_rows=1))
    assert np.array_equal(base.labels, other.labels)
    assert base.catalogue == other.catalogue


@pytest.mark.parametrize("kw", [
    dict(optimizer="gd"), dict(shift=-1.0), dict(optimizer="newton2", shift=5.0),
    dict(resolution=(1, 5)), dict(window=((1.0, 1.0), (0.0, 1.0))), dict(match_radius=0.0),
])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        FractalSpec("himmelblau", **kw)


def test_basename_and_ladder():
    assert FractalSpec("himmelblau").basename == "himmelblau_ton"
    s = FractalSpec("himmelblau", shift=5.0)
    assert s.basename == "himmelblau_ton_shift5"
    assert s.optimizer_config().shifts == (0.0, 5.0)
    assert FractalSpec("himmelblau").optimizer_config().shifts == (0.0,)
