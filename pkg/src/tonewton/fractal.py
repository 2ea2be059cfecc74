"""Newton fractals: label a grid of starting points by the limit they reach.

Row 0 of a label grid is the top edge of the window (largest ``y``); pixel
``(i, j)`` samples the center of its cell. Label 0 is the objective's
designated global minimum, further named minima follow in catalogue order,
limits outside the catalogue are appended in row-major order and ``-1`` marks
starts that did not converge.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .objectives import Objective, get_objective
from .optimizers import BATCH_OPTIMIZERS, OptimizerConfig

Window = Tuple[Tuple[float, float], Tuple[float, float]]

# label 0 is black, -1 white; labels >= 1 cycle through PALETTE
BLACK = (0, 0, 0)
WHITE = (255, 255, 255)
PALETTE = (
    (230, 25, 75),
    (60, 180, 75),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (128, 128, 0),
)


def label_color(label: int) -> Tuple[int, int, int]:
    if label < 0:
        return WHITE
    if label == 0:
        return BLACK
    return PALETTE[(label - 1) % len(PALETTE)]


@dataclass(frozen=True)
class FractalSpec:
    """What to render.

    ``optimizer`` is ``"newton2"`` or ``"ton"``; for ``"ton"`` the shift ladder
    is ``(0, shift)``, or plain ``(0,)`` when ``shift`` is 0. ``window`` defaults
    to the objective's own window.
    """

    objective: str
    optimizer: str = "ton"
    shift: float = 0.0
    window: Optional[Window] = None
    resolution: Tuple[int, int] = (400, 400)
    max_iters: int = 50
    eps: float = 1e-6
    match_radius: float = 1e-2
    workers: int = 1
    chunk_rows: int = 8

    def __post_init__(self):
        if self.optimizer not in BATCH_OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {sorted(BATCH_OPTIMIZERS)}")
        if self.shift < 0:
            raise ValueError("shift must be non-negative")
        if self.shift and self.optimizer != "ton":
            raise ValueError("a shift only applies to the third-order method")
        w, h = self.resolution
        if w < 2 or h < 2:
            raise ValueError("resolution must be at least 2x2")
        if self.window is not None:
            (x0, x1), (y0, y1) = self.window
            if not (x1 > x0 and y1 > y0):
                raise ValueError("window must be non-degenerate")
        if not self.match_radius > 0:
            raise ValueError("match radius must be positive")

    def resolved_window(self, f: Optional[Objective] = None) -> Window:
        if self.window is not None:
            return self.window
        f = f or get_objective(self.objective)
        if f.window is None:
            raise ValueError(f"objective {f.name!r} has no default window")
        return f.window

    def optimizer_config(self) -> OptimizerConfig:
        shifts = (0.0,) if self.shift == 0 else (0.0, float(self.shift))
        return OptimizerConfig(eps=self.eps, max_iters=self.max_iters, shifts=shifts)

    @property
    def basename(self) -> str:
        base = f"{self.objective}_{self.optimizer}"
        if self.shift:
            base += f"_shift{self.shift:g}"
        return base


@dataclass(frozen=True)
class CatalogueEntry:
    point: Tuple[float, ...]
    name: Optional[str] = None


@dataclass
class FractalImage:
    spec: FractalSpec
    window: Window
    labels: np.ndarray
    catalogue: List[CatalogueEntry] = field(default_factory=list)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def rgb(self) -> np.ndarray:
        out = np.empty(self.labels.shape + (3,), dtype=np.uint8)
        for lab in np.unique(self.labels):
            out[self.labels == lab] = label_color(int(lab))
        return out

    def label_at(self, point) -> int:
        i, j = pixel_index(self.window, (self.width, self.height), point)
        return int(self.labels[i, j])


def pixel_centers(window: Window, resolution: Tuple[int, int]) -> np.ndarray:
    """Array of shape (height, width, 2) with the sample point of each pixel."""
    (x0, x1), (y0, y1) = window
    w, h = resolution
    xs = x0 + (np.arange(w) + 0.5) * (x1 - x0) / w
    ys = y1 - (np.arange(h) + 0.5) * (y1 - y0) / h
    X, Y = np.meshgrid(xs, ys)
    return np.stack([X, Y], axis=-1)


def pixel_index(window: Window, resolution: Tuple[int, int], point) -> Tuple[int, int]:
    """(row, column) of the pixel whose center is nearest to ``point``."""
    (x0, x1), (y0, y1) = window
    w, h = resolution
    j = int(np.clip(np.floor((point[0] - x0) / (x1 - x0) * w), 0, w - 1))
    i = int(np.clip(np.floor((y1 - point[1]) / (y1 - y0) * h), 0, h - 1))
    return i, j


def _seed_catalogue(f: Objective) -> List[CatalogueEntry]:
    mins = list(f.minima)
    if f.designated is not None:
        star = f.critical_points[f.designated]
        mins = [star] + [m for m in mins if m is not star]
    return [CatalogueEntry(tuple(float(v) for v in m.point), m.name or m.label) for m in mins]


def _match(points: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    """Index of the nearest center within ``radius`` for each point, else -1."""
    if centers.size == 0:
        return np.full(points.shape[0], -1)
    d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=-1)
    idx = np.argmin(d, axis=1)
    return np.where(d[np.arange(points.shape[0]), idx] <= radius, idx, -1)


def render(spec: FractalSpec) -> FractalImage:
    """Run the optimizer from every pixel center and label the limits."""
    f = get_objective(spec.objective)
    window = spec.resolved_window(f)
    w, h = spec.resolution
    starts = pixel_centers(window, (w, h)).reshape(-1, 2)
    run = BATCH_OPTIMIZERS[spec.optimizer]
    cfg = spec.optimizer_config()

    # each chunk writes to its own slots, so scheduling cannot change the result
    final = np.empty_like(starts)
    converged = np.zeros(starts.shape[0], dtype=bool)
    step = spec.chunk_rows * w
    chunks = [slice(a, min(a + step, starts.shape[0])) for a in range(0, starts.shape[0], step)]

    def work(sl):
        res = run(f, starts[sl], cfg)
        final[sl] = res.x
        converged[sl] = res.termination == 0

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            list(pool.map(work, chunks))
    else:
        for sl in chunks:
            work(sl)

    catalogue = _seed_catalogue(f)
    labels = np.full(starts.shape[0], -1, dtype=np.int64)
    seeds = np.array([c.point for c in catalogue], dtype=float).reshape(-1, 2)
    idx = np.flatnonzero(converged)
    m = _match(final[idx], seeds, spec.match_radius)
    labels[idx] = m
    for k in idx[m < 0]:
        # row-major discovery of limits outside the seeded catalogue
        pts = np.array([c.point for c in catalogue], dtype=float)
        hit = _match(final[k:k + 1], pts, spec.match_radius)[0]
        if hit < 0:
            catalogue.append(CatalogueEntry(tuple(float(v) for v in final[k])))
            hit = len(catalogue) - 1
        labels[k] = hit
    return FractalImage(spec, window, labels.reshape(h, w), catalogue)


def _check_writable(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise OSError(f"cannot write {path}: directory {parent} does not exist")


def write_image(img: FractalImage, path) -> Tuple[str, str, str]:
    """Write ``path`` as binary PPM plus ``<stem>.csv`` and ``<stem>_catalogue.csv``.

    Returns the three paths written.
    """
    path = os.fspath(path)
    stem = path[:-4] if path.lower().endswith(".ppm") else path
    ppm, grid, cat = stem + ".ppm", stem + ".csv", stem + "_catalogue.csv"
    _check_writable(ppm)
    try:
        with open(ppm, "wb") as fh:
            fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
            fh.write(img.rgb().tobytes())
        with open(grid, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in img.labels:
                w.writerow([int(v) for v in row])
        with open(cat, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "x", "y", "name", "r", "g", "b"])
            for lab, entry in enumerate(img.catalogue):
                w.writerow([lab, repr(entry.point[0]), repr(entry.point[1]), entry.name or "",
                            *label_color(lab)])
    except OSError as exc:
        raise OSError(f"cannot write fractal output {stem}: {exc}") from exc
    return ppm, grid, cat


def read_ppm(path) -> np.ndarray:
    """Pixel array (height, width, 3) of a binary PPM written by :func:`write_image`."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        w, h = (int(v) for v in fh.readline().split())
        depth = int(fh.readline())
        data = fh.read()
    if magic != b"P6" or depth != 255:
        raise ValueError(f"{path} is not an 8-bit binary PPM")
    return np.frombuffer(data, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)
