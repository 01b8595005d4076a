"""Nodal domains of three-dimensional monochromatic random waves in a cube.

The field is a superposition of ``N`` plane waves with wave number ``k``,
directions uniform on the unit sphere and uniform phases, normalised to unit
variance.  Nodal domains are the 6-connected clusters of equal sign on the
sampling grid, found with a Hoshen-Kopelman style union-find pass.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, replace

import numba as nb
import numpy as np

from .parallel import ordered_map, stream_rng

MAX_POINTS_PER_AXIS = 1024


@dataclass(frozen=True)
class RandomWaveConfig:
    side: float
    n_waves: int = 1000
    k: float = 1.0
    h: float | None = None  # grid spacing, default a tenth of a wavelength
    seed: int = 0
    connectivity: int = 6

    def __post_init__(self):
        if self.h is None:
            object.__setattr__(self, "h", self.wavelength / 10)
        if self.n_waves < 1:
            raise ValueError("need at least one plane wave")
        if self.connectivity != 6:
            raise ValueError("only 6-neighbour connectivity is supported")
        if self.h > self.wavelength / 8 + 1e-12:
            raise ValueError(f"h={self.h} gives fewer than 8 points per wavelength")
        if self.points_per_axis > MAX_POINTS_PER_AXIS:
            raise ValueError(f"{self.points_per_axis} grid points per axis exceeds {MAX_POINTS_PER_AXIS}")

    @property
    def wavelength(self) -> float:
        return 2 * math.pi / self.k

    @property
    def points_per_axis(self) -> int:
        return int(round(self.side / self.h)) + 1

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(0.0, self.side, self.points_per_axis)


@dataclass(frozen=True)
class DomainCensus:
    total_domains: int
    boundary_domains: int
    interior_domains: int
    largest_volume_cells: int
    grid_cells: int

    @property
    def largest_fraction(self) -> float:
        return self.largest_volume_cells / self.grid_cells


def random_waves(n_waves: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Directions uniform on S^2 (normalised Gaussian vectors) and phases in [0, 2 pi)."""
    d = rng.standard_normal((n_waves, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d, rng.uniform(0.0, 2 * math.pi, n_waves)


def sample_wave(
    config: RandomWaveConfig,
    directions: np.ndarray | None = None,
    phases: np.ndarray | None = None,
    workers: int | None = None,
) -> np.ndarray:
    """Evaluate the random wave on the ``n x n x n`` grid of the cube.

    The sum over plane waves is done exactly; each ``z`` slice is one complex
    matrix product because ``exp(i k d.q)`` factorises over the axes.
    """
    if directions is None or phases is None:
        directions, phases = random_waves(config.n_waves, stream_rng(config.seed, 0))
    directions = np.asarray(directions, dtype=float)
    phases = np.asarray(phases, dtype=float)
    x = config.axis
    ex, ey, ez = (np.exp(1j * config.k * np.outer(x, directions[:, c])) for c in range(3))
    amp = math.sqrt(2.0 / len(phases)) * np.exp(1j * phases)
    ez = ez * amp
    n = len(x)
    field = np.empty((n, n, n))

    def slab(iz):
        field[:, :, iz] = ((ex * ez[iz]) @ ey.T).real

    for _ in ordered_map(slab, range(n), workers):
        pass
    return field


@nb.njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@nb.njit(cache=True)
def _union(parent, size, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]


@nb.njit(cache=True)
def _label(cls):
    nx, ny, nz = cls.shape
    n = nx * ny * nz
    flat = cls.ravel()
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    sx, sy = ny * nz, nz
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                idx = i * sx + j * sy + k
                v = flat[idx]
                if k > 0 and flat[idx - 1] == v:
                    _union(parent, size, idx, idx - 1)
                if j > 0 and flat[idx - sy] == v:
                    _union(parent, size, idx, idx - sy)
                if i > 0 and flat[idx - sx] == v:
                    _union(parent, size, idx, idx - sx)
    labels = np.empty(n, dtype=np.int64)
    root_label = np.full(n, -1, dtype=np.int64)
    count = 0
    for idx in range(n):
        r = _find(parent, idx)
        if root_label[r] < 0:
            root_label[r] = count
            count += 1
        labels[idx] = root_label[r]
    volume = np.zeros(count, dtype=np.int64)
    touches = np.zeros(count, dtype=np.bool_)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                lab = labels[i * sx + j * sy + k]
                volume[lab] += 1
                if i == 0 or j == 0 or k == 0 or i == nx - 1 or j == ny - 1 or k == nz - 1:
                    touches[lab] = True
    return labels.reshape((nx, ny, nz)), volume, touches


def label_domains(grid: np.ndarray) -> tuple[np.ndarray, DomainCensus]:
    """Label the 6-connected sign clusters of a 3-D grid.

    ``grid`` is either a boolean sign array or a real field; for a field, exact
    zeros count as positive.
    """
    grid = np.asarray(grid)
    if grid.ndim != 3 or grid.size == 0:
        raise ValueError("need a non-empty 3-D grid")
    cls = grid if grid.dtype == np.bool_ else grid >= 0
    labels, volume, touches = _label(np.ascontiguousarray(cls, dtype=np.uint8))
    total = len(volume)
    boundary = int(touches.sum())
    census = DomainCensus(total, boundary, total - boundary, int(volume.max()), int(grid.size))
    return labels, census


def census_for(config: RandomWaveConfig, workers: int | None = None) -> DomainCensus:
    return label_domains(sample_wave(config, workers=workers))[1]


# -- scaling with the cube size ---------------------------------------------


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if len(np.unique(x[ok])) < 3:
        raise ValueError("need at least three distinct sizes with positive counts for a fit")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


@dataclass
class ScalingStudy:
    template: RandomWaveConfig
    sides: list[float]
    realizations: int
    rows: list[tuple[float, int, DomainCensus]]

    def values(self, side: float, attr: str) -> np.ndarray:
        return np.array([getattr(c, attr) for a, _, c in self.rows if a == side], dtype=float)

    def summary(self) -> list[dict]:
        out = []
        for a in self.sides:
            row = {"side": a}
            for attr in ("total_domains", "boundary_domains", "interior_domains", "largest_fraction"):
                v = self.values(a, attr)
                row[attr] = float(v.mean())
                row[attr + "_stderr"] = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
            out.append(row)
        return out

    def fits(self) -> dict:
        summ = self.summary()
        a = [r["side"] for r in summ]
        fits = {}
        for attr in ("total_domains", "boundary_domains", "interior_domains"):
            y = [r[attr] for r in summ]
            try:
                fits[attr + "_slope"] = loglog_slope(a, y)
            except ValueError:
                fits[attr + "_slope"] = None
        frac = np.array([r["largest_fraction"] for r in summ])
        fits["largest_fraction_cv"] = float(frac.std(ddof=1) / frac.mean()) if len(frac) > 1 else 0.0
        return fits

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["side", "realization", "total", "boundary", "interior", "largest_fraction"])
        for a, r, c in self.rows:
            w.writerow(
                [f"{a:g}", r, c.total_domains, c.boundary_domains, c.interior_domains, f"{c.largest_fraction:.12g}"]
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "template": asdict(self.template),
            "sides": self.sides,
            "realizations": self.realizations,
            "summary": self.summary(),
            "fits": self.fits(),
        }


def scaling_study(
    template: RandomWaveConfig, sides, realizations: int, workers: int | None = None
) -> ScalingStudy:
    """Domain census over several cube sides, ``realizations`` fields per side.

    Realization ``r`` of side number ``i`` uses sub-stream ``(i, r)`` of the
    template seed; rows are ordered by side, then realization.
    """
    sides = [float(a) for a in sides]
    if len(set(sides)) < 3:
        raise ValueError("need at least three distinct cube sides")
    if realizations < 5:
        raise ValueError("need at least five realizations per side")
    jobs = [(i, a, r) for i, a in enumerate(sides) for r in range(realizations)]

    def run(job):
        i, a, r = job
        cfg = replace(template, side=a)
        d, ph = random_waves(cfg.n_waves, stream_rng(template.seed, i, r))
        return a, r, label_domains(sample_wave(cfg, d, ph))[1]

    rows = list(ordered_map(run, jobs, workers))
    return ScalingStudy(template, sides, realizations, rows)
