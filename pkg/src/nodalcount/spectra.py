"""EBK spectra: state enumeration, counting functions, normalised nodal counts.

States are produced in blocks (:class:`StateBlock`) so that windows with 10^8
states can be histogrammed without ever holding them all.  Quantum numbers start
at 0 and contribute ``n_l + 1`` to the nodal count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import ModelError, NodalCountOverflow
from .geometry import gamma_volume
from .model import ModelSpec, ebk_energies, solve_axis
from .parallel import ordered_map

_INT64_MAX = np.iinfo(np.int64).max
DEFAULT_CHUNK = 1 << 21


@dataclass(frozen=True)
class QuantumState:
    n: tuple[int, ...]
    energy: float
    nu: int
    xi: float


@dataclass
class StateBlock:
    """Consecutive states in lexicographic order of ``n``."""

    n: np.ndarray
    energy: np.ndarray
    nu: np.ndarray

    def __len__(self) -> int:
        return len(self.energy)


def nodal_counts(n: np.ndarray) -> np.ndarray:
    """``prod(n_l + 1)`` with an explicit int64 overflow check."""
    n = np.asarray(n, dtype=np.int64)
    if n.size == 0:
        return np.zeros(n.shape[:-1], dtype=np.int64)
    approx = np.prod((n + 1).astype(float), axis=-1)
    if approx.max() > 2.0**62:
        for row in n[approx > 2.0**62]:
            if math.prod(int(k) + 1 for k in row) > _INT64_MAX:
                raise NodalCountOverflow(f"nodal count of n={tuple(row)} exceeds 64 bits")
    nu = n[..., 0] + 1
    for l in range(1, n.shape[-1]):
        nu = nu * (n[..., l] + 1)
    return nu


# -- lattice geometry -------------------------------------------------------


def _count_axis(model: ModelSpec, probe: np.ndarray, axis: int, level: float, strict: bool = False) -> np.ndarray:
    """Number of ``n_axis >= 0`` with ``E <= level`` (``<`` if strict).

    The other quantum numbers are taken from ``probe``.  The analytic root is
    corrected against the exact energies, so counts agree with
    :func:`ebk_energies` bit for bit.
    """
    actions = probe.astype(float) + np.asarray(model.mu)
    with np.errstate(invalid="ignore"):
        root = solve_axis(model, actions, axis, level)
        k = np.where(np.isnan(root), -1, np.floor(root - model.mu[axis])).astype(np.int64)
    k = np.maximum(k, -1)
    work = probe.copy()

    def ok(kk):
        work[:, axis] = np.maximum(kk, 0)
        e = ebk_energies(model, work)
        return (e < level if strict else e <= level) & (kk >= 0)

    # the floor of the root is within a unit or two of the answer
    while True:
        up = ok(k + 1)
        if not up.any():
            break
        k = k + up
    while True:
        bad = (k >= 0) & ~ok(k)
        if not bad.any():
            break
        k = k - bad
    return k + 1


def _count_last(model: ModelSpec, prefix: np.ndarray, level: float, strict: bool) -> np.ndarray:
    probe = np.zeros((len(prefix), model.s), dtype=np.int64)
    probe[:, :-1] = prefix
    return _count_axis(model, probe, model.s - 1, level, strict)


def _prefixes(model: ModelSpec, level: float) -> np.ndarray:
    """All ``(n_1, .., n_{s-1})`` that admit at least one state with E <= level.

    Rows come out in lexicographic order.
    """
    s = model.s
    pref = np.zeros((1, 0), dtype=np.int64)
    for k in range(s - 1):
        # largest n_k with all later quantum numbers at zero
        probe = np.zeros((len(pref), s), dtype=np.int64)
        probe[:, :k] = pref
        counts = _count_axis(model, probe, k, level)
        total = int(counts.sum())
        new = np.empty((total, k + 1), dtype=np.int64)
        new[:, :k] = np.repeat(pref, counts, axis=0)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        new[:, k] = np.arange(total) - starts
        pref = new
    return pref


@dataclass
class _Partition:
    prefix: np.ndarray
    lo: np.ndarray
    hi: np.ndarray  # exclusive


def _partitions(model, e_lo, e_hi, lo_strict, hi_strict, chunk) -> list[_Partition]:
    """Split the window into lexicographically ordered pieces of ~``chunk`` states.

    ``lo_strict``/``hi_strict`` select open ends: states satisfy
    ``e_lo <= E`` (``<`` if lo_strict) and ``E <= e_hi`` (``<`` if hi_strict).
    """
    pref = _prefixes(model, e_hi)
    if len(pref) == 0:
        return []
    hi = _count_last(model, pref, e_hi, hi_strict)
    lo = _count_last(model, pref, e_lo, not lo_strict)
    keep = hi > lo
    pref, lo, hi = pref[keep], lo[keep], hi[keep]
    sizes = hi - lo
    cuts = np.searchsorted(np.cumsum(sizes), np.arange(chunk, int(sizes.sum()), chunk), side="right")
    bounds = [0, *sorted(set(int(c) for c in cuts if 0 < c < len(pref))), len(pref)]
    return [_Partition(pref[a:b], lo[a:b], hi[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def _expand(model: ModelSpec, part: _Partition) -> StateBlock:
    sizes = part.hi - part.lo
    total = int(sizes.sum())
    n = np.empty((total, model.s), dtype=np.int64)
    n[:, :-1] = np.repeat(part.prefix, sizes, axis=0)
    starts = np.repeat(np.cumsum(sizes) - sizes, sizes)
    n[:, -1] = np.arange(total) - starts + np.repeat(part.lo, sizes)
    return StateBlock(n, ebk_energies(model, n), nodal_counts(n))


def iter_blocks(
    model: ModelSpec,
    e_lo: float,
    e_hi: float,
    lo_strict: bool = False,
    hi_strict: bool = False,
    chunk: int = DEFAULT_CHUNK,
    workers: int | None = None,
) -> Iterator[StateBlock]:
    """Stream all states of the window in lexicographic order."""
    parts = _partitions(model, e_lo, e_hi, lo_strict, hi_strict, chunk)
    yield from ordered_map(lambda p: _expand(model, p), parts, workers)


def _check_window(e0: float, g: float) -> None:
    if not (e0 > 0 and g > 0):
        raise ModelError(f"need e0 > 0 and g > 0, got e0={e0}, g={g}")


def enumerate_states(
    model: ModelSpec, e0: float, g: float, sink: Callable[[StateBlock], object], workers: int | None = None
) -> int:
    """Feed every state with ``e0 <= E <= (1 + g) e0`` to ``sink`` exactly once.

    Blocks arrive in lexicographic order of the quantum numbers; returns the
    number of states visited.
    """
    _check_window(e0, g)
    count = 0
    for block in iter_blocks(model, e0, (1 + g) * e0, workers=workers):
        sink(block)
        count += len(block)
    return count


def iter_states(model: ModelSpec, e0: float, g: float) -> Iterator[QuantumState]:
    """Per-state view of a (small) window with Weyl-normalised counts."""
    _check_window(e0, g)
    for block in iter_blocks(model, e0, (1 + g) * e0):
        xi = weyl_xi(model, block)
        for n, e, nu, x in zip(block.n, block.energy, block.nu, xi):
            yield QuantumState(tuple(int(k) for k in n), float(e), int(nu), float(x))


def weyl_count(model: ModelSpec, E: float) -> float:
    """Leading Weyl term ``V_gamma * E^(s/alpha)``."""
    if E < 0:
        raise ModelError("energy must be non-negative")
    return gamma_volume(model) * E ** (model.s / model.alpha)


def exact_count(model: ModelSpec, E: float, strict: bool = False) -> int:
    """Number of EBK levels with energy ``<= E`` (``< E`` if strict)."""
    if E < 0:
        raise ModelError("energy must be non-negative")
    pref = _prefixes(model, E)
    if len(pref) == 0:
        return 0
    return int(_count_last(model, pref, E, strict).sum())


# -- normalised counts ------------------------------------------------------


def weyl_xi(model: ModelSpec, block: StateBlock) -> np.ndarray:
    return block.nu / (gamma_volume(model) * block.energy ** (model.s / model.alpha))


def _band_edges(model: ModelSpec, e_lo: float, e_hi: float, n_bands: int) -> np.ndarray:
    p = model.s / model.alpha
    t = np.linspace(0.0, 1.0, n_bands + 1)
    edges = (e_lo**p + t * (e_hi**p - e_lo**p)) ** (1.0 / p)
    edges[0], edges[-1] = e_lo, e_hi
    return edges


def iter_exact_index(
    model: ModelSpec, e0: float, g: float, band_states: int = DEFAULT_CHUNK, workers: int | None = None
) -> Iterator[tuple[StateBlock, np.ndarray]]:
    """Yield ``(block, N)`` with the exact spectral index ``N`` of every state.

    The window is cut into energy bands that are half-open on the right, so
    degenerate levels never straddle a cut; inside a band the states are sorted
    by energy, ties broken lexicographically on ``n``.
    """
    _check_window(e0, g)
    e_hi = (1 + g) * e0
    offset = exact_count(model, e0, strict=True)
    expected = max(1.0, weyl_count(model, e_hi) - weyl_count(model, e0))
    edges = _band_edges(model, e0, e_hi, max(1, math.ceil(expected / band_states)))
    for k in range(len(edges) - 1):
        last = k == len(edges) - 2
        blocks = list(iter_blocks(model, edges[k], edges[k + 1], hi_strict=not last, workers=workers))
        if not blocks:
            continue
        n = np.concatenate([b.n for b in blocks])
        energy = np.concatenate([b.energy for b in blocks])
        nu = np.concatenate([b.nu for b in blocks])
        order = np.lexsort(tuple(n[:, l] for l in range(model.s - 1, -1, -1)) + (energy,))
        block = StateBlock(n[order], energy[order], nu[order])
        index = offset + 1 + np.arange(len(block), dtype=np.int64)
        offset += len(block)
        yield block, index


def normalized_counts(
    model: ModelSpec, e0: float, g: float, mode: str = "weyl", workers: int | None = None
) -> Iterator[np.ndarray]:
    """Stream of normalised nodal counts for the window, one array per block.

    ``mode="weyl"`` divides by the Weyl estimate of the index at each state's
    energy; ``mode="exact"`` divides by the exact spectral index.
    """
    if mode == "weyl":
        for block in iter_blocks(model, e0, (1 + g) * e0, workers=workers):
            yield weyl_xi(model, block)
    elif mode in ("exact", "exact-index"):
        for block, index in iter_exact_index(model, e0, g, workers=workers):
            yield block.nu / index
    else:
        raise ModelError(f"unknown normalisation mode {mode!r}")


# -- histograms -------------------------------------------------------------


@dataclass
class Histogram:
    """Uniform bins ``[k dx, (k + 1) dx)`` starting at 0, grown on demand."""

    bin_width: float
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    total: int = 0
    origin: float = 0.0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin width must be positive")
        self.counts = np.asarray(self.counts, dtype=np.int64)

    def add(self, values) -> "Histogram":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return self
        if np.any(values < self.origin) or not np.all(np.isfinite(values)):
            raise ValueError("histogram values must be finite and >= 0")
        k = np.floor((values - self.origin) / self.bin_width).astype(np.int64)
        self._accumulate(np.bincount(k))
        self.total += values.size
        return self

    def _accumulate(self, counts: np.ndarray) -> None:
        if len(counts) > len(self.counts):
            self.counts = np.concatenate([self.counts, np.zeros(len(counts) - len(self.counts), np.int64)])
        self.counts[: len(counts)] += counts

    def merge(self, other: "Histogram") -> "Histogram":
        if other.bin_width != self.bin_width or other.origin != self.origin:
            raise ValueError("cannot merge histograms with different binning")
        self._accumulate(other.counts)
        self.total += other.total
        return self

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.n_bins + 1)

    @property
    def left(self) -> np.ndarray:
        return self.edges[:-1]

    @property
    def centers(self) -> np.ndarray:
        return self.edges[:-1] + 0.5 * self.bin_width

    @property
    def density(self) -> np.ndarray:
        if self.total == 0:
            return np.zeros(self.n_bins)
        return self.counts / (self.total * self.bin_width)

    def pad_to(self, n_bins: int) -> "Histogram":
        if n_bins > self.n_bins:
            self._accumulate(np.zeros(n_bins, dtype=np.int64))
        return self


def histogram(values, bin_width: float) -> Histogram:
    """Histogram of a stream of values (an array or an iterable of arrays)."""
    h = Histogram(bin_width)
    if isinstance(values, np.ndarray):
        return h.add(values)
    for chunk in values:
        h.add(chunk)
    return h


def window_histogram(
    model: ModelSpec,
    e0: float,
    g: float,
    bin_width: float,
    mode: str = "weyl",
    workers: int | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> Histogram:
    """Histogram of normalised nodal counts over ``[e0, (1 + g) e0]``.

    Each block fills a private histogram; merging integer counts in block order
    makes the result independent of the number of workers.
    """
    if mode != "weyl":
        return histogram(normalized_counts(model, e0, g, mode, workers), bin_width)
    _check_window(e0, g)
    parts = _partitions(model, e0, (1 + g) * e0, False, False, chunk)

    def work(part):
        return Histogram(bin_width).add(weyl_xi(model, _expand(model, part)))

    out = Histogram(bin_width)
    for h in ordered_map(work, parts, workers):
        out.merge(h)
    return out
