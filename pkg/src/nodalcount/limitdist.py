"""Limiting distribution of normalised nodal counts.

The limit law is the image of the shell measure ``dGamma / (s V_gamma)`` under
``J_omega -> V(J_omega) / V_gamma``.  Points drawn uniformly from the region
below the shell and pushed radially onto it are distributed exactly according
to that measure, which is what :func:`sample_limit_distribution` does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import count

import numpy as np

from .errors import ConvergenceError, ModelError
from .geometry import ShellGeometry, corner_volume, shell_height
from .model import Kind, ModelSpec, axis_intercepts, energy, gradient, solve_axis
from .parallel import ordered_map, stream_rng
from .spectra import Histogram

MAX_MOMENT_POWER = 4


@dataclass
class LimitSample:
    """Histogram of Monte-Carlo draws plus power sums for moment estimates."""

    histogram: Histogram
    samples: int
    proposals: int
    seed: int
    power_sums: np.ndarray  # sum of xi**k, k = 0..MAX_MOMENT_POWER

    def moment(self, m: int) -> float:
        return float(self.power_sums[m] / self.samples)

    def moment_stderr(self, m: int) -> float:
        if 2 * m > MAX_MOMENT_POWER:
            raise ValueError(f"standard errors available up to m={MAX_MOMENT_POWER // 2}")
        var = self.moment(2 * m) - self.moment(m) ** 2
        return math.sqrt(max(var, 0.0) / self.samples)


def _draw_xi(geom: ShellGeometry, box: np.ndarray, seed: int, index: int, n: int) -> tuple[np.ndarray, int]:
    model = geom.model
    rng = stream_rng(seed, index)
    I = rng.random((n, model.s)) * box
    H = energy(model, I)
    I, H = I[(H <= 1.0) & (H > 0)], H[(H <= 1.0) & (H > 0)]
    # radial projection onto the shell: J = I / H^(1/alpha)
    xi = np.prod(I, axis=1) / (H ** (model.s / model.alpha) * geom.v_gamma)
    return xi, n


def sample_limit_distribution(
    geom: ShellGeometry,
    samples: int,
    seed: int = 0,
    bin_width: float = 0.002,
    workers: int | None = None,
    chunk: int = 1 << 20,
) -> LimitSample:
    """Monte-Carlo estimate of the limiting distribution.

    Proposals are drawn in fixed-size chunks, chunk ``i`` from sub-stream ``i``
    of ``seed``; accepted values are consumed in chunk order and the last chunk
    is truncated, so the result depends only on ``(samples, seed, chunk)``.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    box = axis_intercepts(geom.model)
    hist = Histogram(bin_width)
    sums = np.zeros(MAX_MOMENT_POWER + 1)
    have = proposals = 0
    stream = ordered_map(lambda i: _draw_xi(geom, box, seed, i, chunk), count(), workers)
    for xi, n in stream:
        proposals += n
        xi = xi[: samples - have]
        hist.add(xi)
        sums += [np.sum(xi**k) for k in range(MAX_MOMENT_POWER + 1)]
        have += len(xi)
        if have >= samples:
            break
        if proposals >= 1000 * chunk and have == 0:
            raise ModelError("no proposal landed inside the shell; malformed model")
    stream.close()
    return LimitSample(hist, samples, proposals, seed, sums)


# -- closed forms -----------------------------------------------------------


def _require_planar_builtin(model: ModelSpec) -> None:
    if model.s != 2 or model.kind is Kind.CUSTOM:
        raise ModelError("closed forms exist only for the two-dimensional oscillator and cuboid")


def _xi_crit_builtin(model: ModelSpec) -> float:
    return 0.5 if model.kind is Kind.OSCILLATOR else 2.0 / math.pi


def closed_form_p2(model: ModelSpec, xi: float) -> float:
    """Limiting density of the 2-D oscillator or rectangle."""
    _require_planar_builtin(model)
    if not 0 < xi < _xi_crit_builtin(model):
        raise ModelError(f"xi={xi} outside the support (0, {_xi_crit_builtin(model)})")
    if model.kind is Kind.OSCILLATOR:
        return (1.0 - 2.0 * xi) ** -0.5
    return (1.0 - math.pi**2 * xi**2 / 4.0) ** -0.5


def closed_form_cdf2(model: ModelSpec, xi) -> np.ndarray:
    """Cumulative distribution belonging to :func:`closed_form_p2` (vectorised)."""
    _require_planar_builtin(model)
    x = np.clip(np.asarray(xi, dtype=float), 0.0, _xi_crit_builtin(model))
    if model.kind is Kind.OSCILLATOR:
        return 1.0 - np.sqrt(1.0 - 2.0 * x)
    return (2.0 / math.pi) * np.arcsin(np.minimum(math.pi * x / 2.0, 1.0))


def level_set_p2(geom: ShellGeometry, xi: float) -> float:
    """Two-dimensional limiting density from the two roots of ``J Z(J) = xi V_gamma``.

    Works for any planar model; the roots are bracketed around ``J_crit`` and
    found by bisection.
    """
    model = geom.model
    if model.s != 2:
        raise ModelError("level_set_p2 needs s = 2")
    if not 0 < xi < geom.xi_crit:
        raise ModelError(f"xi={xi} outside the support (0, {geom.xi_crit})")
    target = xi * geom.v_gamma
    jc = float(geom.j_crit[0])
    jmax = float(axis_intercepts(model)[0])

    def f(j):
        return float(corner_volume(model, np.array([j]))) - target

    def root(a, b):
        fa = f(a)
        for _ in range(200):
            mid = 0.5 * (a + b)
            fm = f(mid)
            if (fm > 0) == (fa > 0):
                a, fa = mid, fm
            else:
                b = mid
            if abs(b - a) <= 1e-15 * max(1.0, abs(b)):
                break
        return 0.5 * (a + b)

    total = 0.0
    for j in (root(0.0, jc), root(jmax, jc)):
        z = float(shell_height(model, np.array([j])))
        w = gradient(model, np.array([j, z]))
        slope = -w[0] / w[1]
        total += z / abs(z + j * slope)
    return total


def ho_moment(s: int, m: int) -> Fraction:
    """Exact ``<xi^m>`` of the s-dimensional oscillator limit law."""
    if s < 1 or m < 0:
        raise ValueError("need s >= 1 and m >= 0")
    f = math.factorial
    return Fraction(f(s) ** (m + 1) * f(m) ** s * (m + 1), f(s * (m + 1)))


def sphere_area(dim: int) -> float:
    """Surface volume of the unit sphere S^dim (S^0 counts its two points)."""
    return 2.0 * math.pi ** ((dim + 1) / 2) / math.gamma((dim + 1) / 2)


@dataclass(frozen=True)
class TailReport:
    s: int
    xi_crit: float
    prefactor: float
    exponent: float
    small_xi_constant: float

    def asymptote(self, xi):
        """Leading behaviour ``prefactor * (xi_crit - xi)^exponent`` below the cut-off."""
        return self.prefactor * (self.xi_crit - np.asarray(xi, dtype=float)) ** self.exponent

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "xi_crit": self.xi_crit,
            "prefactor": self.prefactor,
            "exponent": self.exponent,
            "small_xi_constant": self.small_xi_constant,
        }


def tail_report(geom: ShellGeometry) -> TailReport:
    """Universal behaviour of the limit law at both ends of its support."""
    s = geom.model.s
    det = geom.det_hessian
    if np.any(np.linalg.eigvalsh(geom.hessian) <= 0) or not det > 0:
        raise ModelError("Hessian at the critical point is not positive definite")
    pref = geom.z_crit * sphere_area(s - 2) / (2.0 * geom.v_gamma * math.sqrt(det))
    return TailReport(s, geom.xi_crit, pref, (s - 3) / 2, 1.0 / math.factorial(s - 2))


def small_xi_asymptote(s: int, xi: float) -> float:
    """Leading ``(-log xi)^(s-2) / (s-2)!`` divergence at small xi."""
    if s < 2:
        raise ValueError("need s >= 2")
    if not 0 < xi < 1:
        raise ModelError(f"xi={xi} must lie in (0, 1)")
    if s == 2:
        return 1.0
    return (-math.log(xi)) ** (s - 2) / math.factorial(s - 2)


# -- level-set quadrature (s = 3) ------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class _LogitChart:
    """Chart ``R^2 -> interior of Omega`` for three-dimensional models.

    ``J1 = A sigmoid(p)``, ``J2 = sigmoid(q) T(J1)`` with ``A`` the J1 intercept
    and ``T(J1)`` the top of Omega above J1.  All three corners of Omega are
    pushed to infinity, where the level curves become straight lines.
    """

    def __init__(self, model: ModelSpec):
        self.model = model
        self.A = float(axis_intercepts(model)[0])

    def top(self, J1):
        pts = np.stack([J1, np.zeros_like(J1), np.zeros_like(J1)], axis=-1)
        return solve_axis(self.model, pts, 1, 1.0)

    def to_j(self, p, q):
        J1 = self.A * _sigmoid(p)
        J2 = _sigmoid(q) * self.top(J1)
        return J1, J2

    def from_j(self, J1, J2):
        p = np.log(J1 / (self.A - J1))
        t = J2 / self.top(J1)
        return p, np.log(t / (1.0 - t))

    def volume(self, p, q):
        J1, J2 = np.broadcast_arrays(*self.to_j(p, q))
        return corner_volume(self.model, np.stack([J1, J2], axis=-1))

    def weight(self, p, q):
        """``Z |det dJ/d(p,q)| / |grad_(p,q) V|`` at chart points."""
        model = self.model
        sp, sq = _sigmoid(p), _sigmoid(q)
        J1 = self.A * sp
        T = self.top(J1)
        J2 = sq * T
        Z = shell_height(model, np.stack([J1, J2], axis=-1))
        w_edge = gradient(model, np.stack([J1, T, np.zeros_like(J1)], axis=-1))
        dT = -w_edge[..., 0] / w_edge[..., 1]
        w = gradient(model, np.stack([J1, J2, Z], axis=-1))
        dZ1, dZ2 = -w[..., 0] / w[..., 2], -w[..., 1] / w[..., 2]
        V1 = J2 * Z + J1 * J2 * dZ1
        V2 = J1 * Z + J1 * J2 * dZ2
        dJ1_dp = self.A * sp * (1.0 - sp)
        dJ2_dq = T * sq * (1.0 - sq)
        dJ2_dp = sq * dT * dJ1_dp
        Vp = V1 * dJ1_dp + V2 * dJ2_dp
        Vq = V2 * dJ2_dq
        return Z * dJ1_dp * dJ2_dq / np.hypot(Vp, Vq)


def _level_crossing_box(chart: _LogitChart, geom: ShellGeometry, target: float, n_rays: int = 360):
    """Bounding box, in chart coordinates, of the level curve ``V = target``.

    Each ray from ``J_crit`` meets the (convex) superlevel set's boundary once.
    """
    model = geom.model
    jc = np.asarray(geom.j_crit)
    ang = 2 * np.pi * (np.arange(n_rays) + 0.5) / n_rays
    d = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    reach = float(np.hypot(*axis_intercepts(model)[:2]))

    def inside(t):
        pts = jc + t[:, None] * d
        return (pts > 0).all(axis=1) & (energy(model, np.c_[pts, np.zeros(n_rays)]) < 1.0)

    def bisect(pred, lo, hi):
        # pred is true at lo and false at hi along every ray
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            ok = pred(mid)
            lo, hi = np.where(ok, mid, lo), np.where(ok, hi, mid)
        return lo, hi

    _, exit_ = bisect(inside, np.zeros(n_rays), np.full(n_rays, reach))

    def above(t):
        v = corner_volume(model, jc + t[:, None] * d)
        return np.nan_to_num(v, nan=0.0) >= target

    _, hi = bisect(above, np.zeros(n_rays), exit_)
    pts = jc + hi[:, None] * d
    p, q = chart.from_j(pts[:, 0], pts[:, 1])
    return p.min(), p.max(), q.min(), q.max()


def _marching_segments(F: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Segments of the zero level of ``F`` sampled on the grid ``xs x ys``.

    Returns the segment end points as two ``(k, 2)`` arrays; saddle cells are
    split according to the sign at the cell centre.
    """
    f00, f10, f01, f11 = F[:-1, :-1], F[1:, :-1], F[:-1, 1:], F[1:, 1:]
    s00, s10, s01, s11 = f00 >= 0, f10 >= 0, f01 >= 0, f11 >= 0
    X0, X1 = xs[:-1, None], xs[1:, None]
    Y0, Y1 = ys[None, :-1], ys[None, 1:]

    def cross(fa, fb):
        with np.errstate(divide="ignore", invalid="ignore"):
            return fa / (fa - fb)

    # edge crossing points: bottom (y0), top (y1), left (x0), right (x1)
    tb, tt = cross(f00, f10), cross(f01, f11)
    tl, tr = cross(f00, f01), cross(f10, f11)
    shape = f00.shape
    edges = {
        "b": (s00 != s10, X0 + tb * (X1 - X0), np.broadcast_to(Y0, shape)),
        "t": (s01 != s11, X0 + tt * (X1 - X0), np.broadcast_to(Y1, shape)),
        "l": (s00 != s01, np.broadcast_to(X0, shape), Y0 + tl * (Y1 - Y0)),
        "r": (s10 != s11, np.broadcast_to(X1, shape), Y0 + tr * (Y1 - Y0)),
    }
    ncross = sum(e[0].astype(int) for e in edges.values())
    starts, ends = [], []
    two = ncross == 2
    order = ["b", "r", "t", "l"]
    for i, a in enumerate(order):
        for b in order[i + 1 :]:
            sel = two & edges[a][0] & edges[b][0]
            if sel.any():
                starts.append(np.c_[edges[a][1][sel], edges[a][2][sel]])
                ends.append(np.c_[edges[b][1][sel], edges[b][2][sel]])
    four = ncross == 4
    if four.any():
        centre = 0.25 * (f00 + f10 + f01 + f11) >= 0
        same = centre == s00
        for pairs, sel in (((("b", "r"), ("t", "l")), four & same), ((("b", "l"), ("r", "t")), four & ~same)):
            for a, b in pairs:
                starts.append(np.c_[edges[a][1][sel], edges[a][2][sel]])
                ends.append(np.c_[edges[b][1][sel], edges[b][2][sel]])
    if not starts:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.concatenate(starts), np.concatenate(ends)


def _quadrature_on_grid(chart: _LogitChart, box, target: float, n: int):
    p = np.linspace(box[0], box[1], n + 1)
    q = np.linspace(box[2], box[3], n + 1)
    F = chart.volume(p[:, None], q[None, :]) - target
    edge_hit = max(F[0].max(), F[-1].max(), F[:, 0].max(), F[:, -1].max()) >= 0
    a, b = _marching_segments(F, p, q)
    if len(a) == 0:
        return 0.0, edge_hit
    mid = 0.5 * (a + b)
    length = np.hypot(*(b - a).T)
    return float(np.sum(chart.weight(mid[:, 0], mid[:, 1]) * length)), edge_hit


def quadrature_p(
    geom: ShellGeometry, xi: float, rel_tol: float = 5e-3, n_start: int = 128, n_max: int = 2048
) -> float:
    """Limiting density of a three-dimensional model by level-set quadrature.

    The curve ``V(J_omega) = xi V_gamma`` is traced with marching squares on a
    grid in logit coordinates over Omega and ``Z / |grad V|`` is integrated
    along it.  The grid is doubled until two successive values differ by less
    than ``rel_tol``.
    """
    if geom.model.s != 3:
        raise ModelError("quadrature_p is implemented for s = 3 only")
    if not 0 < xi < geom.xi_crit:
        raise ModelError(f"xi={xi} outside the support (0, {geom.xi_crit})")
    if geom.xi_crit - xi < 1e-6:
        raise ModelError("xi too close to xi_crit: the level set degenerates to a point")
    chart = _LogitChart(geom.model)
    target = xi * geom.v_gamma
    p0, p1, q0, q1 = _level_crossing_box(chart, geom, target)
    pad_p, pad_q = 0.05 * (p1 - p0) + 0.5, 0.05 * (q1 - q0) + 0.5
    box = [p0 - pad_p, p1 + pad_p, q0 - pad_q, q1 + pad_q]
    prev = None
    n = n_start
    while n <= n_max:
        val, edge_hit = _quadrature_on_grid(chart, box, target, n)
        if edge_hit:
            # the level curve leaves the box: widen it and start over
            box = [box[0] - 2.0, box[1] + 2.0, box[2] - 2.0, box[3] + 2.0]
            prev, n = None, n_start
            continue
        if prev is not None and abs(val - prev) <= rel_tol * abs(val):
            return val
        prev = val
        n *= 2
    raise ConvergenceError(f"level-set quadrature did not reach rel_tol={rel_tol} at n={n_max}")


# -- comparisons ------------------------------------------------------------


def bin_masses(cdf, hist: Histogram) -> np.ndarray:
    """Probability of each histogram bin under a reference distribution."""
    c = np.asarray(cdf(hist.edges), dtype=float)
    return np.diff(c)


def histogram_distance(
    hist: Histogram,
    reference_masses: np.ndarray,
    xi_crit: float,
    exclude_bins: int = 5,
    xi_max: float | None = None,
) -> dict:
    """Sup-norm (of densities) and L1 (of bin masses) between two binned laws.

    Bins meeting ``[xi_crit - exclude_bins * dxi, xi_crit]`` are skipped, as are
    bins reaching beyond ``xi_max`` when given.
    """
    dx = hist.bin_width
    n = max(hist.n_bins, len(reference_masses))
    emp = np.zeros(n)
    emp[: hist.n_bins] = hist.counts / max(hist.total, 1)
    ref = np.zeros(n)
    ref[: len(reference_masses)] = reference_masses
    left = hist.origin + dx * np.arange(n)
    right = left + dx
    keep = (right <= xi_crit - exclude_bins * dx + 1e-12) | (left >= xi_crit - 1e-12)
    if xi_max is not None:
        keep &= right <= xi_max + 1e-12
    diff = np.abs(emp - ref)[keep]
    return {
        "sup_norm": float(diff.max() / dx) if diff.size else 0.0,
        "l1": float(diff.sum()),
        "bins": int(keep.sum()),
    }


def fit_tail_exponent(hist: Histogram, xi_crit: float, eps_lo: float = 1e-3, eps_hi: float | None = None) -> float:
    """Least-squares slope of ``log P`` against ``log(xi_crit - xi)``.

    Uses bins lying entirely inside ``xi_crit - xi in [eps_lo, eps_hi]``
    (default ``eps_hi = xi_crit / 10``), evaluated at the bin centre.
    """
    eps_hi = 0.1 * xi_crit if eps_hi is None else eps_hi
    left, right = hist.left, hist.left + hist.bin_width
    sel = (xi_crit - right >= eps_lo) & (xi_crit - left <= eps_hi) & (hist.counts > 0)
    if sel.sum() < 3:
        raise ValueError("too few populated bins for a tail fit")
    x = np.log(xi_crit - hist.centers[sel])
    y = np.log(hist.density[sel])
    return float(np.polyfit(x, y, 1)[0])
