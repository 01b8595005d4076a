"""Geometry of the region below the unit energy shell, ``{I : H(I) <= 1}``.

Points of the shell are written ``J = (J_omega, Z(J_omega))`` where ``J_omega``
ranges over the base region ``Omega`` (the first ``s - 1`` rescaled actions) and
``Z`` is the height of the shell above it.  The normalised nodal count of a
shell point is the volume of the corner box spanned by ``J`` divided by the
volume of the whole region.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ModelError
from .model import Kind, ModelSpec, axis_intercepts, energy, gradient, solve_axis
from .parallel import ordered_map, stream_rng


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    seed: int | None


@dataclass(frozen=True, eq=False)
class ShellGeometry:
    """Cached geometry of the unit shell of one model (immutable)."""

    model: ModelSpec
    v_gamma: float
    j_crit: np.ndarray
    z_crit: float
    xi_crit: float
    hessian: np.ndarray
    v_gamma_stderr: float = 0.0
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("j_crit", "hessian"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def det_hessian(self) -> float:
        return float(np.linalg.det(self.hessian))

    def to_dict(self) -> dict:
        return {
            "v_gamma": self.v_gamma,
            "v_gamma_stderr": self.v_gamma_stderr,
            "j_crit": self.j_crit.tolist(),
            "z_crit": self.z_crit,
            "xi_crit": self.xi_crit,
            "hessian": self.hessian.tolist(),
            "det_hessian": self.det_hessian,
        }


# -- shell height -----------------------------------------------------------


def shell_height(model: ModelSpec, J_omega) -> np.ndarray:
    """Vectorised Z(J_omega); NaN outside Omega."""
    J_omega = np.asarray(J_omega, dtype=float)
    full = np.concatenate([J_omega, np.zeros(J_omega.shape[:-1] + (1,))], axis=-1)
    return solve_axis(model, full, model.s - 1, 1.0)


def _check_omega(model: ModelSpec, J_omega) -> np.ndarray:
    J_omega = np.asarray(J_omega, dtype=float)
    if J_omega.shape != (model.s - 1,):
        raise ModelError(f"expected {model.s - 1} base coordinates, got shape {J_omega.shape}")
    if np.any(J_omega < 0):
        raise ModelError(f"base coordinates must be non-negative, got {J_omega}")
    base = energy(model, np.append(J_omega, 0.0))
    if base > 1.0 + 1e-12:
        raise ModelError(f"J_omega={J_omega} lies outside Omega (H(J_omega, 0)={base})")
    return J_omega


def z_gamma(model: ModelSpec, J_omega) -> float:
    J_omega = _check_omega(model, J_omega)
    z = shell_height(model, J_omega)
    return 0.0 if np.isnan(z) else float(z)


def d_gamma_weight(model: ModelSpec, J_omega) -> float:
    """Density of the shell measure over Omega, ``alpha / omega_s(J)``."""
    J_omega = _check_omega(model, J_omega)
    J = np.append(J_omega, z_gamma(model, J_omega))
    w_s = gradient(model, J)[-1]
    if not w_s > 0:
        raise ModelError(f"omega_s vanishes at J={J}; the weight is undefined on this boundary")
    return model.alpha / float(w_s)


def d_gamma_weight_fd(model: ModelSpec, J_omega) -> float:
    """Same weight as ``Z - J_omega . grad Z`` with a central-difference gradient."""
    J_omega = _check_omega(model, J_omega)
    h = 1e-6 * max(1.0, float(np.linalg.norm(J_omega)))
    grad = np.empty(model.s - 1)
    for l in range(model.s - 1):
        up, dn = J_omega.copy(), J_omega.copy()
        up[l] += h
        dn[l] -= h
        grad[l] = (z_gamma(model, up) - z_gamma(model, dn)) / (2 * h)
    return z_gamma(model, J_omega) - float(J_omega @ grad)


# -- volumes ----------------------------------------------------------------


def _closed_form_volume(model: ModelSpec) -> float | None:
    s, p = model.s, np.asarray(model.params)
    if model.kind is Kind.OSCILLATOR:
        return 1.0 / (math.factorial(s) * float(np.prod(p)))
    if model.kind is Kind.CUBOID:
        return float(np.prod(p)) / (math.pi ** (s / 2) * 2 ** (s - 1) * s * math.gamma(s / 2))
    return None


def _count_inside(args):
    model, box, seed, index, n = args
    rng = stream_rng(seed, index)
    I = rng.random((n, model.s)) * box
    return int(np.count_nonzero(energy(model, I) <= 1.0))


@functools.lru_cache(maxsize=64)
def estimate_gamma_volume(
    model: ModelSpec, seed: int = 0, rel_se: float = 1e-3, chunk: int = 1 << 18, workers: int | None = None
) -> VolumeEstimate:
    """Rejection Monte-Carlo volume inside the axis-aligned bounding box.

    Sampling continues in fixed-size seeded chunks until the relative standard
    error drops to ``rel_se``; the chunk layout does not depend on ``workers``.
    """
    box = axis_intercepts(model)
    box_vol = float(np.prod(box))
    hits = n = 0
    index = 0
    while True:
        batch = [(model, box, seed, index + k, chunk) for k in range(max(1, workers or 1))]
        for h in ordered_map(_count_inside, batch, workers):
            hits += h
            n += chunk
            index += 1
            p = hits / n
            if 0 < p < 1 and math.sqrt((1 - p) / (p * n)) <= rel_se:
                return VolumeEstimate(p * box_vol, box_vol * math.sqrt(p * (1 - p) / n), n, seed)


def gamma_volume(model: ModelSpec, seed: int = 0) -> float:
    """Volume of ``{H <= 1}``: closed form for builtins, Monte-Carlo otherwise."""
    v = _closed_form_volume(model)
    if v is not None:
        return v
    return estimate_gamma_volume(model, seed).value


def corner_volume(model: ModelSpec, J_omega) -> np.ndarray:
    """Vectorised ``prod(J_omega) * Z(J_omega)``; NaN outside Omega."""
    J_omega = np.asarray(J_omega, dtype=float)
    return np.prod(J_omega, axis=-1) * shell_height(model, J_omega)


def inscribed_volume(geom, J_omega) -> float:
    """Volume of the corner box reaching the shell above ``J_omega``.

    ``geom`` may be a :class:`ShellGeometry` or a bare :class:`ModelSpec`.
    """
    model = getattr(geom, "model", geom)
    J_omega = _check_omega(model, J_omega)
    return float(np.prod(J_omega)) * z_gamma(model, J_omega)


def volume_gradient(model: ModelSpec, J_omega) -> np.ndarray:
    """Gradient of the corner-box volume over Omega (vectorised).

    Uses ``dZ/dJ_l = -omega_l / omega_s`` on the shell.
    """
    J_omega = np.asarray(J_omega, dtype=float)
    Z = shell_height(model, J_omega)
    J = np.concatenate([J_omega, Z[..., None]], axis=-1)
    w = gradient(model, J)
    dZ = -w[..., :-1] / w[..., -1:]
    n = J_omega.shape[-1]
    out = np.empty_like(J_omega)
    prod_all = np.prod(J_omega, axis=-1)
    for l in range(n):
        others = np.prod(np.delete(J_omega, l, axis=-1), axis=-1)
        out[..., l] = others * Z + prod_all * dZ[..., l]
    return out


def _log_volume_gradient(model: ModelSpec, J_omega: np.ndarray) -> np.ndarray:
    Z = float(shell_height(model, J_omega))
    w = gradient(model, np.append(J_omega, Z))
    return 1.0 / J_omega - (w[:-1] / w[-1]) / Z


def _log_volume(model: ModelSpec, J_omega: np.ndarray) -> float:
    if np.any(J_omega <= 0):
        return -math.inf
    Z = float(shell_height(model, J_omega))
    if not Z > 0:
        return -math.inf
    return float(np.sum(np.log(J_omega)) + math.log(Z))


def _initial_point(model: ModelSpec, init: str) -> np.ndarray:
    s = model.s
    p = np.asarray(model.params[: s - 1])
    if init == "auto" and model.kind is Kind.OSCILLATOR:
        return 1.0 / (s * p)
    if init == "auto" and model.kind is Kind.CUBOID:
        return p / (math.sqrt(s) * math.pi)
    # convex combination of the origin and the axis intercepts: interior of Omega
    return axis_intercepts(model)[: s - 1] / s


def find_j_crit(
    model: ModelSpec,
    init: str = "auto",
    tol: float = 1e-10,
    max_iter: int = 200,
    v_gamma: VolumeEstimate | None = None,
) -> ShellGeometry:
    """Locate the largest corner box inscribed below the shell.

    Damped Newton ascent on ``log V(J_omega)``; every trial step is halved (at
    most 50 times) until it stays inside Omega and makes progress.  ``init`` is
    ``"auto"`` (closed form for builtins) or ``"proxy"`` (generic start).
    """
    J = _initial_point(model, init).astype(float)
    n = model.s - 1
    it = 0
    g = _log_volume_gradient(model, J)
    while np.linalg.norm(g) > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"no critical point after {max_iter} iterations (|grad|={np.linalg.norm(g):.3e}); "
                "the shell is probably not convex"
            )
        it += 1
        hess = np.empty((n, n))
        for l in range(n):
            h = 1e-6 * J[l]
            up, dn = J.copy(), J.copy()
            up[l] += h
            dn[l] -= h
            hess[:, l] = (_log_volume_gradient(model, up) - _log_volume_gradient(model, dn)) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        try:
            step = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            step = g
        if step @ g <= 0:
            step = g * (0.1 * float(np.min(J)) / float(np.linalg.norm(g)))
        f0, g0 = _log_volume(model, J), np.linalg.norm(g)
        t = 1.0
        for _ in range(50):
            trial = J + t * step
            f1 = _log_volume(model, trial)
            if np.isfinite(f1):
                g1 = _log_volume_gradient(model, trial)
                if f1 > f0 or np.linalg.norm(g1) < g0:
                    J, g = trial, g1
                    break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed to stay inside Omega")

    if v_gamma is None:
        closed = _closed_form_volume(model)
        v_gamma = VolumeEstimate(closed, 0.0, 0, None) if closed is not None else estimate_gamma_volume(model)
    z = float(shell_height(model, J))
    xi_crit = float(np.prod(J)) * z / v_gamma.value
    hessian = xi_hessian(model, J, v_gamma.value)
    if np.any(np.linalg.eigvalsh(hessian) <= 0):
        raise ConvergenceError(f"Hessian at the critical point is not positive definite: {hessian}")
    return ShellGeometry(
        model=model,
        v_gamma=v_gamma.value,
        j_crit=J,
        z_crit=z,
        xi_crit=xi_crit,
        hessian=hessian,
        v_gamma_stderr=v_gamma.stderr,
        iterations=it,
        meta={"volume_seed": v_gamma.seed, "volume_samples": v_gamma.samples},
    )


def xi_hessian(model: ModelSpec, J_center, v_gamma: float, rel_step: float = 1e-4) -> np.ndarray:
    """``-1/2`` times the Hessian of ``V / v_gamma`` at ``J_center``.

    Central differences of the analytic gradient with step ``rel_step * |J|``,
    symmetrised.
    """
    J_center = np.asarray(J_center, dtype=float)
    n = J_center.size
    h = rel_step * float(np.linalg.norm(J_center))
    d2 = np.empty((n, n))
    for l in range(n):
        up, dn = J_center.copy(), J_center.copy()
        up[l] += h
        dn[l] -= h
        d2[:, l] = (volume_gradient(model, up) - volume_gradient(model, dn)) / (2 * h)
    d2 = 0.5 * (d2 + d2.T) / v_gamma
    return -0.5 * d2


@functools.lru_cache(maxsize=64)
def shell_geometry(model: ModelSpec) -> ShellGeometry:
    """Memoised :func:`find_j_crit` with default settings."""
    return find_j_crit(model)
