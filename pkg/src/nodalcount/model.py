"""Separable systems described by a homogeneous Hamilton function of the actions.

Three families are supported:

* ``oscillator``: ``H(I) = sum_l w_l I_l`` (degree 1, Maslov shifts 1/2)
* ``cuboid``: ``H(I) = pi^2 sum_l (I_l / a_l)^2`` (degree 2, shifts 1; Dirichlet box)
* ``custom``: a positive combination of monomials ``c_k prod_l I_l^e_kl`` that all
  share the same total degree.

Vectorised helpers (:func:`energy`, :func:`gradient`, :func:`solve_axis`) work on
arrays whose last axis holds the ``s`` action components; the scalar entry points
(:func:`hamiltonian_value`, :func:`frequencies`, :func:`ebk_energy`) validate their
input and return plain floats.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import AssumptionViolation, ModelError

PI2 = math.pi**2


class Kind(str, enum.Enum):
    OSCILLATOR = "oscillator"
    CUBOID = "cuboid"
    CUSTOM = "custom"


_DEGREE = {Kind.OSCILLATOR: 1.0, Kind.CUBOID: 2.0}


@dataclass(frozen=True)
class ModelSpec:
    """A separable system given directly in action variables.

    ``params`` holds frequencies (oscillator), side lengths (cuboid) or monomial
    coefficients (custom, one per row of ``exponents``).
    """

    kind: Kind
    s: int
    alpha: float
    params: tuple[float, ...]
    mu: tuple[float, ...]
    exponents: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        object.__setattr__(
            self, "exponents", tuple(tuple(float(e) for e in row) for row in self.exponents)
        )
        if int(self.s) != self.s or self.s < 2:
            raise ModelError(f"dimension s must be an integer >= 2, got {self.s}")
        if not self.alpha > 0:
            raise ModelError(f"homogeneity degree must be positive, got {self.alpha}")
        if any(not p > 0 for p in self.params):
            raise ModelError(f"all params must be strictly positive, got {self.params}")
        if len(self.mu) != self.s:
            raise ModelError(f"need {self.s} Maslov shifts, got {len(self.mu)}")
        if kind in _DEGREE:
            if len(self.params) != self.s:
                raise ModelError(f"{kind.value} needs {self.s} params, got {len(self.params)}")
            if abs(self.alpha - _DEGREE[kind]) > 1e-12:
                raise ModelError(f"{kind.value} has degree {_DEGREE[kind]}, got alpha={self.alpha}")
            if self.exponents:
                raise ModelError("exponents are only meaningful for custom models")
        else:
            self._validate_custom()

    def _validate_custom(self):
        E = np.asarray(self.exponents, dtype=float)
        if E.ndim != 2 or E.shape[1] != self.s:
            raise ModelError(f"exponents must be an (m, {self.s}) table")
        if E.shape[0] != len(self.params):
            raise ModelError("one coefficient per monomial is required")
        if np.any((E != 0) & (E < 1)):
            raise ModelError("exponents must be 0 or >= 1")
        if np.any(np.abs(E.sum(axis=1) - self.alpha) > 1e-12):
            raise ModelError(f"every monomial must have total degree alpha={self.alpha}")
        for axis in range(self.s):
            if self._pure_term(axis) is None:
                raise ModelError(f"custom model needs a pure power term in I_{axis + 1}")

    def _pure_term(self, axis: int) -> int | None:
        for k, row in enumerate(self.exponents):
            if row[axis] > 0 and all(e == 0 for j, e in enumerate(row) if j != axis):
                return k
        return None

    @classmethod
    def oscillator(cls, omegas: Sequence[float], mu: Sequence[float] | None = None):
        s = len(omegas)
        return cls(Kind.OSCILLATOR, s, 1.0, tuple(omegas), tuple(mu) if mu else (0.5,) * s)

    @classmethod
    def cuboid(cls, sides: Sequence[float], mu: Sequence[float] | None = None):
        s = len(sides)
        return cls(Kind.CUBOID, s, 2.0, tuple(sides), tuple(mu) if mu else (1.0,) * s)

    @classmethod
    def custom(
        cls,
        coefficients: Sequence[float],
        exponents: Sequence[Sequence[float]],
        mu: Sequence[float] | None = None,
        check: bool = True,
    ):
        """Build ``H(I) = sum_k coefficients[k] * prod_l I_l ** exponents[k][l]``.

        With ``check`` the monotonicity and convexity assumptions are verified on
        random points of the unit shell (see :func:`check_assumptions`).
        """
        E = np.asarray(exponents, dtype=float)
        if E.ndim != 2:
            raise ModelError("exponents must be a 2-D table")
        s = E.shape[1]
        model = cls(
            Kind.CUSTOM,
            s,
            float(E.sum(axis=1)[0]),
            tuple(coefficients),
            tuple(mu) if mu else (0.5,) * s,
            tuple(map(tuple, E)),
        )
        if check:
            check_assumptions(model)
        return model

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, object]) -> "ModelSpec":
        """Parse the key-value form used by config files and CLI flags.

        Recognised keys: ``kind``, ``s``, ``alpha``, ``params`` and ``mu`` as
        comma separated lists, and for custom models ``exponents`` as
        semicolon separated rows (``"2,0;1,1;0,2"``).
        """
        kind = Kind(str(cfg.get("kind", "oscillator")).strip().lower())
        params = _floats(cfg.get("params"))
        mu = _floats(cfg.get("mu")) or None
        if kind is Kind.CUSTOM:
            rows = cfg.get("exponents") or ""
            if isinstance(rows, str):
                rows = [r for r in rows.strip().split(";") if r.strip()]
            if not rows:
                raise ModelError("custom models need 'exponents'")
            exps = [_floats(r) for r in rows]
            model = cls.custom(params, exps, mu)
        else:
            if not params:
                raise ModelError(f"{kind.value} needs 'params'")
            model = cls.oscillator(params, mu) if kind is Kind.OSCILLATOR else cls.cuboid(params, mu)
        if cfg.get("s") not in (None, "") and int(cfg["s"]) != model.s:
            raise ModelError(f"s={cfg['s']} does not match {model.s} params")
        if cfg.get("alpha") not in (None, "") and abs(float(cfg["alpha"]) - model.alpha) > 1e-12:
            raise ModelError(f"alpha={cfg['alpha']} does not match model degree {model.alpha}")
        return model

    def to_mapping(self) -> dict:
        out = {
            "kind": self.kind.value,
            "s": self.s,
            "alpha": self.alpha,
            "params": list(self.params),
            "mu": list(self.mu),
        }
        if self.exponents:
            out["exponents"] = [list(r) for r in self.exponents]
        return out


def _floats(value) -> list[float]:
    if value is None:
        return []
    if isinstance(value, str):
        return [float(v) for v in value.replace(" ", "").split(",") if v]
    return [float(v) for v in value]


def _monomials(model: ModelSpec, I: np.ndarray) -> list[np.ndarray]:
    terms = []
    for c, row in zip(model.params, model.exponents):
        t = c
        for l, e in enumerate(row):
            if e:
                t = t * I[..., l] ** e
        terms.append(t)
    return terms


def energy(model: ModelSpec, I) -> np.ndarray:
    """H(I) for an array of action vectors (last axis of length ``s``).

    Components are accumulated left to right so that identical rows always give
    bit-identical energies regardless of array layout.
    """
    I = np.asarray(I, dtype=float)
    if model.kind is Kind.OSCILLATOR:
        w = model.params
        acc = w[0] * I[..., 0]
        for l in range(1, model.s):
            acc = acc + w[l] * I[..., l]
        return acc
    if model.kind is Kind.CUBOID:
        a = model.params
        acc = (I[..., 0] / a[0]) ** 2
        for l in range(1, model.s):
            acc = acc + (I[..., l] / a[l]) ** 2
        return PI2 * acc
    terms = _monomials(model, I)
    acc = terms[0]
    for t in terms[1:]:
        acc = acc + t
    return acc


def gradient(model: ModelSpec, I) -> np.ndarray:
    """Analytic dH/dI_l for an array of action vectors."""
    I = np.asarray(I, dtype=float)
    if model.kind is Kind.OSCILLATOR:
        return np.broadcast_to(np.asarray(model.params), I.shape).copy()
    if model.kind is Kind.CUBOID:
        a = np.asarray(model.params)
        return 2.0 * PI2 * I / a**2
    out = np.zeros_like(I)
    for c, row in zip(model.params, model.exponents):
        for l, el in enumerate(row):
            if el == 0:
                continue
            t = c * el * (I[..., l] ** (el - 1.0) if el != 1 else 1.0)
            for j, ej in enumerate(row):
                if j != l and ej:
                    t = t * I[..., j] ** ej
            out[..., l] += t
    return out


def _check_vector(model: ModelSpec, I) -> np.ndarray:
    I = np.asarray(I, dtype=float)
    if I.shape != (model.s,):
        raise ModelError(f"expected an action vector of length {model.s}, got shape {I.shape}")
    if np.any(I < 0) or not np.all(np.isfinite(I)):
        raise ModelError(f"actions must be finite and non-negative, got {I}")
    return I


def hamiltonian_value(model: ModelSpec, I) -> float:
    return float(energy(model, _check_vector(model, I)[None, :])[0])


def frequencies(model: ModelSpec, I) -> np.ndarray:
    """Torus frequencies dH/dI_l; raises if any is not strictly positive."""
    I = _check_vector(model, I)
    w = gradient(model, I[None, :])[0]
    if np.any(w <= 0):
        raise AssumptionViolation(f"non-positive frequency {w} at I={I}")
    return w


def fd_gradient(model: ModelSpec, I) -> np.ndarray:
    """Central finite-difference gradient, step 1e-6 * max(1, |I|)."""
    I = _check_vector(model, I)
    h = 1e-6 * max(1.0, float(np.linalg.norm(I)))
    out = np.empty(model.s)
    for l in range(model.s):
        up, dn = I.copy(), I.copy()
        up[l] += h
        dn[l] = max(dn[l] - h, 0.0)
        out[l] = (hamiltonian_value(model, up) - hamiltonian_value(model, dn)) / (up[l] - dn[l])
    return out


def ebk_energy(model: ModelSpec, n) -> float:
    n = np.asarray(n)
    if n.shape != (model.s,):
        raise ModelError(f"expected {model.s} quantum numbers, got shape {n.shape}")
    if np.any(n < 0) or np.any(n != np.floor(n)):
        raise ModelError(f"quantum numbers must be non-negative integers, got {n}")
    return float(ebk_energies(model, n[None, :])[0])


def ebk_energies(model: ModelSpec, n: np.ndarray) -> np.ndarray:
    return energy(model, np.asarray(n, dtype=float) + np.asarray(model.mu))


def solve_axis(model: ModelSpec, I, axis: int, level=1.0) -> np.ndarray:
    """Solve ``H(I with I[axis] = x) = level`` for ``x >= 0``.

    The value in ``I[..., axis]`` is ignored.  Returns NaN where even ``x = 0``
    exceeds ``level``.  The root is unique because H increases in every action.
    """
    I = np.array(I, dtype=float)
    level = np.asarray(level, dtype=float)
    I[..., axis] = 0.0
    if model.kind is Kind.OSCILLATOR:
        rest = energy(model, I)
        x = (level - rest) / model.params[axis]
        return np.where(x >= 0, x, np.nan)
    if model.kind is Kind.CUBOID:
        rest = energy(model, I) / PI2
        r = level / PI2 - rest
        with np.errstate(invalid="ignore"):
            return np.where(r >= 0, model.params[axis] * np.sqrt(np.maximum(r, 0.0)), np.nan)
    return _solve_axis_newton(model, I, axis, level)


def _solve_axis_newton(model, I, axis, level, atol=1e-14, max_iter=200):
    shape = np.broadcast_shapes(I.shape[:-1], level.shape)
    I = np.broadcast_to(I, shape + (model.s,)).copy()
    level = np.broadcast_to(level, shape).astype(float)
    base = energy(model, I)
    ok = base <= level
    k = model._pure_term(axis)
    c, e = model.params[k], model.exponents[k][axis]
    lo = np.zeros(shape)
    hi = np.where(ok, (np.maximum(level, 0.0) / c) ** (1.0 / e), 0.0)
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        I[..., axis] = x
        f = energy(model, I) - level
        lo = np.where(f <= 0, x, lo)
        hi = np.where(f > 0, x, hi)
        d = gradient(model, I)[..., axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / d
        inside = np.isfinite(xn) & (xn > lo) & (xn < hi)
        x_new = np.where(inside, xn, 0.5 * (lo + hi))
        done = np.abs(x_new - x) <= atol * np.maximum(1.0, np.abs(x))
        x = x_new
        if np.all(done | ~ok):
            break
    return np.where(ok, x, np.nan)


def axis_intercepts(model: ModelSpec, level: float = 1.0) -> np.ndarray:
    """Largest value of each action on the shell, ``H(0,..,I_l,..,0) = level``."""
    out = np.empty(model.s)
    for l in range(model.s):
        out[l] = solve_axis(model, np.zeros(model.s), l, level)
    return out


def check_assumptions(model: ModelSpec, n_points: int = 256, seed: int = 0) -> None:
    """Check homogeneity, monotonicity and convexity on random shell points.

    Raises :class:`AssumptionViolation` on the first failure.
    """
    rng = np.random.default_rng(seed)
    box = axis_intercepts(model)
    I = rng.uniform(0.05, 1.0, (n_points, model.s)) * box
    I /= energy(model, I)[:, None] ** (1.0 / model.alpha)
    lam = rng.uniform(0.1, 10.0, n_points)
    lhs = energy(model, lam[:, None] * I)
    rhs = lam**model.alpha * energy(model, I)
    if np.any(np.abs(lhs - rhs) > 1e-10 * rhs):
        raise AssumptionViolation("Hamilton function is not homogeneous of degree alpha")
    if np.any(gradient(model, I) <= 0):
        raise AssumptionViolation("Hamilton function is not increasing in every action")
    h = 1e-6
    for p in I:
        hess = np.empty((model.s, model.s))
        for l in range(model.s):
            up, dn = p.copy(), p.copy()
            up[l] += h
            dn[l] -= h
            hess[l] = (gradient(model, up) - gradient(model, dn)) / (2 * h)
        hess = 0.5 * (hess + hess.T)
        if np.linalg.eigvalsh(hess)[0] < -1e-6 * max(1.0, np.abs(hess).max()):
            raise AssumptionViolation(f"Hessian of H is not positive semidefinite at I={p}")
