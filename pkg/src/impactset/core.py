"""Domain types and the set-valued contact force maps.

Everything downstream works in *normalized* velocity coordinates
``w = L^T v`` where ``M = L L^T``.  In those coordinates kinetic energy is
``0.5 * |w|^2`` and an impulse applied through a contact Jacobian changes the
velocity by ``J^T lambda`` directly.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotSPD

DEFAULT_TOL = 1e-9


def _as_vector(x, name: str, length: Optional[int] = None) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    if length is not None and arr.shape[0] != length:
        raise DimensionMismatch(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Contact:
    """A single contact at a frozen configuration.

    Parameters
    ----------
    id : str
        Label used in reports and strategy orderings.
    jn : array, shape (n,)
        Normal Jacobian row.
    jt : array, shape (2, n), optional
        Tangential Jacobian rows. Planar contacts pass one row (or a second
        row of zeros); the missing row is padded with zeros.
    mu : float
        Friction coefficient, zero exactly when ``jt`` is absent.
    """

    id: str
    jn: np.ndarray
    jt: Optional[np.ndarray] = None
    mu: float = 0.0

    def __post_init__(self):
        jn = _as_vector(self.jn, f"contact {self.id!r} jn")
        if not np.any(jn):
            raise ValueError(f"contact {self.id!r}: jn must be nonzero")
        object.__setattr__(self, "jn", jn)
        mu = float(self.mu)
        if self.jt is None:
            if mu != 0.0:
                raise ValueError(f"contact {self.id!r}: mu > 0 requires jt")
        else:
            jt = np.array(self.jt, dtype=float)
            if jt.ndim == 1:
                jt = jt[None, :]
            if jt.ndim != 2 or jt.shape[0] not in (1, 2) or jt.shape[1] != jn.shape[0]:
                raise DimensionMismatch(
                    f"contact {self.id!r}: jt must have 2 rows of length {jn.shape[0]}")
            if jt.shape[0] == 1:
                jt = np.vstack([jt, np.zeros_like(jt)])
            if not np.all(np.isfinite(jt)):
                raise ValueError(f"contact {self.id!r}: jt must be finite")
            if not mu > 0.0:
                raise ValueError(f"contact {self.id!r}: jt present requires mu > 0")
            jt.setflags(write=False)
            object.__setattr__(self, "jt", jt)
        if mu < 0 or not np.isfinite(mu):
            raise ValueError(f"contact {self.id!r}: mu must be a nonnegative finite number")
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return self.jn.shape[0]

    @property
    def frictional(self) -> bool:
        return self.jt is not None

    @property
    def jacobian(self) -> np.ndarray:
        """Stacked ``[jn; jt]`` (1 or 3 rows)."""
        if self.jt is None:
            return self.jn[None, :]
        return np.vstack([self.jn, self.jt])

    def transformed(self, right: np.ndarray) -> "Contact":
        """Contact with every Jacobian row multiplied on the right by ``right``."""
        jt = None if self.jt is None else self.jt @ right
        return Contact(self.id, self.jn @ right, jt, self.mu)


def _check_contacts(contacts: Sequence[Contact], dim: int) -> tuple:
    contacts = tuple(contacts)
    ids = [c.id for c in contacts]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate contact ids in {ids}")
    for c in contacts:
        if c.dim != dim:
            raise DimensionMismatch(f"contact {c.id!r} has length {c.dim}, expected {dim}")
    return contacts


class _ContactSet:
    """Stacked Jacobian views shared by the problem types."""

    dim: int
    contacts: tuple

    @property
    def m(self) -> int:
        return len(self.contacts)

    @property
    def ids(self) -> list:
        return [c.id for c in self.contacts]

    def index(self, contact_id: str) -> int:
        for i, c in enumerate(self.contacts):
            if c.id == contact_id:
                return i
        raise KeyError(contact_id)

    @cached_property
    def Jn(self) -> np.ndarray:
        return np.array([c.jn for c in self.contacts]).reshape(self.m, self.dim)

    @cached_property
    def Jt(self) -> np.ndarray:
        """Tangential rows, shape (m, 2, n); zeros for frictionless contacts."""
        out = np.zeros((self.m, 2, self.dim))
        for i, c in enumerate(self.contacts):
            if c.jt is not None:
                out[i] = c.jt
        return out

    @cached_property
    def mu(self) -> np.ndarray:
        return np.array([c.mu for c in self.contacts])

    @cached_property
    def J(self) -> np.ndarray:
        """All Jacobian rows stacked, frictionless contacts contributing one row."""
        return np.vstack([c.jacobian for c in self.contacts]).reshape(-1, self.dim)


@dataclass(frozen=True, eq=False)
class ContactProblem(_ContactSet):
    """Impact scene in the original (generalized) velocity coordinates."""

    dim: int
    mass: np.ndarray
    contacts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        n = int(self.dim)
        if mass.shape != (n, n):
            raise DimensionMismatch(f"mass has shape {mass.shape}, expected {(n, n)}")
        scale = max(np.max(np.abs(mass)), np.finfo(float).tiny)
        if np.max(np.abs(mass - mass.T)) > 1e-12 * scale:
            raise ValueError("mass matrix is not symmetric")
        _cholesky(mass)
        mass.setflags(write=False)
        object.__setattr__(self, "dim", n)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "contacts", _check_contacts(self.contacts, n))


@dataclass(frozen=True, eq=False)
class NormalizedProblem(_ContactSet):
    """Impact scene after the change of variables ``w = chol^T v``.

    ``chol`` is the lower Cholesky factor of the source mass matrix (identity
    for scenes that are built directly in normalized coordinates).
    """

    dim: int
    contacts: tuple
    chol: Optional[np.ndarray] = None

    def __post_init__(self):
        n = int(self.dim)
        object.__setattr__(self, "dim", n)
        object.__setattr__(self, "contacts", _check_contacts(self.contacts, n))
        chol = np.eye(n) if self.chol is None else np.array(self.chol, dtype=float)
        if chol.shape != (n, n):
            raise DimensionMismatch(f"chol has shape {chol.shape}, expected {(n, n)}")
        chol.setflags(write=False)
        object.__setattr__(self, "chol", chol)

    def to_normalized(self, v) -> np.ndarray:
        """Map an original-coordinate velocity to normalized coordinates."""
        return self.chol.T @ _as_vector(v, "v", self.dim)

    def to_original(self, w) -> np.ndarray:
        """Inverse of :meth:`to_normalized`; accepts a vector or rows of vectors."""
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            return scipy.linalg.solve_triangular(self.chol.T, w, lower=False)
        return scipy.linalg.solve_triangular(self.chol.T, w.T, lower=False).T


def _cholesky(mass: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(mass)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("mass matrix is not positive definite") from exc


def normalize(problem: ContactProblem) -> NormalizedProblem:
    """Re-express the contact Jacobians in mass-normalized coordinates.

    With ``M = L L^T`` the transformed rows are ``J L^{-T}``, so contact
    velocities are unchanged (``J~ w = J v``) and ``0.5 v^T M v = 0.5 |w|^2``.
    """
    if problem.mass.shape != (problem.dim, problem.dim):
        raise DimensionMismatch("mass matrix does not match dim")
    L = _cholesky(problem.mass)
    # J L^{-T} = (L^{-1} J^T)^T
    right = scipy.linalg.solve_triangular(L, np.eye(problem.dim), lower=True).T
    contacts = [c.transformed(right) for c in problem.contacts]
    return NormalizedProblem(problem.dim, tuple(contacts), L)


def as_normalized(problem: Union[ContactProblem, NormalizedProblem]) -> NormalizedProblem:
    if isinstance(problem, NormalizedProblem):
        return problem
    return normalize(problem)


class ContactStatus(enum.Enum):
    ACTIVE = "active"
    BOUNDARY = "boundary"
    INACTIVE = "inactive"


class GlobalStatus(enum.Enum):
    PENETRATING = "penetrating"
    SEPARATED = "separated"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class Classification:
    contacts: tuple
    status: GlobalStatus

    @property
    def penetrating(self) -> bool:
        return self.status is GlobalStatus.PENETRATING


def classify(problem, v, tol: float = DEFAULT_TOL) -> Classification:
    """Classify each contact by the sign of its normal velocity ``jn . v``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    v = _as_vector(v, "v", problem.dim)
    vn = problem.Jn @ v
    statuses = tuple(
        ContactStatus.ACTIVE if x < -tol else
        ContactStatus.INACTIVE if x > tol else ContactStatus.BOUNDARY
        for x in vn)
    if any(s is ContactStatus.ACTIVE for s in statuses):
        status = GlobalStatus.PENETRATING
    elif all(s is ContactStatus.INACTIVE for s in statuses):
        status = GlobalStatus.SEPARATED
    else:
        status = GlobalStatus.BOUNDARY
    return Classification(statuses, status)


# ---------------------------------------------------------------------------
# Force-set descriptors


@dataclass(frozen=True, eq=False)
class Point:
    value: np.ndarray
    contact: Optional[int] = None

    def support(self, d: np.ndarray) -> float:
        return float(self.value @ d)

    def argmax(self, d: np.ndarray) -> np.ndarray:
        return self.value


@dataclass(frozen=True, eq=False)
class Disc:
    """The set ``center + radius * span @ u`` for ``|u| <= 1``."""

    center: np.ndarray
    span: np.ndarray
    radius: float
    contact: Optional[int] = None

    def support(self, d: np.ndarray) -> float:
        return float(self.center @ d + self.radius * np.linalg.norm(self.span.T @ d))

    def argmax(self, d: np.ndarray) -> np.ndarray:
        g = self.span.T @ d
        norm = np.linalg.norm(g)
        if norm == 0.0:
            return self.center
        return self.center + self.radius * (self.span @ (g / norm))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        k = self.span.shape[1]
        u = rng.standard_normal(k)
        u *= rng.random() ** (1.0 / k) / np.linalg.norm(u)
        return self.center + self.radius * (self.span @ u)


Generator = Union[Point, Disc]


@dataclass(frozen=True, eq=False)
class ForceSetDescriptor:
    """Convex hull of ``generators`` (with the origin adjoined when flagged).

    An empty generator list with the flag unset denotes the empty set.
    """

    dim: int
    generators: tuple = ()
    includes_zero_hull: bool = False

    @property
    def empty(self) -> bool:
        return not self.generators and not self.includes_zero_hull

    def support(self, d) -> float:
        """Support function ``max <x, d>`` over the set."""
        d = np.asarray(d, dtype=float)
        values = [g.support(d) for g in self.generators]
        if self.includes_zero_hull:
            values.append(0.0)
        if not values:
            return -np.inf
        return max(values)

    def argmax(self, d) -> np.ndarray:
        """A maximizer of ``<x, d>`` over the set (linear maximization oracle)."""
        d = np.asarray(d, dtype=float)
        best, best_val = None, -np.inf
        if self.includes_zero_hull:
            best, best_val = np.zeros(self.dim), 0.0
        for g in self.generators:
            val = g.support(d)
            if val > best_val:
                best, best_val = g.argmax(d), val
        if best is None:
            raise ValueError("empty force set has no maximizer")
        return best

    def contains(self, x, directions) -> bool:
        """Outer test: ``<x, d> <= support(d)`` for every given direction."""
        x = np.asarray(x, dtype=float)
        for d in np.atleast_2d(directions):
            scale = 1e-10 * (1.0 + np.linalg.norm(x)) * np.linalg.norm(d)
            if x @ d > self.support(d) + scale:
                return False
        return True

    def sample(self, rng: np.random.Generator, k: int = 1) -> np.ndarray:
        """Random points of the set, as random convex combinations of generator points."""
        atoms = list(self.generators)
        if self.empty:
            raise ValueError("cannot sample the empty set")
        out = np.empty((k, self.dim))
        n_atoms = len(atoms) + int(self.includes_zero_hull)
        for i in range(k):
            pts = [a.sample(rng) if isinstance(a, Disc) else a.value for a in atoms]
            if self.includes_zero_hull:
                pts.append(np.zeros(self.dim))
            weights = rng.dirichlet(np.ones(n_atoms))
            out[i] = weights @ np.array(pts)
        return out

    def equivalent(self, other: "ForceSetDescriptor", atol: float = 1e-12) -> bool:
        """Generator-wise equality up to permutation."""
        if self.includes_zero_hull != other.includes_zero_hull:
            return False
        if len(self.generators) != len(other.generators):
            return False
        remaining = list(other.generators)
        for g in self.generators:
            for j, h in enumerate(remaining):
                if _same_generator(g, h, atol):
                    del remaining[j]
                    break
            else:
                return False
        return True


def _same_generator(g, h, atol) -> bool:
    if type(g) is not type(h):
        return False
    if isinstance(g, Point):
        return np.allclose(g.value, h.value, rtol=0, atol=atol)
    return (np.allclose(g.center, h.center, rtol=0, atol=atol)
            and np.allclose(g.span, h.span, rtol=0, atol=atol)
            and abs(g.radius - h.radius) <= atol)


def unit_set(w) -> ForceSetDescriptor:
    """Set-valued unit direction: ``{w/|w|}``, or the closed unit ball at zero."""
    w = _as_vector(w, "w")
    p = w.shape[0]
    norm = np.linalg.norm(w)
    if norm > 0.0:
        return ForceSetDescriptor(p, (Point(w / norm),))
    return ForceSetDescriptor(p, (Disc(np.zeros(p), np.eye(p), 1.0),))


def force_single(c: Contact, v, tol: float = 0.0, *, index: Optional[int] = None
                 ) -> ForceSetDescriptor:
    """Velocity increments one contact can produce at unit normal rate.

    Frictionless contacts give ``{jn}``; sliding contacts (``|Jt v| > tol``)
    give the single point ``jn - mu Jt^T (Jt v)/|Jt v|``; sticking contacts give
    the disc ``jn - mu Jt^T B``.
    """
    v = _as_vector(v, "v", c.dim)
    if c.jt is None:
        return ForceSetDescriptor(c.dim, (Point(c.jn, index),))
    t = c.jt @ v
    norm = np.linalg.norm(t)
    if norm > tol:
        return ForceSetDescriptor(c.dim, (Point(c.jn - c.mu * (c.jt.T @ (t / norm)), index),))
    return ForceSetDescriptor(c.dim, (Disc(c.jn, c.jt.T, c.mu, index),))


def net_force_set(problem, v, tol: float = DEFAULT_TOL) -> ForceSetDescriptor:
    """Convex hull of the single-contact sets of all non-separating contacts."""
    v = _as_vector(v, "v", problem.dim)
    vn = problem.Jn @ v
    gens = []
    for i, c in enumerate(problem.contacts):
        if vn[i] <= tol:
            gens.extend(force_single(c, v, tol, index=i).generators)
    return ForceSetDescriptor(problem.dim, tuple(gens))


def derivative_set(problem, v, tol: float = DEFAULT_TOL) -> ForceSetDescriptor:
    """Right-hand side of the multi-contact inclusion at ``v``."""
    status = classify(problem, v, tol).status
    if status is GlobalStatus.SEPARATED:
        return ForceSetDescriptor(problem.dim, (Point(np.zeros(problem.dim)),))
    forces = net_force_set(problem, v, tol)
    if status is GlobalStatus.PENETRATING:
        return forces
    return ForceSetDescriptor(problem.dim, forces.generators, includes_zero_hull=True)


def euler_inclusion(field, x0, step: float, t_end: float, *, pick=None):
    """Forward Euler for ``dx/dt in field(x)`` on ``[0, t_end]``.

    ``field`` maps a state to a :class:`ForceSetDescriptor`; ``pick(set, x)``
    chooses the element used for a step and defaults to the set's element of
    least norm (the minimal selection).  Returns times ``(k,)`` and states
    ``(k, n)``; the last step is shortened to land on ``t_end``.

    ``euler_inclusion(lambda x: unit_set(-x), x0, h, T)`` integrates
    ``dx/dt in -U(x)``, whose solution shrinks ``x0`` to zero at unit speed.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if pick is None:
        from .analysis import min_norm_point

        def pick(fs, x):
            return min_norm_point(fs)[0]

    x = _as_vector(x0, "x0").copy()
    ts, xs = [0.0], [x]
    n_steps = int(np.ceil(t_end / step - 1e-9))
    for k in range(n_steps):
        h = min(step, t_end - k * step)
        x = x + h * np.asarray(pick(field(x), x), dtype=float)
        ts.append(k * step + h)
        xs.append(x)
    return np.array(ts), np.array(xs)
