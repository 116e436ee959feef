"""Verification utilities for trajectories and scenes, including the non-degeneracy screen."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .core import DEFAULT_TOL, NormalizedProblem, Point, classify, net_force_set
from .errors import EmptyActiveSet, NotPenetrating


def kinetic_energy(v) -> float:
    """``0.5 |v|^2`` of a normalized velocity (``0.5 v^T M v`` in original coordinates)."""
    v = np.asarray(v, dtype=float)
    return 0.5 * float(v @ v)


@dataclass(frozen=True)
class DissipationReport:
    passed: bool
    max_violation: float          # largest per-step increase of |v|
    violation_step: Optional[int]
    strict: bool                  # |v| strictly decreased on every penetrating step
    steps: int

    def __bool__(self):
        return self.passed


def check_dissipation(traj, tol: float = 1e-9, problem=None, *, contact_tol: float = DEFAULT_TOL
                      ) -> DissipationReport:
    """Check that ``|v|`` never increases by more than ``tol`` between samples.

    When ``problem`` is given, also report whether the decrease was strict on
    every step that started from a penetrating velocity. A step whose force
    rate is clearly dissipative but whose predicted decrease ``-dt <f, v>/|v|``
    is below the rounding resolution of ``|v|`` (event cuts a few nanoseconds
    long) cannot show the decrease in floating point; such steps are judged by
    the rate instead. Steps with a vanishing rate always count as non-strict.
    """
    norms = np.linalg.norm(np.asarray(traj.v), axis=1)
    diffs = np.diff(norms)
    if diffs.size == 0:
        return DissipationReport(True, 0.0, None, True, 0)
    worst = int(np.argmax(diffs))
    max_violation = float(diffs[worst])
    passed = max_violation <= tol
    strict = True
    if problem is not None:
        scale = norms[0] if norms[0] > 0 else 1.0
        vn = np.asarray(traj.v)[:-1] @ problem.Jn.T
        penetrating = np.any(vn < -contact_tol * scale, axis=1)
        dt = np.diff(traj.s)
        v = np.asarray(traj.v)[:-1]
        f = traj.forces(problem)[:-1]
        fv = np.einsum("kn,kn->k", f, v)
        dissipative = -fv > 1e-12 * np.linalg.norm(f, axis=1) * norms[:-1]
        unresolved = -fv * dt <= 8 * np.finfo(float).eps * norms[:-1] ** 2
        decreased = (diffs < 0) | (dissipative & unresolved)
        strict = bool(np.all(decreased[penetrating & (dt > 0)]))
    return DissipationReport(passed, max(max_violation, 0.0),
                             worst if not passed else None, strict, diffs.size)


# ---------------------------------------------------------------------------
# Minimal coordinates


@dataclass(frozen=True, eq=False)
class ReductionResult:
    basis: np.ndarray              # R, (n, r), orthonormal columns spanning range(J^T)
    reduced: NormalizedProblem     # contacts with Jacobians J R
    nullity: int

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def project(self, v) -> np.ndarray:
        return self.basis.T @ np.asarray(v, dtype=float)

    def lift(self, w) -> np.ndarray:
        return np.asarray(w, dtype=float) @ self.basis.T


def reduce_to_minimal(problem: NormalizedProblem, rtol: float = 1e-10) -> ReductionResult:
    """Project the scene onto ``range(J^T)`` using a pivoted QR of ``J^T``."""
    if problem.m == 0:
        raise ValueError("reduction needs at least one contact")
    Q, R, _ = scipy.linalg.qr(problem.J.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0])) if diag.size else 0
    basis = Q[:, :rank]
    contacts = tuple(c.transformed(basis) for c in problem.contacts)
    reduced = NormalizedProblem(rank, contacts)
    return ReductionResult(basis, reduced, problem.dim - rank)


# ---------------------------------------------------------------------------
# Minimum-norm point


@dataclass(frozen=True, eq=False)
class MinNormResult:
    distance: float
    witness: np.ndarray
    weights: np.ndarray     # convex normal weights per contact realizing the witness
    iterations: int
    gap: float


def _affine_minimizer(P: np.ndarray) -> np.ndarray:
    """Coefficients ``a`` (summing to one) minimizing ``|a @ P|``."""
    k = P.shape[0]
    if k == 1:
        return np.ones(1)
    # eliminate the constraint: a = e_0 + Z y
    D = P[1:] - P[0]
    y = np.linalg.lstsq(D.T, -P[0], rcond=None)[0]
    return np.concatenate([[1.0 - y.sum()], y])


def min_norm_point(force_set, *, gap_tol: float = 1e-10, max_iter: int = 10_000):
    """Wolfe's minimum-norm-point algorithm driven by the set's linear oracle.

    Returns ``(x, atoms, coefficients, iterations, gap)`` where ``gap`` is
    ``|x| - min_{y} <x/|x|, y>``, an upper bound on ``|x| - dist(0, set)``.
    """
    gens = list(force_set.generators)
    if force_set.includes_zero_hull:
        gens.append(Point(np.zeros(force_set.dim)))
    if not gens:
        raise ValueError("empty force set")

    def lmo(d):
        # minimizer of <y, d> over the set, with the generator index it came from
        best, best_val, best_gen = None, np.inf, None
        for j, g in enumerate(gens):
            val = -g.support(-d)
            if val < best_val:
                best, best_val, best_gen = g.argmax(-d), val, j
        return best, best_gen

    start = min(range(len(gens)), key=lambda j: np.linalg.norm(
        gens[j].value if isinstance(gens[j], Point) else gens[j].center))
    p0 = gens[start].value if isinstance(gens[start], Point) else gens[start].center
    atoms = [p0.copy()]
    owners = [start]
    lam = np.ones(1)
    x = p0.copy()
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        xn = np.linalg.norm(x)
        if xn <= 1e-15:
            gap = 0.0
            break
        q, owner = lmo(x)
        gap = xn - float(q @ x) / xn
        if gap <= gap_tol:
            break
        if any(np.array_equal(q, a) for a in atoms):
            break
        atoms.append(q.copy())
        owners.append(owner)
        lam = np.append(lam, 0.0)
        while True:
            P = np.array(atoms)
            alpha = _affine_minimizer(P)
            if np.all(alpha > 1e-14):
                lam = alpha
                break
            mask = alpha <= 1e-14
            denom = lam[mask] - alpha[mask]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, lam[mask] / denom, np.inf)
            theta = float(np.clip(ratios.min(), 0.0, 1.0))
            lam = theta * alpha + (1 - theta) * lam
            keep = lam > 1e-14
            if keep.all():
                keep[np.flatnonzero(mask)[np.argmin(ratios)]] = False
            atoms = [a for a, kk in zip(atoms, keep) if kk]
            owners = [o for o, kk in zip(owners, keep) if kk]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = lam @ np.array(atoms)
    return x, atoms, owners, lam, gens, it, gap


def min_norm_in_force_set(problem, v, tol: float = DEFAULT_TOL, *, gap_tol: float = 1e-10,
                          max_iter: int = 10_000) -> MinNormResult:
    """Distance from the origin to the net-force hull at a penetrating velocity."""
    if not classify(problem, v, tol).penetrating:
        raise NotPenetrating("velocity is not penetrating")
    fs = net_force_set(problem, v, tol)
    x, atoms, owners, lam, gens, it, gap = min_norm_point(fs, gap_tol=gap_tol, max_iter=max_iter)
    weights = np.zeros(problem.m)
    for o, l in zip(owners, lam):
        c = gens[o].contact
        if c is not None:
            weights[c] += l
    return MinNormResult(float(np.linalg.norm(x)), x, weights, it, float(gap))


# ---------------------------------------------------------------------------
# Non-degeneracy screen


@dataclass(frozen=True, eq=False)
class DegenerateAt:
    v: np.ndarray
    min_norm: float
    witness: MinNormResult
    tolerance: float

    degenerate = True


@dataclass(frozen=True, eq=False)
class LikelyNonDegenerate:
    samples: int
    min_observed: float
    argmin: Optional[np.ndarray]
    tolerance: float

    degenerate = False


def _targeted_velocities(problem, rng, count):
    """Penetrating directions that make chosen contacts sit on their boundary or stick."""
    rows = []
    for c in problem.contacts:
        rows.append([c.jn])
        rows.append([c.jn] + ([c.jt] if c.jt is not None else []))
        if c.jt is not None:
            rows.append([c.jt])
    out = []
    m = problem.m
    for _ in range(count):
        k = rng.integers(1, max(2, m))
        chosen = rng.choice(len(rows), size=min(k, len(rows)), replace=False)
        A = np.vstack([np.vstack(rows[i]) for i in chosen])
        null = scipy.linalg.null_space(A)
        if null.shape[1] == 0:
            continue
        v = null @ rng.standard_normal(null.shape[1])
        nrm = np.linalg.norm(v)
        if nrm > 0:
            out.append(v / nrm)
    return out


def check_nondegenerate(problem, n_samples: int = 2000, seed: int = 0, *,
                        tolerance: float = 1e-7, tol: float = DEFAULT_TOL,
                        max_rejections: int = 100_000):
    """Sampled screen for velocities where zero net force is admissible.

    Uniform directions on the unit sphere are rejection-filtered to the
    penetrating set, then directions with contacts held on their boundary
    (or sticking) are added.  The first sample whose force hull passes
    within ``tolerance`` of the origin is returned as :class:`DegenerateAt`.
    A :class:`LikelyNonDegenerate` verdict is not a certificate.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = problem.dim
    candidates = _targeted_velocities(problem, rng, n_samples)
    accepted = 0
    rejections = 0
    while accepted < n_samples:
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        if classify(problem, v, tol).penetrating:
            candidates.append(v)
            accepted += 1
        else:
            rejections += 1
            if rejections >= max_rejections and accepted == 0:
                raise EmptyActiveSet("no penetrating velocity found")
    best, best_v, used = np.inf, None, 0
    for v in candidates:
        if not classify(problem, v, tol).penetrating:
            continue
        used += 1
        res = min_norm_in_force_set(problem, v, tol)
        if res.distance <= tolerance:
            return DegenerateAt(v, res.distance, res, tolerance)
        if res.distance < best:
            best, best_v = res.distance, v
    return LikelyNonDegenerate(used, float(best), best_v, tolerance)
