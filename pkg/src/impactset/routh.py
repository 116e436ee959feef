"""Single-contact impact resolution by Routh's method."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.optimize

from .core import DEFAULT_TOL, Contact, NormalizedProblem, _as_vector
from .errors import InternalError, NonTermination, NotPenetrating

MAX_PLANAR_PHASES = 4


@dataclass(frozen=True)
class Phase:
    regime: str                          # "slide" or "stick"
    s_start: float
    s_end: float
    direction: Optional[np.ndarray] = None   # slip direction in tangent coordinates


@dataclass(eq=False)
class SingleImpactResult:
    v_plus: np.ndarray
    impulse: np.ndarray      # [normal, t1, t2]
    phases: list = field(default_factory=list)
    s_final: float = 0.0


def _planar_row(c: Contact):
    """Effective tangent row ``r`` and its unit left vector ``u`` with ``Jt = u r``."""
    if c.jt is None:
        return None, None
    U, sv, Vt = np.linalg.svd(c.jt)
    if sv[1] > 1e-12 * max(sv[0], 1e-300):
        raise ValueError(f"contact {c.id!r} is not planar (two independent tangent rows)")
    if sv[0] == 0.0:
        return None, None
    u = U[:, 0]
    return sv[0] * Vt[0], u


def resolve_single_planar(c: Contact, v0) -> SingleImpactResult:
    """Exact piecewise-linear Routh resolution of a planar contact.

    Slides with ``f = jn - mu sign(vt) jt`` until either the normal velocity
    vanishes (done) or the tangential velocity vanishes; from rest in the
    tangent it sticks if the required tangential force is within the friction
    bound, otherwise it slides in the reversed direction.
    """
    v = _as_vector(v0, "v0", c.dim).copy()
    jn = c.jn
    vn = float(jn @ v)
    if not vn < 0:
        raise NotPenetrating(f"jn.v0 = {vn:g} is not negative")
    row, u = _planar_row(c)
    s = 0.0
    normal_imp = 0.0
    tangent_imp = 0.0
    phases = []
    if row is None:
        rate = float(jn @ jn)
        ds = -vn / rate
        v = v + ds * jn
        phases.append(Phase("slide", 0.0, ds, None))
        return SingleImpactResult(v, np.array([ds, 0.0, 0.0]), phases, ds)

    a_nn, b_nt, g_tt = float(jn @ jn), float(jn @ row), float(row @ row)
    mu = c.mu
    # slip speeds below this are treated as zero (rounding after an exact phase end)
    t_scale = 1e-12 * (np.linalg.norm(v) * np.linalg.norm(row) + 1e-300)
    for _ in range(MAX_PLANAR_PHASES):
        vn = float(jn @ v)
        vt = float(row @ v)
        if abs(vt) > t_scale:
            sigma = math.copysign(1.0, vt)
            beta = -mu * sigma
            regime = "slide"
        else:
            beta = -b_nt / g_tt
            if abs(beta) <= mu:
                regime, sigma = "stick", 0.0
            else:
                sigma = math.copysign(1.0, b_nt)
                beta = -mu * sigma
                regime = "slide"
        n_rate = a_nn + beta * b_nt
        t_rate = b_nt + beta * g_tt
        candidates = []
        if n_rate > 0:
            candidates.append((-vn / n_rate, "normal"))
        if regime == "slide" and abs(vt) > t_scale and vt * t_rate < 0:
            candidates.append((-vt / t_rate, "tangent"))
        if not candidates:
            raise InternalError("planar Routh resolution cannot make progress")
        ds, event = min(candidates)
        ds = max(ds, 0.0)
        v = v + ds * (jn + beta * row)
        direction = None if regime == "stick" else np.array([sigma])
        phases.append(Phase(regime, s, s + ds, direction))
        s += ds
        normal_imp += ds
        tangent_imp += ds * beta
        if event == "normal":
            # tangent impulse along row r equals an impulse beta*u on the two Jt rows
            impulse = np.concatenate([[normal_imp], tangent_imp * u])
            return SingleImpactResult(v, impulse, _merge(phases), s)
    raise InternalError(f"planar Routh resolution exceeded {MAX_PLANAR_PHASES} phases")


def _merge(phases):
    out = []
    for p in phases:
        if p.s_end <= p.s_start and out:
            continue
        if out and out[-1].regime == p.regime and _same_dir(out[-1].direction, p.direction):
            out[-1] = Phase(p.regime, out[-1].s_start, p.s_end, p.direction)
        else:
            out.append(p)
    return out


def _same_dir(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.allclose(a, b)


def resolve_single(c: Contact, v0, step: float = 1e-4, *, strategy=None,
                   tol: float = DEFAULT_TOL) -> SingleImpactResult:
    """Euler-integrated Routh resolution for one contact (planar or spatial).

    Raises
    ------
    NotPenetrating
        If ``jn . v0 >= 0``.
    NonTermination
        If the impact is not resolved within 10 times the a-priori exit bound.
    """
    from .inclusion import SelectionStrategy, integrate

    v0 = _as_vector(v0, "v0", c.dim)
    if not c.jn @ v0 < 0:
        raise NotPenetrating(f"jn.v0 = {float(c.jn @ v0):g} is not negative")
    problem = NormalizedProblem(c.dim, (c,))
    s_max = 10.0 * termination_bound_single(c) * float(np.linalg.norm(v0))
    traj = integrate(problem, v0, strategy or SelectionStrategy(), step, s_max, tol=tol,
                     raise_on_timeout=False)
    if not traj.terminated:
        raise NonTermination(f"single impact not resolved by s={s_max:g}", traj)
    return SingleImpactResult(traj.v_plus.copy(), traj.impulses()[0], _phases_of(traj),
                              traj.s_final)


def _phases_of(traj) -> list:
    phases = []
    for i in range(len(traj) - 1):
        s0, s1 = traj.s[i], traj.s[i + 1]
        if traj.sticking[i, 0]:
            p = Phase("stick", s0, s1, None)
        else:
            beta = traj.friction[i, 0]
            nrm = np.linalg.norm(beta)
            p = Phase("slide", s0, s1, None if nrm == 0 else -beta / nrm)
        if phases and phases[-1].regime == p.regime and (
                p.regime == "stick" or _close_dir(phases[-1].direction, p.direction)):
            phases[-1] = Phase(p.regime, phases[-1].s_start, s1, p.direction)
        else:
            phases.append(p)
    return phases


def _close_dir(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return float(a @ b) > 0.0


# ---------------------------------------------------------------------------
# Exit bound


def norm_equivalence_constant(c: Contact) -> float:
    """Smallest ``|jn w|_1 + |Jt w|_2`` over unit ``w`` in the row space of the contact Jacobian."""
    jt = None if c.jt is None else c.jt
    return _epsilon(c.jn.tobytes(), None if jt is None else jt.tobytes(), c.dim)


@lru_cache(maxsize=4096)
def _epsilon(jn_bytes, jt_bytes, n) -> float:
    jn = np.frombuffer(jn_bytes, dtype=float)
    jt = None if jt_bytes is None else np.frombuffer(jt_bytes, dtype=float).reshape(2, n)
    J = jn[None, :] if jt is None else np.vstack([jn, jt])
    _, sv, Vt = np.linalg.svd(J, full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    R = Vt[:rank].T                        # orthonormal basis of range(J^T)
    a = jn @ R                             # (r,)
    B = np.zeros((2, rank)) if jt is None else jt @ R

    def g(U):
        U = np.atleast_2d(U)
        return np.abs(U @ a) + np.linalg.norm(U @ B.T, axis=1)

    if rank == 1:
        return float(g(np.array([[1.0]]))[0])
    if rank == 2:
        angles = np.linspace(0.0, 2 * np.pi, 20000, endpoint=False)
        vals = g(np.column_stack([np.cos(angles), np.sin(angles)]))
        k = int(np.argmin(vals))
        width = 2 * np.pi / 20000
        res = scipy.optimize.minimize_scalar(
            lambda th: g(np.array([[np.cos(th), np.sin(th)]]))[0],
            bracket=None, bounds=(angles[k] - width, angles[k] + width), method="bounded",
            options={"xatol": 1e-12})
        return float(min(vals[k], res.fun))
    # rank 3: Fibonacci sphere, then local refinement from the best few samples
    count = 20000
    i = np.arange(count) + 0.5
    phi = np.arccos(1 - 2 * i / count)
    theta = np.pi * (1 + 5 ** 0.5) * i
    U = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    vals = g(U)
    best = float(vals.min())

    def on_sphere(x):
        return g(x / np.linalg.norm(x))[0]

    for k in np.argsort(vals)[:5]:
        res = scipy.optimize.minimize(on_sphere, U[k], method="Nelder-Mead",
                                      options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        best = min(best, float(res.fun))
    return best


def termination_bound_single(c: Contact) -> float:
    """A-priori exit time per unit pre-impact speed, ``S = 1 / (eps * min(mu, 1))``.

    Frictionless contacts drop the friction factor, giving ``S = 1 / |jn|``.
    Every solution from ``v0`` leaves the penetrating set by ``|v0| * S``.
    """
    eps = norm_equivalence_constant(c)
    factor = min(c.mu, 1.0) if c.jt is not None else 1.0
    return 1.0 / (eps * factor)
