"""Forward-Euler integration of the multi-contact impact inclusion.

A :class:`SelectionStrategy` picks, at every step, one element of the
admissible set of velocity rates: convex normal-rate weights over the
penetrating contacts plus Coulomb-consistent tangential forces.  Sweeping over
strategies (and their seeds) samples the set of reachable post-impact
velocities.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .core import DEFAULT_TOL, NormalizedProblem, _as_vector
from .errors import NoActiveContact, NonTermination

THREADS_ENV = "IMPACTSET_THREADS"


# ---------------------------------------------------------------------------
# Strategies


@dataclass(frozen=True)
class Simultaneous:
    """Equal normal rates on every penetrating contact."""


@dataclass(frozen=True)
class Sequential:
    """Full normal rate on the first penetrating contact in ``order``."""

    order: tuple

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))


@dataclass(frozen=True)
class DirichletRandom:
    alpha: float = 1.0
    resample_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.resample_every < 1:
            raise ValueError("resample_every must be >= 1")


@dataclass(frozen=True)
class VertexRandom:
    seed: int = 0
    dwell: int = 1

    def __post_init__(self):
        if self.dwell < 1:
            raise ValueError("dwell must be >= 1")


@dataclass(frozen=True)
class FixedWeights:
    """Constant weights, renormalized over the non-separating contacts.

    Used for probes that need one specific element of the inclusion.
    """

    weights: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if any(x < 0 for x in w) or not sum(w) > 0:
            raise ValueError("weights must be nonnegative with positive sum")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class Switched:
    """Follow ``first`` until simulation time ``at``, then ``second``."""

    first: object
    second: object
    at: float


@dataclass(frozen=True)
class HoldIfFeasible:
    """Sticking contacts take the in-disc force that best cancels tangential acceleration."""


@dataclass(frozen=True)
class RandomInDisc:
    """Sticking contacts take a uniformly random force from their friction disc."""

    seed: int = 0


@dataclass(frozen=True)
class SelectionStrategy:
    kind: object = field(default_factory=Simultaneous)
    sticking: object = field(default_factory=HoldIfFeasible)

    def validate(self, problem) -> None:
        _validate_kind(self.kind, problem)


def _validate_kind(kind, problem) -> None:
    if isinstance(kind, Sequential):
        if sorted(kind.order) != sorted(problem.ids):
            raise ValueError(
                f"sequential order {list(kind.order)} is not a permutation of {problem.ids}")
    elif isinstance(kind, FixedWeights):
        if len(kind.weights) != problem.m:
            raise ValueError(f"expected {problem.m} weights, got {len(kind.weights)}")
    elif isinstance(kind, Switched):
        _validate_kind(kind.first, problem)
        _validate_kind(kind.second, problem)


def parse_strategy(spec: str, ids: Optional[Sequence[str]] = None, seed: int = 0
                   ) -> SelectionStrategy:
    """Parse ``simultaneous | sequential:a,b | dirichlet:alpha:resample | vertex:dwell``.

    An optional ``+stick=hold`` or ``+stick=random`` suffix selects the
    sticking rule.  ``seed`` seeds the random kinds.
    """
    spec = spec.strip()
    sticking = HoldIfFeasible()
    if "+" in spec:
        spec, suffix = spec.split("+", 1)
        key, _, value = suffix.partition("=")
        if key != "stick" or value not in ("hold", "random"):
            raise ValueError(f"bad strategy suffix {suffix!r}")
        if value == "random":
            sticking = RandomInDisc(seed=seed)
    name, _, rest = spec.partition(":")
    if name == "simultaneous" and not rest:
        kind = Simultaneous()
    elif name == "sequential":
        order = tuple(x for x in rest.split(",") if x)
        if not order:
            raise ValueError("sequential needs a contact ordering")
        if ids is not None and sorted(order) != sorted(ids):
            raise ValueError(f"sequential order {list(order)} is not a permutation of {list(ids)}")
        kind = Sequential(order)
    elif name == "dirichlet":
        parts = rest.split(":")
        if len(parts) != 2:
            raise ValueError("dirichlet expects dirichlet:<alpha>:<resample>")
        kind = DirichletRandom(float(parts[0]), int(parts[1]), seed)
    elif name == "vertex":
        kind = VertexRandom(seed, int(rest))
    else:
        raise ValueError(f"unknown strategy {spec!r}")
    return SelectionStrategy(kind, sticking)


# ---------------------------------------------------------------------------
# Selection


@dataclass(frozen=True, eq=False)
class Selection:
    weights: np.ndarray      # (m,) normal rates, summing to one
    friction: np.ndarray     # (m, 2) tangential rates
    sticking: np.ndarray     # (m,) bool
    force: np.ndarray        # (n,) resulting velocity rate J^T lambda


class SelectorState:
    """Mutable per-trajectory state (random generators, dwell counters)."""

    def __init__(self, strategy: SelectionStrategy, problem):
        self.strategy = strategy
        self.m = problem.m
        self.ids = problem.ids
        self.steps = 0
        self._kinds = {}
        self._stick_rng = None
        if isinstance(strategy.sticking, RandomInDisc):
            self._stick_rng = np.random.default_rng(strategy.sticking.seed)

    def _kind_state(self, kind) -> dict:
        key = id(kind)
        if key not in self._kinds:
            st = {"steps": 0}
            if isinstance(kind, (DirichletRandom, VertexRandom)):
                st["rng"] = np.random.default_rng(kind.seed)
            if isinstance(kind, Sequential):
                st["order"] = np.array([self.ids.index(i) for i in kind.order])
            if isinstance(kind, FixedWeights):
                st["fixed"] = np.array(kind.weights)
            self._kinds[key] = st
        return self._kinds[key]

    def weights(self, kind, vn, tol, s) -> np.ndarray:
        active = vn < -tol
        if isinstance(kind, Switched):
            return self.weights(kind.first if s < kind.at else kind.second, vn, tol, s)
        st = self._kind_state(kind)
        m = self.m
        if isinstance(kind, Simultaneous):
            w = active * (1.0 / np.count_nonzero(active))
        elif isinstance(kind, Sequential):
            order = st["order"]
            w = np.zeros(m)
            w[order[active[order].argmax()]] = 1.0
        elif isinstance(kind, DirichletRandom):
            if st["steps"] % kind.resample_every == 0:
                st["raw"] = st["rng"].dirichlet(np.full(m, kind.alpha))
            raw = active * st["raw"]
            total = raw.sum()
            w = raw / total if total > 0 else active * (1.0 / np.count_nonzero(active))
        elif isinstance(kind, VertexRandom):
            cur = st.get("current")
            if cur is None or not active[cur] or st["steps"] - st["since"] >= kind.dwell:
                cur = int(st["rng"].choice(np.flatnonzero(active)))
                st["current"], st["since"] = cur, st["steps"]
            w = np.zeros(m)
            w[cur] = 1.0
        elif isinstance(kind, FixedWeights):
            raw = (vn <= tol) * st["fixed"]
            total = raw.sum()
            w = raw / total if total > 0 else active * (1.0 / np.count_nonzero(active))
        else:
            raise TypeError(f"unknown strategy kind {kind!r}")
        st["steps"] += 1
        return w


class _Mats:
    """Flattened Jacobians used by the integration loop."""

    def __init__(self, problem):
        self.Jn = np.ascontiguousarray(problem.Jn)
        self.JnT = np.ascontiguousarray(problem.Jn.T)
        self.JtF = np.ascontiguousarray(problem.Jt.reshape(-1, problem.dim))
        self.JtFT = np.ascontiguousarray(self.JtF.T)
        self.mu = np.ascontiguousarray(problem.mu, dtype=float)
        self.has_friction = problem.mu > 0
        self.m = problem.m


def _friction(problem, mats, v, w, state, sticking_rule, step, tol):
    """Friction rates, sticking mask and net velocity rate for normal weights ``w``."""
    random_rule = isinstance(sticking_rule, RandomInDisc)
    friction, sticking, f = _kernels.friction_rates(
        mats.JnT, mats.JtF, mats.JtFT, mats.mu, v, w, float(step), float(tol), not random_rule)
    if random_rule and sticking.any():
        rng = state._stick_rng
        for c in np.flatnonzero(sticking):
            u = rng.standard_normal(2)
            u *= math.sqrt(rng.random()) / np.linalg.norm(u)
            friction[c] = mats.mu[c] * w[c] * u
        f = mats.JnT @ w + mats.JtFT @ friction.reshape(-1)
    return friction, sticking, f


def select(problem, v, strategy: SelectionStrategy, state: Optional[SelectorState] = None, *,
           step: float, tol: float = DEFAULT_TOL, s: float = 0.0) -> Selection:
    """Choose normal weights and friction forces at velocity ``v``.

    Sliding contacts get ``-mu w_c (Jt v)/|Jt v|``.  A sliding contact whose
    tangential velocity would reach zero within one ``step`` is treated as
    sticking and gets its force from ``strategy.sticking``.
    """
    if state is None:
        state = SelectorState(strategy, problem)
    v = np.asarray(v, dtype=float)
    vn = problem.Jn @ v
    if not (vn < -tol).any():
        raise NoActiveContact("no contact is penetrating")
    w = state.weights(strategy.kind, vn, tol, s)
    friction, sticking, force = _friction(problem, _Mats(problem), v, w, state,
                                          strategy.sticking, step, tol)
    return Selection(w, friction, sticking, force)


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(eq=False)
class Trajectory:
    """Sampled solution ``v(s)``; sample ``i`` holds the rates used on ``[s_i, s_{i+1}]``."""

    s: np.ndarray            # (k,)
    v: np.ndarray            # (k, n) normalized velocities
    weights: np.ndarray      # (k, m)
    friction: np.ndarray     # (k, m, 2)
    sticking: np.ndarray     # (k, m)
    terminated: bool
    ids: tuple = ()

    @property
    def s_final(self) -> float:
        return float(self.s[-1])

    @property
    def v_plus(self) -> np.ndarray:
        return self.v[-1]

    def __len__(self):
        return len(self.s)

    def forces(self, problem) -> np.ndarray:
        """Velocity rates ``J^T lambda`` for every sample, shape (k, n)."""
        return self.weights @ problem.Jn + np.einsum("kmc,mcn->kn", self.friction, problem.Jt)

    def impulses(self) -> np.ndarray:
        """Accumulated per-contact impulse ``[normal, t1, t2]``, shape (m, 3)."""
        ds = np.diff(self.s)
        normal = ds @ self.weights[:-1]
        tangential = np.einsum("k,kmc->mc", ds, self.friction[:-1])
        return np.column_stack([normal, tangential])

    def scaled(self, k: float) -> "Trajectory":
        return Trajectory(k * self.s, k * self.v, self.weights, self.friction,
                          self.sticking, self.terminated, self.ids)


def safeguard_horizon(problem, v0) -> float:
    """Default simulation-time budget ``10 * max_c S_c * |v0|``.

    ``S_c`` is the single-contact exit bound of each contact.  The multi-contact
    dissipativity constant is not constructive, so this is a heuristic scale,
    linear in ``|v0|`` like the true termination time.
    """
    from .routh import termination_bound_single

    v0 = _as_vector(v0, "v0", problem.dim)
    norm = float(np.linalg.norm(v0))
    if norm == 0.0 or problem.m == 0:
        return 0.0
    kappa = 10.0 * max(termination_bound_single(c) for c in problem.contacts)
    return kappa * norm


def integrate(problem: NormalizedProblem, v0, strategy: Optional[SelectionStrategy] = None,
              step: float = 1e-3, s_max: Optional[float] = None, *, tol: float = DEFAULT_TOL,
              raise_on_timeout: bool = True) -> Trajectory:
    """Integrate ``dv/ds = J^T lambda(s)`` from ``v0`` until no contact penetrates.

    ``tol`` is relative to ``|v0|`` so the scheme commutes with scaling of
    ``(v0, step)``.  Steps are cut where a contact's normal velocity crosses
    zero, and where continuing would increase ``|v|``.

    Raises
    ------
    NonTermination
        If ``s_max`` is reached first (unless ``raise_on_timeout`` is false, in
        which case the partial trajectory is returned with ``terminated=False``).
    """
    strategy = strategy or SelectionStrategy()
    strategy.validate(problem)
    if not step > 0:
        raise ValueError("step must be positive")
    v = _as_vector(v0, "v0", problem.dim).copy()
    scale = float(np.linalg.norm(v))
    if s_max is None:
        s_max = safeguard_horizon(problem, v)
    tol_eff = max(tol, 1e-14) * scale
    # event cuts shorten steps; this cap only stops a run that stalls outright
    max_steps = int(20 * s_max / step) + 10_000
    mats = _Mats(problem)
    compiled = _compiled_mode(strategy, problem) if _use_compiled else None
    if compiled is not None:
        mode, order, fixed = compiled
        S, V, W, F, K, terminated = _kernels.run(
            mats.Jn, mats.JnT, mats.JtF, mats.JtFT, mats.mu, v, mode, order, fixed,
            float(step), float(s_max), tol_eff, max_steps)
        traj = Trajectory(S, V, W, F, K, bool(terminated), tuple(problem.ids))
    else:
        traj = _integrate_loop(problem, mats, v, strategy, step, s_max, tol_eff, max_steps)
    if not traj.terminated and raise_on_timeout:
        raise NonTermination(f"impact not resolved by s_max={s_max:g}", traj)
    return traj


def _compiled_mode(strategy, problem):
    """Kernel arguments for strategies the compiled loop handles, else ``None``."""
    if not isinstance(strategy.sticking, HoldIfFeasible):
        return None
    kind = strategy.kind
    m = problem.m
    if isinstance(kind, Simultaneous):
        return _kernels.SIMULTANEOUS, np.zeros(0, dtype=np.int64), np.zeros(m)
    if isinstance(kind, Sequential):
        order = np.array([problem.ids.index(i) for i in kind.order], dtype=np.int64)
        return _kernels.SEQUENTIAL, order, np.zeros(m)
    if isinstance(kind, FixedWeights):
        return _kernels.FIXED, np.zeros(0, dtype=np.int64), np.array(kind.weights)
    return None


# the Python loop is the reference; tests flip this to compare the two paths
_use_compiled = True


def _integrate_loop(problem, mats, v, strategy, step, s_max, tol_eff, max_steps) -> Trajectory:
    state = SelectorState(strategy, problem)
    Jn = mats.Jn
    m = problem.m
    switches = sorted(_switch_times(strategy.kind))
    s = 0.0
    S, V, W, F, K = [], [], [], [], []
    terminated = False
    while True:
        vn = Jn @ v
        if not (vn < -tol_eff).any():
            terminated = True
            break
        if s >= s_max or len(S) >= max_steps:
            break
        w = state.weights(strategy.kind, vn, tol_eff, s)
        friction, sticking, f = _friction(problem, mats, v, w, state, strategy.sticking,
                                          step, tol_eff)
        h = min(step, s_max - s)
        for at in switches:
            if s < at < s + h:
                h = at - s
        dt, friction, sticking, f = _kernels.guard(
            Jn, mats.JnT, mats.JtF, mats.JtFT, mats.mu, v, vn, w, f, friction, sticking,
            h, tol_eff)
        S.append(s)
        V.append(v)
        W.append(w)
        F.append(friction)
        K.append(sticking)
        v = v + dt * f
        s = s + dt

    S.append(s)
    V.append(v)
    W.append(np.zeros(m))
    F.append(np.zeros((m, 2)))
    K.append(np.zeros(m, dtype=bool))
    return Trajectory(np.array(S), np.array(V).reshape(-1, problem.dim),
                      np.array(W).reshape(-1, m), np.array(F).reshape(-1, m, 2),
                      np.array(K).reshape(-1, m), terminated, tuple(problem.ids))


def _switch_times(kind) -> list:
    if isinstance(kind, Switched):
        return [kind.at] + _switch_times(kind.first) + _switch_times(kind.second)
    return []


# ---------------------------------------------------------------------------
# Outcome sets


@dataclass(frozen=True)
class StrategyFamily:
    """Strategies drawn by :func:`sample_outcomes`.

    Every sequential ordering is enumerated when there are few enough, then
    the simultaneous strategy, then random Dirichlet/vertex strategies.
    """

    alpha: float = 1.0
    resample_every: tuple = (1, 10, 100)
    dwell: tuple = (1, 10, 100)
    random_sticking: bool = False

    def strategies(self, ids: Sequence[str], n: int, seed: int) -> list:
        out = []
        if math.factorial(len(ids)) <= n:
            out.extend(SelectionStrategy(Sequential(p)) for p in itertools.permutations(ids))
        if len(out) < n:
            out.append(SelectionStrategy(Simultaneous()))
        children = np.random.SeedSequence(seed).spawn(n)
        i = 0
        while len(out) < n:
            child = int(children[len(out)].generate_state(1)[0])
            sticking = RandomInDisc(child + 1) if self.random_sticking else HoldIfFeasible()
            if i % 2 == 0:
                r = self.resample_every[(i // 2) % len(self.resample_every)]
                kind = DirichletRandom(self.alpha, r, child)
            else:
                kind = VertexRandom(child, self.dwell[(i // 2) % len(self.dwell)])
            out.append(SelectionStrategy(kind, sticking))
            i += 1
        return out[:n]


@dataclass(eq=False)
class OutcomePoint:
    v_plus: np.ndarray
    multiplicity: int
    exemplar: int                 # sample index of the representative run
    trajectory: Trajectory
    unterminated: int = 0         # members that hit s_max

    @property
    def terminated(self) -> bool:
        return self.unterminated == 0


@dataclass(eq=False)
class OutcomeSet:
    points: list
    dedupe_tol: float
    strategies: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def array(self) -> np.ndarray:
        return np.array([p.v_plus for p in self.points])


def _run_one(args):
    problem, v0, strategy, step, s_max, tol = args
    return integrate(problem, v0, strategy, step, s_max, tol=tol, raise_on_timeout=False)


def _workers(requested: Optional[int]) -> int:
    if requested is not None:
        return max(1, int(requested))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def dedupe(results: Sequence[Trajectory], tol: float) -> list:
    """Greedy leader clustering of terminal velocities (in sample order)."""
    points = []
    for i, traj in enumerate(results):
        for p in points:
            if np.linalg.norm(traj.v_plus - p.v_plus) <= tol:
                p.multiplicity += 1
                p.unterminated += int(not traj.terminated)
                break
        else:
            points.append(OutcomePoint(traj.v_plus, 1, i, traj, int(not traj.terminated)))
    return points


def sample_outcomes(problem: NormalizedProblem, v0, n: int = 100,
                    family: Union[StrategyFamily, Sequence[SelectionStrategy], None] = None,
                    seed: int = 0, step: float = 1e-3, dedupe_tol: Optional[float] = None, *,
                    s_max: Optional[float] = None, tol: float = DEFAULT_TOL,
                    workers: Optional[int] = None) -> OutcomeSet:
    """Integrate ``n`` strategies from ``v0`` and deduplicate the terminal velocities.

    Runs that hit ``s_max`` are kept and counted in ``OutcomePoint.unterminated``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    v0 = _as_vector(v0, "v0", problem.dim)
    if family is None:
        family = StrategyFamily()
    if isinstance(family, StrategyFamily):
        strategies = family.strategies(problem.ids, n, seed)
    else:
        strategies = list(family)[:n]
    if dedupe_tol is None:
        dedupe_tol = 1e-4 * float(np.linalg.norm(v0))
    if s_max is None:
        s_max = safeguard_horizon(problem, v0)
    jobs = [(problem, v0, st, step, s_max, tol) for st in strategies]
    nw = min(_workers(workers), len(jobs))
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    return OutcomeSet(dedupe(results, dedupe_tol), dedupe_tol, strategies)
