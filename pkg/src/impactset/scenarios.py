"""Scene builders for the rimless wheel and box pushing, plus the JSON scene format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import DEFAULT_TOL, Contact, ContactProblem
from .errors import SchemaError

_SCENE_FIELDS = ("dim", "mass", "contacts", "v0", "tol", "step", "dedupe_tol")
_REQUIRED = ("dim", "mass", "contacts", "v0")
_CONTACT_FIELDS = ("id", "jn", "jt", "mu")


def _positive(**kw):
    for name, value in kw.items():
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be positive, got {value!r}")


def build_rimless_wheel(a: float = 1.0, h: float = 1.0, m: float = 1.0, I: float = 1.0,
                        mu: float = 10.0):
    """Two feet at ``(-a, -h)`` (A) and ``(a, -h)`` (B) striking flat ground.

    Velocity coordinates are ``(vx, vy, omega)``.  Returns the problem and the
    vertical pre-impact velocity ``(0, -1, 0)``.
    """
    _positive(a=a, h=h, m=m, I=I, mu=mu)
    contacts = (
        Contact("A", [0.0, 1.0, -a], [[1.0, 0.0, h], [0.0, 0.0, 0.0]], mu),
        Contact("B", [0.0, 1.0, a], [[1.0, 0.0, h], [0.0, 0.0, 0.0]], mu),
    )
    problem = ContactProblem(3, np.diag([m, m, I]), contacts)
    return problem, np.array([0.0, -1.0, 0.0])


def box_corners(width: float, height: float, tilt: float) -> tuple:
    """Bottom-right and top-right corners of a box tipped clockwise by ``tilt``."""
    c, s = math.cos(tilt), math.sin(tilt)
    rot = np.array([[c, s], [-s, c]])
    return rot @ [width / 2.0, -height / 2.0], rot @ [width / 2.0, height / 2.0]


def build_box_push(width: float = 1.0, height: float = 1.0, mass: float = 1.0,
                   inertia: Optional[float] = None, mu_bottom: float = 0.5, v0=None, *,
                   tilt: float = 0.3):
    """Tipped box sliding on one corner into a frictionless wall.

    The box leans right, rotated clockwise by ``tilt`` radians.  Its
    bottom-right corner ``A`` slides on the floor (normal ``+y``, friction
    ``mu_bottom``) and its top-right corner ``B`` meets the wall (normal
    ``-x``, frictionless).  Velocity coordinates are ``(vx, vy, omega)``;
    ``inertia`` defaults to that of a uniform box and ``v0`` to
    :func:`default_box_velocity`.  ``mu_bottom = 0`` makes the floor
    frictionless as well.

    Returns the problem and ``v0``.  The corner's upward sliding speed along
    the wall is ``box_wall_tangent(...) @ v``.
    """
    if inertia is None:
        inertia = mass * (width ** 2 + height ** 2) / 12.0
    _positive(width=width, height=height, mass=mass, inertia=inertia)
    if not (np.isfinite(mu_bottom) and mu_bottom >= 0):
        raise ValueError(f"mu_bottom must be nonnegative, got {mu_bottom!r}")
    if not (np.isfinite(tilt) and 0 <= tilt < math.pi / 2):
        raise ValueError(f"tilt must lie in [0, pi/2), got {tilt!r}")
    ra, rb = box_corners(width, height, tilt)
    # corner velocity: (vx - omega*ry, vy + omega*rx)
    jt_a = [[1.0, 0.0, -ra[1]], [0.0, 0.0, 0.0]] if mu_bottom > 0 else None
    contacts = (
        Contact("A", [0.0, 1.0, ra[0]], jt_a, float(mu_bottom)),
        Contact("B", [-1.0, 0.0, rb[1]], None, 0.0),
    )
    problem = ContactProblem(3, np.diag([mass, mass, inertia]), contacts)
    v0 = default_box_velocity() if v0 is None else np.array(v0, dtype=float)
    return problem, v0


def box_wall_tangent(width: float = 1.0, height: float = 1.0, tilt: float = 0.3) -> np.ndarray:
    """Row giving the wall corner's upward velocity."""
    _, rb = box_corners(width, height, tilt)
    return np.array([0.0, 1.0, rb[0]])


def box_push_strategies(problem, v0, fraction: float = 0.5) -> dict:
    """The two resolutions of the box push, keyed ``"sequential"`` and ``"switched"``.

    ``"sequential"`` takes the floor impact ``A`` to termination before the
    wall contact ``B`` gets any impulse.  ``"switched"`` follows the same
    order but hands the impulse to ``B`` once ``fraction`` of the floor
    impact's duration has elapsed.  ``problem`` is the normalized box scene
    and ``v0`` its normalized initial velocity.
    """
    from .inclusion import SelectionStrategy, Sequential, Switched
    from .routh import resolve_single_planar

    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    first, second = Sequential(("A", "B")), Sequential(("B", "A"))
    floor = problem.contacts[problem.ids.index("A")]
    s_floor = resolve_single_planar(floor, v0).s_final
    return {"sequential": SelectionStrategy(first),
            "switched": SelectionStrategy(Switched(first, second, fraction * s_floor))}


def build_opposing_normals() -> ContactProblem:
    """Three frictionless contacts whose normals ``±x`` and ``+y`` jam at ``v = (0, -1)``."""
    contacts = (Contact("c1", [1.0, 0.0]), Contact("c2", [-1.0, 0.0]), Contact("c3", [0.0, 1.0]))
    return ContactProblem(2, np.eye(2), contacts)


def random_scene(rng: np.random.Generator, m: Optional[int] = None, n: Optional[int] = None, *,
                 friction_prob: float = 0.6, mu_range=(0.1, 1.5), spatial: bool = True):
    """Random scene with a random SPD mass matrix and a penetrating unit-energy ``v0``.

    ``m`` (contacts) and ``n`` (dimension) default to draws from 2..4.
    Frictional contacts get two tangent rows when ``spatial`` and ``n >= 3``,
    otherwise one.  Returns ``(ContactProblem, v0)`` with ``v0`` in the
    original coordinates.
    """
    m = int(rng.integers(2, 5)) if m is None else m
    n = int(rng.integers(2, 5)) if n is None else n
    B = rng.standard_normal((n, n))
    mass = B @ B.T + n * np.eye(n)
    contacts = []
    for i in range(m):
        jn = rng.standard_normal(n)
        if rng.random() < friction_prob:
            rows = 2 if (spatial and n >= 3) else 1
            jt = rng.standard_normal((rows, n))
            contacts.append(Contact(f"c{i}", jn, jt, float(rng.uniform(*mu_range))))
        else:
            contacts.append(Contact(f"c{i}", jn))
    problem = ContactProblem(n, mass, tuple(contacts))
    Jn = problem.Jn
    while True:
        v0 = rng.standard_normal(n)
        if np.any(Jn @ v0 < 0):
            break
    L = np.linalg.cholesky(mass)
    v0 = v0 / np.linalg.norm(L.T @ v0)
    return problem, v0


# ---------------------------------------------------------------------------
# JSON scene files


@dataclass(frozen=True, eq=False)
class Scene:
    problem: ContactProblem
    v0: np.ndarray
    tol: Optional[float] = None
    step: Optional[float] = None
    dedupe_tol: Optional[float] = None

    @property
    def effective_tol(self) -> float:
        return DEFAULT_TOL if self.tol is None else self.tol


def _number(x, field: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise SchemaError(field, f"expected a number, got {type(x).__name__}")
    x = float(x)
    if not math.isfinite(x):
        raise SchemaError(field, "must be finite")
    return x


def _vector(x, field: str, length: Optional[int] = None) -> np.ndarray:
    if not isinstance(x, list):
        raise SchemaError(field, "expected an array of numbers")
    out = np.array([_number(e, f"{field}[{i}]") for i, e in enumerate(x)], dtype=float)
    if length is not None and out.size != length:
        raise SchemaError(field, f"expected {length} entries, got {out.size}")
    return out


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise SchemaError(where or "<root>", "expected an object")
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{where}.{key}" if where else key, "unknown field")
    for key in required:
        if key not in obj:
            raise SchemaError(f"{where}.{key}" if where else key, "missing required field")


def _parse_mass(raw, n: int) -> np.ndarray:
    if not isinstance(raw, list):
        raise SchemaError("mass", "expected an n x n array (nested rows or flat row-major)")
    if raw and all(isinstance(r, list) for r in raw):
        if len(raw) != n:
            raise SchemaError("mass", f"expected {n} rows, got {len(raw)}")
        return np.vstack([_vector(r, f"mass[{i}]", n) for i, r in enumerate(raw)])
    return _vector(raw, "mass", n * n).reshape(n, n)


def _parse_contact(raw, i: int, n: int) -> Contact:
    where = f"contacts[{i}]"
    _check_keys(raw, _CONTACT_FIELDS, ("id", "jn"), where)
    cid = raw["id"]
    if not isinstance(cid, str) or not cid:
        raise SchemaError(f"{where}.id", "expected a non-empty string")
    jn = _vector(raw["jn"], f"{where}.jn", n)
    mu = _number(raw.get("mu", 0.0), f"{where}.mu")
    jt = raw.get("jt")
    if jt is not None:
        if not isinstance(jt, list) or not all(isinstance(r, list) for r in jt):
            raise SchemaError(f"{where}.jt", "expected a list of rows")
        if len(jt) not in (1, 2):
            raise SchemaError(f"{where}.jt", f"expected 1 or 2 rows, got {len(jt)}")
        jt = np.vstack([_vector(r, f"{where}.jt[{k}]", n) for k, r in enumerate(jt)])
    try:
        return Contact(cid, jn, jt, mu)
    except ValueError as exc:
        raise SchemaError(where, str(exc)) from None


def parse_scene(data) -> Scene:
    """Parse and validate a JSON scene (``bytes`` or ``str``).

    Raises
    ------
    SchemaError
        On malformed JSON, unknown or missing fields, wrong shapes, or a mass
        matrix that is not symmetric positive definite.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError("<json>", f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    _check_keys(raw, _SCENE_FIELDS, _REQUIRED, "")
    dim = raw["dim"]
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise SchemaError("dim", "expected a positive integer")
    mass = _parse_mass(raw["mass"], dim)
    if not isinstance(raw["contacts"], list):
        raise SchemaError("contacts", "expected a list")
    contacts = tuple(_parse_contact(c, i, dim) for i, c in enumerate(raw["contacts"]))
    ids = [c.id for c in contacts]
    if len(set(ids)) != len(ids):
        raise SchemaError("contacts", "contact ids must be unique")
    v0 = _vector(raw["v0"], "v0", dim)
    extras = {}
    for key in ("tol", "step", "dedupe_tol"):
        if key in raw and raw[key] is not None:
            value = _number(raw[key], key)
            if key == "tol" and value < 0 or key != "tol" and value <= 0:
                raise SchemaError(key, "out of range")
            extras[key] = value
    try:
        problem = ContactProblem(dim, mass, contacts)
    except ValueError as exc:
        raise SchemaError("mass", str(exc)) from None
    return Scene(problem, v0, **extras)


def _fmt(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("scene values must be finite")
    return format(x, ".17g")


def _fmt_vec(v) -> str:
    return "[" + ", ".join(_fmt(x) for x in np.asarray(v, dtype=float).ravel()) + "]"


def serialize_scene(scene, v0=None) -> bytes:
    """Serialize a :class:`Scene` (or a ``ContactProblem`` plus ``v0``) to JSON bytes.

    Numbers are written with 17 significant digits so parsing and
    re-serializing reproduces the same bytes.
    """
    if isinstance(scene, ContactProblem):
        if v0 is None:
            raise ValueError("v0 is required when serializing a bare problem")
        scene = Scene(scene, np.asarray(v0, dtype=float))
    p = scene.problem
    lines = ["{", f'  "dim": {p.dim},']
    rows = ",\n    ".join(_fmt_vec(r) for r in p.mass)
    lines.append(f'  "mass": [\n    {rows}\n  ],')
    entries = []
    for c in p.contacts:
        parts = [f'"id": {json.dumps(c.id)}', f'"jn": {_fmt_vec(c.jn)}']
        if c.jt is not None:
            parts.append(f'"jt": [{_fmt_vec(c.jt[0])}, {_fmt_vec(c.jt[1])}]')
        parts.append(f'"mu": {_fmt(c.mu)}')
        entries.append("    {" + ", ".join(parts) + "}")
    lines.append('  "contacts": [\n' + ",\n".join(entries) + "\n  ],")
    tail = [f'  "v0": {_fmt_vec(scene.v0)}']
    for key in ("tol", "step", "dedupe_tol"):
        value = getattr(scene, key)
        if value is not None:
            tail.append(f'  "{key}": {_fmt(value)}')
    lines.append(",\n".join(tail))
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_scene(path) -> Scene:
    return parse_scene(Path(path).read_bytes())


def default_box_velocity() -> np.ndarray:
    """Sliding right at unit speed while the floor corner drops at half that."""
    return np.array([1.0, -0.5, 0.0])


def write_fixtures(directory) -> dict:
    """Write ``wheel.json``, ``box.json`` and ``degenerate3.json``; returns name -> path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    wheel, v0 = build_rimless_wheel()
    scenes = {
        "wheel.json": Scene(wheel, v0),
        "box.json": Scene(*build_box_push()),
        "degenerate3.json": Scene(build_opposing_normals(), np.array([0.0, -1.0])),
    }
    out = {}
    for name, scene in scenes.items():
        path = directory / name
        path.write_bytes(serialize_scene(scene))
        out[name] = path
    return out
