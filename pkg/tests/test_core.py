import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impactset import (Contact, ContactProblem, ContactStatus, Disc, GlobalStatus,
                       NormalizedProblem, NotSPD, classify, derivative_set, force_single,
                       euler_inclusion, net_force_set, normalize, unit_set)
from impactset.errors import DimensionMismatch


def frictionless(*rows):
    contacts = tuple(Contact(f"c{i}", r) for i, r in enumerate(rows))
    return NormalizedProblem(len(rows[0]), contacts)


# -- normalize ---------------------------------------------------------------

def test_normalize_identity_mass():
    p = normalize(ContactProblem(2, np.eye(2), (Contact("a", [0.0, 1.0]),)))
    assert np.allclose(p.contacts[0].jn, [0, 1])
    assert np.allclose(p.chol, np.eye(2))


def test_normalize_diagonal_mass():
    mass = np.diag([4.0, 1.0])
    p = normalize(ContactProblem(2, mass, (Contact("a", [2.0, 0.0]),)))
    assert np.allclose(p.contacts[0].jn, [1.0, 0.0])
    J = np.array([[2.0, 0.0]])
    assert np.allclose(J @ np.linalg.inv(mass) @ J.T, p.Jn @ p.Jn.T)


def test_normalize_rejects_zero_pivot():
    with pytest.raises(NotSPD):
        ContactProblem(2, np.diag([1.0, 0.0]), (Contact("a", [0.0, 1.0]),))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        ContactProblem(3, np.eye(3), (Contact("a", [0.0, 1.0]),))


def test_asymmetric_mass_rejected():
    with pytest.raises(ValueError):
        ContactProblem(2, [[1.0, 0.1], [0.0, 1.0]], (Contact("a", [0.0, 1.0]),))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 5))
def test_normalize_preserves_contact_velocity_and_energy(seed, n):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    mass = B @ B.T + 0.1 * np.eye(n)
    contacts = (Contact("a", rng.standard_normal(n), rng.standard_normal((2, n)), 0.7),
                Contact("b", rng.standard_normal(n)))
    cp = ContactProblem(n, mass, contacts)
    p = normalize(cp)
    v = rng.standard_normal(n)
    w = p.to_normalized(v)
    assert np.allclose(p.J @ w, cp.J @ v, atol=1e-10)
    assert 0.5 * w @ w == pytest.approx(0.5 * v @ mass @ v, rel=1e-10, abs=1e-12)
    assert np.allclose(p.to_original(w), v, atol=1e-10)
    assert np.allclose(p.J @ p.J.T, cp.J @ np.linalg.solve(mass, cp.J.T), atol=1e-10)


# -- contacts and classification ---------------------------------------------

def test_contact_invariants():
    with pytest.raises(ValueError):
        Contact("a", [0.0, 0.0])
    with pytest.raises(ValueError):
        Contact("a", [0.0, 1.0], [[1.0, 0.0]], 0.0)
    with pytest.raises(ValueError):
        Contact("a", [0.0, 1.0], None, 0.5)
    with pytest.raises(DimensionMismatch):
        Contact("a", [0.0, 1.0], [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 0.5)
    c = Contact("a", [0.0, 1.0], [[1.0, 0.0]], 0.5)
    assert c.jt.shape == (2, 2) and not c.jt[1].any()


@pytest.mark.parametrize("v, expected", [
    ((-1.0, 0.0), ContactStatus.ACTIVE),
    ((1.0, 0.0), ContactStatus.INACTIVE),
    ((0.0, 1.0), ContactStatus.BOUNDARY),
])
def test_classify_single(v, expected):
    cl = classify(frictionless([1.0, 0.0]), v, 0.0)
    assert cl.contacts[0] is expected


def test_classify_global_status():
    p = frictionless([1.0, 0.0], [0.0, 1.0])
    assert classify(p, (-1.0, 1.0), 0.0).status is GlobalStatus.PENETRATING
    assert classify(p, (1.0, 1.0), 0.0).status is GlobalStatus.SEPARATED
    assert classify(p, (0.0, 1.0), 0.0).status is GlobalStatus.BOUNDARY


# -- set-valued maps ---------------------------------------------------------

def test_unit_set():
    s = unit_set([3.0, 4.0])
    assert len(s.generators) == 1 and np.allclose(s.generators[0].value, [0.6, 0.8])
    assert np.allclose(unit_set([-2.0]).generators[0].value, [-1.0])
    ball = unit_set([0.0, 0.0])
    d = np.array([0.3, -0.4])
    assert ball.support(d) == pytest.approx(0.5)


def test_force_single_sliding():
    c = Contact("a", [0.0, 1.0], [[1.0, 0.0]], 0.5)
    fs = force_single(c, [1.0, -1.0])
    assert len(fs.generators) == 1
    assert np.allclose(fs.generators[0].value, [-0.5, 1.0])


def test_force_single_sticking_is_segment():
    c = Contact("a", [0.0, 1.0], [[1.0, 0.0]], 0.5)
    fs = force_single(c, [0.0, -1.0])
    (g,) = fs.generators
    assert isinstance(g, Disc)
    # support in +-x picks the segment ends
    assert np.allclose(fs.argmax([1.0, 0.0]), [0.5, 1.0])
    assert np.allclose(fs.argmax([-1.0, 0.0]), [-0.5, 1.0])


def test_force_single_frictionless():
    fs = force_single(Contact("a", [0.0, 1.0]), [5.0, -1.0])
    assert np.allclose(fs.generators[0].value, [0.0, 1.0])


def test_net_force_set_two_active():
    p = frictionless([1.0, 0.0], [0.0, 1.0])
    fs = net_force_set(p, [-1.0, -1.0])
    got = sorted(tuple(g.value) for g in fs.generators)
    assert got == [(0.0, 1.0), (1.0, 0.0)]


def test_net_force_set_drops_separating():
    p = frictionless([1.0, 0.0], [0.0, 1.0])
    fs = net_force_set(p, [-1.0, 1.0])
    assert [tuple(g.value) for g in fs.generators] == [(1.0, 0.0)]


def test_net_force_set_symmetric_hull_contains_origin():
    p = frictionless([1.0, 0.0], [-1.0, 0.0], [0.0, 1.0])
    fs = net_force_set(p, [0.0, -1.0])
    assert len(fs.generators) == 3
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((50, 2))
    assert fs.contains(np.zeros(2), dirs)


def test_net_force_set_empty_when_separated():
    p = frictionless([1.0, 0.0], [0.0, 1.0])
    assert net_force_set(p, [1.0, 1.0]).empty


def test_derivative_set_branches():
    p = frictionless([1.0, 0.0], [0.0, 1.0])
    sep = derivative_set(p, [1.0, 1.0])
    assert len(sep.generators) == 1 and not sep.generators[0].value.any()
    pen = derivative_set(p, [-1.0, -1.0])
    assert pen.equivalent(net_force_set(p, [-1.0, -1.0])) and not pen.includes_zero_hull
    bnd = derivative_set(p, [0.0, 1.0])
    assert bnd.includes_zero_hull
    assert bnd.support([-1.0, 0.0]) == pytest.approx(0.0)


# -- properties ---------------------------------------------------------------

def _random_problem(rng, m, n):
    contacts = []
    for i in range(m):
        if rng.random() < 0.5:
            contacts.append(Contact(f"c{i}", rng.standard_normal(n), rng.standard_normal((2, n)),
                                    float(rng.uniform(0.1, 2.0))))
        else:
            contacts.append(Contact(f"c{i}", rng.standard_normal(n)))
    return NormalizedProblem(n, tuple(contacts))


def _sticking_velocity(rng, p):
    # a velocity with the first frictional contact exactly sticking
    fr = [c for c in p.contacts if c.jt is not None]
    if not fr or p.dim < 4:
        return rng.standard_normal(p.dim)
    from scipy.linalg import null_space
    ns = null_space(fr[0].jt)
    return ns @ rng.standard_normal(ns.shape[1])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), k=st.floats(1e-3, 1e3))
def test_derivative_set_conic_invariance(seed, k):
    rng = np.random.default_rng(seed)
    p = _random_problem(rng, int(rng.integers(1, 5)), int(rng.integers(2, 6)))
    v = _sticking_velocity(rng, p)
    # the classification tolerance scales with v, as everywhere in the model
    t = 1e-9 * np.linalg.norm(v)
    a = derivative_set(p, v, tol=t)
    b = derivative_set(p, k * v, tol=k * t)
    assert a.equivalent(b, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_support_function_bounds_samples(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    p = _random_problem(rng, int(rng.integers(1, 5)), n)
    v = _sticking_velocity(rng, p)
    fs = derivative_set(p, v)
    dirs = rng.standard_normal((1000, n))
    pts = fs.sample(rng, 1000)
    support = np.array([fs.support(d) for d in dirs])
    assert np.all((pts @ dirs.T).max(axis=0) <= support + 1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_admissible_forces_do_not_add_energy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    p = _random_problem(rng, int(rng.integers(1, 5)), n)
    v = _sticking_velocity(rng, p)
    # only contacts at boundary-or-active contribute
    fs = net_force_set(p, v, tol=0.0)
    if fs.empty:
        return
    for x in fs.sample(rng, 200):
        assert x @ v <= 1e-10 * max(1.0, np.linalg.norm(v))
    # the worst case over the exact set, via the support function
    assert fs.support(v) <= 1e-10 * max(1.0, np.linalg.norm(v))


# -- generic inclusion solver ---------------------------------------------------------

def test_negative_unit_map_closed_form():
    t, x = euler_inclusion(lambda w: unit_set(-w), (3.0, 4.0), 1e-2, 5.0)
    i = int(np.argmin(np.abs(t - 2.5)))
    assert np.allclose(x[i], (1.5, 2.0), atol=1e-9)
    assert np.linalg.norm(x[-1]) <= 1e-9
    # past the origin the minimal selection of the unit ball holds the state at rest
    t2, x2 = euler_inclusion(lambda w: unit_set(-w), (0.0, 0.0), 0.5, 2.0)
    assert not x2.any() and t2[-1] == pytest.approx(2.0)
