import math

import numpy as np
import pytest

from hamflow.errors import ConfigError, ValidationError
from hamflow.families import (CoordinateLoop, HamiltonianFamily,
                              PiecewiseTorusPath, TorusPoint,
                              check_hyperbolic, compact_control_family,
                              example_family, family_from_config,
                              normalized_config, s_rotation, symplectic_j,
                              validate_family, wrap_angles)

from oracles import eig2x2_closed_form


def test_s_rotation_invariants():
    for theta in np.linspace(-np.pi, np.pi, 17):
        s = s_rotation(theta)
        assert np.allclose(s @ s, np.eye(2), atol=1e-14)
        assert np.allclose(eig2x2_closed_form(s), [-1.0, 1.0], atol=1e-14)
        assert abs(np.trace(s)) <= 1e-14
        assert abs(np.linalg.det(s) + 1.0) <= 1e-14


def test_example_value_at_unit_time(example1):
    # arctan 1 = pi/4 and the angle sum is zero
    j = symplectic_j(1)
    s0 = s_rotation(0.0)
    expected = (np.pi / 4.0) * (j @ s0)
    assert np.allclose(example1.A([0.0], 1.0), expected, atol=1e-14)


def test_example_negative_time_ignores_angles(example2):
    rng = np.random.default_rng(0)
    ref = example2.A(rng.uniform(-np.pi, np.pi, 2), -3.0)
    for _ in range(5):
        lam = rng.uniform(-np.pi, np.pi, 2)
        assert np.allclose(example2.A(lam, -3.0), ref, atol=1e-14)


def test_example_asymptotic_limit(example2):
    lam = np.array([np.pi / 2.0, np.pi / 2.0])
    expected = -(np.pi / 2.0) * s_rotation(np.pi)
    assert np.allclose(example2.ja_plus(lam), expected, atol=1e-14)


def test_example_depends_only_on_angle_sum(example2):
    rng = np.random.default_rng(4)
    times = rng.uniform(-8.0, 8.0, 20)
    for _ in range(5):
        total = rng.uniform(-np.pi, np.pi)
        split = rng.uniform(-1.0, 1.0)
        lam1 = np.array([split, total - split])
        lam2 = np.array([total / 2.0, total / 2.0])
        assert np.allclose(example2.A(lam1, times), example2.A(lam2, times),
                           atol=1e-13)


def test_analytic_da_matches_central_difference(example2):
    rng = np.random.default_rng(8)
    h = 1e-5
    for _ in range(10):
        lam = rng.uniform(-2.0, 2.0, 2)
        direction = rng.normal(size=2)
        t = float(rng.uniform(-5.0, 5.0))
        if abs(t) < 0.1:
            t += 0.2
        analytic = example2.dA(lam, direction, t)
        fd = (example2.A(lam + h * direction, t)
              - example2.A(lam - h * direction, t)) / (2.0 * h)
        assert np.abs(analytic - fd).max() <= 1e-6


def test_ja_factory_matches_generic(example2, control2, block_family):
    rng = np.random.default_rng(12)
    lams = rng.uniform(-np.pi, np.pi, size=(5, 2))
    for fam, batch in ((example2, lams), (control2, lams),
                       (block_family, lams[:, :1])):
        factory = fam.ja_factory(batch)
        for t in (-3.7, -0.5, 0.0, 0.5, 3.7):
            direct = np.einsum("ij,bjk->bik", fam.j_matrix(), fam.A(batch, t))
            assert np.allclose(factory(t), direct, atol=1e-13)


def test_check_hyperbolic_gap(example2, control2):
    ok, gap = check_hyperbolic(example2, [0.3, -1.0], 1e-6)
    assert ok
    # eigenvalues of (pi/2) S are +-pi/2 since S^2 = I
    assert abs(gap - np.pi / 2.0) <= 1e-10
    ok, gap = check_hyperbolic(control2, [0.0, 0.0], 1e-6)
    assert ok and abs(gap - 1.0) <= 1e-12


def test_zero_family_is_not_hyperbolic():
    def zeros_eval(theta, t):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(t))
        return np.zeros(shape + (2, 2))

    fam = HamiltonianFamily(n=1, k=1, a_eval=zeros_eval,
                            a_plus_eval=lambda th: np.zeros(th.shape[:-1] + (2, 2)),
                            a_minus_eval=lambda th: np.zeros(th.shape[:-1] + (2, 2)))
    ok, gap = check_hyperbolic(fam, [0.0], 1e-6)
    assert not ok and gap <= 1e-12
    with pytest.raises(ValidationError):
        validate_family(fam)


def test_compact_control_constant(control2):
    rng = np.random.default_rng(1)
    a0 = np.array([[0.0, 1.0], [1.0, 0.0]])
    for _ in range(5):
        lam = rng.uniform(-np.pi, np.pi, 2)
        t = float(rng.uniform(-50.0, 50.0))
        assert np.allclose(control2.A(lam, t), a0, atol=1e-15)
    assert np.allclose(control2.ja([0.0, 0.0], 0.0), np.diag([-1.0, 1.0]),
                       atol=1e-15)


def test_torus_point_wrapping():
    p = TorusPoint.of([-np.pi, 3.5, 0.0])
    assert abs(p.angles[0] - np.pi) <= 1e-15  # -pi identified with +pi
    assert abs(p.angles[1] - (3.5 - 2.0 * np.pi)) <= 1e-12
    assert wrap_angles(np.pi) == np.pi
    assert abs(wrap_angles(2.0 * np.pi)) <= 1e-12


def test_piecewise_path_shortest_arc():
    path = PiecewiseTorusPath([[3.0, 0.0], [-3.0, 0.0]])
    # shortest arc from 3 to -3 goes up through pi, not back through 0
    delta = path.deltas[0]
    assert abs(delta[0] - (2.0 * np.pi - 6.0)) <= 1e-12
    mid = path.point(np.asarray(0.5))
    assert mid[0] > 3.0


def test_piecewise_path_half_turn_convention():
    # an exact pi difference is traversed in the +pi direction
    path = PiecewiseTorusPath([[0.0], [np.pi]])
    assert path.deltas[0][0] == np.pi
    path_back = PiecewiseTorusPath([[np.pi], [0.0]])
    assert path_back.deltas[0][0] == np.pi


def test_coordinate_loop_geometry():
    loop = CoordinateLoop(3, 1, [0.5, 0.0, -0.5])
    assert loop.a == -np.pi and abs(loop.b - np.pi) <= 1e-15
    pt = loop.point(np.asarray(1.0))
    assert np.allclose(pt, [0.5, 1.0, -0.5])
    assert np.allclose(loop.direction(0.0), [0.0, 1.0, 0.0])


def test_config_example_roundtrip(example2):
    fam = family_from_config({"kind": "example", "k": 2})
    rng = np.random.default_rng(3)
    for _ in range(5):
        lam = rng.uniform(-np.pi, np.pi, 2)
        t = float(rng.uniform(-5.0, 5.0))
        assert np.allclose(fam.A(lam, t), example2.A(lam, t), atol=1e-15)


def test_config_composed_reproduces_example(example2):
    cfg = {
        "kind": "composed",
        "k": 2,
        "n": 1,
        "term": [
            {"profile": "arctan", "side": "positive", "coeff": 1.0,
             "matrix": {"type": "rotation", "weights": [1.0, 1.0], "offset": 0.0}},
            {"profile": "arctan", "side": "negative", "coeff": 1.0,
             "matrix": {"type": "rotation", "weights": [0.0, 0.0], "offset": 0.0}},
        ],
    }
    fam = family_from_config(cfg)
    rng = np.random.default_rng(6)
    for _ in range(8):
        lam = rng.uniform(-np.pi, np.pi, 2)
        t = float(rng.uniform(-6.0, 6.0))
        assert np.allclose(fam.A(lam, t), example2.A(lam, t), atol=1e-13)
    direction = np.array([1.0, 0.0])
    t = 2.0
    assert np.allclose(fam.dA([0.1, 0.2], direction, t),
                       example2.dA([0.1, 0.2], direction, t), atol=1e-12)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        family_from_config({"kind": "example", "k": 1, "bogus": 1})
    with pytest.raises(ConfigError):
        family_from_config({"kind": "made-up"})
    with pytest.raises(ConfigError):
        family_from_config({
            "kind": "composed", "k": 1, "n": 1,
            "term": [{"profile": "arctan", "matrix": {"type": "rotation",
                                                      "weights": [1.0],
                                                      "offset": 0.0},
                      "extra": True}],
        })


def test_config_rejects_asymmetric_const_matrix():
    with pytest.raises(ConfigError):
        family_from_config({
            "kind": "composed", "k": 1, "n": 1,
            "term": [{"profile": "const",
                      "matrix": {"type": "const",
                                 "entries": [[0.0, 1.0], [0.5, 0.0]]}}],
        })


def test_normalized_config_echo():
    cfg = {"kind": "example", "k": 2, "growth": {"p": 2.0, "C": 1.0, "g": "bump"}}
    norm = normalized_config(cfg)
    assert norm["kind"] == "example" and norm["k"] == 2 and norm["n"] == 1
    assert norm["growth"]["p"] == 2.0


def test_growth_metadata_stored():
    fam = family_from_config({"kind": "example", "k": 1,
                              "growth": {"p": 3.0, "C": 0.5, "g": "envelope"}})
    assert fam.growth_meta == {"p": 3.0, "C": 0.5, "g": "envelope"}


def test_decay_bound_checked_for_builtin(example1):
    for horizon in (50.0, 100.0):
        bound = example1.decay_bound(horizon)
        diff = np.abs(example1.A([0.4], horizon) - example1.A_plus([0.4])).max()
        assert diff <= bound
