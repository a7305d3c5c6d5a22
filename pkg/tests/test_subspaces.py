import numpy as np
import pytest

from hamflow.errors import HyperbolicityError, ValidationError
from hamflow.families import HamiltonianFamily, example_family
from hamflow.flow import StepControl
from hamflow.linalg import subspace_angle
from hamflow.subspaces import (ShootingOptions, _richardson_pair,
                               boundary_data, gap_batch, kernel_solutions,
                               lagrangian_defect, stable_space, unstable_space)

from oracles import closed_form_kernel, kernel_weight


def line_angle(frame):
    cols = frame.columns
    return np.arctan2(cols[1, 0], cols[0, 0]) % np.pi


def test_stable_space_half_angle(example1):
    es = stable_space(example1, [np.pi])
    assert subspace_angle(es.columns, np.array([[0.0], [1.0]])) <= 1e-4
    es0 = stable_space(example1, [0.0])
    assert subspace_angle(es0.columns, np.array([[1.0], [0.0]])) <= 1e-4


def test_stable_angle_tracks_angle_sum(example2):
    rng = np.random.default_rng(5)
    for _ in range(4):
        lam = rng.uniform(-1.4, 1.4, 2)
        es = stable_space(example2, lam)
        expected = (lam.sum() / 2.0) % np.pi
        diff = abs(line_angle(es) - expected)
        assert min(diff, np.pi - diff) <= 1e-4


def test_unstable_space_fixed(example2):
    rng = np.random.default_rng(6)
    for _ in range(3):
        lam = rng.uniform(-np.pi, np.pi, 2)
        eu = unstable_space(example2, lam)
        assert subspace_angle(eu.columns, np.array([[1.0], [0.0]])) <= 1e-4


def test_control_family_axes(control2):
    es = stable_space(control2, [0.3, -0.4])
    eu = unstable_space(control2, [0.3, -0.4])
    assert subspace_angle(es.columns, np.array([[1.0], [0.0]])) <= 1e-9
    assert subspace_angle(eu.columns, np.array([[0.0], [1.0]])) <= 1e-9


def test_boundary_data_contract(example2):
    bd = boundary_data(example2, [0.5, 0.3])
    assert bd.stable.dim == 1 and bd.unstable.dim == 1
    assert bd.init_error_estimate <= 1e-5
    assert lagrangian_defect(example2, bd.stable) <= 1e-6


def test_boundary_data_n2_lagrangian(block_family):
    bd = boundary_data(block_family, [0.0])
    assert bd.stable.dim == 2 and bd.unstable.dim == 2
    assert lagrangian_defect(block_family, bd.stable) <= 1e-6
    assert lagrangian_defect(block_family, bd.unstable) <= 1e-6
    # stable block is span{e1, e2}
    target = np.eye(4)[:, :2]
    assert subspace_angle(bd.stable.columns, target) <= 1e-8


def test_kernel_at_origin_matches_closed_form(example1):
    kb = kernel_solutions(example1, [0.0])
    assert kb.dim == 1
    sol = kb.trajectories[0]
    ref = closed_form_kernel(sol.times)
    ref /= np.sqrt(np.trapezoid(np.sum(ref * ref, axis=1), sol.times))
    dist_sq = np.trapezoid(np.sum((sol.values - ref) ** 2, axis=1), sol.times)
    if dist_sq > 1.0:  # sign convention of the propagated direction
        ref = -ref
        dist_sq = np.trapezoid(np.sum((sol.values - ref) ** 2, axis=1), sol.times)
    assert np.sqrt(dist_sq) <= 1e-3


def test_kernel_trajectory_decays(example1):
    kb = kernel_solutions(example1, [0.0])
    sol = kb.trajectories[0]
    peak = np.linalg.norm(sol.values, axis=1).max()
    assert np.linalg.norm(sol.values[0]) <= 1e-3 * peak
    assert np.linalg.norm(sol.values[-1]) <= 1e-3 * peak


def test_kernel_empty_off_crossing(example1, control2):
    assert kernel_solutions(example1, [1.0]).dim == 0
    assert kernel_solutions(control2, [0.2, 0.9]).dim == 0


def test_invertibility_witness_at_pi(example2):
    # angle sum pi realizes the invertible-parameter hypothesis
    kb = kernel_solutions(example2, [np.pi / 2.0, np.pi / 2.0])
    assert kb.dim == 0


def test_kernel_dim_bounded_by_n(example2):
    rng = np.random.default_rng(9)
    for _ in range(3):
        lam = rng.uniform(-np.pi, np.pi, 2)
        assert kernel_solutions(example2, lam).dim <= example2.n


def test_gap_batch_matches_half_angle(example1):
    lams = np.array([[0.5], [1.0], [2.5]])
    gaps = gap_batch(example1, lams, 40.0, StepControl(verify=False))
    expected = np.minimum(np.abs(lams[:, 0] / 2.0),
                          np.pi - np.abs(lams[:, 0] / 2.0))
    assert np.abs(gaps - expected).max() <= 1e-6


def test_richardson_removes_linear_drift():
    # synthetic frames at angles theta_inf + c / T
    theta_inf, c = 0.6, 0.8

    def frame_at(horizon):
        ang = theta_inf + c / horizon
        return np.array([[np.cos(ang)], [np.sin(ang)]])

    extrap = _richardson_pair(frame_at(40.0), frame_at(80.0))
    got = np.arctan2(extrap[1, 0], extrap[0, 0]) % np.pi
    assert abs(got - theta_inf) <= 1e-4  # quadratic remainder only
    raw = np.arctan2(frame_at(80.0)[1, 0], frame_at(80.0)[0, 0]) % np.pi
    assert abs(got - theta_inf) < abs(raw - theta_inf) / 50.0


def test_non_hyperbolic_family_raises():
    def zeros_eval(theta, t):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(t))
        return np.zeros(shape + (2, 2))

    fam = HamiltonianFamily(n=1, k=1, a_eval=zeros_eval,
                            a_plus_eval=lambda th: np.zeros(th.shape[:-1] + (2, 2)),
                            a_minus_eval=lambda th: np.zeros(th.shape[:-1] + (2, 2)))
    with pytest.raises(HyperbolicityError):
        stable_space(fam, [0.0])


def test_shooting_options_escalation_on_small_gap():
    # arctan ramp scaled to a small hyperbolic gap needs a longer horizon
    from hamflow.families import family_from_config
    cfg = {
        "kind": "composed", "k": 1, "n": 1,
        "term": [{"profile": "arctan", "side": "both", "coeff": 0.1,
                  "matrix": {"type": "rotation", "weights": [1.0],
                             "offset": 0.0}}],
    }
    fam = family_from_config(cfg)
    bd = boundary_data(fam, [0.7], ShootingOptions(horizon=40.0))
    assert bd.init_error_estimate <= 1e-5
    assert bd.horizon >= 40.0
