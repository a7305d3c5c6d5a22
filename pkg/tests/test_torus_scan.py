import math

import numpy as np
import pytest

from hamflow.errors import CertificateUnavailable
from hamflow.families import (CoordinateLoop, PiecewiseTorusPath, TorusPath,
                              wrap_angles)
from hamflow.spectral_flow import HomoclinicPath, sfl_crossing
from hamflow.torus_scan import (ScanOptions, certify, chern_vector,
                                degenerate_instants, gap_profile,
                                scan_degeneracy)


def test_chern_vector_single_loop(example1):
    chern = chern_vector(example1)
    assert chern.components == (-1,)


def test_chern_vector_control(control2):
    chern = chern_vector(control2)
    assert chern.components == (0, 0)


def test_chern_vector_shifts_degenerate_start(example2):
    # with base (pi, 0) the first coordinate loop starts at (-pi, 0), where
    # the angle sum is degenerate; the start must shift and the index survive
    chern = chern_vector(example2, base=[np.pi, 0.0])
    assert chern.components[0] == -1
    assert chern.loop_starts[0] != -np.pi


def test_certify_single_parameter(example1):
    cert = certify(example1)
    assert cert.nonzero_component == 1
    assert cert.chern.components == (-1,)
    total = wrap_angles(np.asarray(cert.invertible_point).sum())
    assert abs(abs(float(total)) - np.pi) <= 1e-9


def test_certify_control_unavailable(control2):
    with pytest.raises(CertificateUnavailable) as err:
        certify(control2)
    assert err.value.hypothesis == "nonzero-loop-index"


def test_scan_control_empty(control2):
    report = scan_degeneracy(control2, 8,
                             scan_opts=ScanOptions(include_invariant=False))
    assert report.degenerate_cells == []
    assert all(v == 0 for v in report.box_counts.values())
    assert report.dimension_estimate is None
    assert report.warning is not None


def _distance_to_antidiagonal(angles):
    return abs(float(wrap_angles(np.sum(angles)))) / math.sqrt(len(angles))


def test_scan_example_geometry(example2):
    report = scan_degeneracy(example2, 16,
                             scan_opts=ScanOptions(include_invariant=False))
    counts = [report.box_counts[r] for r in sorted(report.box_counts)]
    assert counts[0] > 0
    assert counts[0] <= counts[1] <= counts[2]
    assert report.dimension_estimate is not None
    assert 0.75 <= report.dimension_estimate <= 1.25
    for res, flagged in report.cells_by_resolution.items():
        w = 2.0 * math.pi / res
        for idx in flagged:
            centre = -math.pi + (np.asarray(idx, dtype=float) + 0.5) * w
            assert _distance_to_antidiagonal(centre) <= w * (1.0 + 1e-9)


def test_scan_cells_refine_consistently(example2):
    report = scan_degeneracy(example2, 16,
                             scan_opts=ScanOptions(include_invariant=False))
    base = {tuple(c) for c in report.cells_by_resolution[16].tolist()}
    finer = {tuple(c) for c in report.cells_by_resolution[32].tolist()}
    # every flagged coarse cell contains a flagged fine cell within one fine cell
    for i, j in base:
        children = {(a, b) for a in range(2 * i - 1, 2 * i + 3)
                    for b in range(2 * j - 1, 2 * j + 3)}
        children = {(a % 32, b % 32) for a, b in children}
        assert children & finer


def test_scan_report_roundtrip(example2):
    report = scan_degeneracy(example2, 8,
                             scan_opts=ScanOptions(include_invariant=False))
    doc = report.to_json_dict()
    assert doc["resolution"] == 8
    assert set(doc["box_counts"]) == {"8", "16", "32"}
    assert doc["chern"] is None


def test_gap_profile_diagonal(example2):
    path = PiecewiseTorusPath([[-np.pi, -np.pi], [0.0, 0.0], [np.pi, np.pi]])
    ss, gaps = gap_profile(example2, path, samples=64)
    assert ss.shape == gaps.shape == (65,)
    # at s = 0.5 the angle sum is -pi, the farthest point from degeneracy
    mid = int(np.argmin(np.abs(ss - 0.5)))
    assert abs(gaps[mid] - np.pi / 2.0) <= 1e-4


def test_degenerate_instants_on_diagonal_probe(example2):
    # along Theta_2 = Theta_1 the kernel appears where 2 Theta_1 = 0 mod 2pi
    path = PiecewiseTorusPath([[-np.pi, -np.pi], [0.0, 0.0], [np.pi, np.pi]])
    found = degenerate_instants(example2, path, samples=128, tol=1e-3)
    assert len(found) == 3
    assert np.abs(np.array(found) - np.array([0.0, 1.0, 2.0])).max() <= 1e-4


class PerturbedLoop(TorusPath):
    """Coordinate loop with a sinusoidal wobble in the second angle."""

    def __init__(self, k, amplitude=0.1):
        self.k = k
        self.amplitude = amplitude
        self.a = -math.pi
        self.b = math.pi

    def point(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + (self.k,))
        out[..., 0] = s
        out[..., 1] = self.amplitude * np.sin(s + 0.5)
        return out

    def direction(self, s):
        d = np.zeros(self.k)
        d[0] = 1.0
        d[1] = self.amplitude * math.cos(float(s) + 0.5)
        return d


def test_chern_component_stable_under_homotopy(example2):
    wobbled = sfl_crossing(HomoclinicPath(example2, PerturbedLoop(2)), grid=64)
    assert wobbled.value == -1


def test_loop_reparametrization_invariance(example1):
    rng = np.random.default_rng(3)
    knots = np.sort(rng.uniform(-np.pi + 0.3, np.pi - 0.3, 3))
    waypoints = [[-np.pi]] + [[k] for k in knots] + [[np.pi]]
    path = PiecewiseTorusPath(waypoints)
    res = sfl_crossing(HomoclinicPath(example1, path), grid=64)
    assert res.value == -1


def test_loop_orientation_reversal(example1):
    waypoints = [[np.pi], [np.pi / 2.0], [0.0], [-np.pi / 2.0], [-np.pi]]
    path = PiecewiseTorusPath(waypoints)
    res = sfl_crossing(HomoclinicPath(example1, path), grid=64)
    assert res.value == +1


def test_scan_certificate_consistency(example2):
    # nonzero loop index forces the degenerate set to meet each loop class
    report = scan_degeneracy(example2, 8,
                             scan_opts=ScanOptions(include_invariant=True))
    assert report.chern is not None and report.chern.components == (-1, -1)
    assert report.certificate is not None
    flagged = report.cells_by_resolution[8]
    # every row band and every column band of the torus is hit
    assert set(flagged[:, 0].tolist()) == set(range(8))
    assert set(flagged[:, 1].tolist()) == set(range(8))
