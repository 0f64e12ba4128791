from __future__ import annotations

import numpy as np
import pytest

from merodyn import converge as cv
from merodyn import graphgeom as gg
from merodyn import maps as mp
from merodyn.families import IterateFamily, SequenceFamily, partial_sums

A1, A2 = mp.affine(1), mp.affine(2)
SCHED = [50, 100, 200, 400, 800]


def seq(*comps, source=A2):
    return SequenceFamily((mp.MapFamily(tuple(comps), source),))


POLE = seq("1", "z - 1/n", source=A1)
NONSTAB = seq("z1 - 1/n", "z2")
SCALING = IterateFamily(mp.from_text(["z0", "2*z1", "2*z2"], mp.projective(2)))
ITER_SCHED = list(range(10, 34, 3))


# --------------------------------------------------------------- tail rule


def test_tail_verdict():
    assert cv.tail_verdict([0.5, 0.015, 0.01, 0.005, 0.004, 0.003], 2e-2) == cv.CONVERGES
    assert cv.tail_verdict([0.5, 0.5, 0.5, 0.5, 0.5], 2e-2) != cv.CONVERGES
    # a rising tail is not convergence even below tolerance
    assert cv.tail_verdict([0.001, 0.002, 0.004, 0.008, 0.016], 2e-2) != cv.CONVERGES


def test_exit_codes():
    assert [cv.exit_code(v) for v in (cv.CONVERGES, cv.UNDECIDED, cv.DIVERGES)] == [0, 1, 2]


# ---------------------------------------------------------- strong notion


def test_pole_family_strong_converges():
    rep = cv.s_converge(POLE, gg.unit_disc(), SCHED)
    assert rep.verdict == cv.CONVERGES
    assert dict(rep.distance_trace)[200] < 2e-2
    assert rep.exceptional_points == []
    # the graphs are translates by 1/n, so the distance is at most about 1/n
    for n, d in rep.distance_trace:
        assert d <= 1.0 / n + 1e-9


def test_nonstabilizing_strong_converges():
    rep = cv.s_converge(NONSTAB, gg.unit_bidisc(), SCHED)
    assert rep.verdict == cv.CONVERGES


def test_constant_family_zero_trace():
    fam = seq("z1*z2 + 1", "z1 - 3")
    rep = cv.s_converge(fam, gg.unit_bidisc(), [1, 2, 3, 4, 5])
    assert rep.verdict == cv.CONVERGES
    assert all(d == 0.0 for _, d in rep.distance_trace)


@pytest.mark.parametrize("fam,K", [(POLE, gg.unit_disc()), (NONSTAB, gg.unit_bidisc()),
                                   (seq("z1", "z2 + n"), gg.unit_bidisc())])
def test_verdict_independent_of_target_scale(fam, K):
    base = cv.s_converge(fam, K, SCHED)
    doubled = cv.s_converge(fam, K, SCHED, st=cv.Settings(metric=gg.MetricSpec(1.0, 2.0)))
    assert base.verdict == doubled.verdict


def test_report_invariants():
    rep = cv.s_converge(POLE, gg.unit_disc(), SCHED)
    js = rep.to_json()
    assert js["schema"] == 1 and js["notion"] == "strong"
    tail = [d for _, d in rep.distance_trace][-5:]
    assert max(tail) < cv.DEFAULT.tol


# ------------------------------------------------------------ weak notion


def test_strong_family_weak_has_no_exceptions():
    rep = cv.w_converge(POLE, gg.unit_disc(), SCHED)
    assert rep.verdict == cv.CONVERGES and rep.exceptional_points == []


def test_scaling_iterates_weak_and_gamma():
    K = gg.polydisc((0, 0), (0.5, 0.5))
    weak = cv.w_converge(SCALING, K, ITER_SCHED)
    assert weak.verdict == cv.CONVERGES
    pts = [p for p, _ in weak.exceptional_points]
    assert len(pts) == 1
    # the chart z0 = 1 puts [1:0:0] at the origin
    assert mp.chordal(mp.lift(pts[0]), [1, 0, 0]) < 1e-3
    gamma = cv.gamma_converge(SCALING, K, ITER_SCHED)
    assert gamma.verdict == cv.CONVERGES
    vertical = gamma.decomposition["vertical_part"]
    assert len(vertical) == 1
    v = np.array([complex(*c) for c in vertical[0]["point"]])
    assert np.linalg.norm(v - pts[0]) < cv.DEFAULT.cluster_radius
    assert vertical[0]["fiber_diameter"] > cv.DEFAULT.fiber_diam_tol
    assert gamma.decomposition["graph_part"][0]["display"] == "[0 : z1 : z2]"


def test_scaling_iterates_strong_fails_at_fixed_point():
    rep = cv.s_converge(SCALING, gg.polydisc((0, 0), (0.5, 0.5)), ITER_SCHED)
    assert rep.verdict != cv.CONVERGES


def test_gamma_of_strong_family_has_no_vertical_part():
    rep = cv.gamma_converge(POLE, gg.unit_disc(), SCHED)
    assert rep.verdict == cv.CONVERGES
    assert not rep.decomposition["vertical_part"]


# --------------------------------------------------------- stabilization


def test_nonstabilizing_family_fails_stabilization():
    rep = cv.stabilization_test(NONSTAB, gg.unit_bidisc(), SCHED)
    assert rep.verdict == cv.DIVERGES


def test_constant_family_stabilizes():
    fam = seq("z1", "z2")
    assert cv.stabilization_test(fam, gg.unit_bidisc(), [1, 2, 3, 4, 5]).verdict == cv.CONVERGES


def test_holomorphic_family_stabilizes():
    fam = seq("1", "z1 - 1/n", "z2")
    assert cv.stabilization_test(fam, gg.unit_bidisc(), SCHED).verdict == cv.CONVERGES


# ---------------------------------------------------------------- Rouche


def test_rouche_on_annulus():
    annulus = gg.polydisc((0, 0), (1, 1), inner=(0, 0.5))
    out = cv.rouche_check(NONSTAB, annulus, SCHED)
    assert out["passed"]
    assert out["checks"]["a[0]"]["applies"] and out["checks"]["a[0]"]["violations"] == []


def test_rouche_holomorphic_family():
    fam = seq("1", "z1 - 1/n", "z2")
    out = cv.rouche_check(fam, gg.unit_bidisc(), SCHED)
    assert out["passed"] and out["checks"]["b[0]"]["applies"]


def test_rouche_scaling_iterates_on_ball_avoiding_fixed_point():
    K = gg.ball((0.6, 0.3), 0.2)
    out = cv.rouche_check(SCALING, K, ITER_SCHED)
    assert out.get("passed") or "skipped" in out


# ------------------------------------------------------------------ lifts


def test_lift_convergence_matches_weak():
    # normalized components differ by at most 1/n from the shift plus 1/n from the
    # change of sup-norm, twice the graph distance
    sched = [100, 200, 400, 800, 1600]
    weak = cv.w_converge(NONSTAB, gg.unit_bidisc(), sched)
    out = cv.lift_convergence_check(NONSTAB, gg.unit_bidisc(), sched, weak=weak)
    assert out["verdict"] == cv.CONVERGES and out["consistent_with_weak"]
    for n, d in out["trace"]:
        assert 1.0 / n < d <= 2.0 / n + 1e-9


def test_lift_convergence_scaling_normalized():
    fam = seq("1", "2^n*z1", "2^n*z2")
    out = cv.lift_convergence_check(fam, gg.unit_bidisc(), [5, 10, 15, 20, 25, 30])
    assert out["verdict"] == cv.CONVERGES


# ------------------------------------------------------- one variable


def test_def1_diverges_def2_converges():
    half = gg.polydisc((0,), (0.5,))
    assert cv.series_convergence_def1(POLE, half, SCHED).verdict == cv.DIVERGES
    assert cv.series_convergence_def1(POLE, gg.unit_disc(), SCHED).verdict == cv.DIVERGES
    assert cv.spherical_convergence_def2(POLE, half, SCHED).verdict == cv.CONVERGES
    assert cv.spherical_convergence_def2(POLE, gg.unit_disc(), SCHED).verdict == cv.CONVERGES


def test_def1_fixed_pole_converges():
    fam = seq("1 + (z - 1/4)/n", "z - 1/4", source=A1)
    rep = cv.series_convergence_def1(fam, gg.polydisc((0,), (0.5,)), SCHED)
    assert rep.verdict == cv.CONVERGES


def test_def1_geometric_series():
    L = 30
    terms = [mp.from_text([f"z^{k}" if k else "1", "1"], A1) for k in range(L)]
    fam = partial_sums(terms)
    sched = list(range(2, L + 1))
    rep = cv.series_convergence_def1(fam, gg.polydisc((0,), (0.5,)), sched)
    assert rep.verdict == cv.CONVERGES
    # sup over |z| <= 1/2 of S_L - S_n, where S_n sums n terms: 2^(1-n) - 2^(1-L)
    for n, d in rep.distance_trace:
        assert d == pytest.approx(2.0 ** (1 - n) - 2.0 ** (1 - L), abs=1e-9)


def test_def1_rejects_maps():
    two_vars = mp.from_text(["z1", "z2"], A2)
    with pytest.raises(cv.NonRationalTerm):
        cv.series_convergence_def1([two_vars, two_vars], gg.unit_disc())
