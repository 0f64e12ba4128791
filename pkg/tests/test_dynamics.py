from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from merodyn import dynamics as dy
from merodyn import maps as mp
from merodyn.families import IterateFamily

SCHED = list(range(10, 34, 3))
SCALING = mp.from_text(["z0", "2*z1", "2*z2"], mp.projective(2))


@pytest.fixture(scope="module")
def scaling_grid():
    return dy.fatou_scan(IterateFamily(SCALING), SCHED)


@pytest.fixture(scope="module")
def cremona_small():
    fam = IterateFamily(mp.cremona())
    plain = dy.fatou_scan(fam, SCHED, resolution=16, spacing=1 / 8)
    excl = dy.fatou_scan(fam, SCHED, resolution=16, spacing=1 / 8, exclude_indeterminacy=True)
    return plain, excl


# -------------------------------------------------------------------- grid


def test_schedule_too_short():
    with pytest.raises(dy.ScheduleTooShort):
        dy.fatou_scan(SCALING, [1, 2, 3])


def test_grid_geometry(scaling_grid):
    g = scaling_grid
    assert g.resolution == 64 and g.spacing == pytest.approx(1 / 32)
    assert g.ball_radius == pytest.approx(0.75 / 32)
    assert len(g.cells) == 64 * 64
    c = next(c for c in g.cells if c.index == (32, 32))
    assert np.allclose(c.center, [0, 0])
    c = next(c for c in g.cells if c.index == (33, 30))
    assert np.allclose(c.center, [1 / 32, -2 / 32])


def test_scaling_grid_verdicts(scaling_grid):
    g = scaling_grid
    assert g.weak_set() == {c.index for c in g.cells}
    failing = [c for c in g.cells if c.verdict != dy.IN_S]
    assert failing and all(np.linalg.norm(c.center) <= g.ball_radius for c in failing)
    assert g.strong_set() <= g.weak_set()


def test_cell_lookup(scaling_grid):
    assert scaling_grid.cell_containing([0, 0]).index == (32, 32)
    assert scaling_grid.cell_containing([5, 5]) is None


def test_grid_outputs(scaling_grid):
    g = scaling_grid
    rows = list(csv.DictReader(io.StringIO(g.to_csv())))
    assert len(rows) == 4096
    assert list(rows[0]) == ["i", "j", "center_re_0", "center_im_0", "center_re_1", "center_im_1",
                             "verdict", "ball_radius", "max_strong_distance", "excluded"]
    assert {r["verdict"] for r in rows} == {dy.IN_S, dy.IN_W}
    pgm = g.to_pgm()
    header = b"P5\n64 64\n255\n"
    assert pgm.startswith(header) and len(pgm) == len(header) + 64 * 64
    pixels = np.frombuffer(pgm[len(header):], dtype=np.uint8).reshape(64, 64)
    # top row is the largest second index
    assert pixels[63 - 32, 32] == dy.PGM_LEVEL[dy.IN_W]
    js = json.loads(json.dumps(g.to_json()))
    assert js["schema"] == 1 and js["counts"][dy.IN_S] + js["counts"][dy.IN_W] == 4096


def test_cell_test_direct():
    fam = IterateFamily(SCALING)
    v_far, _ = dy.cell_test(fam, np.array([0.4, -0.3]), 0.05, SCHED)
    v_p, _ = dy.cell_test(fam, np.array([0.0, 0.0]), 0.05, SCHED)
    assert v_far == dy.IN_S and v_p == dy.IN_W


def test_cremona_exclusion(cremona_small):
    plain, excl = cremona_small
    assert plain.counts()[dy.IN_S] == len(plain.cells)
    changed = {c.index for c, d in zip(plain.cells, excl.cells) if c.verdict != d.verdict}
    on_lines = {c.index for c in plain.cells if min(abs(c.center[0]), abs(c.center[1])) <= plain.ball_radius}
    assert changed == on_lines and changed
    assert all(d.verdict == dy.UNDECIDED for d in excl.cells if d.index in changed)


def test_seed_determinism():
    a = dy.fatou_scan(SCALING, SCHED, resolution=8, spacing=1 / 4, seed=3)
    b = dy.fatou_scan(SCALING, SCHED, resolution=8, spacing=1 / 4, seed=3)
    assert a.to_csv() == b.to_csv()


# ---------------------------------------------------------------- dichotomy


def test_classify_scaling(scaling_grid):
    rep = dy.classify_dichotomy(SCALING, scaling_grid)
    assert np.allclose(mp.canonical(rep.p.coords), [1, 0, 0], atol=1e-9)
    assert rep.curve_degree == 1
    assert np.max(np.abs(np.asarray(rep.curve_coefficients) - [1, 0, 0])) < 1e-6
    assert rep.curve_text() == "z0"
    vols = [v for _, v, _ in rep.volume_trace]
    assert max(vols) / min(vols) < 2
    assert rep.fiber_spread["chordal_diameter"] > 0.9
    json.dumps(rep.to_json())


def test_classify_needs_evidence(cremona_small):
    with pytest.raises(dy.NoDichotomyEvidence):
        dy.classify_dichotomy(mp.cremona(), cremona_small[0])


def test_fit_conic():
    t = np.linspace(-2, 2, 40) + 0.3j
    pts = np.stack([np.ones_like(t), t, t * t], axis=1)
    d, mons, coef, res = dy.fit_curve(pts)
    assert d == 2 and res < 1e-9
    got = dict(zip(mons, coef))
    expected = {(1, 0, 1): 1, (0, 2, 0): -1}
    for e, c in got.items():
        assert abs(c - expected.get(e, 0)) < 1e-9


def test_fit_line():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=20) + 1j * rng.normal(size=20), rng.normal(size=20)
    pts = np.stack([a, b, 2 * a - 3 * b], axis=1)  # on 2 z0 - 3 z1 - z2 = 0
    d, mons, coef, _ = dy.fit_curve(pts)
    c = dict(zip(mons, coef))
    assert d == 1
    assert np.allclose([c[(1, 0, 0)], c[(0, 1, 0)], c[(0, 0, 1)]], np.array([2, -3, -1]) / -3)


def test_fit_fails_on_generic_points():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(60, 3)) + 1j * rng.normal(size=(60, 3))
    with pytest.raises(dy.CurveFitFailed):
        dy.fit_curve(pts, max_degree=3)


# --------------------------------------------------------------- degeneracy


def test_degeneracy_identity_empty():
    assert len(dy.degeneracy_locus_sample(mp.identity(2))) == 0


def test_degeneracy_projection_everywhere():
    f = mp.from_text(["z1", "z2", "z1 + z2"], mp.projective(2))  # rank-one linear map
    d = dy.degeneracy_locus_sample(f)
    assert len(d) == d.sampled == 4096


def test_degeneracy_cremona_on_lines(cremona_small):
    d = dy.degeneracy_locus_sample(mp.cremona(), 1, cremona_small[0])
    assert len(d) > 0
    assert np.all(np.min(np.abs(d.points), axis=1) < 1e-9)


# ------------------------------------------------------------- propagation


def test_forward_propagation(scaling_grid):
    out = dy.forward_propagation_check(SCALING, 1, (0.3, 0.2), scaling_grid)
    assert out["passed"] and out["checked"]
    assert out["z_verdict"] == dy.IN_S
    assert all(dy.RANK[c["verdict"]] >= dy.RANK[out["z_verdict"]] for c in out["checked"])
