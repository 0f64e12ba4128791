"""Acceptance criteria 1-11, one test each, with runtime budgets.

Every test prints a ``PASS criterion N`` or ``FAIL criterion N`` line; the
lines are repeated in the terminal summary.
"""

from __future__ import annotations

import itertools
import math
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from merodyn import converge as cv
from merodyn import dynamics as dy
from merodyn import graphgeom as gg
from merodyn import maps as mp
from merodyn import reproduce as rp
from merodyn.exactalg import GaussianRational, HomoPoly, divide_exact, divides, gcd
from merodyn.families import IterateFamily, SequenceFamily
from merodyn.scenario import load

from conftest import ACCEPTANCE_LINES


@contextmanager
def criterion(num: int, label: str, budget: float | None = None):
    start = time.perf_counter()
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget is not None:
            assert elapsed < budget, f"runtime {elapsed:.1f} s exceeds {budget} s"
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        line = f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {label} ({elapsed:.2f} s)"
        print(line)
        ACCEPTANCE_LINES.append(line)


def seq(*comps, dim=2):
    return SequenceFamily((mp.MapFamily(tuple(comps), mp.affine(dim)),))


POLE = seq("1", "z - 1/n", dim=1)
NONSTAB = seq("z1 - 1/n", "z2")
SCHED = [50, 100, 200, 400, 800]


@pytest.fixture(scope="module")
def outcomes():
    """Every scripted example, run once with one worker."""
    return {name: rp.run(name, seed=0, workers=1) for name in rp.CATALOGUE}


# ---------------------------------------------------------------------------


def test_criterion_01_cremona_involution():
    with criterion(1, "Cremona o Cremona is the identity, degree trace [2,1]", 1.0):
        f = mp.cremona()
        g, trace = mp.iterate(f, 2)
        assert g == mp.identity(2)
        assert trace == [2, 1]
        # second route: substitute by hand and divide by z0 z1 z2 exactly
        raw = [p.substitute(f.components) for p in f.components]
        c = HomoPoly.variable(3, 0) * HomoPoly.variable(3, 1) * HomoPoly.variable(3, 2)
        assert [divide_exact(r, c) for r in raw] == [HomoPoly.variable(3, k) for k in range(3)]


def test_criterion_02_cremona_indeterminacy():
    with criterion(2, "Cremona indeterminacy: exact and numeric paths", 1.0):
        f = mp.cremona()
        exact = mp.indeterminacy_locus(f)
        one, zero = GaussianRational(1), GaussianRational(0)
        assert exact.exact
        assert {p.exact for p in exact.points} == {(one, zero, zero), (zero, one, zero), (zero, zero, one)}
        num = mp.indeterminacy_locus(f, method="numeric")
        assert len(num.points) == 3
        X = np.array([p.coords for p in num.points])
        assert np.max(mp.residuals(f, X)) < 1e-8
        for e in np.eye(3):
            assert min(mp.chordal(x, e) for x in X) < 1e-8


def test_criterion_03_volume_oracles():
    oracle, _ = integrate.quad(lambda r: 2 * math.pi * r / (1 + r * r) ** 2, 0, 1)
    with criterion(3, f"pullback area pi/2 (quad oracle {oracle:.6f}) and bidisc volume pi^2", 20.0):
        t = time.perf_counter()
        est = gg.volume(mp.from_text(["z", "1"], mp.affine(1)), gg.unit_disc(), 100_000, seed=0)
        assert time.perf_counter() - t < 10
        assert abs(est.breakdown["pullback"] - oracle) < 3 * est.term_stderr["pullback"]
        assert abs(oracle - math.pi / 2) < 1e-12
        t = time.perf_counter()
        const = gg.volume(mp.from_text(["1", "1"], mp.affine(2)), gg.unit_bidisc(), 100_000, seed=0)
        assert time.perf_counter() - t < 10
        assert abs(const.value - math.pi ** 2) <= 3 * const.stderr + 1e-9


def test_criterion_04_convergence_taxonomy():
    with criterion(4, "1/(z-1/n): def1 diverges near 0, def2 and strong converge", 30.0):
        for K in (gg.polydisc((0,), (0.5,)), gg.unit_disc(), gg.polydisc((0.1,), (0.3,)), gg.ball((-0.05,), 0.1)):
            assert cv.series_convergence_def1(POLE, K, SCHED).verdict == cv.DIVERGES
        disc = gg.unit_disc()
        assert cv.spherical_convergence_def2(POLE, disc, SCHED).verdict == cv.CONVERGES
        strong = cv.s_converge(POLE, disc, SCHED)
        assert strong.verdict == cv.CONVERGES
        assert all(d < 2e-2 for n, d in strong.distance_trace if n >= 200)


def test_criterion_05_strong_without_stabilization():
    with criterion(5, "(z1-1/n)/z2: strong converges, stabilization diverges", 30.0):
        K = gg.unit_bidisc()
        assert cv.s_converge(NONSTAB, K, SCHED).verdict == cv.CONVERGES
        stab = cv.stabilization_test(NONSTAB, K, SCHED)
        assert stab.verdict == cv.DIVERGES


def test_criterion_06_rouche():
    with criterion(6, "Rouche principle on every strongly convergent scripted scenario", 30.0):
        annulus = gg.polydisc((0, 0), (1, 1), inner=(0, 0.5))
        cases = [
            (POLE, gg.unit_disc(), SCHED),
            (NONSTAB, gg.unit_bidisc(), SCHED),
            (NONSTAB, annulus, SCHED),
            (seq("1", "z1 - 1/n", "z2"), gg.unit_bidisc(), SCHED),
        ]
        crem = load("cremona_iterates")
        cases.append((crem.family(), crem.region(), crem.schedule))
        scaling = IterateFamily(mp.from_text(["z0", "2*z1", "2*z2"], mp.projective(2)))
        cases.append((scaling, gg.ball((0.6, 0.3), 0.2), list(range(10, 34, 3))))
        for fam, K, sched in cases:
            strong = cv.s_converge(fam, K, sched)
            assert strong.verdict == cv.CONVERGES
            out = cv.rouche_check(fam, K, sched, strong=strong)  # raises on a violation
            assert out["passed"]
        # the holomorphic-limit region: members are holomorphic there once 1/n < 1/2
        out = cv.rouche_check(NONSTAB, annulus, SCHED)
        assert out["checks"]["a[0]"] == {"applies": True, "members": [200, 400, 800], "violations": []}


def test_criterion_07_hartogs():
    with criterion(7, "Hartogs propagation to the bidisc minus (0,0)", 60.0):
        rep = cv.hartogs_propagation(NONSTAB, 0.25, [100, 200, 400, 800, 1600])
        assert rep["hartogs_verdict"] == cv.CONVERGES and rep["verdict"] == cv.CONVERGES
        pts = [np.array([complex(*c) for c in p]) for p in rep["exceptional_set"]]
        assert len(pts) == 1 and np.linalg.norm(pts[0]) < 1e-3
        lim_I = mp.indeterminacy_locus(mp.from_text(["z1", "z2"], mp.affine(2)))
        assert len(lim_I) == 1 and mp.chordal(lim_I.points[0].coords, [1, 0, 0]) < 1e-12


def test_criterion_08_dichotomy_example():
    with criterion(8, "[z0:2z1:2z2]: weak Fatou grid, one strong failure, curve z0 = 0", 120.0):
        f = mp.from_text(["z0", "2*z1", "2*z2"], mp.projective(2))
        fam = IterateFamily(f)
        grid = dy.fatou_scan(fam, list(range(10, 34, 3)))
        assert grid.resolution == 64 and len(grid.cells) == 64 * 64
        assert grid.weak_set() == {c.index for c in grid.cells}
        failing = [c for c in grid.cells if c.verdict != dy.IN_S]
        assert failing and all(np.linalg.norm(c.center) <= grid.ball_radius for c in failing)
        rep = dy.classify_dichotomy(fam, grid)
        assert np.allclose(mp.canonical(rep.p.coords), [1, 0, 0], atol=1e-9)
        assert rep.curve_degree == 1
        assert np.max(np.abs(np.asarray(rep.curve_coefficients) - [1, 0, 0])) < 1e-6
        ns = [n for n, _, _ in rep.volume_trace]
        vols = [v for _, v, _ in rep.volume_trace]
        assert ns == list(range(1, 21)) and max(vols) / min(vols) < 2


def test_criterion_09_implication_chain(outcomes):
    with criterion(9, "stabilized => strong => weak => gamma on every scripted scenario"):
        seen = 0
        for name, out in outcomes.items():
            verdicts = out.report.get("verdicts")
            if verdicts:
                assert not rp.chain_violations(verdicts), (name, verdicts)
                seen += 1
        assert seen >= 4
        # bundled scenarios with a family
        for name in ("one_over_z_minus", "nonstabilizing"):
            sc = load(name)
            fam, K = sc.family(), sc.region()
            v = {"stabilized": cv.stabilization_test(fam, K, sc.schedule).verdict,
                 "strong": cv.s_converge(fam, K, sc.schedule).verdict,
                 "weak": cv.w_converge(fam, K, sc.schedule).verdict,
                 "gamma": cv.gamma_converge(fam, K, sc.schedule).verdict}
            assert not rp.chain_violations(v), (name, v)
        # the checker itself flags inversions
        assert rp.chain_violations({"strong": cv.CONVERGES, "weak": cv.UNDECIDED})


def _random_poly(rng, d, k=3):
    mons = [e for e in itertools.product(range(d + 1), repeat=3) if sum(e) == d]
    idx = rng.choice(len(mons), size=min(k, len(mons)), replace=False)
    return HomoPoly(3, d, {mons[i]: GaussianRational(Fraction(int(rng.integers(-4, 5)), int(rng.integers(1, 4))),
                                                     int(rng.integers(-2, 3))) for i in idx})


def _cloud(rng, n):
    z = rng.uniform(-1, 1, (n, 2)) + 1j * rng.uniform(-1, 1, (n, 2))
    t = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
    return gg.GraphCloud(z, (t / np.linalg.norm(t, axis=1, keepdims=True),))


def test_criterion_10_property_suites():
    with criterion(10, "FS axioms (1e4 triples), ring and gcd laws (1e3 inputs), Hausdorff axioms", 60.0):
        rng = np.random.default_rng(2024)
        n = 10_000
        P, Q, R = (rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3)) for _ in range(3))
        pq = gg.fs_distance_batch(P, Q)
        assert np.max(np.abs(pq - gg.fs_distance_batch(Q, P))) < 1e-12
        assert np.all(pq <= gg.fs_distance_batch(P, R) + gg.fs_distance_batch(R, Q) + 1e-12)
        assert np.max(gg.fs_distance_batch(P, (2 - 3j) * P)) < 1e-7
        assert np.all((pq > 0) & (pq <= 1))
        lam = rng.normal(size=(n, 1)) + 1j * rng.normal(size=(n, 1))
        assert np.max(np.abs(gg.fs_distance_batch(lam * P, Q) - pq)) < 1e-12

        for _ in range(1000):
            p, q, r = _random_poly(rng, 2), _random_poly(rng, 2), _random_poly(rng, 1)
            assert (p * q) * r == p * (q * r)
            assert p * (q + q) == p * q + p * q
            assert p + q == q + p and (p - p).is_zero()
        checked = 0
        while checked < 1000:
            a, b = _random_poly(rng, int(rng.integers(0, 3))), _random_poly(rng, int(rng.integers(0, 3)))
            c = _random_poly(rng, int(rng.integers(1, 3)))
            if a.is_zero() or b.is_zero() or c.is_zero():
                continue
            g = gcd(a * c, b * c)
            assert divides(g, a * c) and divides(g, b * c) and divides(c, g)
            checked += 1

        for _ in range(50):
            A, B, C = (_cloud(rng, int(rng.integers(1, 80))) for _ in range(3))
            ab = gg.hausdorff(A, B)
            assert gg.hausdorff(A, A) == 0.0
            assert abs(ab - gg.hausdorff(B, A)) < 1e-12
            assert ab <= gg.hausdorff(A, C) + gg.hausdorff(C, B) + 1e-9
            assert abs(ab - gg.hausdorff(A, B, method="brute")) < 1e-9


def test_criterion_11_reproducibility(outcomes):
    with criterion(11, "reproduce output byte-identical across runs and worker counts"):
        for name, first in outcomes.items():
            assert first.passed, (name, [c for c in first.checks if not c["passed"]])
            again = rp.run(name, seed=0, workers=4)
            assert again.dumps() == first.dumps(), name
        for name in ("example1", "example2", "volume_bound"):
            assert rp.run(name, seed=0, workers=2).dumps() == outcomes[name].dumps()
