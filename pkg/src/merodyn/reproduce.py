"""Scripted end-to-end scenarios with their expected outcomes.

Each entry returns a report (plain JSON data, deterministic for a fixed
seed) and a list of named checks.  ``run`` serializes the report with sorted
keys and no timing information, so repeated runs give identical bytes.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import converge as cv
from . import dynamics as dy
from . import graphgeom as gg
from . import maps as mp
from .exactalg import MerodynError
from .families import IterateFamily, SequenceFamily


class UnknownExample(MerodynError, KeyError):
    pass


# stronger notion first; a convergent notion forces convergence of every later one
CHAIN = ("stabilized", "strong", "weak", "gamma")


def chain_violations(verdicts: dict) -> list[str]:
    out = []
    present = [k for k in CHAIN if k in verdicts]
    for a, b in itertools.combinations(present, 2):
        if verdicts[a] == cv.CONVERGES and verdicts[b] != cv.CONVERGES:
            out.append(f"{a} converges but {b} is {verdicts[b]}")
    return out


@dataclass
class Outcome:
    name: str
    report: dict
    checks: list = field(default_factory=list)

    def check(self, label: str, ok: bool, detail=None):
        self.checks.append({"check": label, "passed": bool(ok), "detail": detail})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> dict:
        return cv._jsonable({"schema": 1, "example": self.name, "passed": self.passed,
                             "checks": self.checks, "report": self.report})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _settings(seed: int, workers: int, **kw) -> cv.Settings:
    return cv.Settings(seed=seed, workers=workers, **kw)


def _verdicts(fam, K, schedule, st, notions=("strong", "weak", "gamma"), limit=None) -> tuple[dict, dict]:
    reps = {}
    if "stabilized" in notions:
        reps["stabilized"] = cv.stabilization_test(fam, K, schedule, limit, st)
    if "strong" in notions:
        reps["strong"] = cv.s_converge(fam, K, schedule, limit, st)
    if "weak" in notions:
        reps["weak"] = cv.w_converge(fam, K, schedule, limit, st)
    if "gamma" in notions:
        reps["gamma"] = cv.gamma_converge(fam, K, schedule, limit, st)
    return {k: r.verdict for k, r in reps.items()}, {k: r.to_json() for k, r in reps.items()}


def _chain(out: Outcome, verdicts: dict):
    bad = chain_violations(verdicts)
    out.check("implication chain stabilized => strong => weak => gamma", not bad, bad)


# ------------------------------------------------------------------ examples


def example1(seed: int = 0, workers: int = 1) -> Outcome:
    """z1/z2 on C^2: the value at the origin is all of CP^1."""
    f = mp.from_text(["z1", "z2"], mp.affine(2), "z1/z2")
    out = Outcome("example1", {})
    ind = mp.indeterminacy_locus(f)
    pts = [mp.canonical(p.coords) for p in ind.points]
    imgs = mp.point_image(f, mp.ProjectivePoint(np.array([1, 0, 0], dtype=complex)), 64)
    diam = max(mp.chordal(a.coords, b.coords) for a, b in itertools.combinations(imgs, 2))
    # spread: angular coverage of the images in the chart w = w1/w0 of CP^1
    w = np.array([mp.canonical(q.coords) for q in imgs])
    out.report = {"map": f.to_json(), "indeterminacy": [cv._cvec(p) for p in pts],
                  "point_image_count": len(imgs), "point_image_diameter": diam,
                  "point_image": [cv._cvec(v) for v in w]}
    out.check("indeterminacy is the origin only", len(pts) == 1 and np.allclose(pts[0], [1, 0, 0]), out.report["indeterminacy"])
    out.check("f[0] spreads over CP^1 (chordal diameter >= 0.99)", diam >= 0.99, diam)
    out.check("at the origin the value is undefined", mp.in_indeterminacy(f, [1, 0, 0]))
    return out


def example2(seed: int = 0, workers: int = 1) -> Outcome:
    """The graph of z1/z2 is the blow-up of C^2 at the origin."""
    f = mp.from_text(["z1", "z2"], mp.affine(2), "z1/z2")
    K = gg.unit_bidisc()
    st = _settings(seed, workers, samples=4000)
    centers = cv.probe_centers([(f,)], K)
    src = np.concatenate([K.sample(st.samples, seed), cv.probe_points(centers, K, st)])
    cl = gg.graph_cloud(f, src, K, 0, st.clearance, seed=seed)
    z, (w,) = cl.source, cl.targets
    incidence = float(np.max(np.abs(z[:, 0] * w[:, 1] - z[:, 1] * w[:, 0])))
    near = np.linalg.norm(z, axis=1) <= 2 * st.clearance
    fiber = w[near]
    spread = max(gg.fs_distance(a, b) for a, b in itertools.combinations(fiber, 2))
    far = np.linalg.norm(z, axis=1) > 0.1
    # off the origin the graph is a section: each source point has one target
    again = gg.evaluate_graph(f, z[far])[1][0]
    single = float(np.max(gg.fs_distance_batch(again, w[far])))
    vol = gg.volume(f, K, 20000, seed, focus=[np.zeros(2)], workers=workers)
    out = Outcome("example2", {"incidence_residual": incidence, "fiber_over_origin_diameter": spread,
                               "section_defect": single, "graph_volume": vol.to_json()})
    out.check("graph points satisfy z1*w1 = z2*w0", incidence < 1e-12, incidence)
    out.check("fiber over the origin is the whole CP^1", spread >= 0.99, spread)
    out.check("graph is the graph of a function off the origin", single < 1e-12, single)
    out.check("graph volume over the bidisc is finite", np.isfinite(vol.value) and vol.capped_mass == 0, vol.value)
    return out


def example4(seed: int = 0, workers: int = 1) -> Outcome:
    """Maps into CP^3 x CP^2 with a fixed bidisc: weak but not strong convergence."""
    fam = SequenceFamily((mp.MapFamily(("1", "z1-1/4", "z2-1/4", "1/n"), mp.affine(2)),
                          mp.MapFamily(("z1-1/4", "z2-1/4", "1/n"), mp.affine(2))), "example4")
    K = gg.unit_bidisc()
    schedule = [1000 * 2 ** k for k in range(9)]
    st = _settings(seed, workers, exclusion_radii=(0.3, 0.2, 0.1))
    verdicts, reps = _verdicts(fam, K, schedule, st)
    exc = reps["weak"]["exceptional_points"]
    out = Outcome("example4", {"schedule": schedule, "verdicts": verdicts, "reports": reps})
    out.check("strong diverges on the bidisc", verdicts["strong"] == cv.DIVERGES, verdicts["strong"])
    out.check("weak converges", verdicts["weak"] == cv.CONVERGES, verdicts["weak"])
    pts = [np.array([complex(*c) for c in e["point"]]) for e in exc]
    ok = len(pts) == 1 and np.linalg.norm(pts[0] - np.array([0.25, 0.25])) < 1e-3
    out.check("single exceptional point at (1/4, 1/4)", ok, exc)
    out.check("gamma converges", verdicts["gamma"] == cv.CONVERGES, verdicts["gamma"])
    _chain(out, verdicts)
    return out


def cremona(seed: int = 0, workers: int = 1) -> Outcome:
    """The quadratic involution: iterates are f and the identity."""
    f = mp.cremona()
    fam = IterateFamily(f, "cremona")
    schedule = list(range(10, 34, 3))
    g2, trace2 = mp.iterate(f, 2)
    fam.iterate(12)
    ind = mp.indeterminacy_locus(f)
    grid = dy.fatou_scan(fam, schedule, seed=seed)
    grid_x = dy.fatou_scan(fam, schedule, seed=seed, exclude_indeterminacy=True)
    changed = [c.index for c, d in zip(grid.cells, grid_x.cells) if c.verdict != d.verdict]
    on_lines = [c.index for c in grid.cells if min(abs(c.center[0]), abs(c.center[1])) <= grid.ball_radius]
    K = gg.unit_bidisc()
    st = _settings(seed, workers)
    verdicts, reps = _verdicts(fam, K, schedule, st)
    lemma = dy.forward_propagation_check(fam, 1, (0.3 + 0.1j, -0.4 + 0.2j), grid, seed=seed)
    deg = dy.degeneracy_locus_sample(fam, 1, grid)
    out = Outcome("cremona", {
        "iterate2": g2.to_text(), "degree_trace": fam.degree_trace[:12],
        "indeterminacy": [cv._cvec(mp.canonical(p.coords)) for p in ind.points],
        "fatou": grid.to_json(), "fatou_excluding_indeterminacy": grid_x.to_json(),
        "verdicts": verdicts, "reports": reps, "propagation": lemma, "degeneracy": deg.to_json(),
    })
    out.check("f o f is the identity", g2 == mp.identity(2), g2.to_text())
    out.check("degree trace alternates 2,1", fam.degree_trace[:12] == [2, 1] * 6, fam.degree_trace[:12])
    out.check("three coordinate points of indeterminacy", len(ind.points) == 3)
    out.check("strong Fatou set is the whole chart", grid.counts()[dy.IN_S] == len(grid.cells), grid.counts())
    out.check("excluding indeterminacy changes exactly the cells on the coordinate lines",
              sorted(changed) == sorted(on_lines) and len(changed) > 0, len(changed))
    out.check("strong converges (two-cluster compactness)", verdicts["strong"] == cv.CONVERGES)
    out.check("Fatou membership propagates forward", lemma.get("passed", False))
    pts = deg.points
    out.check("degeneracy flags lie on the coordinate lines",
              len(pts) > 0 and bool(np.all(np.min(np.abs(pts), axis=1) < 1e-9)), len(pts))
    _chain(out, verdicts)
    return out


def nonstabilizing(seed: int = 0, workers: int = 1) -> Outcome:
    """(z1-1/n)/z2 converges strongly while indeterminacy moves."""
    fam = SequenceFamily((mp.MapFamily(("z1-1/n", "z2"), mp.affine(2)),), "(z1-1/n)/z2")
    schedule = [50, 100, 200, 400, 800]
    K = gg.unit_bidisc()
    st = _settings(seed, workers)
    verdicts, reps = _verdicts(fam, K, schedule, st, ("stabilized", "strong", "weak", "gamma"))
    annulus = gg.polydisc((0, 0), (1, 1), inner=(0, 0.5))
    rouche = {}
    for name, region in (("bidisc", K), ("annulus", annulus)):
        try:
            rouche[name] = cv.rouche_check(fam, region, schedule, st=st)
        except cv.RoucheViolation as exc:
            rouche[name] = {"violation": str(exc)}
    out = Outcome("nonstabilizing", {"schedule": schedule, "verdicts": verdicts, "reports": reps,
                                     "indeterminacy": cv.indeterminacy_trace(fam, K, schedule), "rouche": rouche})
    out.check("strong converges on the closed bidisc", verdicts["strong"] == cv.CONVERGES, verdicts["strong"])
    out.check("stabilization diverges", verdicts["stabilized"] == cv.DIVERGES, verdicts["stabilized"])
    out.check("Rouche principle holds", all("violation" not in r for r in rouche.values()), rouche)
    _chain(out, verdicts)
    return out


def theorem3(seed: int = 0, workers: int = 1) -> Outcome:
    """[z0:2z1:2z2]: weak Fatou everywhere, strong off [1:0:0], limit curve z0=0."""
    f = mp.from_text(["z0", "2*z1", "2*z2"], mp.projective(2), "theorem3")
    fam = IterateFamily(f, "theorem3")
    schedule = list(range(10, 34, 3))
    grid = dy.fatou_scan(fam, schedule, seed=seed)
    rep = dy.classify_dichotomy(fam, grid, seed=seed)
    weak_all = grid.counts()[dy.IN_S] + grid.counts()[dy.IN_W] == len(grid.cells)
    failing = [c for c in grid.cells if c.verdict != dy.IN_S]
    only_p = all(np.linalg.norm(c.center) <= grid.ball_radius for c in failing) and len(failing) >= 1
    coef = np.asarray(rep.curve_coefficients)
    vols = [v for _, v, _ in rep.volume_trace]
    K = gg.polydisc((0, 0), (0.5, 0.5))
    st = _settings(seed, workers)
    verdicts, reps = _verdicts(fam, K, schedule, st)
    lemma = [dy.forward_propagation_check(fam, l, z, grid, seed=seed) for l, z in ((1, (0.3, 0.2)), (3, (0.5, -0.25)))]
    out = Outcome("theorem3", {"fatou": grid.to_json(), "dichotomy": rep.to_json(), "degree_trace": fam.degree_trace[:31],
                               "verdicts": verdicts, "reports": reps, "propagation": lemma})
    out.check("every cell is weakly Fatou", weak_all, grid.counts())
    out.check("only the cell(s) at [1:0:0] fail the strong test", only_p, [list(c.index) for c in failing])
    out.check("exceptional point is [1:0:0]", np.allclose(mp.canonical(rep.p.coords), [1, 0, 0], atol=1e-9))
    out.check("limit curve is the line z0 = 0", rep.curve_degree == 1 and np.max(np.abs(coef - [1, 0, 0])) < 1e-6,
              rep.curve_text())
    out.check("graph volumes stay bounded (max/min < 2)", max(vols) / min(vols) < 2, [min(vols), max(vols)])
    out.check("degree trace is constantly 1", set(fam.degree_trace[:31]) == {1})
    out.check("forward propagation holds", all(r.get("passed") for r in lemma))
    _chain(out, verdicts)
    return out


def hartogs(seed: int = 0, workers: int = 1) -> Outcome:
    """Convergence on a Hartogs figure extends to the bidisc off one point."""
    fam = SequenceFamily((mp.MapFamily(("z1-1/n", "z2"), mp.affine(2)),), "(z1-1/n)/z2")
    schedule = [100, 200, 400, 800, 1600]
    st = _settings(seed, workers)
    out = Outcome("hartogs", {})
    try:
        rep = cv.hartogs_propagation(fam, 0.25, schedule, st=st)
    except cv.PropagationViolation as exc:
        out.report = {"violation": str(exc)}
        out.check("convergence propagates from the Hartogs figure", False, str(exc))
        return out
    out.report = rep
    exc = rep.get("exceptional_set", [])
    pts = [np.array([complex(*c) for c in p]) for p in exc]
    out.check("converges on H(1/4)", rep["hartogs_verdict"] == cv.CONVERGES, rep["hartogs_trace"])
    out.check("propagates to the bidisc", rep["verdict"] == cv.CONVERGES)
    out.check("one exceptional point within 1e-3 of (0,0)",
              len(pts) == 1 and np.linalg.norm(pts[0]) < 1e-3, exc)
    return out


def volume_bound(seed: int = 0, workers: int = 1) -> Outcome:
    """Graph volumes of convergent families stay bounded."""
    K = gg.unit_bidisc()
    f = mp.from_text(["z0", "2*z1", "2*z2"], mp.projective(2), "theorem3")
    fam = IterateFamily(f)
    it = dy.volume_trace(fam, K, range(1, 21), 20000, seed, focus=[np.zeros(2)])
    seq = SequenceFamily((mp.MapFamily(("z1-1/n", "z2"), mp.affine(2)),))
    sq = []
    for n in (1, 2, 5, 10, 20, 50, 100):
        est = gg.volume(seq.member(n), K, 20000, seed, focus=[np.array([1 / n, 0])], workers=workers)
        sq.append((n, est.value, est.stderr))
    mass = gg.marginal_mass(seq.member(100), [0, 0.01, 0.5], 4096, seed)
    vi = [v for _, v, _ in it]
    vs = [v for _, v, _ in sq]
    out = Outcome("volume_bound", {"iterates": it, "nonstabilizing": sq,
                                   "marginal_mass_n100": [[z, m] for z, m in mass]})
    out.check("iterate graph volumes bounded (max/min < 2, n <= 20)", max(vi) / min(vi) < 2, [min(vi), max(vi)])
    out.check("(z1-1/n)/z2 graph volumes bounded (max/min < 2)", max(vs) / min(vs) < 2, [min(vs), max(vs)])
    return out


CATALOGUE: dict[str, Callable[..., Outcome]] = {
    "example1": example1,
    "example2": example2,
    "example4": example4,
    "cremona": cremona,
    "nonstabilizing": nonstabilizing,
    "theorem3": theorem3,
    "hartogs": hartogs,
    "volume_bound": volume_bound,
}


def run(example: str, seed: int = 0, workers: int = 1) -> Outcome:
    try:
        fn = CATALOGUE[example]
    except KeyError:
        raise UnknownExample(f"unknown example {example!r}; choose from {', '.join(CATALOGUE)}") from None
    return fn(seed=seed, workers=workers)
