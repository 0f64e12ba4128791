"""Iterates of rational self-maps of CP^2: Fatou grids, the degenerate-limit
dichotomy, forward propagation of Fatou cells and degeneracy loci."""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc
from scipy.special import ndtri

from . import converge as cv
from . import graphgeom as gg
from .exactalg import MerodynError
from .families import IterateFamily, snap_small
from .maps import (
    CoefficientOverflowBudgetExceeded,
    ProjectivePoint,
    canonical,
    RationalMap,
    chordal,
    lift,
    point_image,
)

IN_S, IN_W, UNDECIDED = "in_Φs", "in_Φw_only", "undecided"
RANK = {UNDECIDED: 0, IN_W: 1, IN_S: 2}
PGM_LEVEL = {IN_S: 255, IN_W: 128, UNDECIDED: 0}


class ScheduleTooShort(MerodynError, ValueError):
    pass


class NoDichotomyEvidence(MerodynError, RuntimeError):
    pass


class CurveFitFailed(MerodynError, RuntimeError):
    pass


class PropagationViolation(MerodynError, AssertionError):
    pass


@dataclass
class Cell:
    index: tuple
    center: np.ndarray
    verdict: str
    ball_radius: float
    evidence: dict = field(default_factory=dict)


@dataclass
class FatouGrid:
    chart: int
    resolution: int
    spacing: float
    ball_radius: float
    origin: np.ndarray
    axes: tuple
    schedule: list
    exclude_indeterminacy: bool
    cells: list
    float_orbits: bool = False

    def verdicts(self) -> np.ndarray:
        out = np.empty((self.resolution, self.resolution), dtype=object)
        for c in self.cells:
            out[c.index] = c.verdict
        return out

    def counts(self) -> dict:
        out = {IN_S: 0, IN_W: 0, UNDECIDED: 0}
        for c in self.cells:
            out[c.verdict] += 1
        return out

    def strong_set(self) -> set:
        return {c.index for c in self.cells if c.verdict == IN_S}

    def weak_set(self) -> set:
        return {c.index for c in self.cells if c.verdict in (IN_S, IN_W)}

    def cell_containing(self, z) -> Cell | None:
        """A cell whose ball contains the chart point z (nearest center first)."""
        z = np.asarray(z, dtype=complex)
        centers = np.array([c.center for c in self.cells])
        d = np.linalg.norm(centers - z, axis=1)
        k = int(np.argmin(d))
        return self.cells[k] if d[k] <= self.ball_radius else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,j,center_re_0,center_im_0,center_re_1,center_im_1,verdict,ball_radius,max_strong_distance,excluded\n")
        for c in self.cells:
            ev = c.evidence
            buf.write(
                f"{c.index[0]},{c.index[1]},{float(c.center[0].real)!r},{float(c.center[0].imag)!r},"
                f"{float(c.center[1].real)!r},{float(c.center[1].imag)!r},{c.verdict},{float(c.ball_radius)!r},"
                f"{float(ev.get('max_strong_distance', float('nan')))!r},{int(bool(ev.get('excluded')))}\n"
            )
        return buf.getvalue()

    def to_pgm(self) -> bytes:
        """Binary graymap, one pixel per cell; first axis left to right, second bottom to top."""
        v = self.verdicts()
        rows = []
        for j in reversed(range(self.resolution)):
            rows.append(bytes(PGM_LEVEL[v[i, j]] for i in range(self.resolution)))
        return f"P5\n{self.resolution} {self.resolution}\n255\n".encode() + b"".join(rows)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "chart": self.chart,
            "resolution": self.resolution,
            "spacing": self.spacing,
            "ball_radius": self.ball_radius,
            "schedule": list(self.schedule),
            "exclude_indeterminacy": self.exclude_indeterminacy,
            "float_orbits": self.float_orbits,
            "counts": self.counts(),
            "special_cells": [
                {"index": list(c.index), "verdict": c.verdict, "evidence": cv._jsonable(c.evidence)}
                for c in self.cells if c.evidence.get("special")
            ],
        }


# ------------------------------------------------------------------ helpers


def _ball_template(dim: int, count: int, seed: int) -> np.ndarray:
    """Center plus count-1 quasi-uniform points of the unit ball in C^dim."""
    u = qmc.Halton(d=2 * dim + 1, scramble=True, seed=seed).random(count - 1)
    g = ndtri(np.clip(u[:, : 2 * dim], 1e-15, 1 - 1e-15))
    g = g / np.linalg.norm(g, axis=1, keepdims=True)
    rad = u[:, 2 * dim] ** (1.0 / (2 * dim))
    x = g * rad[:, None]
    return np.concatenate([np.zeros((1, dim), dtype=complex), x[:, :dim] + 1j * x[:, dim:]])


def _unit_values(maps, z: np.ndarray, chart: int) -> tuple[np.ndarray, ...]:
    out = []
    for g in gg.as_factors(maps):
        v = g(z, chart)
        out.append(v / np.linalg.norm(v, axis=-1, keepdims=True))
    return tuple(out)


def _float_orbit(f: RationalMap, z: np.ndarray, chart: int, n: int) -> np.ndarray:
    """f^n evaluated pointwise by repeated evaluation with renormalization."""
    x = lift(z, chart)
    for _ in range(n):
        x = f.eval_homogeneous(x)
        x = x / np.linalg.norm(x, axis=-1, keepdims=True)
    return x


def _embed(vals: tuple[np.ndarray, ...]) -> np.ndarray:
    return np.concatenate([gg.projector_embedding(v) for v in vals], axis=-1)


class _Members:
    """Tail members and candidate limits of an iterate family (exact or float orbits)."""

    def __init__(self, fam: IterateFamily, schedule: Sequence[int]):
        self.fam = fam
        self.schedule = list(schedule)
        self.tail = self.schedule[len(self.schedule) // 2:]
        self.float_orbits = False
        try:
            for n in self.schedule:
                fam.iterate(n)
            self.cands = [c[0] for c in fam.candidates(self.tail)]
        except CoefficientOverflowBudgetExceeded:
            self.float_orbits = True
            self.cands = None

    def maps(self, n):
        return None if self.float_orbits else self.fam.iterate(n)

    def values(self, n, z, chart):
        if self.float_orbits:
            v = _float_orbit(self.fam.base, z, chart, n)
            return (v,)
        return _unit_values(self.fam.iterate(n), z, chart)

    def probe_centers(self, chart: int) -> list:
        if self.float_orbits:
            return [a for a in gg.chart_indeterminacy(self.fam.base, chart)]
        maps = [self.fam.iterate(n) for n in self.tail] + list(self.cands) + [self.fam.base]
        pts = []
        for g in maps:
            pts.extend(gg.chart_indeterminacy(g, chart))
        return cv._dedup([np.asarray(p) for p in pts])


# ------------------------------------------------------------ cell tests


def _batched_hausdorff(sources, Ea, Eb, centers, tol, ball_radius, chart,
                       fa, fb, wa, wb, metric: gg.MetricSpec):
    """Per-cell Hausdorff distance between two clouds over shared per-cell sources.

    sources: (C, M, dim); Ea, Eb: (C, M, D) target embeddings; fa/fb maps (or
    None for float orbits, which disables refinement); wa/wb unit targets.
    """
    C, M, _ = sources.shape
    X = sources.reshape(C, M, -1)
    ds2 = np.sum(np.abs(X[:, :, None, :] - X[:, None, :, :]) ** 2, axis=-1)
    na = np.sum(Ea ** 2, axis=-1)
    nb = np.sum(Eb ** 2, axis=-1)
    dt2 = na[:, :, None] + nb[:, None, :] - 2 * np.einsum("cid,cjd->cij", Ea, Eb)
    D = np.sqrt(np.maximum(metric.source_scale ** 2 * ds2 + metric.target_scale ** 2 * np.maximum(dt2, 0), 0))
    dab = D.min(axis=2)
    jab = D.argmin(axis=2)
    dba = D.min(axis=1)
    jba = D.argmin(axis=1)
    thr = tol / 4
    for d, jj, f_other, w_from, src_other in ((dab, jab, fb, wa, sources), (dba, jba, fa, wb, sources)):
        if f_other is None:
            continue
        bad = np.nonzero(d > thr)
        if len(bad[0]) == 0:
            continue
        z0 = sources[bad]
        w = tuple(x[bad] for x in w_from)
        nn = src_other[bad[0], jj[bad]]
        cen = centers[bad[0]]
        proj = lambda z, idx, cen=cen: gg.project_balls(z, cen[idx], ball_radius)
        r = gg.refine_to_graph(f_other, z0, w, [nn, z0], None, metric, 40, thr / 2, chart, proj)
        d[bad] = np.minimum(d[bad], r)
    return np.maximum(dab.max(axis=1), dba.max(axis=1)), dab, dba


def _special_cell(fam: IterateFamily, members: _Members, x: np.ndarray, rho: float, chart: int,
                  tol: float, seed: int, samples: int, max_points: int) -> tuple[str, dict]:
    region = gg.ball(tuple(x), rho, chart)
    st = cv.Settings(tol=tol, samples=samples, seed=seed, clearance=min(1e-4, rho / 64),
                     ring_radius=rho / 2, tail=len(members.tail), cluster_radius=rho / 4,
                     exclusion_radii=(0.5 * rho, 0.25 * rho, 0.125 * rho), max_points=max_points)
    try:
        rep = cv.w_converge(fam, region, members.tail, None, st)
    except cv.ExceptionalSetNotFinite as exc:
        return UNDECIDED, {"special": True, "error": str(exc)}
    strong = rep.details.get("strong_verdict")
    ev = {
        "special": True,
        "strong_verdict": strong,
        "weak_verdict": rep.verdict,
        "strong_trace": rep.details.get("strong_trace"),
        "exceptional_points": [cv._cvec(p) for p, _ in rep.exceptional_points],
        "max_strong_distance": max((d for _, d in rep.details.get("strong_trace") or []), default=0.0),
    }
    if strong == cv.CONVERGES:
        return IN_S, ev
    if rep.verdict == cv.CONVERGES:
        return IN_W, ev
    return UNDECIDED, ev


def cell_test(fam: IterateFamily, x, rho: float, schedule: Sequence[int], chart: int = 0,
              tol: float = 2e-2, seed: int = 0, samples: int = 256, max_points: int = 3) -> tuple[str, dict]:
    """Verdict for the single ball B(x, rho) of a chart."""
    members = _Members(fam, schedule)
    if members.float_orbits:
        raise CoefficientOverflowBudgetExceeded("single-cell tests need exact iterates")
    return _special_cell(fam, members, np.asarray(x, dtype=complex), rho, chart, tol, seed, samples, max_points)


def _meets_preimage_curves(f: RationalMap, centers: np.ndarray, rho: float, chart: int,
                           template: np.ndarray, iters: int = 30) -> np.ndarray:
    """Whether each ball B(center, rho) meets {z : f(z) is an indeterminacy point of f}."""
    from .maps import indeterminacy_locus

    hit = np.zeros(len(centers), dtype=bool)
    if f.source.dim != 2:
        return hit
    starts = [centers] + [centers + rho * template[k] for k in range(1, min(5, len(template)))]
    for a in indeterminacy_locus(f):
        av = a.coords / np.linalg.norm(a.coords)
        pairs = [(i, j) for i in range(3) for j in range(i + 1, 3)]
        for z in starts:
            z = np.array(z, dtype=complex)
            for _ in range(iters):
                F, J = f.jacobian(z, chart)
                R = np.stack([av[i] * F[:, j] - av[j] * F[:, i] for i, j in pairs], axis=1)
                JR = np.stack([av[i] * J[:, j, :] - av[j] * J[:, i, :] for i, j in pairs], axis=1)
                step = np.einsum("nab,nb->na", np.linalg.pinv(JR), R)
                step = np.where(np.isfinite(step), step, 0)
                z = z - step
            F = f(z, chart)
            R = np.stack([av[i] * F[:, j] - av[j] * F[:, i] for i, j in pairs], axis=1)
            scale = np.maximum(np.linalg.norm(F, axis=1), 1e-300)
            on = np.linalg.norm(R, axis=1) <= 1e-9 * scale
            on |= np.linalg.norm(F, axis=1) <= 1e-12 * (1 + np.linalg.norm(z, axis=1)) ** f.degree
            hit |= on & (np.linalg.norm(z - centers, axis=1) <= rho)
    return hit


def fatou_scan(f: RationalMap | IterateFamily, schedule: Sequence[int], resolution: int = 64,
               spacing: float = 1 / 32, ball_radius: float | None = None, chart: int = 0,
               origin=(0, 0), axes=((1, 0), (0, 1)), tol: float = 2e-2, samples_per_cell: int = 48,
               special_samples: int = 256, max_points: int = 3, exclude_indeterminacy: bool = False,
               seed: int = 0, block: int = 512) -> FatouGrid:
    """Classify the cells of a real 2-D slice of a chart into strong/weak Fatou or undecided.

    Cell (i, j) is the ball of radius ``ball_radius`` (default 0.75 * spacing)
    around origin + (i - resolution/2) h axes[0] + (j - resolution/2) h axes[1].
    """
    schedule = sorted(schedule)
    if len(schedule) < 8:
        raise ScheduleTooShort(f"need at least 8 schedule entries, got {len(schedule)}")
    fam = f if isinstance(f, IterateFamily) else IterateFamily(f)
    rho = 0.75 * spacing if ball_radius is None else ball_radius
    members = _Members(fam, schedule)
    origin = np.asarray(origin, dtype=complex)
    e1, e2 = (np.asarray(a, dtype=complex) for a in axes)
    idx = [(i, j) for i in range(resolution) for j in range(resolution)]
    centers = np.array([origin + (i - resolution // 2) * spacing * e1 + (j - resolution // 2) * spacing * e2
                        for i, j in idx])
    template = _ball_template(2, samples_per_cell, seed)
    probes = members.probe_centers(chart)
    special = np.zeros(len(idx), dtype=bool)
    for p in probes:
        special |= np.linalg.norm(centers - p, axis=1) <= rho * (1 + 1e-9)
    excluded = np.zeros(len(idx), dtype=bool)
    if exclude_indeterminacy:
        excluded = special.copy()
        excluded |= _meets_preimage_curves(fam.base, centers, rho, chart, template)

    verdict = [UNDECIDED] * len(idx)
    evidence = [dict() for _ in idx]
    metric = gg.FS
    ordinary = np.nonzero(~special & ~excluded)[0]
    for s in range(0, len(ordinary), block):
        sel = ordinary[s:s + block]
        X = centers[sel]
        src = X[:, None, :] + rho * template[None, :, :]
        flat = src.reshape(-1, 2)
        traces = np.zeros((len(sel), len(members.tail)))
        shape = (len(sel), len(template))
        if members.cands is not None:
            others = [(_unit_values(c, flat, chart), c) for c in members.cands]
        else:
            others = [(members.values(m, flat, chart), None) for m in members.tail[-1:]]
        for k, n in enumerate(members.tail):
            wm = members.values(n, flat, chart)
            Em = _embed(wm).reshape(shape + (-1,))
            cell_w = lambda vals: tuple(v.reshape(shape + (-1,)) for v in vals)
            rough = []
            for wv, _ in others:
                Ec = _embed(wv).reshape(shape + (-1,))
                rough.append(_batched_hausdorff(src, Em, Ec, X, tol, rho, chart,
                                                None, None, None, None, metric)[0])
            rough = np.array(rough)
            near = rough.argmin(axis=0)
            best = rough.min(axis=0)
            fm = members.maps(n)
            for q, (wv, cmap) in enumerate(others):
                cells_q = np.nonzero((near == q) & (best > tol / 4))[0]
                if len(cells_q) == 0 or cmap is None:
                    continue
                if fm == cmap:
                    best[cells_q] = 0.0
                    continue
                Ec = _embed(wv).reshape(shape + (-1,))
                wa = tuple(v[cells_q] for v in cell_w(wm))
                wb = tuple(v[cells_q] for v in cell_w(wv))
                best[cells_q] = _batched_hausdorff(src[cells_q], Em[cells_q], Ec[cells_q], X[cells_q], tol,
                                                   rho, chart, fm, cmap, wa, wb, metric)[0]
            traces[:, k] = best
        for r, ci in enumerate(sel):
            tr = traces[r]
            v = cv.tail_verdict(tr, tol, len(tr), 0.2)
            evidence[ci] = {"strong_trace": [[int(n), float(d)] for n, d in zip(members.tail, tr)],
                            "max_strong_distance": float(tr.max())}
            verdict[ci] = IN_S if v == cv.CONVERGES else "retest"
    # cells needing the full (weak-capable) test
    retest = [ci for ci in range(len(idx)) if (special[ci] and not excluded[ci]) or verdict[ci] == "retest"]
    if members.float_orbits and retest:
        for ci in retest:
            verdict[ci] = UNDECIDED
            evidence[ci]["float_orbits"] = True
    else:
        for ci in retest:
            cell_seed = int(np.random.SeedSequence([seed, *idx[ci]]).generate_state(1)[0])
            v, ev = _special_cell(fam, members, centers[ci], rho, chart, tol, cell_seed, special_samples, max_points)
            verdict[ci] = v
            evidence[ci].update(ev)
            evidence[ci]["special"] = True
    for ci in np.nonzero(excluded)[0]:
        verdict[ci] = UNDECIDED
        evidence[ci] = {"excluded": True, "special": False}
    cells = [Cell(idx[k], centers[k], verdict[k], rho, evidence[k]) for k in range(len(idx))]
    grid = FatouGrid(chart, resolution, spacing, rho, origin, (e1, e2), list(schedule),
                     exclude_indeterminacy, cells, members.float_orbits)
    _assert_strong_in_weak(grid)
    return grid


def _assert_strong_in_weak(grid: FatouGrid):
    for c in grid.cells:
        if c.verdict == IN_S and c.evidence.get("special") and c.evidence.get("weak_verdict") not in (None, cv.CONVERGES):
            raise AssertionError(f"cell {c.index}: strong verdict without weak verdict")
    if not grid.strong_set() <= grid.weak_set():
        raise AssertionError("strong Fatou cells must be weak Fatou cells")


# ------------------------------------------------------------- dichotomy


def _monomials(deg: int, nvars: int = 3) -> list[tuple]:
    return sorted((e for e in itertools.product(range(deg + 1), repeat=nvars) if sum(e) == deg), reverse=True)


def fit_curve(points: np.ndarray, max_degree: int = 3, tol: float = 1e-6) -> tuple[int, list, np.ndarray, float]:
    """Lowest-degree homogeneous polynomial vanishing on the given CP^2 points.

    Returns (degree, monomial exponents, coefficients with largest entry 1,
    residual).  The residual is max |P(w)| over unit representatives w with
    the coefficient vector of norm 1.
    """
    W = np.asarray(points, dtype=complex)
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    last = math.inf
    for d in range(1, max_degree + 1):
        mons = _monomials(d)
        if len(W) < len(mons) + 2:
            raise CurveFitFailed(f"too few target points ({len(W)}) for a degree-{d} fit")
        A = np.stack([np.prod(W ** np.array(e), axis=1) for e in mons], axis=1)
        _, _, vh = np.linalg.svd(A, full_matrices=False)
        c = np.conj(vh[-1])
        res = float(np.max(np.abs(A @ c)))
        last = res
        if res < tol:
            k = int(np.argmax(np.abs(c)))
            return d, mons, c / c[k], res
    raise CurveFitFailed(f"no curve of degree <= {max_degree} fits the limit targets (residual {last:.3g})")


@dataclass
class DichotomyReport:
    p: ProjectivePoint
    chart_point: np.ndarray
    curve_degree: int
    curve_monomials: list
    curve_coefficients: np.ndarray
    curve_residual: float
    limit: list
    fiber_spread: dict
    volume_trace: list
    cells: list

    def curve_text(self) -> str:
        names = ("z0", "z1", "z2")
        parts = []
        for e, c in zip(self.curve_monomials, self.curve_coefficients):
            if abs(c) < 1e-9:
                continue
            mon = "*".join(f"{names[i]}^{k}" if k > 1 else names[i] for i, k in enumerate(e) if k)
            cr, ci = round(c.real, 9) + 0.0, round(c.imag, 9) + 0.0
            coef = f"{cr:g}" if ci == 0 else f"({cr:g}{ci:+g}i)"
            parts.append(mon if coef == "1" else f"{coef}*{mon}")
        return " + ".join(parts) or "0"

    def to_json(self) -> dict:
        return cv._jsonable({
            "schema": 1,
            "p": cv._cvec(canonical(self.p.coords)),
            "p_chart": self.chart_point,
            "curve": {
                "degree": self.curve_degree,
                "equation": self.curve_text(),
                "monomials": [list(e) for e in self.curve_monomials],
                "coefficients": self.curve_coefficients,
                "residual": self.curve_residual,
            },
            "limit": self.limit,
            "fiber_spread": self.fiber_spread,
            "volume_trace": [{"n": n, "volume": v, "stderr": s} for n, v, s in self.volume_trace],
            "weak_only_cells": [list(c) for c in self.cells],
        })


def _chart_jacobian(F: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Jacobians of f in the target chart where |F_k| is largest, shape (N, m, n)."""
    k = np.argmax(np.abs(F), axis=1)
    rows = np.arange(len(F))
    Fk = F[rows, k]
    Jk = J[rows, k, :]
    out = []
    for j in range(F.shape[1]):
        out.append((J[:, j, :] * Fk[:, None] - F[:, j][:, None] * Jk) / (Fk ** 2)[:, None])
    full = np.stack(out, axis=1)
    keep = np.ones(full.shape[:2], dtype=bool)
    keep[rows, k] = False
    return full[keep].reshape(len(F), F.shape[1] - 1, J.shape[2])


def volume_trace(fam: IterateFamily, K: gg.CompactRegion, ns: Sequence[int], samples: int = 20000,
                 seed: int = 0, focus=None) -> list[tuple[int, float, float]]:
    out = []
    for n in ns:
        est = gg.volume(fam.iterate(n), K, samples, seed, focus=focus)
        out.append((int(n), float(est.value), float(est.stderr)))
    return out


def classify_dichotomy(f: RationalMap | IterateFamily, fatou: FatouGrid, schedule: Sequence[int] | None = None,
                       volume_ns: Sequence[int] = range(1, 21), volume_samples: int = 20000,
                       fit_samples: int = 400, volume_radius: float = 1.0, seed: int = 0) -> DichotomyReport:
    """Exceptional point p, limit curve C and degenerate-limit evidence from a Fatou grid."""
    weak_only = [c for c in fatou.cells if c.verdict == IN_W]
    if not weak_only:
        raise NoDichotomyEvidence("no cell is weakly but not strongly Fatou")
    fam = f if isinstance(f, IterateFamily) else IterateFamily(f)
    schedule = list(schedule or fatou.schedule)
    members = _Members(fam, schedule)
    if members.float_orbits:
        raise NoDichotomyEvidence("exact iterates unavailable (bit budget exceeded)")
    chart = fatou.chart
    pc = np.mean([c.center for c in weak_only], axis=0)
    probes = members.probe_centers(chart)
    if probes:
        d = [np.linalg.norm(pc - q) for q in probes]
        if min(d) <= 2 * fatou.ball_radius + np.max([np.linalg.norm(c.center - pc) for c in weak_only]):
            pc = probes[int(np.argmin(d))]
    p = ProjectivePoint(lift(pc, chart))
    # the limit proxy: the candidate most different from a local diffeomorphism
    cands = members.cands
    rng = np.random.default_rng(seed)
    z = pc + 0.5 * (rng.standard_normal((fit_samples, 2)) + 1j * rng.standard_normal((fit_samples, 2)))
    best = None
    for c in cands:
        F, J = c.jacobian(z, chart)
        ok = np.linalg.norm(F, axis=1) > 0
        s = np.linalg.svd(_chart_jacobian(F[ok], J[ok]), compute_uv=False)
        degen = float(np.mean(s[:, -1] < 1e-8 * np.maximum(1, s[:, 0])))
        if best is None or degen > best[0]:
            best = (degen, c, F[ok])
    _, lim, targets = best
    deg, mons, coef, res = fit_curve(targets)
    imgs = point_image(lim, p)
    spread = max((chordal(a.coords, b.coords) for a, b in itertools.combinations(imgs, 2)), default=0.0)
    on_curve = 0.0
    for q in imgs:
        w = q.coords / np.linalg.norm(q.coords)
        on_curve = max(on_curve, abs(sum(cc * np.prod(w ** np.array(e)) for e, cc in zip(mons, coef))))
    fiber = {"images": len(imgs), "chordal_diameter": spread, "max_curve_residual": float(on_curve)}
    K = gg.polydisc(tuple(pc), (volume_radius, volume_radius), chart=chart)
    vt = volume_trace(fam, K, list(volume_ns), volume_samples, seed, focus=[pc])
    return DichotomyReport(p, pc, deg, mons, coef, res, [g.to_json() for g in cands if g is lim] or [lim.to_json()],
                           fiber, vt, [c.index for c in weak_only])


# --------------------------------------------------------- degeneracy locus


@dataclass
class DegeneracyLocus:
    l: int
    chart: int
    threshold: float
    sampled: int
    points: np.ndarray
    sigma_min: np.ndarray

    def __len__(self):
        return len(self.points)

    def to_json(self) -> dict:
        return cv._jsonable({"l": self.l, "chart": self.chart, "threshold": self.threshold,
                             "sampled": self.sampled, "flagged": len(self.points),
                             "points": [cv._cvec(p) for p in self.points]})


def degeneracy_locus_sample(f: RationalMap | IterateFamily, l: int = 1, grid=None, chart: int = 0,
                            threshold: float = 1e-8) -> DegeneracyLocus:
    """Points where the chart Jacobian of f^l drops rank.

    ``grid`` is a FatouGrid (its cell centers are used), an array of chart
    points, or None for a 64x64 grid of the real square [-1, 1)^2.
    """
    fam = f if isinstance(f, IterateFamily) else IterateFamily(f)
    g = fam.iterate(l)
    if isinstance(grid, FatouGrid):
        chart = grid.chart
        z = np.array([c.center for c in grid.cells])
    elif grid is None:
        k = (np.arange(64) - 32) / 32
        z = np.array([(a, b) for a in k for b in k], dtype=complex)
    else:
        z = np.atleast_2d(np.asarray(grid, dtype=complex))
    F, J = g.jacobian(z, chart)
    nrm = np.linalg.norm(F, axis=1)
    ok = np.isfinite(nrm) & (nrm > 0)
    smin = np.zeros(len(z))
    flag = ~ok  # indeterminacy points are in the locus
    if np.any(ok):
        with np.errstate(all="ignore"):
            s = np.linalg.svd(_chart_jacobian(F[ok], J[ok]), compute_uv=False)
        smin[ok] = s[:, -1]
        bad = ~np.isfinite(s).all(axis=1) | (s[:, -1] < threshold * np.maximum(1, s[:, 0]))
        flag[np.nonzero(ok)[0]] = bad
    return DegeneracyLocus(l, chart, threshold, len(z), z[flag], smin[flag])


# ----------------------------------------------------------- propagation


def _verdict_at(fam: IterateFamily, fatou: FatouGrid, x: np.ndarray, chart: int, seed: int) -> tuple[str, str]:
    """Verdict for a chart point: grid lookup when a cell ball contains it, else a fresh cell test."""
    if chart == fatou.chart:
        cell = fatou.cell_containing(x)
        if cell is not None:
            return cell.verdict, f"grid cell {list(cell.index)}"
    v, _ = cell_test(fam, x, fatou.ball_radius, fatou.schedule, chart, seed=seed)
    return v, "cell test"


def forward_propagation_check(f: RationalMap | IterateFamily, l: int, z, fatou: FatouGrid, directions: int = 64,
                    avoid: float = 1e-3, max_tests: int = 8, seed: int = 0) -> dict:
    """Check that the cells of f^l[z] (away from the image of the degeneracy
    locus of f^l) are at least as Fatou as the cell of z."""
    fam = f if isinstance(f, IterateFamily) else IterateFamily(f)
    chart = fatou.chart
    z = np.asarray(z, dtype=complex)
    zv, how = _verdict_at(fam, fatou, z, chart, seed)
    g = fam.iterate(l)
    imgs = point_image(g, ProjectivePoint(lift(z, chart)), directions)
    # degeneracy locus of f^l near z and its image
    rho = fatou.ball_radius
    near = z + rho * _ball_template(2, 256, seed)
    D = degeneracy_locus_sample(fam, l, near, chart)
    dimg = []
    if len(D):
        Dz, Dt = gg.evaluate_graph(g, D.points, chart)
        dimg = list(Dt[0])
    kept = [q for q in imgs if all(chordal(q.coords, w) >= avoid for w in dimg)]
    report = {"l": int(l), "z": cv._cvec(z), "z_verdict": zv, "z_lookup": how, "images": len(imgs),
              "degenerate_sources": len(D), "kept": len(kept), "checked": [], "vacuous": not kept}
    # distinct image points, up to the ball radius
    reps: list[np.ndarray] = []
    for q in kept:
        w = canonical(q.coords)
        k = int(np.argmax(np.abs(w)))
        x = np.delete(w / w[k], k)
        if k != chart and np.abs(w[chart]) > 1e-9:
            x2 = np.delete(w / w[chart], chart)
            if np.linalg.norm(x2) <= 1.0 + rho:
                k, x = chart, x2
        if not any(kk == k and np.linalg.norm(x - xx) < rho / 2 for kk, xx in reps):
            reps.append((k, x))
    for k, x in reps[:max_tests]:
        v, where = _verdict_at(fam, fatou, x, k, seed)
        report["checked"].append({"chart": k, "point": cv._cvec(x), "verdict": v, "lookup": where})
        if RANK[v] < RANK[zv]:
            raise PropagationViolation(f"image {x} in chart {k} is {v} but z is {zv}")
    report["passed"] = True
    return report


lemma_251_check = forward_propagation_check  # name used by the published API
