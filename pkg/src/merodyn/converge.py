"""Convergence tests for sequences of meromorphic maps on sampled graphs.

Every test compares graph clouds built over shared source samples: a
low-discrepancy sample of the region plus probe rings (dyadic radii, fixed
directions) around the indeterminacy points of the members and of the limit
candidates.  Cloud distances are upper bounds; large ones are refined against
the true graphs before they enter a verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import graphgeom as gg
from .exactalg import MerodynError
from .families import Family, IterateFamily, SequenceFamily, as_family
from .maps import RationalMap, _tangent_directions

CONVERGES, DIVERGES, UNDECIDED = "converges", "diverges", "undecided"
STABILIZATION_PROXY = (
    "stabilization is tested through the proxy 'indeterminacy sets constant on the tail'; "
    "no proper modification is constructed"
)


class ExceptionalSetNotFinite(MerodynError, RuntimeError):
    pass


class RoucheViolation(MerodynError, AssertionError):
    pass


class PropagationViolation(MerodynError, AssertionError):
    pass


class NonRationalTerm(MerodynError, ValueError):
    pass


@dataclass(frozen=True)
class Settings:
    tol: float = 2e-2
    samples: int = 10_000
    seed: int = 0
    clearance: float = 1e-4
    ring_radius: float = 0.25
    ring_directions: int = 32
    tail: int = 5
    slack: float = 0.2
    metric: gg.MetricSpec = gg.FS
    max_points: int = 16
    cluster_radius: float = 0.05
    exclusion_radii: tuple = (0.25, 0.125, 0.0625)
    fiber_diam_tol: float = 0.1
    workers: int = 1

    def to_json(self) -> dict:
        return {
            "tol": self.tol, "samples": self.samples, "seed": self.seed,
            "clearance": self.clearance, "tail": self.tail, "slack": self.slack,
            "metric": {"source_scale": self.metric.source_scale, "target_scale": self.metric.target_scale},
            "exclusion_radii": list(self.exclusion_radii), "fiber_diam_tol": self.fiber_diam_tol,
        }


DEFAULT = Settings()


@dataclass
class ConvergenceReport:
    notion: str
    verdict: str
    distance_trace: list = field(default_factory=list)
    exceptional_points: list = field(default_factory=list)
    limit: list | None = None
    decomposition: dict | None = None
    notes: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "notion": self.notion,
            "verdict": self.verdict,
            "distance_trace": [[int(n), _num(d)] for n, d in self.distance_trace],
            "exceptional_points": [
                {"point": _cvec(p), "radii": [float(r) for r in rad]} for p, rad in self.exceptional_points
            ],
            "limit": self.limit,
            "decomposition": self.decomposition,
            "notes": list(self.notes),
            "details": _jsonable(self.details),
        }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _cvec(p) -> list:
    return [[_num(c.real), _num(c.imag)] for c in np.atleast_1d(np.asarray(p, dtype=complex))]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_num(obj.real), _num(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def exit_code(verdict: str) -> int:
    return {CONVERGES: 0, UNDECIDED: 1, DIVERGES: 2}[verdict]


def tail_verdict(values: Sequence[float], tol: float, tail: int = 5, slack: float = 0.2) -> str:
    """converges: tail below tol and non-increasing within slack; diverges: tail
    at or above tol and not shrinking; otherwise undecided."""
    vals = [float(v) for v in values][-tail:]
    if not vals:
        return UNDECIDED
    monotone = all(b <= (1 + slack) * a + 1e-12 for a, b in zip(vals, vals[1:]))
    if all(v < tol for v in vals) and monotone:
        return CONVERGES
    if all(v >= tol for v in vals) and vals[-1] >= 0.5 * vals[0]:
        return DIVERGES
    return UNDECIDED


# ------------------------------------------------------------------ probes


def _dedup(points: list[np.ndarray], tol: float = 1e-9) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for p in points:
        if not any(np.linalg.norm(p - q) < tol for q in out):
            out.append(p)
    return out


def probe_centers(maps_list: Sequence, region: gg.CompactRegion) -> list[np.ndarray]:
    pts = []
    for maps in maps_list:
        for a in gg.chart_indeterminacy(maps, region.chart):
            if region.contains_base(a[None, :])[0]:
                pts.append(np.asarray(a))
    pts = _dedup(pts)
    pts.sort(key=lambda p: tuple(np.round(np.concatenate([p.real, p.imag]), 12)))
    return pts


def probe_points(centers: Sequence[np.ndarray], region: gg.CompactRegion, st: Settings) -> np.ndarray:
    dim = region.dim
    if not len(centers):
        return np.zeros((0, dim), dtype=complex)
    dirs = _tangent_directions(dim, st.ring_directions)
    radii = []
    r = st.ring_radius
    while r >= st.clearance * (1 - 1e-9):
        radii.append(r)
        r /= 2
    radii.append(st.clearance)
    pts = [np.asarray(c)[None, :] for c in centers]
    for c in centers:
        for r in radii:
            pts.append(np.asarray(c) + r * dirs)
    z = np.concatenate(pts)
    return z[region.contains(z)]


class Sampler:
    """Shared sources for all clouds of one test."""

    def __init__(self, region: gg.CompactRegion, st: Settings, centers: Sequence[np.ndarray]):
        self.region = region
        self.st = st
        self.centers = list(centers)
        base = region.sample(st.samples, st.seed)
        self.sources = np.concatenate([base, probe_points(self.centers, region, st)])

    def cloud(self, maps) -> gg.GraphCloud:
        return gg.graph_cloud(maps, self.sources, self.region, self.region.chart, self.st.clearance,
                              seed=self.st.seed, metric=self.st.metric)

    def distance(self, A: gg.GraphCloud, fA, B: gg.GraphCloud, fB):
        return gg.graph_hausdorff(A, fA, B, fB, self.region, self.st.tol / 4)


def _maps_json(maps) -> list:
    return [g.to_json() for g in gg.as_factors(maps)]


# ------------------------------------------------------------------ strong


def _member_clouds(fam: Family, schedule, sampler: Sampler):
    return {n: sampler.cloud(fam.member(n)) for n in schedule}


def s_converge(fam, K: gg.CompactRegion, schedule: Sequence[int], limit=None,
               st: Settings = DEFAULT, _keep: dict | None = None) -> ConvergenceReport:
    """Strong convergence: graphs over K converge in the Hausdorff metric.

    With a limit (given, or the family's candidate) the trace is the distance
    to the limit graph; families without a candidate use the Cauchy criterion
    on the last clouds; iterate families are tested for relative compactness
    (distance to the nearest of their candidate limits).
    """
    fam = as_family(fam)
    schedule = sorted(schedule)
    if limit is not None:
        cands = [gg.as_factors(limit)]
    else:
        cands = fam.candidates(schedule)
    members = [fam.member(n) for n in schedule]
    centers = probe_centers(members + list(cands or []), K)
    sampler = Sampler(K, st, centers)
    clouds = _member_clouds(fam, schedule, sampler)
    notes = []
    trace = []
    details: dict = {}
    if cands:
        ccl = [sampler.cloud(c) for c in cands]
        worst: dict = {}
        for n in schedule:
            k = _nearest_candidate(fam.member(n), clouds[n], cands, ccl)
            c, cc = cands[k], ccl[k]
            if _same_maps(fam.member(n), c):
                z = np.zeros(len(cc))
                best = (0.0, z, z, c, cc)
            else:
                best = sampler.distance(clouds[n], fam.member(n), cc, c) + (c, cc)
            trace.append((n, best[0]))
            worst[n] = best
        mode = "limit" if len(cands) == 1 else "compactness"
        notes.append(f"mode: {mode} ({len(cands)} candidate limit(s))")
        verdict = tail_verdict([d for _, d in trace], st.tol, st.tail, st.slack)
        limit_json = [_maps_json(c) for c in cands]
        if _keep is not None:
            _keep.update(worst=worst, clouds=clouds, sampler=sampler, cands=cands, ccl=ccl)
    else:
        mode = "cauchy"
        notes.append("mode: cauchy (no limit candidate)")
        last = schedule[-st.tail:]
        for i, n in enumerate(schedule):
            m = schedule[-1]
            if n == m:
                continue
            h, _, _ = sampler.distance(clouds[n], fam.member(n), clouds[m], fam.member(m))
            trace.append((n, h))
        pair = []
        for i, a in enumerate(last):
            for b in last[i + 1:]:
                pair.append(sampler.distance(clouds[a], fam.member(a), clouds[b], fam.member(b))[0])
        details["cauchy_diameter"] = max(pair, default=0.0)
        verdict = tail_verdict([d for _, d in trace] or [0.0], st.tol, st.tail, st.slack)
        if verdict == CONVERGES and details["cauchy_diameter"] >= st.tol:
            verdict = UNDECIDED
        limit_json = None
        if _keep is not None:
            _keep.update(clouds=clouds, sampler=sampler, cands=None)
    details.update(region=K.to_json(), schedule=list(schedule), probe_centers=[_cvec(c) for c in centers],
                   settings=st.to_json())
    return ConvergenceReport("strong", verdict, trace, [], limit_json, None, notes, details)


def _same_maps(a, b) -> bool:
    a, b = gg.as_factors(a), gg.as_factors(b)
    return len(a) == len(b) and all(x == y for x, y in zip(a, b))


def _nearest_candidate(maps, cloud, cands, ccl) -> int:
    """Index of the candidate whose cloud is nearest (unrefined cloud distance)."""
    if len(cands) == 1:
        return 0
    for k, c in enumerate(cands):
        if _same_maps(maps, c):
            return k
    return int(np.argmin([gg.hausdorff(cloud, cc) for cc in ccl]))


# ------------------------------------------------------------------ weak


def _cluster(points: np.ndarray, radius: float) -> list[np.ndarray]:
    if len(points) == 0:
        return []
    X = np.concatenate([points.real, points.imag], axis=1)
    pairs = cKDTree(X).query_pairs(radius, output_type="ndarray")
    n = len(points)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) else coo_matrix((n, n))
    k, labels = connected_components(g, directed=False)
    return [points[labels == j] for j in range(k)]


def locate_exceptional(failing: np.ndarray, centers: Sequence[np.ndarray], st: Settings) -> list[np.ndarray]:
    """Cluster failing source points into finitely many candidate points."""
    groups = _cluster(failing, st.cluster_radius)
    if len(groups) > st.max_points:
        raise ExceptionalSetNotFinite(f"{len(groups)} clusters of failing points (max {st.max_points})")
    out = []
    for grp in groups:
        spread = max(np.linalg.norm(grp - grp.mean(axis=0), axis=1))
        if spread > max(st.exclusion_radii):
            raise ExceptionalSetNotFinite(f"failing points spread over {spread:.3g}; not a point cluster")
        c = grp.mean(axis=0)
        near = [p for p in centers if np.max(np.linalg.norm(grp - p, axis=1)) <= 2 * max(spread, st.cluster_radius)]
        if near:
            c = min(near, key=lambda p: float(np.linalg.norm(p - grp.mean(axis=0))))
        out.append(np.asarray(c))
    out = _dedup(out, 1e-9)
    out.sort(key=lambda p: tuple(np.round(np.concatenate([p.real, p.imag]), 12)))
    return out


def _failing_sources(keep: dict, schedule, st: Settings, last: int = 2) -> np.ndarray:
    pts = []
    for n in schedule[-last:]:
        h, dab, dba, c, cc = keep["worst"][n]
        A = keep["clouds"][n]
        pts.append(A.source[dab > st.tol])
        pts.append(cc.source[dba > st.tol])
    return np.concatenate(pts) if pts else np.zeros((0, 1), dtype=complex)


def w_converge(fam, D: gg.CompactRegion, schedule: Sequence[int], limit=None,
               st: Settings = DEFAULT) -> ConvergenceReport:
    """Weak convergence: strong convergence off a finite exceptional set."""
    fam = as_family(fam)
    schedule = sorted(schedule)
    keep: dict = {}
    strong = s_converge(fam, D, schedule, limit, st, keep)
    details = {"strong_verdict": strong.verdict, "strong_trace": strong.distance_trace}
    if strong.verdict == CONVERGES:
        return ConvergenceReport("weak", CONVERGES, strong.distance_trace, [], strong.limit, None,
                                 ["strong convergence on the whole region"], details)
    if keep.get("cands") is None:
        return ConvergenceReport("weak", UNDECIDED, strong.distance_trace, [], None, None,
                                 ["no limit candidate; exceptional set not located"], details)
    failing = _failing_sources(keep, schedule, st)
    pts = locate_exceptional(failing, keep["sampler"].centers, st)
    if not pts:
        return ConvergenceReport("weak", strong.verdict, strong.distance_trace, [], strong.limit, None,
                                 ["no failing points located"], details)
    verdicts = []
    traces = {}
    for rho in st.exclusion_radii:
        region = D.excluding([(p, rho) for p in pts])
        rep = s_converge(fam, region, schedule, limit, st)
        verdicts.append(rep.verdict)
        traces[str(rho)] = rep.distance_trace
    if all(v == CONVERGES for v in verdicts):
        verdict = CONVERGES
    elif any(v == DIVERGES for v in verdicts):
        verdict = DIVERGES
    else:
        verdict = UNDECIDED
    details.update(excised_traces=traces, excised_verdicts=verdicts)
    last = str(st.exclusion_radii[-1])
    return ConvergenceReport("weak", verdict, traces[last], [(p, list(st.exclusion_radii)) for p in pts],
                             strong.limit, None, [], details)


# ------------------------------------------------------------------ gamma


def gamma_converge(fam, D: gg.CompactRegion, schedule: Sequence[int], limit=None,
                   st: Settings = DEFAULT, nu: float | None = None,
                   volume_samples: int = 0) -> ConvergenceReport:
    """Hausdorff convergence of the graphs over D, with the limit split into
    the graph of a candidate limit map and a vertical part over finitely many points."""
    fam = as_family(fam)
    schedule = sorted(schedule)
    cands = [gg.as_factors(limit)] if limit is not None else fam.candidates(schedule)
    members = [fam.member(n) for n in schedule]
    centers = probe_centers(members + list(cands or []), D)
    sampler = Sampler(D, st, centers)
    last = schedule[-st.tail:]
    clouds = {n: sampler.cloud(fam.member(n)) for n in schedule}
    m = schedule[-1]
    # several candidates (relative compactness): compare members within the
    # cluster of their nearest candidate instead of across clusters
    group = {n: 0 for n in schedule}
    if cands and len(cands) > 1:
        ccl = [sampler.cloud(c) for c in cands]
        group = {n: _nearest_candidate(fam.member(n), clouds[n], cands, ccl) for n in schedule}
    heads = {g: max(n for n in schedule if group[n] == g) for g in set(group.values())}
    trace = []
    for n in schedule:
        h = heads[group[n]]
        if n == h:
            continue
        if _same_maps(fam.member(n), fam.member(h)):
            trace.append((n, 0.0))
        else:
            trace.append((n, sampler.distance(clouds[n], fam.member(n), clouds[h], fam.member(h))[0]))
    pair = []
    for i, a in enumerate(last):
        for b in last[i + 1:]:
            if group[a] != group[b]:
                continue
            if _same_maps(fam.member(a), fam.member(b)):
                pair.append(0.0)
                continue
            pair.append(sampler.distance(clouds[a], fam.member(a), clouds[b], fam.member(b))[0])
    diam = max(pair, default=0.0)
    verdict = tail_verdict([d for _, d in trace] or [0.0], st.tol, st.tail, st.slack)
    if verdict == CONVERGES and diam >= st.tol:
        verdict = UNDECIDED
    details = {"cauchy_diameter": diam, "schedule": list(schedule), "clusters": len(heads)}
    decomposition = None
    exceptional = []
    if verdict == CONVERGES and cands:
        fm = fam.member(m)
        best = None
        for c in cands:
            cc = sampler.cloud(c)
            d = gg.graph_directed(clouds[m], cc, c, D, st.tol / 4)
            if best is None or np.max(d) < np.max(best[0]):
                best = (d, c, cc)
        d, c, cc = best
        far = clouds[m].subset(d > st.tol)
        groups = _cluster(far.source, st.cluster_radius) if len(far) else []
        vertical = []
        for grp in groups:
            center = grp.mean(axis=0)
            near = [p for p in centers if np.max(np.linalg.norm(grp - p, axis=1)) <= 2 * st.cluster_radius]
            if near:
                center = min(near, key=lambda p: float(np.linalg.norm(p - grp.mean(axis=0))))
            # fiber: all points of the last member's graph over a small ball at the center
            sel = np.linalg.norm(clouds[m].source - center, axis=1) <= st.cluster_radius
            fib = clouds[m].subset(sel)
            fd = _fiber_diameter(fib)
            if fd > st.fiber_diam_tol:
                vertical.append({"point": _cvec(center), "fiber_diameter": fd, "points": int(len(grp))})
                exceptional.append((center, [st.cluster_radius]))
        decomposition = {"graph_part": _maps_json(c), "vertical_part": vertical}
        if volume_samples:
            focus = [np.asarray(p) for p, _ in exceptional] + list(centers)
            focus = _dedup(focus, 1e-6)
            vm = gg.volume(fm, D.without_exclusions(), volume_samples, st.seed, focus=focus or None)
            vl = gg.volume(c, D.without_exclusions(), volume_samples, st.seed, focus=focus or None)
            gap = vm.value - vl.value
            diag = {"vol_last_member": vm.value, "vol_limit_graph": vl.value, "vertical_volume_estimate": gap,
                    "stderr": vm.stderr + vl.stderr,
                    "volume_inequality_holds": bool(gap >= -3 * (vm.stderr + vl.stderr))}
            if nu is not None:
                diag["nu"] = nu
                diag["point_mass_bound"] = nu * len(vertical)
                diag["point_mass_inequality_holds"] = bool(gap + 3 * (vm.stderr + vl.stderr) >= nu * len(vertical))
            details["volume_diagnostics"] = diag
    return ConvergenceReport("gamma", verdict, trace, exceptional,
                             [_maps_json(c) for c in cands] if cands else None, decomposition, [], details)


def _fiber_diameter(cloud: gg.GraphCloud) -> float:
    if len(cloud) < 2:
        return 0.0
    emb = np.concatenate([gg.projector_embedding(t) for t in cloud.targets], axis=1)
    # max pairwise target distance (diameter) from the farthest pair estimate
    d = np.linalg.norm(emb[:, None, :] - emb[None, :, :], axis=-1) if len(emb) <= 4000 else None
    if d is None:
        i = np.argmax(np.linalg.norm(emb - emb[0], axis=1))
        return float(np.max(np.linalg.norm(emb - emb[i], axis=1)))
    return float(d.max())


# ------------------------------------------------------------------ stabilization


def indeterminacy_trace(fam: Family, D: gg.CompactRegion, schedule) -> dict:
    out = {}
    for n in schedule:
        pts = [a for a in gg.chart_indeterminacy(fam.member(n), D.chart) if D.contains_base(a[None, :])[0]]
        out[n] = pts
    return out


def _same_sets(a: list, b: list, tol: float = 1e-6) -> bool:
    from .maps import chordal, lift

    if len(a) != len(b):
        return False
    return all(any(chordal(lift(p), lift(q)) < tol for q in b) for p in a) and all(
        any(chordal(lift(p), lift(q)) < tol for q in a) for p in b)


def stabilization_test(fam, D: gg.CompactRegion, schedule: Sequence[int], limit=None,
                       st: Settings = DEFAULT) -> ConvergenceReport:
    fam = as_family(fam)
    schedule = sorted(schedule)
    itr = indeterminacy_trace(fam, D, schedule)
    tail = schedule[-st.tail:]
    stable = all(_same_sets(itr[tail[0]], itr[n]) for n in tail[1:])
    strong = s_converge(fam, D, schedule, limit, st)
    if stable and strong.verdict == CONVERGES:
        verdict = CONVERGES
    elif not stable or strong.verdict == DIVERGES:
        verdict = DIVERGES
    else:
        verdict = UNDECIDED
    details = {"indeterminacy": {str(n): [_cvec(p) for p in itr[n]] for n in schedule},
               "indeterminacy_stable_on_tail": stable, "strong_verdict": strong.verdict}
    return ConvergenceReport("stabilized", verdict, strong.distance_trace, [], strong.limit, None,
                             [STABILIZATION_PROXY], details)


# ------------------------------------------------------------------ Rouché


def shrink(K: gg.CompactRegion, factor: float = 0.9) -> gg.CompactRegion:
    """A compact subregion K1 of K (radii scaled toward the center, inner radii pushed out)."""
    if K.kind == "polydisc":
        inner = tuple(min(r / factor, R * factor) if r else 0.0 for r, R in zip(K.inner, K.radii))
        return gg.CompactRegion("polydisc", K.center, tuple(R * factor for R in K.radii), inner,
                                chart=K.chart, excluded=tuple((a, rho / factor) for a, rho in K.excluded))
    if K.kind == "ball":
        return gg.CompactRegion("ball", K.center, radius=K.radius * factor, chart=K.chart,
                                excluded=tuple((a, rho / factor) for a, rho in K.excluded))
    return gg.CompactRegion("polydisc", K.center, (factor, factor), chart=K.chart)


def _assign_members(fam: Family, cands: list, members: Sequence[int], K: gg.CompactRegion,
                    st: Settings) -> dict:
    """Index of the candidate nearest to each member (mean pointwise chordal distance on K)."""
    if len(cands) <= 1:
        return {n: 0 for n in members}
    z = K.sample(min(st.samples, 2000), st.seed)

    def values(maps):
        return [g(z, K.chart) for g in maps]

    cvals = [values(c) for c in cands]
    out = {}
    for n in members:
        mv = values(fam.member(n))
        dist = []
        for cv_ in cvals:
            with np.errstate(invalid="ignore", divide="ignore"):
                d = [np.nanmean(gg.fs_distance_batch(a, b)) for a, b in zip(mv, cv_)]
            dist.append(float(np.sum(d)))
        out[n] = int(np.argmin(dist))
    return out


def rouche_check(fam, K: gg.CompactRegion, schedule: Sequence[int], limit=None,
                 st: Settings = DEFAULT, strong: ConvergenceReport | None = None) -> dict:
    """(a) limit holomorphic on K1 => members holomorphic on K1 for large n;
    (b) members holomorphic on K => limit holomorphic on K1."""
    fam = as_family(fam)
    schedule = sorted(schedule)
    if strong is None:
        strong = s_converge(fam, K, schedule, limit, st)
    out = {"strong_verdict": strong.verdict, "checks": {}}
    if strong.verdict != CONVERGES:
        out["skipped"] = "strong convergence not established"
        return out
    K1 = shrink(K)
    cands = [gg.as_factors(limit)] if limit is not None else fam.candidates(schedule)
    tail = schedule[len(schedule) // 2:]
    inK = lambda R, pts: [a for a in pts if R.contains(a[None, :])[0]]
    member_I = {n: inK(K, gg.chart_indeterminacy(fam.member(n), K.chart)) for n in schedule}
    member_I1 = {n: inK(K1, gg.chart_indeterminacy(fam.member(n), K.chart)) for n in schedule}
    owner = _assign_members(fam, cands or [], tail, K, st)
    for ci, c in enumerate(cands or []):
        lim_I1 = inK(K1, gg.chart_indeterminacy(c, K.chart))
        # the property concerns the subsequence converging to this candidate
        sub = [n for n in tail if owner[n] == ci]
        if not lim_I1:
            bad = [n for n in sub if member_I1[n]]
            out["checks"][f"a[{ci}]"] = {"applies": True, "members": sub, "violations": bad}
            if bad:
                raise RoucheViolation(f"limit holomorphic on K1 but members {bad} have indeterminacy there")
        else:
            out["checks"][f"a[{ci}]"] = {"applies": False}
        if sub and all(not member_I[n] for n in sub):
            out["checks"][f"b[{ci}]"] = {"applies": True, "violations": [_cvec(p) for p in lim_I1]}
            if lim_I1:
                raise RoucheViolation("members holomorphic on K but the limit has indeterminacy in K1")
        else:
            out["checks"][f"b[{ci}]"] = {"applies": False}
    out["passed"] = True
    return out


# ------------------------------------------------------------------ lifts


def lift_convergence_check(fam, K: gg.CompactRegion, schedule: Sequence[int], st: Settings = DEFAULT,
                           weak: ConvergenceReport | None = None) -> dict:
    """Uniform convergence of component tuples normalized to sup-norm 1 on K."""
    fam = as_family(fam)
    schedule = sorted(schedule)
    z = K.sample(min(st.samples, 4000), st.seed)

    def normalized(maps):
        parts = []
        for g in maps:
            v = g(z, K.chart)
            parts.append(v / np.max(np.abs(v)))
        return parts

    vals = {n: normalized(fam.member(n)) for n in schedule}
    cands = fam.candidates(schedule)
    # compare with the known limit when there is exactly one, else with the last member
    if cands and len(cands) == 1:
        ref, compared = normalized(cands[0]), schedule
    else:
        ref, compared = vals[schedule[-1]], schedule[:-1]
    trace = []
    for n in compared:
        d = 0.0
        for u, v in zip(vals[n], ref):
            ip = np.vdot(u.ravel(), v.ravel())
            ph = ip / abs(ip) if abs(ip) > 0 else 1.0
            d = max(d, float(np.max(np.abs(u * ph - v))))
        trace.append((n, d))
    verdict = tail_verdict([d for _, d in trace] or [0.0], st.tol, st.tail, st.slack)
    out = {"verdict": verdict, "trace": trace}
    if weak is not None:
        out["weak_verdict"] = weak.verdict
        out["consistent_with_weak"] = (verdict == CONVERGES) == (weak.verdict == CONVERGES)
    return out


# ------------------------------------------------------------------ Hartogs


def hartogs_propagation(fam, r: float, schedule: Sequence[int], limit=None, st: Settings = DEFAULT,
                        match_tol: float = 1e-3) -> dict:
    """Convergence on the Hartogs figure H^2(r) extends to the bidisc off I(limit)."""
    fam = as_family(fam)
    schedule = sorted(schedule)
    H = gg.hartogs(r)
    on_h = s_converge(fam, H, schedule, limit, st)
    out = {"hartogs_verdict": on_h.verdict, "hartogs_trace": on_h.distance_trace}
    if on_h.verdict != CONVERGES:
        out["skipped"] = "no convergence on the Hartogs figure"
        out["verdict"] = UNDECIDED
        return out
    bidisc = gg.unit_bidisc()
    cands = [gg.as_factors(limit)] if limit is not None else fam.candidates(schedule)
    A = []
    for c in cands or []:
        A.extend(a for a in gg.chart_indeterminacy(c, 0) if bidisc.contains(a[None, :])[0])
    A = _dedup(A)
    verdicts = {}
    for rho in st.exclusion_radii:
        rep = s_converge(fam, bidisc.excluding([(a, rho) for a in A]), schedule, limit, st)
        verdicts[str(rho)] = (rep.verdict, rep.distance_trace)
    weak = w_converge(fam, bidisc, schedule, limit, st)
    found = [p for p, _ in weak.exceptional_points]
    stray = [p for p in found if not any(np.linalg.norm(p - a) < match_tol for a in A)]
    out.update(exceptional_set=[_cvec(a) for a in A], off_exceptional=verdicts,
               weak_verdict=weak.verdict, weak_exceptional=[_cvec(p) for p in found])
    ok = all(v == CONVERGES for v, _ in verdicts.values())
    if not ok or stray:
        raise PropagationViolation(
            f"convergence on H^2({r}) did not propagate off I(limit): {verdicts} stray={stray}")
    out["verdict"] = CONVERGES
    return out


# ------------------------------------------------------- one complex variable


def _check_function(f: RationalMap):
    if f.source.dim != 1 or len(f.components) != 2:
        raise NonRationalTerm("expected a one-variable function stored as [numerator : denominator]")


def _univariate(p) -> list:
    """Coefficients (low to high) in z = z1 / z0 of a binary form."""
    from .exactalg import ZERO

    if p.is_zero():
        return []
    d = p.degree
    out = [ZERO] * (d + 1)
    for e, c in p.terms.items():
        out[e[1]] = c
    while out and not out[-1]:
        out.pop()
    return out


def _peval(coeffs: list, x):
    acc = 0 * x
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _pdiv_linear(coeffs: list, r):
    """Exact synthetic division by (z - r); returns (quotient, remainder)."""
    out = []
    acc = None
    for c in reversed(coeffs):
        acc = c if acc is None else acc * r + c
        out.append(acc)
    rem = out.pop()
    return list(reversed(out)), rem


def _pshift(coeffs: list, r) -> list:
    """Coefficients of p(r + w) in w."""
    out = []
    cur = list(coeffs)
    while cur:
        cur, rem = _pdiv_linear(cur, r)
        out.append(rem)
    return out


def _roots(coeffs: list) -> list:
    """Roots with multiplicity; exact Gaussian-rational roots are recognized."""
    from fractions import Fraction

    from .exactalg import GaussianRational

    if len(coeffs) <= 1:
        return []
    fl = np.array([complex(c) for c in coeffs])[::-1]
    raw = np.roots(fl)
    out = []
    used = np.zeros(len(raw), dtype=bool)
    for i, r in enumerate(raw):
        if used[i]:
            continue
        grp = np.abs(raw - r) < 1e-5 * max(1.0, abs(r))
        grp &= ~used
        used |= grp
        center = raw[grp].mean()
        ex = GaussianRational(Fraction(center.real).limit_denominator(10**6),
                              Fraction(center.imag).limit_denominator(10**6))
        if _peval(coeffs, ex) == 0:
            m = 0
            cur = list(coeffs)
            while True:
                q, rem = _pdiv_linear(cur, ex)
                if rem:
                    break
                m += 1
                cur = q
            out.append((complex(ex), ex, m))
        else:
            out.append((complex(center), None, int(grp.sum())))
    return out


def principal_parts(f: RationalMap, center: complex, radius: float) -> list:
    """Poles of f in the closed disc with their principal-part coefficients
    c_1..c_m (coefficient of (z - p)^(-k)); exact for Gaussian-rational poles."""
    _check_function(f)
    P, Q = (_univariate(p) for p in f.components)
    if not Q:
        raise NonRationalTerm("denominator vanishes identically")
    out = []
    for r, ex, m in _roots(Q):
        if abs(r - center) > radius + 1e-12:
            continue
        if ex is not None:
            Q1 = list(Q)
            for _ in range(m):
                Q1, _rem = _pdiv_linear(Q1, ex)
            a, b = _pshift(P, ex), _pshift(Q1, ex)
            series = []
            for j in range(m):
                s = a[j] if j < len(a) else 0 * b[0]
                for i in range(1, j + 1):
                    if i < len(b):
                        s = s - b[i] * series[j - i]
                series.append(s / b[0])
            coeffs = [series[m - k] for k in range(1, m + 1)]
            out.append({"pole": r, "exact": ex, "order": m, "coeffs": coeffs})
        else:
            rho = 1e-3
            th = 2 * np.pi * np.arange(256) / 256
            w = rho * np.exp(1j * th)
            vals = _peval([complex(c) for c in P], r + w) / _peval([complex(c) for c in Q], r + w)
            coeffs = [complex(np.mean(vals * w ** k)) for k in range(1, m + 1)]
            out.append({"pole": r, "exact": None, "order": m, "coeffs": coeffs})
    out.sort(key=lambda d: (round(d["pole"].real, 9), round(d["pole"].imag, 9)))
    return out


def _parts_equal(a: list, b: list, tol: float = 1e-9) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if x["order"] != y["order"]:
            return False
        if x["exact"] is not None and y["exact"] is not None:
            if x["exact"] != y["exact"] or list(x["coeffs"]) != list(y["coeffs"]):
                return False
        elif abs(x["pole"] - y["pole"]) > tol or any(
                abs(complex(c) - complex(d)) > tol * max(1.0, abs(complex(c))) for c, d in zip(x["coeffs"], y["coeffs"])):
            return False
    return True


def _disc_samples(center: complex, radius: float, n: int = 64) -> np.ndarray:
    rs = radius * np.sqrt((np.arange(n // 4) + 0.5) / (n // 4))
    th = 2 * np.pi * np.arange(n) / n
    inner = (rs[:, None] * np.exp(1j * th[None, :])).ravel()
    return center + np.concatenate([inner, radius * np.exp(1j * th)])


def _function_values(f: RationalMap, z: np.ndarray, invert: bool = False) -> np.ndarray:
    P, Q = ([complex(c) for c in _univariate(p)] for p in f.components)
    num, den = _peval(P, z), _peval(Q, z)
    return den / num if invert else num / den


def series_convergence_def1(seq, K: gg.CompactRegion, schedule: Sequence[int] | None = None,
                            st: Settings = DEFAULT) -> ConvergenceReport:
    """Principal parts on K must stabilize and the holomorphic remainders converge uniformly.

    ``seq`` is a family of functions (the partial sums), or a list of series terms.
    """
    if isinstance(seq, (list, tuple)) and seq and isinstance(seq[0], RationalMap):
        from .families import partial_sums

        seq = partial_sums(seq)
        schedule = schedule or sorted(seq.members)
    fam = as_family(seq)
    schedule = sorted(schedule)
    if K.dim != 1 or K.kind not in ("polydisc", "ball"):
        raise gg.UnsupportedDimension("one-variable tests run on a closed disc")
    c = K.center[0]
    R = K.radii[0] if K.kind == "polydisc" else K.radius
    parts = {}
    for n in schedule:
        (f,) = fam.member(n)
        parts[n] = principal_parts(f, c, R)
    tail = schedule[-st.tail:]
    stable = all(_parts_equal(parts[tail[0]], parts[n]) for n in tail[1:])
    z = _disc_samples(c, R, 256)
    poles = [p["pole"] for n in tail for p in parts[n]]
    if poles:
        z = z[np.min(np.abs(z[:, None] - np.array(poles)[None, :]), axis=1) > 1e-3]

    def remainder(n):
        (f,) = fam.member(n)
        v = _function_values(f, z)
        for p in parts[n]:
            for k, ck in enumerate(p["coeffs"], start=1):
                v = v - complex(ck) / (z - p["pole"]) ** k
        return v

    last = remainder(schedule[-1])
    trace = [(n, float(np.max(np.abs(remainder(n) - last)))) for n in schedule[:-1]]
    if not stable:
        verdict = DIVERGES
    else:
        verdict = tail_verdict([d for _, d in trace] or [0.0], st.tol, st.tail, st.slack)
    details = {
        "principal_parts_stable": stable,
        "poles": {str(n): [[p["pole"].real, p["pole"].imag, p["order"]] for p in parts[n]] for n in schedule},
        "remainder_sup_trace": trace,
    }
    return ConvergenceReport("def1_series", verdict, trace, [], None, None, [], details)


def spherical_convergence_def2(seq, K: gg.CompactRegion, schedule: Sequence[int],
                               st: Settings = DEFAULT, cells: int = 4, depth: int = 3) -> ConvergenceReport:
    """Cover K by discs; on each, f_n or 1/f_n must be eventually holomorphic and converge uniformly."""
    fam = as_family(seq)
    schedule = sorted(schedule)
    c = K.center[0]
    R = K.radii[0] if K.kind == "polydisc" else K.radius
    tail = schedule[-st.tail:]
    members = {n: fam.member(n)[0] for n in schedule}
    for f in members.values():
        _check_function(f)
    zeros = {n: [r for r, _, _ in _roots(_univariate(members[n].components[0]))] for n in tail}
    poles = {n: [r for r, _, _ in _roots(_univariate(members[n].components[1]))] for n in tail}

    def free(roots, a, rho):
        return all(abs(r - a) > rho + 1e-12 for r in roots)

    results = []

    def test_disc(a: complex, rho: float, level: int):
        hol = all(free(poles[n], a, rho) for n in tail)
        inv = all(free(zeros[n], a, rho) for n in tail)
        if not hol and not inv:
            if level >= depth:
                results.append({"center": a, "radius": rho, "branch": None, "verdict": UNDECIDED})
                return
            h = rho / 2
            for dx in (-h, h):
                for dy in (-h, h):
                    test_disc(a + complex(dx, dy) * 0.75, rho * 0.75, level + 1)
            return
        z = _disc_samples(a, rho)
        z = z[K.contains_base(z[:, None]) | (np.abs(z - c) <= R)]
        if hol and inv:
            big = np.max(np.abs(_function_values(members[schedule[-1]], z)))
            branch = "inverse" if big > 1 else "function"
        else:
            branch = "function" if hol else "inverse"
        last = _function_values(members[schedule[-1]], z, branch == "inverse")
        trace = [float(np.max(np.abs(_function_values(members[n], z, branch == "inverse") - last)))
                 for n in schedule[:-1]]
        v = tail_verdict(trace or [0.0], st.tol, st.tail, st.slack)
        results.append({"center": a, "radius": rho, "branch": branch, "verdict": v, "trace": trace})

    h = 2 * R / cells
    for i in range(cells):
        for j in range(cells):
            a = c + complex(-R + (i + 0.5) * h, -R + (j + 0.5) * h)
            if abs(a - c) <= R + h:
                test_disc(a, h * 0.75, 0)
    verdicts = [r["verdict"] for r in results]
    if all(v == CONVERGES for v in verdicts):
        verdict = CONVERGES
    elif any(v == DIVERGES for v in verdicts):
        verdict = DIVERGES
    else:
        verdict = UNDECIDED
    worst = [max((r["trace"][k] for r in results if r.get("trace")), default=0.0) for k in range(len(schedule) - 1)]
    trace = list(zip(schedule[:-1], worst))
    return ConvergenceReport("def2_spherical", verdict, trace, [], None, None, [],
                             {"discs": results})
