"""Chordal metrics, sampled graphs, Hausdorff distances and graph volumes.

The Fubini-Study form is normalized so that CP^1 has area pi, and the base
form on a chart is the Euclidean one, so the unit disc also has area pi.
Volumes use (1/q!) * integral of (w_base + f^* w_FS)^q.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtri
from scipy.stats import qmc

from .exactalg import MerodynError
from .maps import IndetSet, ProjectivePoint, RationalMap, indeterminacy_locus


class MetricMismatch(MerodynError, ValueError):
    pass


class RegionEmpty(MerodynError, ValueError):
    pass


class UnsupportedDimension(MerodynError, ValueError):
    pass


# ------------------------------------------------------------------ metrics


def _vec(p) -> np.ndarray:
    return p.coords if isinstance(p, ProjectivePoint) else np.asarray(p, dtype=complex)


def fs_distance(p, q) -> float:
    """Chordal distance |p ^ q| / (|p| |q|), the sine of the angle between the lines."""
    return float(fs_distance_batch(_vec(p), _vec(q)))


def fs_distance_batch(P, Q) -> np.ndarray:
    P = np.asarray(P, dtype=complex)
    Q = np.asarray(Q, dtype=complex)
    pn = np.sum(np.abs(P) ** 2, axis=-1)
    qn = np.sum(np.abs(Q) ** 2, axis=-1)
    # |p ^ q|^2 = sum_{j<k} |p_j q_k - p_k q_j|^2
    w = P[..., :, None] * Q[..., None, :] - P[..., None, :] * Q[..., :, None]
    wedge = np.sum(np.abs(w) ** 2, axis=(-1, -2)) / 2
    return np.sqrt(np.clip(wedge / (pn * qn), 0.0, 1.0))


def projector_embedding(W) -> np.ndarray:
    """Real coordinates of w w^* / |w|^2 scaled so Euclidean distance equals chordal distance."""
    W = np.asarray(W, dtype=complex)
    W = W / np.linalg.norm(W, axis=-1, keepdims=True)
    m = W.shape[-1]
    feats = [np.abs(W) ** 2 / math.sqrt(2)]
    iu, ju = np.triu_indices(m, 1)
    off = W[..., iu] * np.conj(W[..., ju])
    feats += [off.real, off.imag]
    return np.concatenate(feats, axis=-1)


@dataclass(frozen=True)
class MetricSpec:
    """Product metric sqrt((a*d_src)^2 + sum_k (b*d_FS,k)^2) on chart x target factors."""

    source_scale: float = 1.0
    target_scale: float = 1.0

    def combine(self, d_src, d_tgt) -> np.ndarray:
        d_src = np.asarray(d_src, dtype=float)
        d_tgt = np.asarray(d_tgt, dtype=float)
        return np.sqrt((self.source_scale * d_src) ** 2 + (self.target_scale * d_tgt) ** 2)


FS = MetricSpec()


# ------------------------------------------------------------------ regions


@dataclass(frozen=True)
class CompactRegion:
    """A closed region in an affine chart.

    kinds: "polydisc" (center, radii, optional inner radii giving annuli),
    "ball" (center, radius), "hartogs" (the figure H^2(r) in the unit bidisc
    centered at ``center``).  ``excluded`` lists open balls (center, radius).
    """

    kind: str
    center: tuple
    radii: tuple = ()
    inner: tuple = ()
    radius: float = 0.0
    r: float = 0.0
    chart: int = 0
    excluded: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(complex(c) for c in self.center))
        object.__setattr__(self, "radii", tuple(float(x) for x in self.radii))
        inner = tuple(float(x) for x in self.inner) or (0.0,) * len(self.radii)
        object.__setattr__(self, "inner", inner)
        object.__setattr__(self, "excluded", tuple((tuple(complex(c) for c in a), float(rho)) for a, rho in self.excluded))
        if self.kind not in ("polydisc", "ball", "hartogs"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind == "polydisc" and len(self.radii) != len(self.center):
            raise ValueError("polydisc needs one radius per coordinate")
        if self.kind == "hartogs" and len(self.center) != 2:
            raise UnsupportedDimension("Hartogs figures are built in dimension 2")

    @property
    def dim(self) -> int:
        return len(self.center)

    def excluding(self, balls) -> "CompactRegion":
        extra = tuple((tuple(a), float(rho)) for a, rho in balls)
        return CompactRegion(self.kind, self.center, self.radii, self.inner, self.radius, self.r,
                             self.chart, self.excluded + extra)

    def without_exclusions(self) -> "CompactRegion":
        return CompactRegion(self.kind, self.center, self.radii, self.inner, self.radius, self.r, self.chart)

    def _outer_radii(self) -> np.ndarray:
        if self.kind == "polydisc":
            return np.array(self.radii)
        if self.kind == "ball":
            return np.full(self.dim, self.radius)
        return np.ones(2)

    def contains_base(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex) - np.array(self.center)
        a = np.abs(z)
        eps = 1e-12
        if self.kind == "polydisc":
            return np.all((a <= np.array(self.radii) + eps) & (a >= np.array(self.inner) - eps), axis=-1)
        if self.kind == "ball":
            return np.linalg.norm(z, axis=-1) <= self.radius + eps
        slab = (a[..., 0] <= self.r + eps) & (a[..., 1] <= 1 + eps)
        collar = (a[..., 0] <= 1 + eps) & (a[..., 1] >= 1 - self.r - eps) & (a[..., 1] <= 1 + eps)
        return slab | collar

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        ok = self.contains_base(z)
        for a, rho in self.excluded:
            ok = ok & (np.linalg.norm(z - np.array(a), axis=-1) >= rho)
        return ok

    def project(self, z) -> np.ndarray:
        """A nearby point of the closed region (exact for polydiscs and balls)."""
        z = np.array(z, dtype=complex, copy=True)
        c = np.array(self.center)
        d = z - c
        if self.kind == "polydisc":
            d = _clip_moduli(d, np.array(self.inner), np.array(self.radii))
        elif self.kind == "ball":
            r = np.linalg.norm(d, axis=-1, keepdims=True)
            d = np.where(r > self.radius, d * self.radius / np.where(r > 0, r, 1), d)
        else:
            slab = _clip_moduli(d, np.zeros(2), np.array([self.r, 1.0]))
            collar = _clip_moduli(d, np.array([0.0, 1 - self.r]), np.ones(2))
            use_slab = np.linalg.norm(slab - d, axis=-1) <= np.linalg.norm(collar - d, axis=-1)
            d = np.where(use_slab[..., None], slab, collar)
        z = c + d
        for a, rho in self.excluded:
            a = np.array(a)
            e = z - a
            r = np.linalg.norm(e, axis=-1, keepdims=True)
            inside = r < rho
            e1 = np.zeros_like(e)
            e1[..., 0] = 1
            dirs = np.where(r > 0, e / np.where(r > 0, r, 1), e1)
            z = np.where(inside, a + rho * dirs, z)
        return z

    def enclosing_volume(self) -> float:
        if self.kind == "ball":
            n = self.dim
            return math.pi ** n * self.radius ** (2 * n) / math.factorial(n)
        if self.kind == "polydisc":
            return float(np.prod([math.pi * (R * R - r * r) for R, r in zip(self.radii, self.inner)]))
        return math.pi ** 2

    def base_samples(self, N: int, seed: int, skip: int = 0) -> np.ndarray:
        """N quasi-uniform points of the region before exclusions (hartogs: of the bidisc)."""
        n = self.dim
        c = np.array(self.center)
        if self.kind == "ball":
            u = qmc.Halton(d=2 * n + 1, scramble=True, seed=seed).random(N + skip)[skip:]
            g = ndtri(np.clip(u[:, : 2 * n], 1e-15, 1 - 1e-15))
            g = g / np.linalg.norm(g, axis=1, keepdims=True)
            rad = self.radius * u[:, 2 * n] ** (1.0 / (2 * n))
            x = g * rad[:, None]
            return c + x[:, :n] + 1j * x[:, n:]
        u = qmc.Halton(d=2 * n, scramble=True, seed=seed).random(N + skip)[skip:]
        R = self._outer_radii()
        r0 = np.array(self.inner) if self.kind == "polydisc" else np.zeros(n)
        rad = np.sqrt(u[:, :n] * (R ** 2 - r0 ** 2) + r0 ** 2)
        return c + rad * np.exp(2j * np.pi * u[:, n:])

    def sample(self, N: int, seed: int) -> np.ndarray:
        """N quasi-uniform points of the region (rejection after the low-discrepancy stream)."""
        got = []
        have = 0
        skip = 0
        batch = max(N, 64)
        for _ in range(64):
            z = self.base_samples(batch, seed, skip)
            skip += batch
            z = z[self.contains(z)]
            got.append(z)
            have += len(z)
            if have >= N:
                break
            batch *= 2
        if have == 0:
            raise RegionEmpty("no sample landed in the region")
        z = np.concatenate(got)[:N]
        if len(z) < N:
            raise RegionEmpty(f"region too thin: only {len(z)} of {N} samples")
        return z

    def to_json(self) -> dict:
        out = {"kind": self.kind, "chart": self.chart,
               "center": [[c.real, c.imag] for c in self.center]}
        if self.kind == "polydisc":
            out["radii"] = list(self.radii)
            if any(self.inner):
                out["inner"] = list(self.inner)
        elif self.kind == "ball":
            out["radius"] = self.radius
        else:
            out["r"] = self.r
        if self.excluded:
            out["excluded"] = [{"center": [[c.real, c.imag] for c in a], "radius": rho} for a, rho in self.excluded]
        return out


def _clip_moduli(d: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    a = np.abs(d)
    target = np.clip(a, lo, hi)
    phase = np.where(a > 0, d / np.where(a > 0, a, 1), 1.0)
    return np.where(a == target, d, target * phase)


def polydisc(center, radii, inner=(), chart=0) -> CompactRegion:
    return CompactRegion("polydisc", tuple(center), tuple(radii), tuple(inner), chart=chart)


def ball(center, radius, chart=0) -> CompactRegion:
    return CompactRegion("ball", tuple(center), radius=radius, chart=chart)


def hartogs(r: float, chart=0, center=(0, 0)) -> CompactRegion:
    return CompactRegion("hartogs", tuple(center), r=r, chart=chart)


def unit_disc() -> CompactRegion:
    return polydisc((0,), (1.0,))


def unit_bidisc() -> CompactRegion:
    return polydisc((0, 0), (1.0, 1.0))


# ------------------------------------------------------------------ clouds


Maps = RationalMap | Sequence[RationalMap]


def as_factors(f: Maps) -> tuple[RationalMap, ...]:
    return (f,) if isinstance(f, RationalMap) else tuple(f)


def chart_indeterminacy(f: Maps, chart: int) -> np.ndarray:
    """Indeterminacy points of every factor, in chart coordinates (rows)."""
    pts = []
    for g in as_factors(f):
        if g.source.dim == 2:
            pts.extend(indeterminacy_locus(g).chart_points(chart))
    if not pts:
        dim = as_factors(f)[0].source.dim
        return np.zeros((0, dim), dtype=complex)
    return np.array(pts)


def push_off(z: np.ndarray, centers: np.ndarray, clearance: float) -> np.ndarray:
    """Move points closer than ``clearance`` to a center radially out to that distance."""
    z = np.array(z, dtype=complex, copy=True)
    for a in centers:
        d = z - a
        r = np.linalg.norm(d, axis=-1)
        close = r < clearance
        if not np.any(close):
            continue
        dd = d[close]
        rr = r[close]
        e = np.zeros_like(dd)
        e[:, 0] = 1
        dirs = np.where(rr[:, None] > 0, dd / np.where(rr > 0, rr, 1)[:, None], e)
        z[close] = a + clearance * dirs
    return z


@dataclass(frozen=True, eq=False)
class GraphCloud:
    source: np.ndarray
    targets: tuple[np.ndarray, ...]
    region: CompactRegion | None = None
    map_id: str = ""
    seed: int = 0
    metric: MetricSpec = FS

    def __len__(self):
        return len(self.source)

    def embedding(self) -> np.ndarray:
        z = self.source
        parts = [self.metric.source_scale * np.concatenate([z.real, z.imag], axis=1)]
        parts += [self.metric.target_scale * projector_embedding(t) for t in self.targets]
        return np.concatenate(parts, axis=1)

    def subset(self, mask) -> "GraphCloud":
        return GraphCloud(self.source[mask], tuple(t[mask] for t in self.targets), self.region,
                          self.map_id, self.seed, self.metric)

    def with_metric(self, metric: MetricSpec) -> "GraphCloud":
        return GraphCloud(self.source, self.targets, self.region, self.map_id, self.seed, metric)


def evaluate_graph(f: Maps, z: np.ndarray, chart: int = 0) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Target values (unit vectors) at chart points; rows where some factor vanishes are dropped."""
    z = np.asarray(z, dtype=complex)
    targets = []
    ok = np.ones(len(z), dtype=bool)
    for g in as_factors(f):
        v = g(z, chart)
        nrm = np.linalg.norm(v, axis=1)
        scale = np.max(np.abs(v), axis=1)
        ok &= np.isfinite(nrm) & (nrm > 0) & (scale > 1e-300)
        targets.append(v / np.where(nrm > 0, nrm, 1)[:, None])
    return z[ok], tuple(t[ok] for t in targets)


def graph_cloud(f: Maps, z: np.ndarray, region: CompactRegion | None = None, chart: int = 0,
                clearance: float = 1e-4, indet: np.ndarray | None = None, seed: int = 0,
                metric: MetricSpec = FS, map_id: str = "") -> GraphCloud:
    if indet is None:
        indet = chart_indeterminacy(f, chart)
    if len(indet):
        z = push_off(z, indet, clearance)
    z, targets = evaluate_graph(f, z, chart)
    return GraphCloud(z, targets, region, map_id or _map_id(f), seed, metric)


def _map_id(f: Maps) -> str:
    return " x ".join(g.name or "map" for g in as_factors(f))


def sample_graph(f: Maps, K: CompactRegion, N: int, seed: int = 0, clearance: float = 1e-4,
                 metric: MetricSpec = FS, extra: np.ndarray | None = None) -> GraphCloud:
    """N low-discrepancy samples (z, f(z)) of the graph over K (plus optional extra sources)."""
    z = K.sample(N, seed)
    if extra is not None and len(extra):
        extra = np.asarray(extra, dtype=complex)
        z = np.concatenate([z, extra[K.contains(extra)]])
    return graph_cloud(f, z, K, K.chart, clearance, seed=seed, metric=metric)


# ------------------------------------------------------------------ Hausdorff


def _check_compatible(A: GraphCloud, B: GraphCloud):
    if A.metric != B.metric:
        raise MetricMismatch("clouds carry different metric specs")
    if A.source.shape[1:] != B.source.shape[1:] or len(A.targets) != len(B.targets) or any(
        a.shape[1:] != b.shape[1:] for a, b in zip(A.targets, B.targets)
    ):
        raise MetricMismatch("clouds live in different product spaces")


def pairwise_distances(A: GraphCloud, B: GraphCloud) -> np.ndarray:
    """Brute-force product-metric distance matrix using the wedge formula."""
    _check_compatible(A, B)
    ds = np.linalg.norm(A.source[:, None, :] - B.source[None, :, :], axis=-1)
    dt2 = np.zeros_like(ds)
    for ta, tb in zip(A.targets, B.targets):
        dt2 += fs_distance_batch(ta[:, None, :], tb[None, :, :]) ** 2
    return A.metric.combine(ds, np.sqrt(dt2))


def directed_distances(A: GraphCloud, B: GraphCloud, method: str = "kdtree") -> np.ndarray:
    """For each point of A, the distance to the nearest point of B."""
    _check_compatible(A, B)
    if len(A) == 0:
        return np.zeros(0)
    if len(B) == 0:
        return np.full(len(A), np.inf)
    if method == "brute":
        out = np.empty(len(A))
        step = max(1, 2_000_000 // max(1, len(B)))
        for s in range(0, len(A), step):
            out[s:s + step] = pairwise_distances(A.subset(slice(s, s + step)), B).min(axis=1)
        return out
    tree = cKDTree(B.embedding())
    d, _ = tree.query(A.embedding(), k=1)
    return d


def hausdorff(A: GraphCloud, B: GraphCloud, method: str = "kdtree") -> float:
    """Symmetric Hausdorff distance between clouds under the product metric."""
    if len(A) == 0 and len(B) == 0:
        return 0.0
    return float(max(np.max(directed_distances(A, B, method), initial=0.0),
                     np.max(directed_distances(B, A, method), initial=0.0)))


# ------------------------------------------------------------------ volume


def pullback_metric(f: Maps, z: np.ndarray, chart: int = 0) -> np.ndarray:
    """Hermitian matrix of f^* w_FS at chart points, shape (N, q, q)."""
    G = None
    for g in as_factors(f):
        F, J = g.jacobian(z, chart)
        n2 = np.sum(np.abs(F) ** 2, axis=-1)
        JhJ = np.einsum("nia,nib->nab", np.conj(J), J)
        JhF = np.einsum("nia,ni->na", np.conj(J), F)
        term = (n2[:, None, None] * JhJ - JhF[:, :, None] * np.conj(JhF)[:, None, :]) / (n2 ** 2)[:, None, None]
        G = term if G is None else G + term
    return G


def volume_terms(f: Maps, z: np.ndarray, chart: int = 0) -> np.ndarray:
    """Per-sample densities of the normalized expansion terms (columns)."""
    G = pullback_metric(f, z, chart)
    q = G.shape[-1]
    if q == 1:
        return np.stack([np.ones(len(z)), G[:, 0, 0].real], axis=1)
    if q == 2:
        tr = (G[:, 0, 0] + G[:, 1, 1]).real
        det = (G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]).real
        return np.stack([np.ones(len(z)), tr, np.maximum(det, 0.0)], axis=1)
    raise UnsupportedDimension(f"volume is implemented for q in (1, 2), got {q}")


TERM_NAMES = {1: ("base", "pullback"), 2: ("base", "mixed", "top")}


@dataclass
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    breakdown: dict
    term_stderr: dict
    raw: float
    capped_mass: float
    q: int
    strata: int = 1

    def to_json(self) -> dict:
        return {
            "value": self.value, "stderr": self.stderr, "samples": self.samples,
            "breakdown": self.breakdown, "term_stderr": self.term_stderr,
            "raw_value": self.raw, "capped_mass": self.capped_mass, "q": self.q,
            "strata": self.strata, "convention": "(1/q!) int (w_base + f^* w_FS)^q, FS area of CP^1 = pi",
        }


def _shell_samples(center, r_in, r_out, N, seed, n) -> tuple[np.ndarray, float]:
    u = qmc.Halton(d=2 * n + 1, scramble=True, seed=seed).random(N)
    g = ndtri(np.clip(u[:, : 2 * n], 1e-15, 1 - 1e-15))
    g = g / np.linalg.norm(g, axis=1, keepdims=True)
    d = 2 * n
    rad = (u[:, d] * (r_out ** d - r_in ** d) + r_in ** d) ** (1.0 / d)
    x = g * rad[:, None]
    vol = math.pi ** n / math.factorial(n) * (r_out ** d - r_in ** d)
    return np.asarray(center) + x[:, :n] + 1j * x[:, n:], vol


def _map_blocks(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def volume(f: Maps, K: CompactRegion, N: int, seed: int = 0, density_ceiling: float = 1e8,
           focus: Sequence | None = None, focus_radius: float | None = None, levels: int = 40,
           workers: int = 1, block: int = 8192) -> VolumeEstimate:
    """Monte-Carlo graph volume over K.

    With ``focus`` points, balls around them are split into dyadic shells that
    are sampled separately (stratification for concentrated integrands).  The
    density ceiling applies to the uniform stratum only; shell strata resolve
    the concentration and are integrated uncapped.
    """
    q = K.dim
    if q not in (1, 2):
        raise UnsupportedDimension(f"volume is implemented for q in (1, 2), got {q}")
    names = TERM_NAMES[q]
    focus = [np.asarray(c, dtype=complex) for c in (focus or [])]
    if focus and focus_radius is None:
        focus_radius = 0.25
        if len(focus) > 1:
            gaps = [np.linalg.norm(a - b) for i, a in enumerate(focus) for b in focus[i + 1:]]
            focus_radius = min(focus_radius, 0.45 * min(gaps))

    strata = []  # (points, weight volume, indicator)
    base = K.base_samples(N if not focus else N // 2, seed)
    ind = K.contains(base)
    for c in focus:
        ind &= np.linalg.norm(base - c, axis=-1) >= focus_radius
    strata.append((base, K.enclosing_volume(), ind))
    if focus:
        per = max(256, (N - N // 2) // (len(focus) * (levels + 1)))
        for j, c in enumerate(focus):
            for k in range(levels + 1):
                r_out = focus_radius * 2.0 ** (-k)
                r_in = 0.0 if k == levels else r_out / 2
                pts, vol = _shell_samples(c, r_in, r_out, per, seed + 7919 * (j + 1) + k, q)
                strata.append((pts, vol, K.contains(pts)))

    items = []
    for si, (pts, vol, ind) in enumerate(strata):
        for s in range(0, len(pts), block):
            items.append((si, pts[s:s + block], ind[s:s + block]))

    def work(item):
        si, pts, ind = item
        dens = np.zeros((len(pts), len(names)))
        if np.any(ind):
            dens[ind] = volume_terms(f, pts[ind], K.chart)
        return dens

    results = _map_blocks(work, items, workers)
    per_stratum: dict[int, list] = {}
    for (si, _, _), dens in zip(items, results):
        per_stratum.setdefault(si, []).append(dens)

    totals = np.zeros(len(names))
    variances = np.zeros(len(names))
    tot_var = 0.0
    capped = 0.0
    count = 0
    for si, (pts, vol, _) in enumerate(strata):
        dens = np.concatenate(per_stratum[si])
        count += len(dens)
        total_density = dens.sum(axis=1)
        ceiling = density_ceiling if si == 0 else math.inf
        over = np.maximum(total_density - ceiling, 0.0)
        capped += vol * float(np.mean(over))
        factor = np.where(total_density > ceiling, ceiling / np.where(total_density > 0, total_density, 1), 1.0)
        dens = dens * factor[:, None]
        m = len(dens)
        totals += vol * dens.mean(axis=0)
        variances += vol ** 2 * dens.var(axis=0, ddof=1) / m
        tot_var += vol ** 2 * dens.sum(axis=1).var(ddof=1) / m
    value = float(totals.sum())
    return VolumeEstimate(
        value=value,
        stderr=float(math.sqrt(tot_var)),
        samples=count,
        breakdown={k: float(v) for k, v in zip(names, totals)},
        term_stderr={k: float(math.sqrt(v)) for k, v in zip(names, variances)},
        raw=float(math.factorial(q) * value),
        capped_mass=float(capped),
        q=q,
        strata=len(strata),
    )


def marginal_mass(f: Maps, z1_grid: Sequence, fiber_samples: int = 4096, seed: int = 0) -> list[tuple[complex, float]]:
    """Fiber integrals of the (2, 2-bar) coefficient of f^* w_FS over |z2| < 1."""
    fac = as_factors(f)
    if fac[0].source.dim != 2:
        raise UnsupportedDimension("marginal mass needs a two-dimensional chart")
    disc = polydisc((0,), (1.0,))
    w = disc.base_samples(fiber_samples, seed)[:, 0]
    out = []
    for z1 in z1_grid:
        z = np.stack([np.full(len(w), complex(z1)), w], axis=1)
        z, _ = evaluate_graph(f, z)
        G = pullback_metric(f, z)
        mu = math.pi * float(np.sum(G[:, 1, 1].real)) / len(w)
        out.append((complex(z1), max(mu, 0.0)))
    return out


# ------------------------------------------------------ distances to true graphs


def _true_distance(f: Maps, w, z0, z, chart, metric) -> np.ndarray:
    zz, _ = z, None
    d2 = metric.source_scale ** 2 * np.sum(np.abs(z - z0) ** 2, axis=-1)
    for g, wk in zip(as_factors(f), w):
        v = g(zz, chart)
        with np.errstate(all="ignore"):
            c = fs_distance_batch(v, wk)
        d2 = d2 + metric.target_scale ** 2 * c ** 2
    return np.where(np.isfinite(d2), np.sqrt(np.maximum(d2, 0.0)), np.inf)


def _lm_residual(f: Maps, w, z0, z, chart, metric):
    """Holomorphic residual (z - z0, tangent coordinates of f(z) at w) and its Jacobian.

    The tangent coordinate (F - <w,F> w) / <w,F> has norm tan(angle) >= chordal
    distance, so minimizing it gives valid upper bounds.
    """
    s, t = metric.source_scale, metric.target_scale
    n = z.shape[-1]
    res = [s * (z - z0)]
    jac = [np.broadcast_to(s * np.eye(n, dtype=complex), (len(z), n, n))]
    for g, wk in zip(as_factors(f), w):
        F, J = g.jacobian(z, chart)
        a = np.einsum("ni,ni->n", np.conj(wk), F)
        aJ = np.einsum("ni,nia->na", np.conj(wk), J)
        with np.errstate(all="ignore"):
            r = (F - a[:, None] * wk) / a[:, None]
            dr = (J - wk[:, :, None] * aJ[:, None, :]) / a[:, None, None] - (
                (F - a[:, None] * wk)[:, :, None] * aJ[:, None, :] / (a ** 2)[:, None, None]
            )
        res.append(t * r)
        jac.append(t * dr)
    return np.concatenate(res, axis=1), np.concatenate(jac, axis=1)


def _solve_small(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched solve for 1x1 and 2x2 systems in closed form."""
    n = A.shape[-1]
    if n == 1:
        return b / A[:, 0, :]
    if n == 2:
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        x0 = (A[:, 1, 1] * b[:, 0] - A[:, 0, 1] * b[:, 1]) / det
        x1 = (A[:, 0, 0] * b[:, 1] - A[:, 1, 0] * b[:, 0]) / det
        return np.stack([x0, x1], axis=1)
    return np.linalg.solve(A, b[..., None])[..., 0]


def project_balls(z: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    """Per-point projection onto closed balls B(centers[i], radius)."""
    d = z - centers
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    return np.where(r > radius, centers + d * radius / np.where(r > 0, r, 1), z)


def refine_to_graph(f: Maps, z0: np.ndarray, w: tuple[np.ndarray, ...], starts: Sequence[np.ndarray],
                    region: CompactRegion | None, metric: MetricSpec = FS, iters: int = 40,
                    good_enough: float = 0.0, chart: int | None = None,
                    project=None) -> np.ndarray:
    """Upper bounds for the distance from points (z0, w) to the graph of f over the region.

    Damped Gauss-Newton on a holomorphic residual, projected onto the region
    after each step and run from each start; every iterate is a point of the
    graph, so the reported values are upper bounds for the true distance.
    Points already below ``good_enough`` are not refined further.  ``project``
    (callable on (points, indices)) replaces the projection onto ``region``.
    """
    best = np.full(len(z0), np.inf)
    if len(z0) == 0:
        return best
    if chart is None:
        chart = region.chart
    if project is None:
        project = lambda z, idx: region.project(z)
    w = tuple(wk / np.linalg.norm(wk, axis=-1, keepdims=True) for wk in w)
    for z in starts:
        todo = np.nonzero(best > good_enough)[0]
        if len(todo) == 0:
            break
        zz = project(np.array(z, dtype=complex)[todo], todo)
        zt = z0[todo]
        wt = tuple(wk[todo] for wk in w)
        cur = _true_distance(f, wt, zt, zz, chart, metric)
        mu = np.full(len(todo), 1e-3)
        active = np.arange(len(todo))
        for _ in range(iters):
            if len(active) == 0:
                break
            za, z0a = zz[active], zt[active]
            wa = tuple(wk[active] for wk in wt)
            with np.errstate(all="ignore"):
                r, J = _lm_residual(f, wa, z0a, za, chart, metric)
                JH = np.conj(np.swapaxes(J, 1, 2))
                A = JH @ J
                scale = np.real(np.trace(A, axis1=1, axis2=2))[:, None, None] / A.shape[1]
                A = A + (mu[active][:, None, None] * np.where(scale > 0, scale, 1)) * np.eye(A.shape[1])
                rhs = -np.einsum("nab,nb->na", JH, r)
                step = _solve_small(A, rhs)
            ok = np.all(np.isfinite(step), axis=1)
            step = np.where(ok[:, None], step, 0)
            trial = project(za + step, todo[active])
            tval = _true_distance(f, wa, z0a, trial, chart, metric)
            better = ok & (tval < cur[active])
            with np.errstate(invalid="ignore"):
                gain = cur[active] - np.where(better, tval, cur[active])
            zz[active] = np.where(better[:, None], trial, za)
            cur[active] = np.where(better, tval, cur[active])
            mu[active] = np.where(better, mu[active] * 0.3, mu[active] * 10.0)
            done = (~ok) | (mu[active] > 1e12) | (better & (gain < 1e-9 * np.maximum(cur[active], 1e-300)))
            done |= cur[active] <= good_enough * 0.5
            active = active[~done]
        best[todo] = np.minimum(best[todo], cur)
    return best


def graph_directed(A: GraphCloud, B: GraphCloud, fB: Maps, region: CompactRegion,
                   threshold: float, iters: int = 40) -> np.ndarray:
    """Directed distances from the points of A to the graph of fB.

    Cloud distances to B are upper bounds; points above ``threshold`` are
    refined against the true graph, starting from their nearest neighbour in B
    and from their own source point.
    """
    _check_compatible(A, B)
    if len(A) == 0:
        return np.zeros(0)
    tree = cKDTree(B.embedding())
    d, idx = tree.query(A.embedding(), k=1)
    bad = d > threshold
    if np.any(bad):
        z0 = A.source[bad]
        w = tuple(t[bad] for t in A.targets)
        starts = [B.source[idx[bad]], z0]
        r = refine_to_graph(fB, z0, w, starts, region, A.metric, iters, good_enough=threshold / 2)
        d = d.copy()
        d[bad] = np.minimum(d[bad], r)
    return d


def graph_hausdorff(A: GraphCloud, fA: Maps, B: GraphCloud, fB: Maps, region: CompactRegion,
                    threshold: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Hausdorff distance between the graphs over the region, estimated from
    clouds with refinement; also returns both directed distance arrays."""
    dab = graph_directed(A, B, fB, region, threshold)
    dba = graph_directed(B, A, fA, region, threshold)
    h = max(np.max(dab, initial=0.0), np.max(dba, initial=0.0))
    return float(h), dab, dba
