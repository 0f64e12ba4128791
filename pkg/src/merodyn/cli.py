"""Command-line front end: ``merodyn <subcommand> ...``.

Exit codes: 0 converges (or success), 1 undecided (or a failed
reproduction), 2 diverges, 64 bad input (scenario parse errors, unknown
examples), 70 other library errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import converge as cv
from . import dynamics as dy
from . import graphgeom as gg
from . import maps as mp
from . import reproduce as rp
from .exactalg import MerodynError
from .scenario import NOTIONS, RunConfig, Scenario, ScenarioParseError, builtin_names, load

EX_USAGE = 64
EX_SOFTWARE = 70


def _dump(obj) -> str:
    return json.dumps(cv._jsonable(obj), indent=2, sort_keys=True) + "\n"


def _emit(cfg: RunConfig, files: dict[str, str | bytes], main: str):
    """Print the main report; with --out also write every file there."""
    sys.stdout.write(files[main] if isinstance(files[main], str) else "")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, data in files.items():
            p = out / name
            if isinstance(data, bytes):
                p.write_bytes(data)
            else:
                p.write_text(data)


def _trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "distance"])
    for n, d in trace:
        w.writerow([int(n), repr(float(d))])
    return buf.getvalue()


def _config(args) -> RunConfig:
    workers = args.workers if getattr(args, "workers", None) else RunConfig.default_workers()
    return RunConfig(seed=getattr(args, "seed", None), samples=getattr(args, "samples", None),
                     tol=getattr(args, "tol", None), workers=workers, out=getattr(args, "out", None),
                     exclude_indeterminacy=getattr(args, "exclude_indeterminacy", False))


# ------------------------------------------------------------------ commands


def cmd_converge(args) -> int:
    sc = load(args.scenario)
    cfg = _config(args)
    notion = args.notion or sc.notion or "strong"
    st = cfg.settings(sc)
    fam = sc.family()
    K = sc.region()
    sched = sc.schedule
    if not sched:
        raise ScenarioParseError("scenario needs a schedule", origin=sc.origin)
    lim = sc.limit()
    if notion == "strong":
        rep = cv.s_converge(fam, K, sched, lim, st)
    elif notion == "weak":
        rep = cv.w_converge(fam, K, sched, lim, st)
    elif notion == "gamma":
        rep = cv.gamma_converge(fam, K, sched, lim, st)
    elif notion == "stabilized":
        rep = cv.stabilization_test(fam, K, sched, lim, st)
    elif notion == "def1":
        rep = cv.series_convergence_def1(fam, K, sched, st)
    else:
        rep = cv.spherical_convergence_def2(fam, K, sched, st)
    report = rep.to_json()
    report["scenario"] = sc.name
    expected = sc.expect.get(notion)
    if expected is not None:
        report["expected"] = expected
        report["matches_expected"] = expected == rep.verdict
    _emit(cfg, {"report.json": _dump(report), "trace.csv": _trace_csv(rep.distance_trace)}, "report.json")
    return cv.exit_code(rep.verdict)


def cmd_volume(args) -> int:
    sc = load(args.scenario)
    cfg = _config(args)
    vs = sc.section("volume")
    n = cfg.samples or vs.get("samples", 100_000)
    focus = [np.array([complex(*c) if isinstance(c, list) else complex(c) for c in p]) for p in vs.get("focus", [])]
    est = gg.volume(sc.map(), sc.region(), n, cfg.seed or 0, vs.get("density_ceiling", 1e8),
                    focus=focus or None, workers=cfg.workers)
    out = est.to_json()
    norm = args.normalization or vs.get("normalization", "normalized")
    out["normalization"] = norm
    term = args.term or vs.get("term", "total")
    if term == "total":
        value, err = est.value, est.stderr
    elif term in est.breakdown:
        value, err = est.breakdown[term], est.term_stderr[term]
    else:
        raise ScenarioParseError(f"no volume term {term!r} for q={est.q}; have {sorted(est.breakdown)}", origin=sc.origin)
    scale = est.raw / est.value if norm == "raw" and est.value else 1.0
    out["term"] = term
    out["reported"] = {"value": value * scale, "stderr": err * scale}
    out["scenario"] = sc.name
    _emit(cfg, {"volume.json": _dump(out)}, "volume.json")
    return 0


def cmd_hausdorff(args) -> int:
    sc = load(args.scenario)
    cfg = _config(args)
    st = cfg.settings(sc)
    f, g = sc.pair()
    K = sc.region()
    centers = cv.probe_centers([(f,), (g,)], K)
    sampler = cv.Sampler(K, st, centers)
    A, B = sampler.cloud(f), sampler.cloud(g)
    h, dab, dba = sampler.distance(A, f, B, g)
    out = {"scenario": sc.name, "hausdorff": h, "cloud_hausdorff": gg.hausdorff(A, B),
           "directed": [float(np.max(dab, initial=0)), float(np.max(dba, initial=0))],
           "samples": [len(A), len(B)]}
    _emit(cfg, {"hausdorff.json": _dump(out)}, "hausdorff.json")
    return 0


def cmd_indet(args) -> int:
    sc = load(args.scenario)
    cfg = _config(args)
    f = sc.map()
    ind = mp.indeterminacy_locus(f)
    pts = []
    for p in ind.points:
        item = {"point": cv._cvec(mp.canonical(p.coords))}
        if p.exact is not None:
            item["exact"] = [mp._fmt_exact(c) for c in p.exact]
        pts.append(item)
    out = {"map": f.to_json(), "exact": ind.exact, "points": pts,
           "max_residual": float(np.max(mp.residuals(f, np.array([p.coords for p in ind.points])), initial=0.0))
           if ind.points else 0.0}
    _emit(cfg, {"indet.json": _dump(out)}, "indet.json")
    return 0


def cmd_iterate(args) -> int:
    sc = load(args.scenario)
    cfg = _config(args)
    g, trace = mp.iterate(sc.map(), args.k)
    out = {"map": sc.map().to_json(), "k": args.k, "iterate": g.to_json(), "degree_trace": trace,
           "is_identity": g == mp.identity(g.source.dim) if g.source.kind == "projective" else False}
    _emit(cfg, {"iterate.json": _dump(out)}, "iterate.json")
    return 0


def cmd_fatou(args) -> int:
    sc = load(args.scenario)
    cfg = _config(args)
    fs = sc.section("fatou")
    sched = sc.schedule or list(range(10, 34, 3))
    excl = cfg.exclude_indeterminacy or fs.get("exclude_indeterminacy", False)
    grid = dy.fatou_scan(sc.map(), sched, resolution=fs.get("resolution", 64), spacing=fs.get("spacing", 1 / 32),
                         ball_radius=fs.get("ball_radius"), chart=fs.get("chart", 0),
                         tol=cfg.tol or 2e-2, exclude_indeterminacy=excl, seed=cfg.seed or 0)
    files: dict = {"fatou.json": _dump(grid.to_json()), "fatou.csv": grid.to_csv(), "fatou.pgm": grid.to_pgm()}
    if grid.counts()[dy.IN_W]:
        try:
            files["dichotomy.json"] = _dump(dy.classify_dichotomy(sc.map(), grid, sched, seed=cfg.seed or 0).to_json())
        except dy.CurveFitFailed as exc:
            files["dichotomy.json"] = _dump({"error": str(exc)})
    _emit(cfg, files, "fatou.json")
    return 0


def cmd_reproduce(args) -> int:
    cfg = _config(args)
    outcome = rp.run(args.example, seed=cfg.seed or 0, workers=cfg.workers)
    _emit(cfg, {f"{args.example}.json": outcome.dumps()}, f"{args.example}.json")
    for c in outcome.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {args.example}: {c['check']}", file=sys.stderr)
    return 0 if outcome.passed else 1


def cmd_list_examples(args) -> int:
    for name, fn in rp.CATALOGUE.items():
        doc = (fn.__doc__ or "").strip().splitlines()
        print(name + (f"  {doc[0]}" if doc else ""))
    print("bundled scenarios: " + ", ".join(builtin_names()))
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="merodyn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", "--map", dest="scenario", required=True,
                            help="scenario JSON file or the name of a bundled scenario")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--workers", type=int, help="worker threads (default: $MEROMAP_WORKERS or 1)")
        sp.add_argument("--out", help="directory for report files")
        sp.add_argument("--tol", type=float)

    sp = sub.add_parser("converge", help="run a convergence test")
    common(sp)
    sp.add_argument("--notion", choices=NOTIONS)
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("volume", help="graph volume estimate")
    common(sp)
    sp.add_argument("--normalization", choices=["normalized", "raw"])
    sp.add_argument("--term", choices=["total", "base", "pullback", "mixed", "top"],
                    help="report one term of the volume breakdown")
    sp.set_defaults(func=cmd_volume)

    sp = sub.add_parser("hausdorff", help="Hausdorff distance between two graphs")
    common(sp)
    sp.set_defaults(func=cmd_hausdorff)

    sp = sub.add_parser("indet", help="indeterminacy points of a map")
    common(sp)
    sp.set_defaults(func=cmd_indet)

    sp = sub.add_parser("iterate", help="exact iterate of a self-map")
    common(sp)
    sp.add_argument("-k", type=int, required=True)
    sp.set_defaults(func=cmd_iterate)

    sp = sub.add_parser("fatou", help="Fatou grid of a self-map of CP^2")
    common(sp)
    sp.add_argument("--exclude-indeterminacy", action="store_true",
                    help="treat cells meeting indeterminacy or its preimage curves as undecided")
    sp.set_defaults(func=cmd_fatou)

    sp = sub.add_parser("reproduce", help="run a scripted example and check its outcome")
    sp.add_argument("example")
    common(sp, scenario=False)
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("list-examples", help="list reproducible examples")
    sp.set_defaults(func=cmd_list_examples)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioParseError, rp.UnknownExample) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE
    except MerodynError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EX_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
