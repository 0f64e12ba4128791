"""JSON scenario files: maps, families, regions, schedules and run settings."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema

from . import converge as cv
from . import graphgeom as gg
from . import maps as mp
from .exactalg import MerodynError
from .families import ExplicitFamily, IterateFamily, SequenceFamily, partial_sums


class ScenarioParseError(MerodynError, ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None, origin: str = ""):
        self.line, self.column, self.origin = line, column, origin
        where = origin or "<scenario>"
        if line is not None:
            where += f":{line}:{column}"
        super().__init__(f"{where}: {message}")


_complex = {"oneOf": [{"type": "number"},
                      {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}
_point = {"type": "array", "items": _complex, "minItems": 1}
_source = {
    "type": "object", "additionalProperties": False, "required": ["kind", "dim"],
    "properties": {"kind": {"enum": ["affine", "projective"]}, "dim": {"type": "integer", "minimum": 1}},
}
_map = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["builtin"],
         "properties": {"builtin": {"enum": ["cremona", "identity1", "identity2"]}, "name": {"type": "string"}}},
        {"type": "object", "additionalProperties": False, "required": ["components", "source"],
         "properties": {"components": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                        "source": _source, "name": {"type": "string"}}},
    ]
}
_region = {
    "type": "object", "additionalProperties": False, "required": ["kind", "center"],
    "properties": {
        "kind": {"enum": ["polydisc", "ball", "hartogs"]},
        "center": _point,
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "inner": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "r": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "chart": {"type": "integer", "minimum": 0},
        "excluded": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["center", "radius"],
            "properties": {"center": _point, "radius": {"type": "number", "exclusiveMinimum": 0}}}},
    },
}
_family = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["kind", "factors"],
         "properties": {"kind": {"const": "sequence"}, "name": {"type": "string"},
                        "factors": {"type": "array", "items": _map, "minItems": 1},
                        "limit": {"type": "array", "items": _map, "minItems": 1}}},
        {"type": "object", "additionalProperties": False, "required": ["kind", "map"],
         "properties": {"kind": {"const": "iterate"}, "name": {"type": "string"}, "map": _map,
                        "bit_budget": {"type": "number", "exclusiveMinimum": 0}}},
        {"type": "object", "additionalProperties": False, "required": ["kind", "term", "terms"],
         "properties": {"kind": {"const": "series"}, "name": {"type": "string"}, "term": _map,
                        "terms": {"type": "integer", "minimum": 1}}},
    ]
}
_verdict = {"enum": [cv.CONVERGES, cv.DIVERGES, cv.UNDECIDED]}
NOTIONS = ("strong", "weak", "gamma", "stabilized", "def1", "def2")

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "name"],
    "properties": {
        "schema": {"const": 1},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "map": _map,
        "pair": {"type": "array", "items": _map, "minItems": 2, "maxItems": 2},
        "family": _family,
        "region": _region,
        "schedule": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "notion": {"enum": list(NOTIONS)},
        "settings": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "clearance": {"type": "number", "exclusiveMinimum": 0},
                "ring_radius": {"type": "number", "exclusiveMinimum": 0},
                "ring_directions": {"type": "integer", "minimum": 1},
                "tail": {"type": "integer", "minimum": 2},
                "slack": {"type": "number", "minimum": 0},
                "max_points": {"type": "integer", "minimum": 0},
                "cluster_radius": {"type": "number", "exclusiveMinimum": 0},
                "exclusion_radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "fiber_diam_tol": {"type": "number", "exclusiveMinimum": 0},
                "metric": {"type": "object", "additionalProperties": False,
                           "properties": {"source_scale": {"type": "number", "exclusiveMinimum": 0},
                                          "target_scale": {"type": "number", "exclusiveMinimum": 0}}},
            },
        },
        "volume": {
            "type": "object", "additionalProperties": False,
            "properties": {"samples": {"type": "integer", "minimum": 1},
                           "density_ceiling": {"type": "number", "exclusiveMinimum": 0},
                           "focus": {"type": "array", "items": _point},
                           "normalization": {"enum": ["normalized", "raw"]},
                           "term": {"enum": ["total", "base", "pullback", "mixed", "top"]}},
        },
        "fatou": {
            "type": "object", "additionalProperties": False,
            "properties": {"resolution": {"type": "integer", "minimum": 1},
                           "spacing": {"type": "number", "exclusiveMinimum": 0},
                           "ball_radius": {"type": "number", "exclusiveMinimum": 0},
                           "chart": {"type": "integer", "minimum": 0, "maximum": 2},
                           "exclude_indeterminacy": {"type": "boolean"}},
        },
        "expect": {"type": "object", "additionalProperties": False,
                   "properties": {k: _verdict for k in NOTIONS}},
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _cx(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _line_col(text: str, path) -> tuple[int | None, int | None]:
    """Best-effort location of a JSON path: the first occurrence of its last key."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None, None
    needle = json.dumps(keys[-1])
    pos = text.find(needle + ":")
    if pos < 0:
        pos = text.find(needle)
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1) + 1


@dataclass
class Scenario:
    name: str
    data: dict = field(repr=False)
    origin: str = ""

    # ----------------------------------------------------------- builders

    @staticmethod
    def build_map(spec: dict) -> mp.RationalMap:
        if "builtin" in spec:
            b = spec["builtin"]
            m = mp.cremona() if b == "cremona" else mp.identity(int(b[-1]))
            return m if "name" not in spec else mp.RationalMap(m.components, m.source, spec["name"])
        src = mp.Source(spec["source"]["kind"], spec["source"]["dim"])
        return mp.from_text(spec["components"], src, spec.get("name", ""))

    @staticmethod
    def build_map_family(spec: dict) -> mp.MapFamily:
        if "builtin" in spec:
            raise ScenarioParseError("family factors must be given by components")
        src = mp.Source(spec["source"]["kind"], spec["source"]["dim"])
        return mp.MapFamily(tuple(spec["components"]), src, spec.get("name", ""))

    def map(self) -> mp.RationalMap:
        if "map" not in self.data:
            raise ScenarioParseError(f"scenario {self.name!r} defines no map", origin=self.origin)
        return self.build_map(self.data["map"])

    def pair(self) -> tuple[mp.RationalMap, mp.RationalMap]:
        if "pair" not in self.data:
            raise ScenarioParseError(f"scenario {self.name!r} defines no map pair", origin=self.origin)
        a, b = self.data["pair"]
        return self.build_map(a), self.build_map(b)

    def family(self):
        spec = self.data.get("family")
        if spec is None:
            if "map" in self.data:
                return IterateFamily(self.map(), self.name)
            raise ScenarioParseError(f"scenario {self.name!r} defines no family", origin=self.origin)
        name = spec.get("name", self.name)
        if spec["kind"] == "iterate":
            kw = {"bit_budget": spec["bit_budget"]} if "bit_budget" in spec else {}
            return IterateFamily(self.build_map(spec["map"]), name, **kw)
        if spec["kind"] == "series":
            term = self.build_map_family(spec["term"])
            fam = partial_sums([term.instantiate(k) for k in range(1, spec["terms"] + 1)])
            return ExplicitFamily(fam.members, name)
        factors = tuple(self.build_map_family(f) for f in spec["factors"])
        limit = tuple(self.build_map(m) for m in spec["limit"]) if "limit" in spec else None
        return SequenceFamily(factors, name, limit)

    def limit(self):
        spec = self.data.get("family", {})
        return tuple(self.build_map(m) for m in spec["limit"]) if "limit" in spec else None

    def region(self) -> gg.CompactRegion:
        spec = self.data.get("region")
        if spec is None:
            raise ScenarioParseError(f"scenario {self.name!r} defines no region", origin=self.origin)
        center = tuple(_cx(c) for c in spec["center"])
        excluded = tuple((tuple(_cx(c) for c in e["center"]), e["radius"]) for e in spec.get("excluded", []))
        return gg.CompactRegion(spec["kind"], center, tuple(spec.get("radii", ())), tuple(spec.get("inner", ())),
                                spec.get("radius", 0.0), spec.get("r", 0.0), spec.get("chart", 0), excluded)

    @property
    def schedule(self) -> list[int]:
        return list(self.data.get("schedule", []))

    @property
    def notion(self) -> str | None:
        return self.data.get("notion")

    @property
    def expect(self) -> dict:
        return dict(self.data.get("expect", {}))

    def section(self, key: str) -> dict:
        return dict(self.data.get(key, {}))

    def settings(self, **overrides) -> cv.Settings:
        s = dict(self.data.get("settings", {}))
        for k, v in overrides.items():
            if v is not None:
                s[k] = v
        if "metric" in s:
            s["metric"] = gg.MetricSpec(**s["metric"])
        if "exclusion_radii" in s:
            s["exclusion_radii"] = tuple(s["exclusion_radii"])
        return replace(cv.DEFAULT, **s)

    # -------------------------------------------------------- serialization

    def to_json(self) -> dict:
        return json.loads(json.dumps(self.data))

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.name == other.name and self.data == other.data


def validate(data, text: str = "", origin: str = "") -> None:
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        if e.validator == "additionalProperties" and isinstance(e.instance, dict):
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            path = path + extra[:1]
        line, col = _line_col(text, path) if text else (None, None)
        where = "/".join(map(str, path)) or "<root>"
        raise ScenarioParseError(f"at {where}: {e.message}", line, col, origin)


def loads(text: str, origin: str = "") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(exc.msg, exc.lineno, exc.colno, origin) from None
    validate(data, text, origin)
    sc = Scenario(data["name"], data, origin)
    try:
        # build eagerly so expression errors surface as parse errors
        for key, fn in (("map", sc.map), ("pair", sc.pair), ("family", sc.family), ("region", sc.region)):
            if key in data:
                fn()
    except ScenarioParseError:
        raise
    except (MerodynError, ValueError) as exc:
        raise ScenarioParseError(str(exc), origin=origin) from None
    return sc


def from_dict(data: dict) -> Scenario:
    return loads(json.dumps(data))


def builtin_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__package__).joinpath("scenarios").iterdir()
                  if p.name.endswith(".json"))


def load(path: str | os.PathLike) -> Scenario:
    """Read a scenario file; a bare name resolves to a bundled scenario."""
    p = Path(path)
    if not p.exists():
        name = p.name[:-5] if p.name.endswith(".json") else p.name
        if p.parent == Path(".") and name in builtin_names():
            res = resources.files(__package__).joinpath("scenarios", name + ".json")
            return loads(res.read_text(), name + ".json")
        raise ScenarioParseError("no such scenario file", origin=str(path))
    return loads(p.read_text(), str(path))


@dataclass(frozen=True)
class RunConfig:
    seed: int | None = None
    samples: int | None = None
    tol: float | None = None
    workers: int = 1
    out: str | None = None
    exclude_indeterminacy: bool = False
    volume_normalization: str = "normalized"

    @staticmethod
    def default_workers() -> int:
        try:
            return max(1, int(os.environ.get("MEROMAP_WORKERS", "1")))
        except ValueError:
            return 1

    def settings(self, sc: Scenario) -> cv.Settings:
        return sc.settings(seed=self.seed, samples=self.samples, tol=self.tol, workers=self.workers)
