"""Experiment configuration: an INI file with a fixed schema.

Every section and key is optional unless a subcommand needs it; defaults are
filled on parsing. Validation collects all problems, each with the line it
refers to, before anything runs. ``serialize`` writes the canonical form
(fixed section and key order, canonical number formatting), so
``serialize(parse(text))`` is the normalised text and parsing it again gives
an identical configuration.

Value syntax: numbers as usual, booleans ``true``/``false``, lists separated
by whitespace, point lists as ``x y; x y; ...``.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """One or more validation problems; ``errors`` holds ``(line, message)`` pairs."""

    def __init__(self, errors):
        self.errors = sorted(errors, key=lambda e: (e[0] or 0, e[1]))
        super().__init__("\n".join(self.format()))

    def format(self):
        return [f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors]


# kinds: float, int, bool, str, floats, ints, points, words
_SCHEMA = {
    "run": [("seed", "int", 0), ("output", "str", "out"), ("threads", "int", 1)],
    "domain": [("vertices", "points", [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
               ("tags", "words", ["D", "N", "N", "N"]),
               ("observation", "ints", [1, 2, 3])],
    "material": [("lambda", "float", 1.0), ("mu", "float", 1.0)],
    "fault": [("closed", "bool", True),
              ("vertices", "points", [[0.35, 0.35], [0.65, 0.35], [0.65, 0.65], [0.35, 0.65]]),
              ("clearance", "float", None)],
    "jumps": [("f", "points", None), ("g", "points", None)],
    "mesh": [("h", "float", 0.05), ("min_angle", "float", 28.0), ("corner_grading", "int", 5)],
    "solver": [("kind", "str", "direct"), ("tol", "float", 1e-12)],
    "probe": [("source", "str", "fem"), ("corner", "int", 0), ("radius", "float", None),
              ("theta_m", "float", None), ("theta_M", "float", None),
              ("f_plus", "floats", [0.0, 0.0]), ("f_minus", "floats", [0.0, 0.0]),
              ("g_plus", "floats", [0.0, 0.0]), ("g_minus", "floats", [0.0, 0.0]),
              ("zero_gradient", "bool", False),
              ("s_min", "float", 5.0), ("s_max", "float", 80.0), ("s_count", "int", 12),
              ("tol", "float", None), ("relation_tol", "float", None)],
    "reduce3d": [("edge_data", "str", None),
                 ("theta_m", "float", None), ("theta_M", "float", None), ("radius", "float", 0.5),
                 ("f_plus", "floats", [0.0, 0.0, 0.0]), ("f_minus", "floats", [0.0, 0.0, 0.0]),
                 ("g_plus", "floats", [0.0, 0.0, 0.0]), ("g_minus", "floats", [0.0, 0.0, 0.0]),
                 ("zero_gradient", "bool", True),
                 ("profile_center", "float", 0.0), ("profile_half_width", "float", 1.0),
                 ("slab_half_width", "float", 2.0), ("coefficient", "str", "mu"),
                 ("tol", "float", 1e-4)],
    "inversion": [("measured", "str", None), ("initial", "points", None), ("initial_scale", "float", 1.2),
                  ("truth_refinement", "int", 2), ("noise", "float", 0.0), ("n_samples", "int", 64),
                  ("max_iter", "int", 60), ("step", "float", 0.04), ("min_step", "float", 0.0025),
                  ("ridge", "float", 1e-2), ("rcond", "float", 1e-8), ("workers", "int", 1)],
    "lemmas": [("s_values", "floats", [5.0, 10.0, 20.0]),
               ("openings", "floats", [math.pi / 6, math.pi / 2, 3 * math.pi / 4]),
               ("center", "float", 0.3), ("h", "float", 0.5), ("tol", "float", 1e-8)],
}

SECTIONS = tuple(_SCHEMA)


def _fmt_float(x):
    return repr(float(x))


def _format(kind, value):
    if value is None:
        return None
    if kind == "float":
        return _fmt_float(value)
    if kind in ("int", "str"):
        return str(value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "floats":
        return " ".join(_fmt_float(v) for v in value)
    if kind == "ints":
        return " ".join(str(int(v)) for v in value)
    if kind == "words":
        return " ".join(value)
    if kind == "points":
        return "; ".join(" ".join(_fmt_float(c) for c in p) for p in value)
    raise AssertionError(kind)


def _convert(kind, text):
    text = text.strip()
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if kind == "int":
        return int(text)
    if kind == "str":
        return text
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "floats":
        return [float(t) for t in text.split()]
    if kind == "ints":
        return [int(t) for t in text.split()]
    if kind == "words":
        return text.split()
    if kind == "points":
        pts = [[float(t) for t in chunk.split()] for chunk in text.split(";") if chunk.strip()]
        if len({len(p) for p in pts}) > 1:
            raise ValueError("points must all have the same number of coordinates")
        return pts
    raise AssertionError(kind)


def _line_map(text):
    """``(section, key) -> line`` and ``section -> line`` for error messages."""
    lines = {}
    section = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]$", line)
        if m:
            section = m.group(1).strip()
            lines.setdefault(section, i)
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), i)
    return lines


@dataclass
class ExperimentConfig:
    """Parsed configuration: ``values[section][key]`` with defaults filled."""

    values: dict
    source: str = ""
    lines: dict = field(default_factory=dict, repr=False, compare=False)

    def __getitem__(self, section):
        return self.values[section]

    def line(self, section, key=None):
        return self.lines.get((section, key)) if key else self.lines.get(section)

    # -- builders ----------------------------------------------------------
    def domain(self):
        from .geometry import DomainPolygon
        d = self["domain"]
        return DomainPolygon(np.array(d["vertices"]), tuple(d["tags"]), tuple(d["observation"]))

    def params(self):
        from .elastostatics import LameParams
        return LameParams(self["material"]["lambda"], self["material"]["mu"])

    def fault(self):
        from .geometry import FaultGeometry
        f = self["fault"]
        return FaultGeometry(np.array(f["vertices"]), closed=f["closed"])

    def closure(self):
        from .geometry import close_open_fault
        fault = self.fault()
        if fault.closed:
            return fault
        return close_open_fault(fault, self.domain(), self["fault"]["clearance"])

    def hypothesis(self):
        from .inversion import FaultHypothesis
        f = self["fault"]
        m = len(f["vertices"]) if f["closed"] else len(f["vertices"]) - 1
        fj = self["jumps"]["f"] if self["jumps"]["f"] is not None else np.zeros((m, 2))
        gj = self["jumps"]["g"] if self["jumps"]["g"] is not None else np.zeros((m, 2))
        return FaultHypothesis(np.array(f["vertices"]), fj, gj, closed=f["closed"])

    def jumps(self):
        return self.hypothesis().jumps()

    def scene(self):
        from .inversion import Scene
        return Scene(self.domain(), self.params(), self["mesh"]["h"], self["inversion"]["n_samples"],
                     self["mesh"]["min_angle"], self["mesh"]["corner_grading"],
                     self["solver"]["kind"], self["solver"]["tol"])

    def s_grid(self):
        p = self["probe"]
        return tuple(np.geomspace(p["s_min"], p["s_max"], p["s_count"]))

    def inversion_config(self, workers=None):
        from .inversion import InversionConfig
        i = self["inversion"]
        return InversionConfig(max_iter=i["max_iter"], step=i["step"], min_step=i["min_step"],
                               ridge=i["ridge"], rcond=i["rcond"],
                               workers=workers if workers is not None else i["workers"])

    def hash(self):
        return hashlib.sha256(serialize(self).encode()).hexdigest()


def parse_config_text(text, source="<string>"):
    lines = _line_map(text)
    errors = []
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        ln = getattr(exc, "lineno", None)
        raise ConfigError([(ln, f"syntax error: {exc.message if hasattr(exc, 'message') else exc}")])
    values = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            errors.append((lines.get(sec), f"unknown section [{sec}]"))
    for sec, keys in _SCHEMA.items():
        known = {k for k, _, _ in keys}
        vals = {}
        if cp.has_section(sec):
            for k in cp[sec]:
                if k not in known:
                    errors.append((lines.get((sec, k)), f"unknown key '{k}' in [{sec}]"))
        for key, kind, default in keys:
            if cp.has_section(sec) and key in cp[sec]:
                try:
                    vals[key] = _convert(kind, cp[sec][key])
                except ValueError as exc:
                    errors.append((lines.get((sec, key)), f"[{sec}] {key}: {exc}"))
                    vals[key] = default
            else:
                vals[key] = default
        values[sec] = vals
    cfg = ExperimentConfig(values, source, lines)
    errors += validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path):
    """Read and validate a configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([(None, f"cannot read {path}: {exc}")])
    return parse_config_text(text, str(path))


def serialize(cfg):
    """Canonical text of a configuration (keys with value ``None`` omitted)."""
    out = []
    for sec, keys in _SCHEMA.items():
        out.append(f"[{sec}]")
        for key, kind, _ in keys:
            text = _format(kind, cfg.values[sec][key])
            if text is not None:
                out.append(f"{key} = {text}")
        out.append("")
    return "\n".join(out)


def normalize(text):
    return serialize(parse_config_text(text))


# ---------------------------------------------------------------------------
# cross-checks
# ---------------------------------------------------------------------------

def validate(cfg):
    """All invariant violations as ``(line, message)`` pairs."""
    from .geometry import GeometryError

    errs = []
    L = cfg.line
    d = cfg["domain"]
    nv = len(d["vertices"])
    if any(len(p) != 2 for p in d["vertices"]):
        errs.append((L("domain", "vertices"), "[domain] vertices must be 2D points"))
    if len(d["tags"]) != nv:
        errs.append((L("domain", "tags"), f"[domain] needs {nv} tags (one per edge), got {len(d['tags'])}"))
    bad_tags = [t for t in d["tags"] if t.upper() not in ("D", "N")]
    if bad_tags:
        errs.append((L("domain", "tags"), f"[domain] unknown boundary tags {bad_tags}; use D or N"))
    for i in d["observation"]:
        if not 0 <= i < nv:
            errs.append((L("domain", "observation"), f"[domain] observation edge {i} does not exist"))
        elif i < len(d["tags"]) and d["tags"][i].upper() != "N":
            errs.append((L("domain", "observation"), f"[domain] observation edge {i} is not tagged N"))
    domain = None
    if not errs:
        try:
            domain = cfg.domain()
        except GeometryError as exc:
            errs.append((L("domain", "vertices"), f"[domain] {exc}"))

    m = cfg["material"]
    if not m["mu"] > 0:
        errs.append((L("material", "mu"), "[material] strong convexity needs mu > 0"))
    if not m["mu"] + m["lambda"] > 0:
        errs.append((L("material", "lambda"), "[material] strong convexity needs 2 mu + 2 lambda > 0"))

    f = cfg["fault"]
    fault = None
    if any(len(p) != 2 for p in f["vertices"]):
        errs.append((L("fault", "vertices"), "[fault] vertices must be 2D points"))
    else:
        try:
            fault = cfg.fault()
            if domain is not None:
                outside = [i for i, p in enumerate(fault.vertices) if not domain.contains(p)]
                if outside:
                    errs.append((L("fault", "vertices"), f"[fault] vertices {outside} lie outside the domain"))
                elif not fault.closed:
                    cfg.closure()
        except GeometryError as exc:
            errs.append((L("fault", "vertices"), f"[fault] {exc}"))
    nseg = (len(f["vertices"]) if f["closed"] else len(f["vertices"]) - 1)
    for key in ("f", "g"):
        val = cfg["jumps"][key]
        if val is None:
            continue
        if any(len(p) != 2 for p in val):
            errs.append((L("jumps", key), f"[jumps] {key} entries must be 2-vectors"))
        elif len(val) != nseg:
            errs.append((L("jumps", key), f"[jumps] {key} needs {nseg} vectors (one per fault segment), got {len(val)}"))

    me = cfg["mesh"]
    if not me["h"] > 0:
        errs.append((L("mesh", "h"), "[mesh] h must be positive"))
    elif fault is not None and me["h"] >= fault.segment_lengths().min():
        errs.append((L("mesh", "h"), "[mesh] h must be smaller than the shortest fault segment"))
    if not 0 < me["min_angle"] < 34:
        errs.append((L("mesh", "min_angle"), "[mesh] min_angle must lie in (0, 34) degrees"))
    if me["corner_grading"] < 0:
        errs.append((L("mesh", "corner_grading"), "[mesh] corner_grading must be >= 0"))
    s = cfg["solver"]
    if s["kind"] not in ("direct", "cg"):
        errs.append((L("solver", "kind"), "[solver] kind must be 'direct' or 'cg'"))
    if not s["tol"] > 0:
        errs.append((L("solver", "tol"), "[solver] tol must be positive"))

    p = cfg["probe"]
    if p["source"] not in ("fem", "constant"):
        errs.append((L("probe", "source"), "[probe] source must be 'fem' or 'constant'"))
    if p["source"] == "fem" and fault is not None and p["corner"] not in fault.corner_indices:
        errs.append((L("probe", "corner"), f"[probe] corner {p['corner']} is not a fault corner "
                                           f"(valid: {fault.corner_indices})"))
    if p["source"] == "constant":
        errs += _sector_errors(cfg, "probe", p["theta_m"], p["theta_M"], p["radius"], 2)
    if not 0 < p["s_min"] < p["s_max"] or p["s_count"] < 6:
        errs.append((L("probe", "s_min"), "[probe] need 0 < s_min < s_max and s_count >= 6"))

    r = cfg["reduce3d"]
    if r["edge_data"] is None:
        errs += _sector_errors(cfg, "reduce3d", r["theta_m"], r["theta_M"], r["radius"], 3, required=False)
    if r["coefficient"] not in ("mu", "lambda"):
        errs.append((L("reduce3d", "coefficient"), "[reduce3d] coefficient must be 'mu' or 'lambda'"))
    lo, hi = r["profile_center"] - r["profile_half_width"], r["profile_center"] + r["profile_half_width"]
    if not r["profile_half_width"] > 0 or not (-r["slab_half_width"] < lo and hi < r["slab_half_width"]):
        errs.append((L("reduce3d", "profile_half_width"),
                     "[reduce3d] profile support must lie strictly inside the slab"))

    inv = cfg["inversion"]
    if inv["initial"] is not None and len(inv["initial"]) != len(f["vertices"]):
        errs.append((L("inversion", "initial"), "[inversion] initial needs as many vertices as [fault]"))
    if not inv["initial_scale"] > 0:
        errs.append((L("inversion", "initial_scale"), "[inversion] initial_scale must be positive"))
    if inv["truth_refinement"] < 1:
        errs.append((L("inversion", "truth_refinement"), "[inversion] truth_refinement must be >= 1"))
    if inv["noise"] < 0:
        errs.append((L("inversion", "noise"), "[inversion] noise must be >= 0"))
    for key in ("max_iter", "n_samples", "workers"):
        if inv[key] < 1:
            errs.append((L("inversion", key), f"[inversion] {key} must be >= 1"))
    if not 0 < inv["min_step"] <= inv["step"]:
        errs.append((L("inversion", "step"), "[inversion] need 0 < min_step <= step"))
    if inv["ridge"] < 0 or not 0 < inv["rcond"] < 1:
        errs.append((L("inversion", "ridge"), "[inversion] need ridge >= 0 and 0 < rcond < 1"))

    lem = cfg["lemmas"]
    if not lem["s_values"] or any(v <= 0 for v in lem["s_values"]):
        errs.append((L("lemmas", "s_values"), "[lemmas] s_values must be positive"))
    if any(not 0 < o < math.pi for o in lem["openings"]):
        errs.append((L("lemmas", "openings"), "[lemmas] sector condition: openings must lie in (0, pi)"))
    if not lem["h"] > 0 or not lem["tol"] > 0:
        errs.append((L("lemmas", "h"), "[lemmas] h and tol must be positive"))
    if cfg["run"]["threads"] < 1:
        errs.append((L("run", "threads"), "[run] threads must be >= 1"))
    if cfg["run"]["seed"] < 0:
        errs.append((L("run", "seed"), "[run] seed must be a nonnegative integer"))
    return errs


def _sector_errors(cfg, sec, theta_m, theta_M, radius, dim, required=True):
    L = cfg.line
    errs = []
    if theta_m is None or theta_M is None:
        if required:
            errs.append((L(sec), f"[{sec}] theta_m and theta_M are required for constructed data"))
        return errs
    opening = theta_M - theta_m
    if not 0 < opening < math.pi:
        errs.append((L(sec, "theta_M") or L(sec, "theta_m"),
                     f"[{sec}] sector condition violated: theta_M - theta_m = {opening:.6g} "
                     "must lie strictly between 0 and pi"))
    if radius is None or not radius > 0:
        errs.append((L(sec, "radius") or L(sec), f"[{sec}] radius must be positive"))
    for key in ("f_plus", "f_minus", "g_plus", "g_minus"):
        if len(cfg[sec][key]) != dim:
            errs.append((L(sec, key), f"[{sec}] {key} needs {dim} components"))
    return errs
