"""Scenario configuration: a sectioned ``key = value`` text format.

Values are JSON (numbers, booleans, lists, objects, quoted strings); a bare
word such as ``gaussian`` is read as a string.  ``#`` starts a comment.
Every problem in a file is collected and reported together, each with its
``[section].key`` path and line number.
"""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable

from .potentials import FAMILIES

SEED_LIKE = re.compile(r"seed|random|rng", re.IGNORECASE)
_BARE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.+-]*$")
_SECTION = re.compile(r"^\[([A-Za-z_][A-Za-z0-9_-]*)\]$")
_REQUIRED = object()


@dataclass
class ConfigIssue:
    path: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f" (line {self.line})" if self.line is not None else ""
        return f"{self.path}: {self.message}{where}"


class ConfigError(ValueError):
    def __init__(self, issues: list[ConfigIssue]):
        self.issues = issues
        super().__init__("invalid configuration:\n" + "\n".join(f"  {i}" for i in issues))


# -- value checkers ----------------------------------------------------------
# each returns (normalised value, error message or None)

Check = Callable[[Any], tuple[Any, str | None]]


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def number(lo=None, hi=None, strict_lo=False) -> Check:
    def check(v):
        if not _is_num(v):
            return v, f"expected a number, got {json.dumps(v)}"
        v = float(v)
        if lo is not None and (v <= lo if strict_lo else v < lo):
            return v, f"must be {'>' if strict_lo else '>='} {lo}, got {v}"
        if hi is not None and v > hi:
            return v, f"must be <= {hi}, got {v}"
        return v, None
    return check


def integer(lo=None, hi=None) -> Check:
    def check(v):
        if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
            return v, f"expected an integer, got {json.dumps(v)}"
        v = int(v)
        if lo is not None and v < lo:
            return v, f"must be >= {lo}, got {v}"
        if hi is not None and v > hi:
            return v, f"must be <= {hi}, got {v}"
        return v, None
    return check


def boolean(v):
    if not isinstance(v, bool):
        return v, f"expected true or false, got {json.dumps(v)}"
    return v, None


def text(v):
    if not isinstance(v, str):
        return v, f"expected a string, got {json.dumps(v)}"
    return v, None


def choice(*options) -> Check:
    def check(v):
        if v not in options:
            return v, f"must be one of {', '.join(map(str, options))}; got {json.dumps(v)}"
        return v, None
    return check


def optional(inner: Check) -> Check:
    def check(v):
        return (None, None) if v is None else inner(v)
    return check


def vector(item: Check, length: int | None = None, min_length: int = 1) -> Check:
    def check(v):
        if _is_num(v) and length is None:
            v = [v]
        if not isinstance(v, list):
            return v, f"expected a list, got {json.dumps(v)}"
        if length is not None and len(v) != length:
            return v, f"expected {length} entries, got {len(v)}"
        if len(v) < min_length:
            return v, f"expected at least {min_length} entries"
        out = []
        for k, x in enumerate(v):
            x, err = item(x)
            if err:
                return v, f"entry {k}: {err}"
            out.append(x)
        return out, None
    return check


def power_of_two_list(v):
    v, err = vector(integer(lo=2))(v)
    if err:
        return v, err
    bad = [n for n in v if n & (n - 1)]
    if bad:
        return v, f"points must be powers of two for the FFT; {bad[0]} is not"
    return v, None


def points_list(v):
    v, err = vector(vector(number(), min_length=1))(v)
    return v, err


def potential_spec(v):
    if v is None:
        return None, None
    if not isinstance(v, dict) or v.get("family") not in FAMILIES:
        return v, f"expected an object with a family in {', '.join(FAMILIES)}"
    return v, None


def threshold(v):
    if _is_num(v):
        return float(v), None
    if isinstance(v, list) and len(v) == 2 and all(_is_num(x) for x in v) and v[0] <= v[1]:
        return [float(v[0]), float(v[1])], None
    return v, "expected a maximum or a [low, high] interval"


def complex_weights(n: int) -> Check:
    def check(v):
        if not isinstance(v, list) or len(v) != n:
            return v, f"expected {n} weights"
        out = []
        for x in v:
            if _is_num(x):
                out.append([float(x), 0.0])
            elif isinstance(x, list) and len(x) == 2 and all(_is_num(y) for y in x):
                out.append([float(x[0]), float(x[1])])
            else:
                return v, "each weight is a number or a [re, im] pair"
        if not any(a or b for a, b in out):
            return v, "weights must not all be zero"
        return out, None
    return check


# -- schema ------------------------------------------------------------------

STAGES = ("currents", "hidden_phase", "trajectories", "zitterbewegung", "pauli", "pauli_compare", "classical")
CLASSICAL_BENCHMARKS = ("hyperbolic", "gyro", "fundamental", "hj")
FUNDAMENTAL_FIELDS = ("free", "E", "quadrupole", "gyroE")

# residual names that thresholds may refer to
RESIDUALS = (
    "norm_drift", "continuity_iota", "continuity_j0", "gordon", "spin_divergence", "flux_sum",
    "imag_upper", "imag_lower", "imag_sum",
    "phi_dominant", "phi_trivial", "phi_minority_oracle", "phi_constant_V",
    "normalization", "uncorrected_ratio", "v0_violations", "conservation_mismatch", "charge_residual",
    "trajectory_speed", "trajectory_velocity_error", "zitter_frequency_error",
    "pauli_norm_drift", "precession_error", "spreading_error", "coupled_gap", "pauli_ratio",
    "pauli_density_error",
    "hyperbolic_error", "gyro_error", "fundamental_order", "fundamental_order_max", "hj_relativistic", "hj_nonrelativistic",
)

SCHEMA: dict[str, dict[str, tuple[Check, Any]]] = {
    "run": {
        "name": (text, _REQUIRED),
        "description": (text, ""),
        "budget_seconds": (number(lo=0, strict_lo=True), 120.0),
    },
    "grid": {
        "dim": (integer(1, 3), _REQUIRED),
        "extents": (vector(number(lo=0, strict_lo=True)), _REQUIRED),
        "points": (power_of_two_list, _REQUIRED),
    },
    "units": {
        "c": (number(lo=0, strict_lo=True), 1.0),
        "m": (number(lo=0, strict_lo=True), 1.0),
        "q": (number(), -1.0),
    },
    "potential": {
        "family": (choice(*FAMILIES), "zero"),
        "V0": (number(), None),
        "E": (vector(number(), 3), None),
        "H": (vector(number(), 3), None),
        "depth": (number(), None),
        "width": (number(lo=0, strict_lo=True), None),
        "center": (optional(vector(number())), None),
        "amplitude": (number(), None),
        "mode": (integer(lo=1), 1),
        "polarization": (integer(1, 2), 1),
    },
    "state": {
        "kind": (choice("gaussian", "plane-wave", "uniform"), _REQUIRED),
        "center": (optional(vector(number())), None),
        "width": (number(lo=0, strict_lo=True), 1.0),
        "p0": (optional(vector(number())), None),
        "weights": (complex_weights(4), [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]),
        "project": (optional(choice("positive", "negative")), None),
        "p": (optional(vector(number())), None),
        "branch": (choice("positive", "negative"), "positive"),
        "spin": (choice("up", "down"), "up"),
    },
    "evolve": {
        "dt": (number(lo=0, strict_lo=True), _REQUIRED),
        "nsteps": (integer(lo=0), _REQUIRED),
        "stride": (integer(lo=1), 1),
        "guard": (choice("warn", "refuse"), "refuse"),
    },
    "analysis": {name: (boolean, False) for name in STAGES},
    "currents": {
        "every": (integer(lo=1), 1),
    },
    "phi": {
        "floor": (optional(number(lo=0, strict_lo=True)), None),
        "substeps": (optional(integer(lo=1)), None),
        "cfl": (number(lo=0, hi=0.8, strict_lo=True), 0.8),
        "analysis_potential": (potential_spec, None),
        "conservation": (boolean, True),
        "uncorrected": (boolean, True),
    },
    "trajectories": {
        "components": (vector(integer(1, 4)), [1]),
        "starts": (points_list, _REQUIRED),
        "dt": (optional(number(lo=0, strict_lo=True)), None),
        "order": (choice("linear", "spectral"), "linear"),
    },
    "zitterbewegung": {
        "axis": (integer(0, 2), 0),
        "min_periods": (number(lo=0), 20.0),
    },
    "pauli": {
        "mode": (choice("linear", "coupled"), "linear"),
        "magnetic_sign": (choice(1, -1, 1.0, -1.0), 1.0),
        "dt": (number(lo=0, strict_lo=True), _REQUIRED),
        "nsteps": (integer(lo=1), _REQUIRED),
        "stride": (integer(lo=1), 1),
        "initial": (choice("uniform", "gaussian"), "gaussian"),
        "phi": (complex_weights(2), [[1.0, 0.0], [0.0, 0.0]]),
        "chi": (complex_weights(2), [[1.0, 0.0], [0.0, 0.0]]),
        "chi_scale": (number(lo=0), 0.0),
        "center": (optional(vector(number())), None),
        "width": (number(lo=0, strict_lo=True), 1.0),
        "observable": (choice("norms", "precession", "spreading", "coupled"), "norms"),
    },
    "pauli_compare": {
        "c_values": (vector(number(lo=0, strict_lo=True), min_length=2), [10.0, 20.0]),
        "dt": (number(lo=0, strict_lo=True), _REQUIRED),
        "duration": (number(lo=0, strict_lo=True), _REQUIRED),
        "snapshots": (integer(lo=1), 4),
    },
    "classical": {
        "benchmarks": (vector(choice(*CLASSICAL_BENCHMARKS)), list(CLASSICAL_BENCHMARKS)),
        "E": (number(), 0.5),
        "H": (number(), 1.0),
        "reach": (number(lo=0, strict_lo=True), 2.0),
        "speed": (number(lo=0, strict_lo=True), 0.5),
        "periods": (integer(lo=1), 5),
        "fields": (vector(choice(*FUNDAMENTAL_FIELDS)), list(FUNDAMENTAL_FIELDS)),
        "spacings": (vector(number(lo=0, strict_lo=True), min_length=2), [0.2, 0.1, 0.05]),
        "lattice": (integer(lo=5), 9),
        "dim": (integer(1, 3), 1),
    },
    "thresholds": {},
}

FAMILY_KEYS = {
    "zero": (),
    "constant-V": ("V0",),
    "constant-E": ("E",),
    "constant-B": ("H",),
    "scalar-well": ("depth", "width"),
    "plane-wave-field": ("amplitude",),
}
# stages whose sections have required keys; the others run on defaults
STAGE_SECTIONS = {"trajectories": "trajectories", "pauli": "pauli", "pauli_compare": "pauli_compare"}


@dataclass
class RunSpec:
    name: str
    sections: dict[str, dict[str, Any]]
    present: set[str] = field(default_factory=set)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.sections[section]

    def has(self, section: str) -> bool:
        return section in self.present

    def stage(self, name: str) -> bool:
        return bool(self.sections["analysis"].get(name))

    @property
    def thresholds(self) -> dict[str, Any]:
        return self.sections["thresholds"]

    @property
    def needs_dirac(self) -> bool:
        return self.has("state")

    def potential_spec(self) -> dict:
        p = self.sections["potential"]
        keys = FAMILY_KEYS[p["family"]] + (("center",) if p["family"] == "scalar-well" else ())
        keys += ("mode", "polarization") if p["family"] == "plane-wave-field" else ()
        return {"family": p["family"], **{k: p[k] for k in keys if p.get(k) is not None}}

    def to_dict(self) -> dict:
        return {"name": self.name, "present": sorted(self.present),
                "sections": copy.deepcopy(self.sections)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        return cls(d["name"], copy.deepcopy(d["sections"]), set(d["present"]))


def _value(raw: str):
    try:
        return json.loads(raw), None
    except json.JSONDecodeError:
        if _BARE.match(raw):
            return raw, None
        return None, f"cannot read value {raw!r} (JSON, or a bare word)"


def tokenize(text_: str) -> tuple[dict[str, dict[str, tuple[Any, int]]], list[ConfigIssue]]:
    """Raw ``{section: {key: (value, line)}}`` plus syntax issues."""
    issues: list[ConfigIssue] = []
    raw: dict[str, dict[str, tuple[Any, int]]] = {}
    headers: dict[str, int] = {}
    section = None
    for lineno, line in enumerate(text_.splitlines(), start=1):
        stripped = _strip_comment(line).strip()
        if not stripped:
            continue
        m = _SECTION.match(stripped)
        if m:
            section = m.group(1)
            if section in headers:
                issues.append(ConfigIssue(f"[{section}]", f"duplicate section (lines {headers[section]} and {lineno})",
                                          lineno))
            headers.setdefault(section, lineno)
            raw.setdefault(section, {})
            continue
        if "=" not in stripped:
            issues.append(ConfigIssue(f"[{section}]" if section else "<top>", f"expected 'key = value', got {stripped!r}",
                                      lineno))
            continue
        key, val = (s.strip() for s in stripped.split("=", 1))
        path = f"[{section}].{key}" if section else key
        if section is None:
            issues.append(ConfigIssue(path, "key outside any [section]", lineno))
            continue
        if not key:
            issues.append(ConfigIssue(f"[{section}]", "empty key", lineno))
            continue
        value, err = _value(val)
        if err:
            issues.append(ConfigIssue(path, err, lineno))
            continue
        if key in raw[section]:
            first = raw[section][key][1]
            issues.append(ConfigIssue(path, f"duplicate key (lines {first} and {lineno})", lineno))
            continue
        raw[section][key] = (value, lineno)
    return raw, issues


def _strip_comment(line: str) -> str:
    # '#' inside a quoted string is data
    in_str, esc = False, False
    for k, ch in enumerate(line):
        if esc:
            esc = False
        elif ch == "\\":
            esc = True
        elif ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:k]
    return line


def parse_config(text_: str) -> RunSpec:
    """Validate ``text_`` fully; raises :class:`ConfigError` listing every issue."""
    raw, issues = tokenize(text_)
    sections: dict[str, dict[str, Any]] = {}
    for name, entries in raw.items():
        if name not in SCHEMA:
            issues.append(ConfigIssue(f"[{name}]", f"unknown section; known: {', '.join(SCHEMA)}",
                                      min((ln for _, ln in entries.values()), default=None)))
    for name, schema in SCHEMA.items():
        entries = raw.get(name, {})
        out: dict[str, Any] = {}
        for key, (value, line) in entries.items():
            path = f"[{name}].{key}"
            if SEED_LIKE.search(key):
                issues.append(ConfigIssue(path, "seed-like inputs are rejected: runs are fully deterministic", line))
                continue
            if name == "thresholds":
                if key not in RESIDUALS:
                    issues.append(ConfigIssue(path, "unknown residual name", line))
                    continue
                v, err = threshold(value)
            elif key not in schema:
                issues.append(ConfigIssue(path, f"unknown key; known: {', '.join(schema)}", line))
                continue
            else:
                v, err = schema[key][0](value)
            if err:
                issues.append(ConfigIssue(path, err, line))
            else:
                out[key] = v
        for key, (_, default) in schema.items():
            if key in out or key in entries:
                continue
            if default is _REQUIRED:
                if name in raw or name == "run":
                    issues.append(ConfigIssue(f"[{name}].{key}", "required key missing"))
            else:
                out[key] = copy.deepcopy(default)
        sections[name] = out
    present = set(raw)
    if not issues:
        issues += _cross_checks(sections, present, raw)
    if issues:
        raise ConfigError(issues)
    return RunSpec(sections["run"]["name"], sections, present)


def _cross_checks(s: dict, present: set, raw: dict) -> list[ConfigIssue]:
    out = []

    def line(sec, key):
        return raw.get(sec, {}).get(key, (None, None))[1]

    fam = s["potential"]["family"]
    for key in FAMILY_KEYS[fam]:
        if s["potential"].get(key) is None:
            out.append(ConfigIssue(f"[potential].{key}", f"required for family {fam}"))
    for key in ("V0", "E", "H", "depth", "width", "amplitude"):
        if key in raw.get("potential", {}) and key not in FAMILY_KEYS[fam]:
            out.append(ConfigIssue(f"[potential].{key}", f"not used by family {fam}", line("potential", key)))
    for stage, sec in STAGE_SECTIONS.items():
        if s["analysis"][stage] and sec not in present:
            out.append(ConfigIssue(f"[analysis].{stage}", f"enabled but section [{sec}] is missing",
                                   line("analysis", stage)))
    for stage in ("currents", "hidden_phase", "trajectories", "zitterbewegung", "pauli_compare"):
        if s["analysis"][stage] and "state" not in present:
            out.append(ConfigIssue(f"[analysis].{stage}", "needs a Dirac run: add [state] and [evolve]",
                                   line("analysis", stage)))
    if "state" in present and "evolve" not in present:
        out.append(ConfigIssue("[evolve]", "section required when [state] is given"))
    if s["analysis"]["trajectories"] and not s["analysis"]["hidden_phase"]:
        out.append(ConfigIssue("[analysis].trajectories", "needs hidden_phase = true", line("analysis", "trajectories")))
    if fam == "constant-B" and "state" in present:
        out.append(ConfigIssue("[potential].family", "constant-B cannot drive a Dirac run (no periodic "
                                                     "vector potential); use a Pauli-only scenario"))
    if "grid" not in present:
        if present & {"state", "pauli"}:
            out.append(ConfigIssue("[grid]", "section required for Dirac and Pauli runs"))
        return out
    dim = s["grid"]["dim"]
    for key in ("extents", "points"):
        if len(s["grid"][key]) == 1 and dim > 1:
            s["grid"][key] = s["grid"][key] * dim
        if len(s["grid"][key]) != dim:
            out.append(ConfigIssue(f"[grid].{key}", f"needs {dim} entries for dim = {dim}", line("grid", key)))
    for sec, key in (("state", "center"), ("state", "p0"), ("state", "p"), ("pauli", "center")):
        v = s[sec].get(key)
        if v is not None and len(v) != dim:
            out.append(ConfigIssue(f"[{sec}].{key}", f"needs {dim} entries", line(sec, key)))
    if "trajectories" in present:
        for k, p in enumerate(s["trajectories"]["starts"]):
            if len(p) != dim:
                out.append(ConfigIssue("[trajectories].starts", f"start {k} needs {dim} coordinates",
                                       line("trajectories", "starts")))
    return out


def load_config(path) -> RunSpec:
    from pathlib import Path

    return parse_config(Path(path).read_text(encoding="utf-8"))
