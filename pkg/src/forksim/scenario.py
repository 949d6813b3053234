"""Scenario files: sectioned ``key = value`` text, UTF-8.

Sections and keys::

    [scenario]    network, variant, volume_multiplier, duration, warmup, dt,
                  seed, replications
    [classes]     <class>.<field> for each vehicle class field
    [ghr]         r_plus, s_plus, t_plus, r_minus, s_minus, t_minus
    [thresholds]  state, lane-change, roundabout and metric constants
    [demand]      route1 .. route6, horizon

Every key is optional and falls back to the compiled default; unknown
sections or keys are errors. :func:`serialize_scenario` writes every key
in sorted order, so parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace

from .carfollow import GhrParams, Thresholds
from .core import ClassName, VehicleClass, check_shares, default_classes
from .demand import DEFAULT_HORIZON, OBSERVED_ROUTE_COUNTS, ROUTE_IDS, DemandTable
from .lanechange import LaneChangeParams
from .network import NetworkParams, Variant, build_br_network

U64 = (1 << 64) - 1


class ScenarioError(ValueError):
    """Invalid scenario text. ``line`` is set for syntax errors."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class Scenario:
    network: str = "br"
    variant: Variant = Variant.ID0
    volume_multiplier: float = 1.0
    duration: float = 3600.0
    warmup: float = 300.0
    dt: float = 0.1
    seed: int = 20130601
    replications: int = 10
    classes: tuple[VehicleClass, ...] = field(default_factory=default_classes)
    ghr: GhrParams = GhrParams()
    thresholds: Thresholds = Thresholds()
    lane_change: LaneChangeParams = LaneChangeParams()
    network_params: NetworkParams = NetworkParams()
    stop_speed: float = 0.1
    route_counts: tuple[float, ...] = tuple(float(c) for c in OBSERVED_ROUTE_COUNTS)
    demand_horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        check_scenario(self)

    @property
    def demand(self):
        return DemandTable(self.route_counts, tuple(c.share for c in self.classes), self.demand_horizon)

    @property
    def total_time(self):
        """Simulated span; measurement covers ``[warmup, duration]``."""
        return self.duration

    @property
    def measured_time(self):
        return self.duration - self.warmup

    def build_network(self):
        return build_br_network(self.variant, self.network_params)

    def digest(self):
        return hashlib.sha256(serialize_scenario(self).encode("utf-8")).hexdigest()


def check_scenario(s):
    """Raise ScenarioError naming the first violated invariant."""
    if s.network != "br":
        raise ScenarioError(f"unknown network {s.network!r} (only 'br' is available)")
    if not isinstance(s.variant, Variant):
        raise ScenarioError(f"variant must be one of ID0..ID3, got {s.variant!r}")
    if not math.isfinite(s.volume_multiplier) or s.volume_multiplier < 0:
        raise ScenarioError("volume multiplier must be ≥ 0")
    if not s.warmup >= 0 or not math.isfinite(s.warmup):
        raise ScenarioError("warmup must be ≥ 0")
    if not s.duration > s.warmup or not math.isfinite(s.duration):
        raise ScenarioError("duration must be > warmup")
    if not 0 < s.dt <= 1.0:
        raise ScenarioError("dt must be in (0, 1] s")
    if not 0 <= s.seed <= U64:
        raise ScenarioError("seed must be a 64-bit unsigned integer")
    if s.replications < 1:
        raise ScenarioError("replications must be ≥ 1")
    if not s.stop_speed > 0:
        raise ScenarioError("stop speed must be > 0")
    if len(s.route_counts) != len(ROUTE_IDS) or any(c < 0 or not math.isfinite(c) for c in s.route_counts):
        raise ScenarioError("route counts must be six values ≥ 0")
    if not s.demand_horizon > 0:
        raise ScenarioError("demand horizon must be > 0")
    if {c.name for c in s.classes} != set(ClassName) or len(s.classes) != len(ClassName):
        raise ScenarioError("every vehicle class must be defined exactly once")
    try:
        check_shares(s.classes)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    for c in s.classes:
        if c.desired_speed_mean > s.network_params.legal_speed + 1e-12 and c.desired_speed_sd == 0:
            raise ScenarioError(f"{c.name.value}: fixed desired speed exceeds the legal speed")
        if c.effective_length - c.length <= 0:
            raise ScenarioError(f"{c.name.value}: effective length must exceed length")


_SECTIONS = ("scenario", "classes", "ghr", "thresholds", "demand")
_SCENARIO_KEYS = ("network", "variant", "volume_multiplier", "duration", "warmup", "dt",
                  "seed", "replications")
_CLASS_FIELDS = tuple(f.name for f in fields(VehicleClass) if f.name != "name")
_GHR_KEYS = tuple(f.name for f in fields(GhrParams))
# thresholds key -> (dataclass attribute on Scenario, field name)
_THRESHOLD_KEYS = {
    **{f.name: ("thresholds", f.name) for f in fields(Thresholds)},
    **{f"lc_{f.name}": ("lane_change", f.name) for f in fields(LaneChangeParams)},
    **{f.name: ("network_params", f.name) for f in fields(NetworkParams)},
    "stop_speed": (None, "stop_speed"),
}
_DEMAND_KEYS = tuple(f"route{r}" for r in ROUTE_IDS) + ("horizon",)


def _number(text, key, integer=False):
    try:
        if integer:
            return int(text, 0)
        value = float(text)
    except ValueError:
        raise ScenarioError(f"{key}: expected {'an integer' if integer else 'a number'}, got {text!r}") from None
    if not math.isfinite(value):
        raise ScenarioError(f"{key}: value must be finite")
    return value


def _option_lines(text):
    """Map (section, key) -> line number for diagnostics."""
    lines, section = {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
        elif section and "=" in line and not line.startswith(("#", ";")):
            lines.setdefault((section, line.split("=", 1)[0].strip().lower()), n)
    return lines


def parse_scenario(text):
    """Parse and validate scenario text; returns ``(Scenario, RoadNetwork)``.

    Accepts ``str`` or ``bytes``. Every failure surfaces as ScenarioError.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScenarioError(f"not valid UTF-8 (byte {exc.start})") from None
    if "\x00" in text:
        raise ScenarioError("NUL byte in scenario text")
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=None, strict=True, empty_lines_in_values=False,
                                   default_section="\x00defaults")
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioError("expected a [section] header before any key", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ScenarioError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ScenarioError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ScenarioError("malformed line (expected 'key = value')", lineno) from None
    except configparser.Error as exc:
        raise ScenarioError(f"syntax error: {exc.message}") from None

    where = _option_lines(text)
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ScenarioError(f"unknown section [{section}]")

    def bad_key(section, key):
        return ScenarioError(f"unknown key {key!r} in [{section}]", where.get((section, key)))

    try:
        return _build(cp, bad_key)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(str(exc)) from None


def _build(cp, bad_key):
    kw = {}
    if cp.has_section("scenario"):
        for key, raw in cp.items("scenario"):
            if key not in _SCENARIO_KEYS:
                raise bad_key("scenario", key)
            if key == "network":
                kw["network"] = raw.strip()
            elif key == "variant":
                try:
                    kw["variant"] = Variant(raw.strip().upper())
                except ValueError:
                    raise ScenarioError(f"variant must be one of ID0..ID3, got {raw.strip()!r}") from None
            elif key in ("seed", "replications"):
                kw[key] = _number(raw.strip(), key, integer=True)
            else:
                kw[key] = _number(raw.strip(), key)

    classes = {c.name: c for c in default_classes()}
    if cp.has_section("classes"):
        updates = {}
        for key, raw in cp.items("classes"):
            name, _, attr = key.partition(".")
            try:
                cname = ClassName(name)
            except ValueError:
                raise bad_key("classes", key) from None
            if attr not in _CLASS_FIELDS:
                raise bad_key("classes", key)
            updates.setdefault(cname, {})[attr] = _number(raw.strip(), key)
        for cname, upd in updates.items():
            if "length" in upd and "effective_length" not in upd:
                upd["effective_length"] = upd["length"] + classes[cname].standstill_buffer
            classes[cname] = replace(classes[cname], **upd)
    kw["classes"] = tuple(classes[c] for c in ClassName)

    if cp.has_section("ghr"):
        upd = {}
        for key, raw in cp.items("ghr"):
            if key not in _GHR_KEYS:
                raise bad_key("ghr", key)
            upd[key] = _number(raw.strip(), key)
        kw["ghr"] = GhrParams(**upd)

    if cp.has_section("thresholds"):
        groups = {"thresholds": {}, "lane_change": {}, "network_params": {}}
        for key, raw in cp.items("thresholds"):
            if key not in _THRESHOLD_KEYS:
                raise bad_key("thresholds", key)
            group, attr = _THRESHOLD_KEYS[key]
            value = _number(raw.strip(), key)
            if group is None:
                kw[attr] = value
            else:
                groups[group][attr] = value
        kw["thresholds"] = Thresholds(**groups["thresholds"])
        kw["lane_change"] = LaneChangeParams(**groups["lane_change"])
        kw["network_params"] = NetworkParams(**groups["network_params"])

    if cp.has_section("demand"):
        counts = list(Scenario.__dataclass_fields__["route_counts"].default)
        for key, raw in cp.items("demand"):
            if key not in _DEMAND_KEYS:
                raise bad_key("demand", key)
            value = _number(raw.strip(), key)
            if key == "horizon":
                kw["demand_horizon"] = value
            else:
                counts[int(key[5:]) - 1] = value
        kw["route_counts"] = tuple(counts)

    scenario = Scenario(**kw)
    return scenario, scenario.build_network()


def load_scenario(path):
    with open(path, "rb") as fh:
        return parse_scenario(fh.read())


def _fmt(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value.value if hasattr(value, "value") else value)


def serialize_scenario(s):
    """Canonical text form: every section and key, keys sorted."""
    out = []
    scen = {k: getattr(s, k) for k in _SCENARIO_KEYS}
    sections = {
        "scenario": scen,
        "classes": {f"{c.name.value}.{a}": getattr(c, a) for c in s.classes for a in _CLASS_FIELDS},
        "ghr": {k: getattr(s.ghr, k) for k in _GHR_KEYS},
        "thresholds": {
            key: getattr(s if group is None else getattr(s, group), attr)
            for key, (group, attr) in _THRESHOLD_KEYS.items()
        },
        "demand": {
            **{f"route{r}": float(c) for r, c in zip(ROUTE_IDS, s.route_counts)},
            "horizon": float(s.demand_horizon),
        },
    }
    for name in sorted(sections):
        out.append(f"[{name}]")
        for key in sorted(sections[name]):
            out.append(f"{key} = {_fmt(sections[name][key])}")
        out.append("")
    return "\n".join(out)


def with_overrides(s, seed=None, replications=None, volume_multiplier=None):
    kw = {}
    if seed is not None:
        kw["seed"] = seed
    if replications is not None:
        kw["replications"] = replications
    if volume_multiplier is not None:
        kw["volume_multiplier"] = volume_multiplier
    try:
        return replace(s, **kw) if kw else s
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
