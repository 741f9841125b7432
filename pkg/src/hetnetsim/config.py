"""Scenario configuration: defaults, builtin scenarios, loading and validation."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

WIFI = "wifi"
WIMAX = "wimax"
MAC_KINDS = (WIFI, WIMAX)

# 802.11b DSSS long-preamble timing
DEFAULT_WIFI_PHY_RATE = 11_000_000
DEFAULT_WIFI_SLOT_US = 20
DEFAULT_WIFI_SIFS_US = 10
DEFAULT_WIFI_DIFS_US = 50
DEFAULT_WIFI_CW_MIN = 31
DEFAULT_WIFI_CW_MAX = 1023
DEFAULT_WIFI_RETRY_LIMIT = 7
DEFAULT_WIFI_PREAMBLE_US = 192
DEFAULT_WIFI_MAC_HEADER_BYTES = 34
DEFAULT_WIFI_ACK_BYTES = 14
DEFAULT_WIFI_QUEUE_LIMIT = 256
WIFI_PHY_RATES = (11_000_000, 54_000_000)

# 802.11g ERP-OFDM timing, applied when phy_rate selects 54 Mbit/s
WIFI_G_TIMING = {
    "slot_us": 9,
    "sifs_us": 10,
    "difs_us": 28,
    "preamble_us": 20,
    "cw_min": 15,
}

DEFAULT_WIMAX_FRAME_US = 5_000
DEFAULT_WIMAX_CAPACITY = 75_000_000
DEFAULT_WIMAX_OVERHEAD = 0.1
DEFAULT_WIMAX_MAC_OVERHEAD_BYTES = 10
DEFAULT_WIMAX_QUEUE_LIMIT = 64

DEFAULT_CLOUD_LATENCY_MS = 10.0
DEFAULT_CLOUD_JITTER_MS = 0.0

DEFAULT_CALL_DURATION_S = 180.0
DEFAULT_CALL_INTERARRIVAL_S = 60.0
DEFAULT_SETUP_TIMEOUT_S = 32.0
DEFAULT_TEARDOWN_GRACE_S = 2.0

DEFAULT_STATION_COUNT = 4
DEFAULT_DURATION_S = 3600.0
DEFAULT_SEED = 1
DEFAULT_BUCKET_WIDTH_S = 60.0
DEFAULT_WARMUP_S = 120.0
DEFAULT_BASE_SCENARIO = "wifi_wifi"
MOS_MODES = ("bucket", "packet")


class ParseError(ValueError):
    """The scenario file is not well-formed JSON/YAML."""

    def __init__(self, path: str, line: Optional[int], problem: str) -> None:
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {problem}")


class ValidationError(ValueError):
    """A configuration value is missing, unknown or out of range."""

    def __init__(self, field_name: str, problem: str) -> None:
        self.field = field_name
        super().__init__(f"{field_name}: {problem}")


class UnknownScenario(ValueError):
    """No builtin scenario has the requested name."""


@dataclass(frozen=True)
class WifiPhyParams:
    """802.11 DCF timing and PHY rate for one subnet."""

    phy_rate: int = DEFAULT_WIFI_PHY_RATE
    slot_us: int = DEFAULT_WIFI_SLOT_US
    sifs_us: int = DEFAULT_WIFI_SIFS_US
    difs_us: int = DEFAULT_WIFI_DIFS_US
    cw_min: int = DEFAULT_WIFI_CW_MIN
    cw_max: int = DEFAULT_WIFI_CW_MAX
    retry_limit: int = DEFAULT_WIFI_RETRY_LIMIT
    preamble_us: int = DEFAULT_WIFI_PREAMBLE_US
    mac_header_bytes: int = DEFAULT_WIFI_MAC_HEADER_BYTES
    ack_bytes: int = DEFAULT_WIFI_ACK_BYTES
    queue_limit: int = DEFAULT_WIFI_QUEUE_LIMIT


@dataclass(frozen=True)
class WimaxPhyParams:
    """802.16 frame structure; capacity is one shared pipe for the cell."""

    frame_duration_us: int = DEFAULT_WIMAX_FRAME_US
    capacity: int = DEFAULT_WIMAX_CAPACITY
    overhead_fraction: float = DEFAULT_WIMAX_OVERHEAD
    mac_overhead_bytes: int = DEFAULT_WIMAX_MAC_OVERHEAD_BYTES
    queue_limit: int = DEFAULT_WIMAX_QUEUE_LIMIT


@dataclass(frozen=True)
class CloudConfig:
    """IP backbone between the two subnets."""

    base_latency_ms: float = DEFAULT_CLOUD_LATENCY_MS
    latency_jitter_ms: float = DEFAULT_CLOUD_JITTER_MS


@dataclass(frozen=True)
class CallProfile:
    mean_duration_s: float = DEFAULT_CALL_DURATION_S
    mean_interarrival_s: float = DEFAULT_CALL_INTERARRIVAL_S
    setup_timeout_s: float = DEFAULT_SETUP_TIMEOUT_S
    teardown_grace_s: float = DEFAULT_TEARDOWN_GRACE_S


@dataclass(frozen=True)
class CodecConfig:
    """Voice codec framing plus its E-model impairment factors."""

    name: str = "G.711"
    bitrate: int = 64_000
    frame_period_ms: float = 20.0
    payload_bytes: int = 160
    header_bytes: int = 40
    encode_delay_ms: float = 1.0
    decode_delay_ms: float = 1.0
    lookahead_ms: float = 0.0
    ie: float = 0.0
    bpl: float = 4.3

    @property
    def packet_bytes(self) -> int:
        return self.payload_bytes + self.header_bytes


CODECS: Dict[str, CodecConfig] = {
    "G.711": CodecConfig(),
    "G.729": CodecConfig(
        name="G.729",
        bitrate=8_000,
        frame_period_ms=20.0,
        payload_bytes=20,
        header_bytes=40,
        encode_delay_ms=10.0,
        decode_delay_ms=2.0,
        lookahead_ms=5.0,
        ie=11.0,
        bpl=19.0,
    ),
}


@dataclass(frozen=True)
class SubnetSpec:
    """One subnet: a base station plus its stations."""

    name: str
    mac_kind: str
    station_count: int = DEFAULT_STATION_COUNT
    wifi: Optional[WifiPhyParams] = None
    wimax: Optional[WimaxPhyParams] = None

    @property
    def phy(self) -> WifiPhyParams | WimaxPhyParams:
        phy = self.wifi if self.mac_kind == WIFI else self.wimax
        assert phy is not None
        return phy


@dataclass(frozen=True)
class ScenarioConfig:
    """Top-level scenario description."""

    name: str
    subnets: List[SubnetSpec]
    cloud: CloudConfig = field(default_factory=CloudConfig)
    call_profile: CallProfile = field(default_factory=CallProfile)
    codec: CodecConfig = field(default_factory=CodecConfig)
    duration_s: float = DEFAULT_DURATION_S
    seed: int = DEFAULT_SEED
    bucket_width_s: float = DEFAULT_BUCKET_WIDTH_S
    repetitions: int = 1
    mos_mode: str = "bucket"
    playout_delay_ms: float = 0.0
    warmup_s: float = DEFAULT_WARMUP_S

    @property
    def heterogeneous(self) -> bool:
        return len({subnet.mac_kind for subnet in self.subnets}) > 1

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


def wifi_subnet(name: str, station_count: int = DEFAULT_STATION_COUNT) -> SubnetSpec:
    return SubnetSpec(name=name, mac_kind=WIFI, station_count=station_count, wifi=WifiPhyParams())


def wimax_subnet(name: str, station_count: int = DEFAULT_STATION_COUNT) -> SubnetSpec:
    return SubnetSpec(
        name=name, mac_kind=WIMAX, station_count=station_count, wimax=WimaxPhyParams()
    )


BUILTIN_SCENARIOS = ("wifi_wifi", "wimax_wimax", "wifi_wimax")


def builtin(name: str) -> ScenarioConfig:
    """Return one of the three reference scenarios."""

    if name == "wifi_wifi":
        subnets = [wifi_subnet("London"), wifi_subnet("Manchester")]
    elif name == "wimax_wimax":
        subnets = [wimax_subnet("Cambridge"), wimax_subnet("Bradford")]
    elif name == "wifi_wimax":
        subnets = [wifi_subnet("Manchester"), wimax_subnet("Cambridge")]
    else:
        raise UnknownScenario(
            f"unknown scenario '{name}'; expected one of {', '.join(BUILTIN_SCENARIOS)}"
        )
    return ScenarioConfig(name=name, subnets=subnets)


def _wifi_defaults(phy_rate: Any) -> Dict[str, Any]:
    defaults = asdict(WifiPhyParams())
    if phy_rate == 54_000_000:
        defaults.update(WIFI_G_TIMING)
        defaults["phy_rate"] = 54_000_000
    return defaults


def to_dict(config: ScenarioConfig) -> Dict[str, Any]:
    """Serialize to the documented JSON schema."""

    subnets = []
    for subnet in config.subnets:
        subnets.append(
            {
                "name": subnet.name,
                "mac_kind": subnet.mac_kind,
                "station_count": subnet.station_count,
                "phy": asdict(subnet.phy),
            }
        )
    return {
        "schema": SCHEMA_VERSION,
        "name": config.name,
        "duration_s": config.duration_s,
        "seed": config.seed,
        "bucket_width_s": config.bucket_width_s,
        "repetitions": config.repetitions,
        "mos_mode": config.mos_mode,
        "playout_delay_ms": config.playout_delay_ms,
        "warmup_s": config.warmup_s,
        "cloud": asdict(config.cloud),
        "call_profile": asdict(config.call_profile),
        "codec": asdict(config.codec),
        "subnets": subnets,
    }


def dumps(config: ScenarioConfig) -> str:
    return json.dumps(to_dict(config), indent=2, sort_keys=False) + "\n"


def dump(config: ScenarioConfig, path: Path) -> None:
    path.write_text(dumps(config), encoding="utf-8", newline="\n")


def _check_keys(section: Dict[str, Any], allowed: List[str], where: str) -> None:
    for key in section:
        if key not in allowed:
            prefix = f"{where}." if where else ""
            raise ValidationError(f"{prefix}{key}", "unknown key")


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, f"expected a number, got {value!r}")
    return float(value)


def _integer(value: Any, name: str) -> int:
    if isinstance(value, bool):
        raise ValidationError(name, f"expected an integer, got {value!r}")
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if not isinstance(value, int):
        raise ValidationError(name, f"expected an integer, got {value!r}")
    return value


def _mapping(value: Any, name: str) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ValidationError(name, "expected an object")
    return value


def _build_section(cls: Any, raw: Dict[str, Any], defaults: Dict[str, Any], where: str) -> Any:
    names = [f.name for f in fields(cls)]
    _check_keys(raw, names, where)
    merged = dict(defaults)
    merged.update(raw)
    values: Dict[str, Any] = {}
    for f in fields(cls):
        value = merged[f.name]
        path = f"{where}.{f.name}"
        if f.type in ("int", int):
            values[f.name] = _integer(value, path)
        elif f.type in ("float", float):
            values[f.name] = _number(value, path)
        elif f.type in ("str", str):
            if not isinstance(value, str):
                raise ValidationError(path, "expected a string")
            values[f.name] = value
        else:
            values[f.name] = value
    return cls(**values)


def _build_codec(raw: Dict[str, Any]) -> CodecConfig:
    name = raw.get("name", "G.711")
    if name not in CODECS:
        raise ValidationError("codec.name", f"unknown codec '{name}'")
    return _build_section(CodecConfig, raw, asdict(CODECS[name]), "codec")


def _build_subnet(raw: Any, index: int) -> SubnetSpec:
    where = f"subnets[{index}]"
    raw = _mapping(raw, where)
    _check_keys(raw, ["name", "mac_kind", "station_count", "phy"], where)
    if "name" not in raw or not isinstance(raw["name"], str) or not raw["name"]:
        raise ValidationError(f"{where}.name", "a non-empty name is required")
    mac_kind = raw.get("mac_kind")
    if mac_kind not in MAC_KINDS:
        raise ValidationError(f"{where}.mac_kind", f"expected one of {MAC_KINDS}")
    station_count = _integer(raw.get("station_count", DEFAULT_STATION_COUNT), f"{where}.station_count")
    phy_raw = _mapping(raw.get("phy", {}) or {}, f"{where}.phy")
    if mac_kind == WIFI:
        wifi = _build_section(
            WifiPhyParams, phy_raw, _wifi_defaults(phy_raw.get("phy_rate")), f"{where}.phy"
        )
        return SubnetSpec(raw["name"], WIFI, station_count, wifi=wifi)
    wimax = _build_section(WimaxPhyParams, phy_raw, asdict(WimaxPhyParams()), f"{where}.phy")
    return SubnetSpec(raw["name"], WIMAX, station_count, wimax=wimax)


_TOP_LEVEL_KEYS = [
    "schema",
    "base",
    "name",
    "duration_s",
    "seed",
    "bucket_width_s",
    "repetitions",
    "mos_mode",
    "playout_delay_ms",
    "warmup_s",
    "cloud",
    "call_profile",
    "codec",
    "subnets",
]


def from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """
    Build a validated config from a parsed document.

    Missing keys come from the builtin named by ``base`` (default wifi_wifi);
    unknown keys are rejected at every level.
    """

    data = _mapping(data, "<root>")
    _check_keys(data, _TOP_LEVEL_KEYS, "")
    if "schema" not in data:
        raise ValidationError("schema", "mandatory schema version missing")
    if data["schema"] != SCHEMA_VERSION:
        raise ValidationError("schema", f"unsupported schema {data['schema']!r}")

    base_name = data.get("base", DEFAULT_BASE_SCENARIO)
    try:
        base = to_dict(builtin(base_name))
    except UnknownScenario as exc:
        raise ValidationError("base", str(exc)) from exc

    codec_raw = _mapping(data.get("codec", {}) or {}, "codec")
    if "name" in codec_raw and codec_raw["name"] != base["codec"]["name"]:
        codec = _build_codec(codec_raw)
    else:
        codec = _build_codec({**base["codec"], **codec_raw})

    subnets_raw = data.get("subnets", base["subnets"])
    if not isinstance(subnets_raw, list):
        raise ValidationError("subnets", "expected a list")
    subnets = [_build_subnet(raw, i) for i, raw in enumerate(subnets_raw)]

    cloud = _build_section(
        CloudConfig, _mapping(data.get("cloud", {}) or {}, "cloud"), base["cloud"], "cloud"
    )
    call_profile = _build_section(
        CallProfile,
        _mapping(data.get("call_profile", {}) or {}, "call_profile"),
        base["call_profile"],
        "call_profile",
    )

    name = data.get("name", base["name"])
    if not isinstance(name, str) or not name:
        raise ValidationError("name", "a non-empty name is required")
    mos_mode = data.get("mos_mode", base["mos_mode"])
    if mos_mode not in MOS_MODES:
        raise ValidationError("mos_mode", f"expected one of {MOS_MODES}")

    config = ScenarioConfig(
        name=name,
        subnets=subnets,
        cloud=cloud,
        call_profile=call_profile,
        codec=codec,
        duration_s=_number(data.get("duration_s", base["duration_s"]), "duration_s"),
        seed=_integer(data.get("seed", base["seed"]), "seed"),
        bucket_width_s=_number(data.get("bucket_width_s", base["bucket_width_s"]), "bucket_width_s"),
        repetitions=_integer(data.get("repetitions", base["repetitions"]), "repetitions"),
        mos_mode=mos_mode,
        playout_delay_ms=_number(
            data.get("playout_delay_ms", base["playout_delay_ms"]), "playout_delay_ms"
        ),
        warmup_s=_number(data.get("warmup_s", base["warmup_s"]), "warmup_s"),
    )
    validate(config)
    return config


def _positive(value: float, name: str) -> None:
    if value <= 0:
        raise ValidationError(name, f"must be positive, got {value}")


def _non_negative(value: float, name: str) -> None:
    if value < 0:
        raise ValidationError(name, f"must be non-negative, got {value}")


def _validate_wifi(phy: WifiPhyParams, where: str) -> None:
    if phy.phy_rate not in WIFI_PHY_RATES:
        raise ValidationError(f"{where}.phy_rate", f"expected one of {WIFI_PHY_RATES}")
    for name in ("slot_us", "sifs_us", "difs_us", "preamble_us", "ack_bytes", "queue_limit"):
        _positive(getattr(phy, name), f"{where}.{name}")
    _non_negative(phy.mac_header_bytes, f"{where}.mac_header_bytes")
    _non_negative(phy.cw_min, f"{where}.cw_min")
    if phy.cw_min >= phy.cw_max:
        raise ValidationError(f"{where}.cw_min", "cw_min must be smaller than cw_max")
    _positive(phy.retry_limit, f"{where}.retry_limit")


def _validate_wimax(phy: WimaxPhyParams, where: str) -> None:
    _positive(phy.frame_duration_us, f"{where}.frame_duration_us")
    _positive(phy.capacity, f"{where}.capacity")
    _positive(phy.queue_limit, f"{where}.queue_limit")
    _non_negative(phy.mac_overhead_bytes, f"{where}.mac_overhead_bytes")
    if not 0 <= phy.overhead_fraction < 1:
        raise ValidationError(f"{where}.overhead_fraction", "must lie in [0, 1)")


def validate(config: ScenarioConfig) -> None:
    """Raise ValidationError naming the first offending field."""

    if len(config.subnets) != 2:
        raise ValidationError("subnets", f"exactly 2 subnets required, got {len(config.subnets)}")
    names = [subnet.name for subnet in config.subnets]
    if len(set(names)) != len(names):
        raise ValidationError("subnets", "subnet names must be unique")
    for index, subnet in enumerate(config.subnets):
        where = f"subnets[{index}]"
        if subnet.station_count < 1:
            raise ValidationError(f"{where}.station_count", "at least one station required")
        if subnet.mac_kind == WIFI:
            if subnet.wifi is None:
                raise ValidationError(f"{where}.phy", "WiFi parameters missing")
            _validate_wifi(subnet.wifi, f"{where}.phy")
        elif subnet.mac_kind == WIMAX:
            if subnet.wimax is None:
                raise ValidationError(f"{where}.phy", "WiMAX parameters missing")
            _validate_wimax(subnet.wimax, f"{where}.phy")
            if config.codec.frame_period_ms * 1000 < subnet.wimax.frame_duration_us:
                raise ValidationError(
                    "codec.frame_period_ms",
                    "UGS carries one packet per frame; codec period must be >= frame duration",
                )
        else:
            raise ValidationError(f"{where}.mac_kind", f"expected one of {MAC_KINDS}")

    codec = config.codec
    _positive(codec.bitrate, "codec.bitrate")
    _positive(codec.frame_period_ms, "codec.frame_period_ms")
    _positive(codec.payload_bytes, "codec.payload_bytes")
    _non_negative(codec.header_bytes, "codec.header_bytes")
    for name in ("encode_delay_ms", "decode_delay_ms", "lookahead_ms", "ie"):
        _non_negative(getattr(codec, name), f"codec.{name}")
    _positive(codec.bpl, "codec.bpl")
    if abs(codec.bitrate * codec.frame_period_ms / 8000 - codec.payload_bytes) > 1e-9:
        raise ValidationError("codec.payload_bytes", "must equal bitrate * frame_period / 8")

    profile = config.call_profile
    _positive(profile.mean_duration_s, "call_profile.mean_duration_s")
    _positive(profile.mean_interarrival_s, "call_profile.mean_interarrival_s")
    _positive(profile.setup_timeout_s, "call_profile.setup_timeout_s")
    _non_negative(profile.teardown_grace_s, "call_profile.teardown_grace_s")

    _non_negative(config.cloud.base_latency_ms, "cloud.base_latency_ms")
    _non_negative(config.cloud.latency_jitter_ms, "cloud.latency_jitter_ms")
    _non_negative(config.duration_s, "duration_s")
    _non_negative(config.seed, "seed")
    _positive(config.bucket_width_s, "bucket_width_s")
    _positive(config.repetitions, "repetitions")
    _non_negative(config.playout_delay_ms, "playout_delay_ms")
    _non_negative(config.warmup_s, "warmup_s")
    if config.mos_mode not in MOS_MODES:
        raise ValidationError("mos_mode", f"expected one of {MOS_MODES}")


YAML_SUFFIXES = (".yaml", ".yml")


def _load_document(path: Path) -> Any:
    with path.open("r", encoding="utf-8") as handle:
        if path.suffix.lower() not in YAML_SUFFIXES:
            try:
                return json.load(handle)
            except json.JSONDecodeError as exc:
                raise ParseError(str(path), exc.lineno, exc.msg) from exc
        try:
            return yaml.safe_load(handle)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            line = mark.line + 1 if mark is not None else None
            raise ParseError(str(path), line, exc.problem or str(exc)) from exc
        except yaml.YAMLError as exc:
            raise ParseError(str(path), None, str(exc)) from exc


def load(path: Path) -> ScenarioConfig:
    """Load and validate a scenario file."""

    data = _load_document(path)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ParseError(str(path), 1, "top level must be an object")
    config = from_dict(copy.deepcopy(data))
    logger.info("Loaded scenario '%s' from %s", config.name, path)
    return config


def resolve_scenario(name_or_path: str) -> ScenarioConfig:
    """Builtin name, or path to a scenario file (CLI helper)."""

    if name_or_path in BUILTIN_SCENARIOS:
        return builtin(name_or_path)
    config_path = Path(name_or_path).expanduser()
    if not config_path.exists():
        raise UnknownScenario(
            f"'{name_or_path}' is neither a builtin scenario nor an existing file"
        )
    return load(config_path)
