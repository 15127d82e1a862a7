"""Gateway configuration, named presets and key material."""
from __future__ import annotations

import json
import os
import secrets
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .puzzle import MAX_DIFFICULTY

KEY_SIZE = 32
KEY_FILE_ENV = "EDS_KEY_FILE"


@dataclass(frozen=True)
class EdsConfig:
    """Defender strategy (difficulty, decoy ratio, delays, tax) plus operational knobs."""

    d_base: int = 20
    d_range: int = 6
    d_min: int = 0
    d_max: int = MAX_DIFFICULTY
    rho: float = 0.3
    delay_base: float = 1.0
    delay_max: float = 8.0
    gamma: float = 1.5
    rep_gain: float = 0.05
    rep_penalty: float = 0.1
    server_key: bytes = field(default=b"", repr=False)
    watermark_key: bytes = field(default=b"", repr=False)
    bypass_tokens: frozenset = frozenset()
    jitter: tuple[float, float] = (0.005, 0.050)
    capacity: int = 10_000
    data_prefixes: tuple[str, ...] = ("/data",)
    # requests/s at which the load level turns elevated / critical; None = manual
    load_thresholds: Optional[tuple[float, float]] = None
    preset: str = "custom"

    def __post_init__(self) -> None:
        if isinstance(self.bypass_tokens, (list, tuple, set)):
            object.__setattr__(self, "bypass_tokens", frozenset(self.bypass_tokens))
        object.__setattr__(self, "jitter", tuple(self.jitter))
        object.__setattr__(self, "data_prefixes", tuple(self.data_prefixes))
        if self.load_thresholds is not None:
            object.__setattr__(self, "load_thresholds", tuple(self.load_thresholds))
        self.validate()

    def validate(self) -> None:
        if not 0 <= self.d_min <= self.d_base <= self.d_base + self.d_range <= self.d_max <= MAX_DIFFICULTY:
            raise ConfigError(
                f"need 0 <= d_min <= d_base <= d_base + d_range <= d_max <= {MAX_DIFFICULTY}; "
                f"got d_min={self.d_min} d_base={self.d_base} d_range={self.d_range} d_max={self.d_max}"
            )
        if self.rho < 0:
            raise ConfigError("rho must be >= 0")
        if self.gamma < 1:
            raise ConfigError("gamma must be >= 1")
        if not 0 <= self.delay_base <= self.delay_max:
            raise ConfigError("need 0 <= delay_base <= delay_max")
        lo, hi = self.jitter
        if not 0 <= lo <= hi:
            raise ConfigError("jitter must be an increasing pair of non-negative durations")
        if self.capacity < 1:
            raise ConfigError("capacity must be positive")
        if self.rep_gain < 0 or self.rep_penalty < 0:
            raise ConfigError("reputation steps must be non-negative")
        for name in ("server_key", "watermark_key"):
            key = getattr(self, name)
            if key and len(key) != KEY_SIZE:
                raise ConfigError(f"{name} must be {KEY_SIZE} bytes")

    @property
    def puzzles_enabled(self) -> bool:
        return self.d_max > 0

    def with_keys(self, server_key: Optional[bytes] = None, watermark_key: Optional[bytes] = None) -> "EdsConfig":
        return replace(
            self,
            server_key=server_key if server_key is not None else secrets.token_bytes(KEY_SIZE),
            watermark_key=watermark_key if watermark_key is not None else secrets.token_bytes(KEY_SIZE),
        )

    def require_keys(self) -> None:
        if len(self.server_key) != KEY_SIZE or len(self.watermark_key) != KEY_SIZE:
            raise ConfigError("server_key and watermark_key must both be set to 32-byte secrets")

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out.pop("server_key")
        out.pop("watermark_key")
        out["bypass_tokens"] = sorted(self.bypass_tokens)
        out["jitter"] = list(self.jitter)
        out["data_prefixes"] = list(self.data_prefixes)
        if self.load_thresholds is not None:
            out["load_thresholds"] = list(self.load_thresholds)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EdsConfig":
        data = dict(data)
        base = preset(data.pop("preset")) if "preset" in data else cls()
        known = {f.name for f in fields(cls)} - {"server_key", "watermark_key"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        try:
            return replace(base, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


_PRESETS = {
    "conservative": dict(d_base=16, rho=0.1, delay_max=4.0, gamma=1.25),
    "moderate": dict(d_base=20, rho=0.3, delay_max=8.0, gamma=1.5),
    "aggressive": dict(d_base=24, rho=0.5, delay_max=16.0, gamma=2.0),
    # everything off; used as the no-defense baseline
    "disabled": dict(
        d_base=0, d_range=0, d_min=0, d_max=0, rho=0.0, delay_base=0.0, delay_max=0.0, gamma=1.0, jitter=(0.0, 0.0)
    ),
}

PRESET_NAMES = ("conservative", "moderate", "aggressive")


def preset(name: str, **overrides: Any) -> EdsConfig:
    try:
        params = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(_PRESETS)}") from None
    return EdsConfig(**{**params, "preset": name, **overrides})


def load_config(path: "str | os.PathLike[str]") -> EdsConfig:
    """Read a JSON config document whose keys mirror :class:`EdsConfig`."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    return EdsConfig.from_dict(data)


def load_keys(path: "str | os.PathLike[str] | None" = None) -> tuple[bytes, bytes]:
    """Read ``(server_key, watermark_key)`` from a key file.

    The file holds one or two lines of 64 hex characters. With a single line
    the watermark key is derived from the server key. ``path`` defaults to
    the file named by ``$EDS_KEY_FILE``.
    """
    import hashlib
    import hmac

    if path is None:
        path = os.environ.get(KEY_FILE_ENV)
        if not path:
            raise ConfigError(f"no key file given and ${KEY_FILE_ENV} is unset")
    try:
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        keys = [bytes.fromhex(ln) for ln in lines[:2]]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read key file {path}: {exc}") from exc
    if not keys or any(len(k) != KEY_SIZE for k in keys):
        raise ConfigError(f"key file {path} must hold 32-byte keys as 64 hex characters per line")
    server = keys[0]
    watermark = keys[1] if len(keys) > 1 else hmac.new(server, b"eds-watermark", hashlib.sha256).digest()
    return server, watermark
