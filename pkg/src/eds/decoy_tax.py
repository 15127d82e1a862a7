"""Watermarked decoy injection and bandwidth taxation.

Templates are JSON documents mapping field names to generator specs::

    {
      "fields": {
        "device": {"kind": "enum", "values": ["cam", "lock", "thermo"]},
        "temp":   {"kind": "int", "min": 10, "max": 40},
        "serial": {"kind": "str", "min_len": 8, "max_len": 12}
      }
    }

``enum`` draws uniformly from ``values``; ``int`` draws uniformly from the
closed range; ``str`` draws a length uniformly from the closed range and fills
it from ``alphabet`` (lowercase letters and digits unless given). The same
sampler produces stand-in real data and decoys, so per-field distributions
match by construction.
"""
from __future__ import annotations

import base64
import hashlib
import hmac
import json
import math
import random
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

from .errors import ConfigError

WATERMARK_FIELD = "wid"
WATERMARK_SIZE = 8

Item = dict[str, Any]

_DEFAULT_ALPHABET = string.ascii_lowercase + string.digits


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    values: tuple = ()
    low: int = 0
    high: int = 0
    alphabet: str = _DEFAULT_ALPHABET

    def sample(self, rng: random.Random) -> Any:
        if self.kind == "enum":
            return self.values[rng.randrange(len(self.values))]
        if self.kind == "int":
            return rng.randint(self.low, self.high)
        n = rng.randint(self.low, self.high)
        return "".join(rng.choice(self.alphabet) for _ in range(n))

    @classmethod
    def parse(cls, name: str, spec: Mapping[str, Any]) -> "FieldSpec":
        kind = spec.get("kind")
        try:
            if kind == "enum":
                values = tuple(spec["values"])
                if not values:
                    raise ConfigError(f"field {name!r}: enum needs at least one value")
                return cls("enum", values=values)
            if kind == "int":
                low, high = int(spec["min"]), int(spec["max"])
            elif kind == "str":
                low, high = int(spec["min_len"]), int(spec["max_len"])
                if low < 0:
                    raise ConfigError(f"field {name!r}: negative length")
            else:
                raise ConfigError(f"field {name!r}: unknown kind {kind!r}")
        except KeyError as exc:
            raise ConfigError(f"field {name!r}: missing {exc.args[0]!r}") from None
        if low > high:
            raise ConfigError(f"field {name!r}: empty range [{low}, {high}]")
        alphabet = spec.get("alphabet", _DEFAULT_ALPHABET)
        if kind == "str" and not alphabet:
            raise ConfigError(f"field {name!r}: empty alphabet")
        return cls(kind, low=low, high=high, alphabet=alphabet)


@dataclass(frozen=True)
class Template:
    fields: tuple[tuple[str, FieldSpec], ...]
    watermark_field: str = WATERMARK_FIELD

    def __post_init__(self) -> None:
        if not self.fields:
            raise ConfigError("template defines no fields")
        if any(name == self.watermark_field for name, _ in self.fields):
            raise ConfigError(f"field name {self.watermark_field!r} is reserved for the watermark")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Template":
        spec = doc.get("fields")
        if not isinstance(spec, Mapping) or not spec:
            raise ConfigError("template needs a non-empty 'fields' object")
        parsed = tuple((name, FieldSpec.parse(name, s)) for name, s in spec.items())
        return cls(parsed, doc.get("watermark_field", WATERMARK_FIELD))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Template":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read template {path}: {exc}") from exc

    def sample(self, rng: random.Random) -> Item:
        return {name: spec.sample(rng) for name, spec in self.fields}


DEFAULT_TEMPLATE = Template.from_dict(
    {
        "fields": {
            "device": {"kind": "enum", "values": ["camera", "lock", "thermostat", "plug", "sensor"]},
            "temp": {"kind": "int", "min": 10, "max": 40},
            "serial": {"kind": "str", "min_len": 8, "max_len": 12},
        }
    }
)


@dataclass
class TaxedResponse:
    items: list[Item]
    padding: bytes
    real_count: int
    decoy_count: int
    untaxed_size: int = 0

    def body(self) -> bytes:
        return serialize_items(self.items) + self.padding

    @property
    def size(self) -> int:
        return self.untaxed_size + len(self.padding)


def canonical_bytes(item: Mapping[str, Any], watermark_field: str = WATERMARK_FIELD) -> bytes:
    payload = {k: v for k, v in item.items() if k != watermark_field}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def serialize_items(items: Iterable[Mapping[str, Any]]) -> bytes:
    """JSON-lines encoding; one canonical record per line."""
    return b"".join(
        json.dumps(it, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8") + b"\n"
        for it in items
    )


def watermark(item: Mapping[str, Any], watermark_key: bytes, watermark_field: str = WATERMARK_FIELD) -> str:
    mac = hmac.new(watermark_key, canonical_bytes(item, watermark_field), hashlib.sha256).digest()
    return mac[:WATERMARK_SIZE].hex()


def as_template(template: Union[Template, Mapping[str, Any]]) -> Template:
    return template if isinstance(template, Template) else Template.from_dict(template)


def make_decoys(
    template: Union[Template, Mapping[str, Any]], count: int, watermark_key: bytes, rng: random.Random
) -> list[Item]:
    template = as_template(template)
    if count < 0:
        raise ValueError("count must be non-negative")
    out = []
    for _ in range(count):
        item = template.sample(rng)
        item[template.watermark_field] = watermark(item, watermark_key, template.watermark_field)
        out.append(item)
    return out


def is_decoy(item: Mapping[str, Any], watermark_key: bytes, watermark_field: str = WATERMARK_FIELD) -> bool:
    wid = item.get(watermark_field)
    if not isinstance(wid, str):
        return False
    return hmac.compare_digest(wid.encode("ascii", "replace"), watermark(item, watermark_key, watermark_field).encode())


def decoy_count_for(real_count: int, rho: float) -> int:
    # half-up rounding; round(.., 9) first so 0.3 * 10 does not land on 2.9999...
    return math.floor(round(rho * real_count, 9) + 0.5)


def padding_for(untaxed_size: int, gamma: float, rng: random.Random) -> bytes:
    target = math.ceil(round(gamma * untaxed_size, 9))
    n = max(0, target - untaxed_size)
    if n == 0:
        return b""
    raw = rng.getrandbits(8 * n).to_bytes(n, "big")
    # printable so the padding can ride inside a JSON text line byte-for-byte
    return base64.b64encode(raw)[:n]


def inject_and_tax(
    real_items: Sequence[Mapping[str, Any]],
    rho: float,
    gamma: float,
    template: Union[Template, Mapping[str, Any]],
    watermark_key: bytes,
    rng: random.Random,
) -> TaxedResponse:
    """Interleave ``round(rho * n)`` decoys at uniformly random positions, then pad.

    Padding brings the serialized body to at least ``gamma`` times the size
    of the item serialization (decoys included).
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    template = as_template(template)
    reals = [dict(it) for it in real_items]
    n_decoys = decoy_count_for(len(reals), rho)
    items: list[Item] = reals
    if n_decoys:
        wf = template.watermark_field
        for it in reals:
            # camouflage: reals carry a random tag in the watermark slot
            if wf not in it:
                it[wf] = rng.getrandbits(8 * WATERMARK_SIZE).to_bytes(WATERMARK_SIZE, "big").hex()
        decoys = make_decoys(template, n_decoys, watermark_key, rng)
        total = len(reals) + n_decoys
        slots = set(rng.sample(range(total), n_decoys))
        real_iter, decoy_iter = iter(reals), iter(decoys)
        items = [next(decoy_iter) if i in slots else next(real_iter) for i in range(total)]
    untaxed = len(serialize_items(items))
    return TaxedResponse(
        items=items,
        padding=padding_for(untaxed, gamma, rng),
        real_count=len(reals),
        decoy_count=n_decoys,
        untaxed_size=untaxed,
    )
