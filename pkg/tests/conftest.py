import random

import pytest

from eds.clock import VirtualClock
from eds.config import preset
from eds.gateway import Gateway, StubUpstream

SERVER_KEY = bytes(range(32))
WATERMARK_KEY = bytes(range(32, 64))


@pytest.fixture
def keys():
    return SERVER_KEY, WATERMARK_KEY


@pytest.fixture
def vclock():
    return VirtualClock(start=1_700_000_000.0)


@pytest.fixture
def make_gateway(vclock):
    """Gateway on virtual time with fixed keys and a seeded rng."""

    def build(name="moderate", seed=0, upstream=None, **overrides):
        cfg = preset(name, **overrides).with_keys(SERVER_KEY, WATERMARK_KEY)
        return Gateway(
            cfg,
            upstream=upstream or StubUpstream(seed=seed, data_prefixes=cfg.data_prefixes),
            clock=vclock.now,
            sleeper=vclock.sleep,
            rng=random.Random(seed),
        )

    return build
