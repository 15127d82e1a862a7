import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eds import wire
from eds.puzzle import Challenge, Solution
from eds.wire import ChallengeMsg, DataResponse, MalformedMessage, Reject, Request

CH = Challenge(bytes(range(16)), 1_700_000_000, "10.0.0.5", 20, bytes(range(32)))


@pytest.mark.parametrize("msg", [
    Request("/data/x", "c1"),
    Request("/p", None, Solution(CH, 12345), "tok"),
    Request("/p", "10.0.0.5", Solution(CH, 0)),
    ChallengeMsg.from_challenge(CH),
    Reject("expired", 2000),
    DataResponse([{"a": 1, "b": "ü"}], b"QUJD"),
])
def test_round_trip(msg):
    line = wire.encode(msg)
    assert line.endswith(b"\n") and line.count(b"\n") == 1
    assert wire.decode(line) == msg


def test_challenge_wire_layout():
    d = json.loads(wire.encode(ChallengeMsg.from_challenge(CH)))
    assert d == {"type": "challenge", "nonce": CH.nonce.hex(), "issued_at": CH.issued_at,
                 "difficulty": 20, "tag": CH.tag.hex()}


def test_data_response_has_no_decoy_count():
    assert "decoy" not in wire.encode(DataResponse([{"x": 1}], b"")).decode()


def test_unknown_fields_ignored():
    line = b'{"type":"reject","reason":"denied","retry_after_ms":5,"extra":[1,2]}\n'
    assert wire.decode(line) == Reject("denied", 5)


def test_solution_identity_defaults_to_request():
    d = wire.to_dict(Request("/p", "abc", Solution(Challenge(CH.nonce, 1, "abc", 2, CH.tag), 3)))
    del d["solution"]["client_id"]
    got = wire.from_dict(d)
    assert got.solution.challenge.client_id == "abc"


def test_with_identity_fills_peer():
    d = wire.to_dict(Request("/p", None, Solution(Challenge(CH.nonce, 1, "", 2, CH.tag), 3)))
    del d["solution"]["client_id"]
    req = wire.with_identity(wire.from_dict(d), "192.0.2.1")
    assert req.client_id == "192.0.2.1" and req.solution.challenge.client_id == "192.0.2.1"
    assert wire.with_identity(Request("/p", "me"), "peer").client_id == "me"


@pytest.mark.parametrize("line", [
    b"not json\n",
    b"[1,2]\n",
    b'{"type":"bogus"}\n',
    b'{"type":"request"}\n',
    b'{"type":"request","path":5}\n',
    b'{"type":"challenge","nonce":"ZZ","issued_at":1,"difficulty":1,"tag":"00"}\n',
    b'{"type":"challenge","nonce":"' + b"AB" * 16 + b'","issued_at":1,"difficulty":1,"tag":"' + b"00" * 32 + b'"}\n',
    b'{"type":"request","path":"/","solution":{"nonce":"' + b"00" * 16 + b'","issued_at":1,"difficulty":1,"tag":"'
    + b"00" * 32 + b'","counter":-1}}\n',
    b'{"type":"request","path":"/","solution":{"nonce":"' + b"00" * 16 + b'","issued_at":true,"difficulty":1,'
    b'"tag":"' + b"00" * 32 + b'","counter":1}}\n',
    b'{"type":"request","path":"/","solution":7}\n',
    b"\xff\xfe\n",
])
def test_malformed(line):
    with pytest.raises(MalformedMessage):
        wire.decode(line)


@given(st.binary(max_size=200))
def test_decode_never_raises_other_errors(data):
    try:
        wire.decode(data)
    except MalformedMessage:
        pass
