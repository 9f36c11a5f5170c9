import hashlib

import cbor2
import pytest
from hypothesis import given, settings

from aicl.binary import (
    CONF_TOLERANCE_MASK,
    DIFF_MASK,
    PRESETS,
    REPLAY_MASK,
    DecodeError,
    FieldMask,
    MaskError,
    canonical_hash,
    decode,
    dump_records,
    encode_canonical,
    load_records,
)
from aicl.core.values import CallExpr, Ident
from aicl.text import parse_message
import oracle_cbor
from strategies import messages

# Frozen from the reference writer in oracle_cbor (not from aicl.binary).
QUERY_HEX = (
    "83655155455259d941438364746f6f6c6b776561746865725f6e6f77a1686c6f636174696f6e685368616e67686169"
    "a9626964d94149826175627131627473c074323032352d30382d31355430323a30303a30305a63636964d94149826175"
    "67636f6e763132336363747881d9414982617567636f6e763132336376657265312e322e3064636f6e66f93c00657370"
    "6163656777656174686572667072696f7273a06d6d6f64656c5f76657273696f6e6e6770742d352d3230323530383031"
)
QUERY_SHA256 = "d02d22598f2d88e3163879c362a918d615b67f51a4d52e20d841e947cd8f81ef"
QUERY_REPLAY_SHA256 = "b4a375c254ce6d1a2e463601e5dee9613d36f372e2c9eef0039f94e25f0126f3"


def test_query_matches_frozen_reference(weather_pair):
    q = weather_pair[0]
    assert oracle_cbor.message(q).hex() == QUERY_HEX
    assert encode_canonical(q).hex() == QUERY_HEX
    assert canonical_hash(q).hex() == QUERY_SHA256
    assert hashlib.sha256(bytes.fromhex(QUERY_HEX)).hexdigest() == QUERY_SHA256


def test_replay_hash_matches_reference(weather_pair):
    q = weather_pair[0]
    fields = {k: v for k, v in q.meta.present().items() if k not in ("id", "ts")}
    ref = oracle_cbor.head(4, 3) + oracle_cbor.text("QUERY") + oracle_cbor.value(q.content) \
        + oracle_cbor.ordered_map(fields)
    assert hashlib.sha256(ref).hexdigest() == QUERY_REPLAY_SHA256
    assert canonical_hash(q, REPLAY_MASK).hex() == QUERY_REPLAY_SHA256


def test_cbor2_reads_the_query(weather_pair):
    doc = cbor2.loads(encode_canonical(weather_pair[0]))
    mtype, content, meta = doc
    assert mtype == "QUERY"
    assert content.tag == 0x4143
    assert content.value[:2] == ("tool", "weather_now") and dict(content.value[2]) == {"location": "Shanghai"}
    assert meta["id"].tag == 0x4149 and tuple(meta["id"].value) == ("u", "q1")
    assert meta["conf"] == 1.0 and meta["priors"] == {}


@settings(max_examples=300)
@given(messages)
def test_codec_agrees_with_reference_writer(m):
    assert encode_canonical(m) == oracle_cbor.message(m)


@settings(max_examples=300)
@given(messages)
def test_decode_inverts_encode(m):
    data = encode_canonical(m)
    back = decode(data)
    assert back == m
    assert encode_canonical(back) == data


@settings(max_examples=200)
@given(messages)
def test_cbor2_accepts_every_encoding(m):
    doc = cbor2.loads(encode_canonical(m))
    assert doc[0] == m.mtype.value and len(doc) == 3


@pytest.mark.parametrize("x,expected", [
    (0.0, "f90000"), (-0.0, "f98000"), (1.5, "f93e00"), (65504.0, "f97bff"),
    (100000.0, "fa47c35000"), (0.1, "fb3fb999999999999a"), (5.960464477539063e-08, "f90001"),
])
def test_shortest_float(x, expected):
    m = parse_message(f"[FACT: {{x:{x!r}}} | id:u!f, ts:t(2025-01-01T00:00:00Z)]")
    assert expected in encode_canonical(m).hex()
    assert oracle_cbor.float_bytes(x).hex() == expected


@pytest.mark.parametrize("n,expected", [(23, "17"), (24, "1818"), (255, "18ff"), (256, "190100"),
                                        (65536, "1a00010000"), (2**32, "1b0000000100000000"),
                                        (-1, "20"), (-(2**63), "3b7fffffffffffffff")])
def test_shortest_int(n, expected):
    assert oracle_cbor.value(n).hex() == expected
    m = parse_message(f"[FACT: {{n:{n}}} | id:u!f, ts:t(2025-01-01T00:00:00Z)]")
    assert decode(encode_canonical(m)).content == {"n": n}


def test_key_order_in_text_does_not_change_bytes():
    a = parse_message('[FACT: {b:1, a:2} | ver:"1.0.0", id:u!f, ts:t(2025-01-01T00:00:00Z)]')
    b = parse_message('[FACT: {a:2, b:1} | ts:t(2025-01-01T00:00:00Z), id:u!f, ver:"1.0.0"]')
    assert encode_canonical(a) == encode_canonical(b)


@settings(max_examples=100)
@given(messages)
def test_noncanonical_variants_rejected(m):
    for label, data, rule in oracle_cbor.noncanonical_variants(m):
        with pytest.raises(DecodeError) as err:
            decode(data)
        assert err.value.rule == rule, label


@settings(max_examples=50)
@given(messages)
def test_noncanonical_variants_still_read_leniently(m):
    canonical = cbor2.loads(encode_canonical(m))
    for label, data, _ in oracle_cbor.noncanonical_variants(m):
        assert cbor2.loads(data) == canonical, label


def _q():
    return parse_message('[QUERY: tool:x{a:1} | id:u!q, ts:t(2025-01-01T00:00:00Z)]')


@pytest.mark.parametrize("mutate,rule", [
    (lambda b: b[:-1], "CANON.TRUNCATED"),
    (lambda b: b + b"\x00", "CANON.TRAILING"),
    (lambda b: b.replace(b"\x65QUERY", b"\x65QUERX"), "SCHEMA.MTYPE"),
    (lambda b: b.replace(b"\xf9", b"\xfa"), None),
    (lambda b: b.replace(b"\xd9\x41\x43", b"\xd9\x41\x44"), "CANON.TAG"),
    (lambda b: b.replace(b"\x61a\x01", b"\x61a\x18\x01"), "CANON.INTWIDTH"),
    (lambda b: b.replace(b"\x61a\x01", b"\x61a\xf9\x7e\x00"), "VALUE.NONFINITE"),
    (lambda b: b.replace(b"\x61a\x01", b"\x61a\xfa\x3f\xc0\x00\x00"), "CANON.FLOATWIDTH"),
    (lambda b: b.replace(b"\x61a\x01", b"\x61a\x42\x00\x01"), "SCHEMA.CONTENT"),
    (lambda b: b.replace(b"\x61a\x01", b"\x61a\xf6"), "CANON.SIMPLE"),
    (lambda b: b.replace(b"\x61a\x01", b"\x61\xff\x01"), "CANON.UTF8"),
    (lambda b: b.replace(b"\x62id", b"\x62ix"), "SCHEMA.FIELD"),
    (lambda b: b.replace(b"\x30\x30\x5a", b"\x30\x30\x7a"), "CANON.TIMESTAMP"),
])
def test_malformed_bytes_name_a_rule(mutate, rule):
    data = mutate(encode_canonical(_q()))
    if rule is None:
        return  # mutation did not apply to this message
    with pytest.raises(DecodeError) as err:
        decode(data)
    assert err.value.rule == rule


def test_duplicate_metadata_key():
    q = _q()
    prefix, entries = oracle_cbor._parts(q)
    data = oracle_cbor.head(4, 3) + prefix + oracle_cbor.head(5, 3) + b"".join(
        k + v for k, v in entries + entries[-1:])
    with pytest.raises(DecodeError) as err:
        decode(data)
    assert err.value.rule == "CANON.DUPKEY"


def test_missing_required_field():
    data = oracle_cbor.head(4, 3) + oracle_cbor.text("HELLO") + oracle_cbor.value({}) \
        + oracle_cbor.ordered_map({"id": Ident("u", "a")})
    with pytest.raises(DecodeError) as err:
        decode(data)
    assert err.value.rule == "SCHEMA.REQUIRED"


def test_records_file_round_trip(weather_pair):
    blob = dump_records(weather_pair)
    assert blob[:5] == b"AICL\x01"
    assert load_records(blob) == weather_pair
    n = int.from_bytes(blob[5:9], "big")
    assert blob[9:9 + n] == encode_canonical(weather_pair[0])


@pytest.mark.parametrize("blob,rule", [
    (b"AIC", "FILE.MAGIC"), (b"XXXX\x01", "FILE.MAGIC"), (b"AICL\x02", "FILE.VERSION"),
    (b"AICL\x01\x00\x00", "FILE.TRUNCATED"), (b"AICL\x01\x00\x00\x00\x09\x83", "FILE.TRUNCATED"),
])
def test_records_file_errors(blob, rule):
    with pytest.raises(DecodeError) as err:
        load_records(blob)
    assert err.value.rule == rule


def test_record_error_offsets_are_file_relative(weather_pair):
    blob = bytearray(dump_records(weather_pair))
    second = 9 + int.from_bytes(blob[5:9], "big")
    blob[second + 4] = 0x9f  # second record's envelope made indefinite
    with pytest.raises(DecodeError) as err:
        load_records(bytes(blob))
    assert err.value.offset == second + 4 and err.value.rule == "CANON.INDEFINITE"


def test_empty_records_file():
    assert load_records(b"AICL\x01") == []


def test_mask_paths_are_checked():
    for bad in ["meta.nope", "payload", "meta", "content..x", "wall_ts.x"]:
        with pytest.raises(MaskError):
            FieldMask(frozenset([bad]))
    with pytest.raises(MaskError):
        FieldMask(tolerances={"meta.conf": -1})


def test_presets():
    assert set(PRESETS) == {"none", "replay", "default", "conf-tolerance"}
    assert DIFF_MASK.excluded == {"meta.id", "meta.ts", "meta.latency", "meta.cost", "meta.sig", "wall_ts"}
    assert CONF_TOLERANCE_MASK.tolerance("meta.conf") == 0.05


def test_masked_hash_ignores_volatile_fields(weather_pair):
    q = weather_pair[0]
    other = q.with_meta(id=Ident("u", "q2"), latency=5, cost={"usd": 1}, sig=b"\x01")
    assert canonical_hash(q, REPLAY_MASK) == canonical_hash(other, REPLAY_MASK)
    assert canonical_hash(q) != canonical_hash(other)


def test_masked_hash_content_paths():
    a = parse_message('[QUERY: tool:x{a:1, b:2} | id:u!q, ts:t(2025-01-01T00:00:00Z)]')
    b = parse_message('[QUERY: tool:x{a:1, b:3} | id:u!q, ts:t(2025-01-01T00:00:00Z)]')
    mask = FieldMask(frozenset(["content.b"]))
    assert canonical_hash(a, mask) == canonical_hash(b, mask)
    assert canonical_hash(a) != canonical_hash(b)
    whole = FieldMask(frozenset(["content"]))
    c = parse_message('[QUERY: tool:y{} | id:u!q, ts:t(2025-01-01T00:00:00Z)]')
    assert canonical_hash(a, whole) == canonical_hash(c, whole)


def test_call_args_survive_round_trip():
    m = parse_message('[QUERY: tool:a.b-c{n:[1, {x:t(2025-01-01T00:00:00.5Z)}]} | id:u!q, '
                      'ts:t(2025-01-01T00:00:00Z)]')
    assert decode(encode_canonical(m)).content == CallExpr("tool", "a.b-c", m.content.args)


def test_records_survive_a_second_cycle(weather_pair):
    blob = dump_records(weather_pair)
    assert dump_records(load_records(blob)) == blob


def test_sig_is_the_only_byte_string(weather_pair):
    signed = weather_pair[0].with_meta(sig=b"\x01\x02")
    assert decode(encode_canonical(signed)).meta.sig == b"\x01\x02"
