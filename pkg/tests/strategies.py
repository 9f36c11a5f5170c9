"""Hypothesis strategies for AICL values and messages."""

from datetime import datetime, timezone

from hypothesis import strategies as st

from aicl.core.message import Message, MessageType, Metadata
from aicl.core.values import INT_MAX, INT_MIN, CallExpr, Ident, Timestamp

words = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,8}", fullmatch=True)
locals_ = st.from_regex(r"[A-Za-z0-9_-]{1,10}", fullmatch=True)
idents = st.builds(Ident, words, locals_)
texts = st.text(st.characters(blacklist_categories=("Cs",)), max_size=20)
ints = st.integers(INT_MIN, INT_MAX)
floats = st.floats(allow_nan=False, allow_infinity=False)


@st.composite
def timestamps(draw):
    secs = draw(st.integers(0, 253402300799))  # 1970 .. 9999-12-31T23:59:59
    base = Timestamp.from_datetime(datetime.fromtimestamp(secs, tz=timezone.utc))
    frac = draw(st.one_of(st.just(""), st.from_regex(r"[0-9]{1,9}", fullmatch=True)))
    return Timestamp.parse(str(base)[:-1] + (f".{frac}" if frac else "") + "Z")


scalars = st.one_of(texts, ints, floats, st.booleans(), idents, timestamps())


def _extend(children):
    maps = st.dictionaries(words, children, max_size=4)
    calls = st.builds(CallExpr, words, st.from_regex(r"[A-Za-z_][A-Za-z0-9_.-]{0,8}", fullmatch=True), maps)
    return st.one_of(st.lists(children, max_size=4), maps, calls)


values = st.recursive(scalars, _extend, max_leaves=12)
probs = st.floats(0.0, 1.0)


@st.composite
def metadata(draw):
    opt = lambda s: draw(st.one_of(st.none(), s))  # noqa: E731
    return Metadata(
        id=draw(idents),
        ts=draw(timestamps()),
        ver=opt(st.from_regex(r"[0-9]{1,2}\.[0-9]{1,2}\.[0-9]{1,2}", fullmatch=True)),
        cid=opt(idents),
        ctx=opt(st.lists(idents, max_size=3)),
        model_version=opt(texts),
        conf=opt(probs),
        priors=opt(st.dictionaries(words, probs, max_size=3)),
        space=opt(texts),
        of=opt(idents),
        reasoning_trace=opt(idents),
        cost=opt(st.dictionaries(words, ints, max_size=3)),
        latency=opt(ints),
        sig=opt(st.binary(max_size=40)),
        cap=opt(st.lists(texts, max_size=3)),
    )


messages = st.builds(Message, st.sampled_from(list(MessageType)), values, metadata())
