"""Hypothesis strategies for valid frames and their bodies."""

from hypothesis import strategies as st

from frugal5g import frames
from frugal5g.frames import BROADCAST, FrameType, MacAddress, MacFrame

unicast = st.binary(min_size=6, max_size=6).map(lambda b: MacAddress(bytes([b[0] & 0xFE]) + b[1:]))
any_addr = st.one_of(unicast, st.just(BROADCAST), st.binary(min_size=6, max_size=6).map(MacAddress))
seqs = st.integers(0, frames.SEQ_MODULO - 1)
bodies = st.binary(max_size=frames.MAX_BODY)


@st.composite
def valid_frames(draw, max_body=frames.MAX_BODY):
    ft = draw(st.sampled_from(list(FrameType)))
    src = draw(unicast)
    if ft in (FrameType.BEACON, FrameType.PROBE_REQUEST):
        dst = BROADCAST
    elif ft is FrameType.DATA:
        dst = draw(unicast)
    else:
        dst = draw(any_addr)
    pm = draw(st.booleans()) if ft is FrameType.DATA else False
    return MacFrame(ft, dst, src, draw(any_addr), draw(seqs), draw(st.binary(max_size=max_body)), pm)


ssids = st.text(min_size=1, max_size=8).filter(lambda s: 0 < len(s.encode()) <= frames.MAX_SSID)
tims = st.frozensets(st.integers(1, frames.MAX_AID), max_size=12)
