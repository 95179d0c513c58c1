import pytest
from hypothesis import given, strategies as st

from frugal5g import frames
from frugal5g.emulation import state as em
from frugal5g.emulation.state import (AppData, BeaconReceived, BeaconTimeout, DrbActivated, EnbPhase,
                                      Mode, PduFromDrb, PduFromSrb, RrcConnected, UePhase)
from frugal5g.errors import AssocIdExhausted, InvariantViolation, NotAssociated, NotData, TooLarge, UnknownUe
from frugal5g.frames import FrameType, MacAddress, decode_frame, encode_frame
from frugal5g.sim.engine import ms

UE_MAC = MacAddress.local(100)
BSSID = MacAddress.local(1)


def beacon(tim=(), bssid=BSSID):
    return encode_frame(frames.build_beacon("frugal5g", 100, tim, bssid=bssid))


def ftype(pdu):
    return decode_frame(pdu).frame_type


def attach():
    """Drive both machines through the whole attach, pairing their actions by hand."""
    ue, start = em.ue_emu_start(UE_MAC)
    enb = em.EnbEmuContext(BSSID, "frugal5g")
    log = [("ue", start)]

    ue, acts = em.ue_emu_step(ue, BeaconReceived(beacon(), 1000))
    log.append(("ue", acts))
    ue, acts = em.ue_emu_step(ue, RrcConnected())
    log.append(("ue", acts))
    probe = acts[0].pdu
    enb, _ = em.enb_emu_step(enb, em.UeConnected("ue1", "voice"))
    enb, acts = em.enb_emu_step(enb, PduFromSrb(probe, "ue1"))
    log.append(("enb", acts))
    reconf = acts[0]
    ue, acts = em.ue_emu_step(ue, DrbActivated(reconf.drb_config[0], reconf.pdu))
    log.append(("ue", acts))
    assoc_req = acts[0].pdu
    enb, _ = em.enb_emu_step(enb, em.ReconfigComplete("ue1", reconf.drb_config[0]))
    enb, acts = em.enb_emu_step(enb, PduFromDrb(1, assoc_req, "ue1"))
    log.append(("enb", acts))
    ue, acts = em.ue_emu_step(ue, PduFromDrb(1, acts[0].pdu))
    log.append(("ue", acts))
    return ue, enb, log


def test_attach_follows_call_flow():
    ue, enb, log = attach()
    assert ue.phase is UePhase.ASSOCIATED and ue.assoc_id == 1 and ue.drb_id == 1
    assert enb.ues["ue1"].phase is EnbPhase.ASSOCIATED
    steps = []
    for side, acts in log:
        for a in acts:
            if isinstance(a, (em.SendOnSrb, em.SendOnDrb)):
                steps.append((side, type(a).__name__, ftype(a.pdu).value))
            elif isinstance(a, em.RequestReconfigure):
                steps.append((side, "RequestReconfigure", ftype(a.pdu).value, a.drb_config))
            elif isinstance(a, (em.RequestRrcConnect, em.EnterMode)):
                steps.append((side, type(a).__name__))
    assert steps == [
        ("ue", "EnterMode"),
        ("ue", "RequestRrcConnect"),
        ("ue", "SendOnSrb", "ProbeRequest"),
        ("enb", "RequestReconfigure", "ProbeResponse", (1, 1)),
        ("ue", "SendOnDrb", "AssociationRequest"),
        ("enb", "SendOnDrb", "AssociationResponse"),
    ]
    ue, acts = em.ue_emu_step(ue, AppData(b"hello"))
    assert ftype(acts[0].pdu) is FrameType.DATA
    enb, acts = em.enb_emu_step(enb, PduFromDrb(1, acts[0].pdu, "ue1"))
    assert acts == [em.DeliverUp(b"hello", "ue1")]


def test_phase_sequence():
    ue, _ = em.ue_emu_start(UE_MAC)
    phases = [ue.phase]
    ue, _ = em.ue_emu_step(ue, BeaconReceived(beacon(), 0))
    phases.append(ue.phase)
    ue, acts = em.ue_emu_step(ue, RrcConnected())
    phases.append(ue.phase)
    resp = encode_frame(frames.build_mgmt(FrameType.PROBE_RESPONSE, BSSID, UE_MAC, BSSID))
    ue, _ = em.ue_emu_step(ue, DrbActivated(1, resp))
    phases.append(ue.phase)
    ok = encode_frame(frames.build_mgmt(FrameType.ASSOCIATION_RESPONSE, BSSID, UE_MAC, BSSID, aid=4))
    ue, _ = em.ue_emu_step(ue, PduFromDrb(1, ok))
    phases.append(ue.phase)
    assert [p.value for p in phases] == ["Scanning", "RrcConnecting", "Probing", "Associating", "Associated"]
    assert ue.assoc_id == 4


def test_no_beacon_falls_back_to_nas():
    ue, acts = em.ue_emu_start(UE_MAC)
    assert acts == [em.StartTimer(em.BEACON_TIMER, em.DEFAULT_BEACON_WINDOW_US)]
    ue, acts = em.ue_emu_step(ue, BeaconTimeout(em.DEFAULT_BEACON_WINDOW_US))
    assert ue.phase is UePhase.NAS_FALLBACK
    assert acts == [em.EnterMode(Mode.STANDARD_NAS)]


def test_default_window_is_three_beacon_periods():
    assert em.DEFAULT_BEACON_WINDOW_US == 3 * ms(102.4)


@given(st.lists(st.sampled_from([
    BeaconReceived(beacon(), 5), RrcConnected(), AppData(b"x"), em.SleepRequest(), em.WakeRequest(),
    BeaconTimeout(9), em.RrcReleased(), PduFromDrb(1, b"junk"),
])))
def test_nas_fallback_is_absorbing(events):
    ue, _ = em.ue_emu_start(UE_MAC)
    ue, _ = em.ue_emu_step(ue, BeaconTimeout(em.DEFAULT_BEACON_WINDOW_US))
    for ev in events:
        ue2, acts = em.ue_emu_step(ue, ev)
        assert ue2 == ue and acts == []


def test_app_data_while_probing_is_unexpected():
    ue, _ = em.ue_emu_start(UE_MAC)
    ue, _ = em.ue_emu_step(ue, BeaconReceived(beacon(), 0))
    ue, _ = em.ue_emu_step(ue, RrcConnected())
    ue2, acts = em.ue_emu_step(ue, AppData(b"early"))
    assert ue2 == ue
    assert len(acts) == 1 and acts[0].event == "UnexpectedEvent"


def test_probe_request_yields_one_reconfigure():
    enb = em.EnbEmuContext(BSSID, "frugal5g")
    enb, _ = em.enb_emu_step(enb, em.UeConnected("ue1", "interactive"))
    probe = encode_frame(frames.build_mgmt(FrameType.PROBE_REQUEST, UE_MAC, frames.BROADCAST, frames.BROADCAST))
    enb, acts = em.enb_emu_step(enb, PduFromSrb(probe, "ue1"))
    assert len(acts) == 1 and isinstance(acts[0], em.RequestReconfigure)
    assert acts[0].drb_config == (1, 8)
    assert ftype(acts[0].pdu) is FrameType.PROBE_RESPONSE


def test_association_request_before_complete():
    enb = em.EnbEmuContext(BSSID, "frugal5g")
    enb, _ = em.enb_emu_step(enb, em.UeConnected("ue1"))
    probe = encode_frame(frames.build_mgmt(FrameType.PROBE_REQUEST, UE_MAC, frames.BROADCAST, frames.BROADCAST))
    enb, _ = em.enb_emu_step(enb, PduFromSrb(probe, "ue1"))
    req = encode_frame(frames.build_mgmt(FrameType.ASSOCIATION_REQUEST, UE_MAC, BSSID, BSSID))
    enb2, acts = em.enb_emu_step(enb, PduFromDrb(1, req, "ue1"))
    assert enb2 == enb
    assert [a.event for a in acts] == ["UnexpectedEvent"]


def test_unknown_ue():
    enb = em.EnbEmuContext(BSSID, "frugal5g")
    with pytest.raises(UnknownUe):
        em.enb_emu_step(enb, PduFromSrb(b"", "ghost"))


def test_assoc_ids_exhausted():
    ues = {f"u{i}": em.EnbUeEntry(MacAddress.local(1000 + i), EnbPhase.ASSOCIATED, 1, i)
           for i in range(1, 256)}
    enb = em.EnbEmuContext(BSSID, "frugal5g", connected={u: "background" for u in ues}, ues=ues)
    enb, _ = em.enb_emu_step(enb, em.UeConnected("late"))
    probe = encode_frame(frames.build_mgmt(FrameType.PROBE_REQUEST, UE_MAC, frames.BROADCAST, frames.BROADCAST))
    with pytest.raises(AssocIdExhausted):
        em.enb_emu_step(enb, PduFromSrb(probe, "late"))


def test_duplicate_assoc_ids_rejected():
    e = em.EnbUeEntry(UE_MAC, EnbPhase.ASSOCIATED, 1, 3)
    with pytest.raises(InvariantViolation):
        em.EnbEmuContext(BSSID, "x", ues={"a": e, "b": e})


def test_encapsulate_round_trip_and_limits():
    f = em.encapsulate(b"payload", UE_MAC, BSSID, BSSID, 4097)
    assert f.frame_type is FrameType.DATA and f.seq == 1
    assert em.decapsulate(decode_frame(encode_frame(f))) == b"payload"
    assert em.encapsulate(b"", UE_MAC, BSSID, BSSID, 0).body == b""
    with pytest.raises(TooLarge):
        em.encapsulate(bytes(2305), UE_MAC, BSSID, BSSID, 0)
    with pytest.raises(NotData):
        em.decapsulate(frames.build_beacon("frugal5g", 100))


@given(st.binary(max_size=2304), st.integers(0, 10_000))
def test_decapsulate_inverts_encapsulate(sdu, seq):
    raw = encode_frame(em.encapsulate(sdu, UE_MAC, BSSID, BSSID, seq))
    assert em.decapsulate(decode_frame(raw)) == sdu


@pytest.mark.parametrize("log, now, window, mode", [
    ([ms(950)], ms(1000), ms(300), Mode.EMULATION),
    ([], ms(1000), ms(300), Mode.STANDARD_NAS),
    ([ms(700)], ms(1000), ms(300), Mode.EMULATION),
    ([ms(699)], ms(1000), ms(300), Mode.STANDARD_NAS),
    ([ms(1001)], ms(1000), ms(300), Mode.STANDARD_NAS),
])
def test_detect_mode(log, now, window, mode):
    assert em.detect_mode(log, now, window) is mode


def test_detect_mode_window_must_be_positive():
    with pytest.raises(InvariantViolation):
        em.detect_mode([], 0, 0)


def sleeping_pair():
    ue, enb, _ = attach()
    ue, acts = em.ue_emu_step(ue, em.SleepRequest())
    assert ue.phase is UePhase.SLEEPING and decode_frame(acts[0].pdu).power_mgmt
    enb, _ = em.enb_emu_step(enb, PduFromDrb(1, acts[0].pdu, "ue1"))
    assert enb.ues["ue1"].sleeping
    return ue, enb


def test_tim_paging():
    ue, enb = sleeping_pair()
    assert em.page_via_tim(enb, []) == frozenset()
    for sdu in (b"one", b"two", b"three"):
        enb, acts = em.enb_emu_step(enb, em.DownlinkData("ue1", sdu))
        assert acts == []
    assert em.page_via_tim(enb, ["ue1"]) == {1}
    enb, (bcast,) = em.enb_emu_step(enb, em.BeaconTick())
    assert frames.decode_beacon_body(decode_frame(bcast.pdu).body).tim == {1}
    ue, acts = em.ue_emu_step(ue, BeaconReceived(bcast.pdu, 5000))
    assert ue.phase is UePhase.ASSOCIATED
    wake = acts[0].pdu
    assert not decode_frame(wake).power_mgmt
    enb, acts = em.enb_emu_step(enb, PduFromDrb(1, wake, "ue1"))
    delivered = []
    for a in acts:
        ue, up = em.ue_emu_step(ue, PduFromDrb(1, a.pdu))
        delivered += [u.sdu for u in up]
    assert delivered == [b"one", b"two", b"three"]
    enb, (bcast,) = em.enb_emu_step(enb, em.BeaconTick())
    assert frames.decode_beacon_body(decode_frame(bcast.pdu).body).tim == frozenset()


def test_page_unassociated():
    enb = em.EnbEmuContext(BSSID, "frugal5g")
    with pytest.raises(NotAssociated):
        em.page_via_tim(enb, ["ue1"])


def test_beacons_stop_when_disabled():
    enb = em.EnbEmuContext(BSSID, "frugal5g")
    enb, _ = em.enb_emu_step(enb, em.SetBeaconing(False))
    assert em.enb_emu_step(enb, em.BeaconTick())[1] == []


def test_deauth_sends_frame_and_releases():
    ue, enb, _ = attach()
    enb, acts = em.enb_emu_step(enb, em.Deauthenticate("ue1"))
    assert ftype(acts[0].pdu) is FrameType.DEAUTHENTICATION
    assert isinstance(acts[1], em.ReleaseRrc)
    assert "ue1" not in enb.ues
    ue, acts = em.ue_emu_step(ue, PduFromDrb(1, acts[0].pdu))
    assert ue.phase is UePhase.SCANNING and ue.assoc_id is None


ue_events = st.sampled_from([
    BeaconReceived(beacon(), 10), BeaconReceived(beacon({1}), 20), BeaconReceived(b"\x00", 30),
    BeaconTimeout(ms(400)), RrcConnected(), em.RrcReleased(), AppData(b"d"), em.SleepRequest(),
    em.WakeRequest(),
    DrbActivated(1, encode_frame(frames.build_mgmt(FrameType.PROBE_RESPONSE, BSSID, UE_MAC, BSSID))),
    PduFromDrb(1, encode_frame(frames.build_mgmt(FrameType.ASSOCIATION_RESPONSE, BSSID, UE_MAC, BSSID, aid=2))),
    PduFromDrb(1, encode_frame(em.encapsulate(b"dl", BSSID, UE_MAC, BSSID, 0))),
    PduFromSrb(encode_frame(frames.build_mgmt(FrameType.PROBE_RESPONSE, BSSID, UE_MAC, BSSID, status=1))),
])


@given(st.lists(ue_events, max_size=25))
def test_ue_machine_is_pure_and_total(events):
    def replay():
        s, out = em.ue_emu_start(UE_MAC)
        trail = [(s, tuple(out))]
        for ev in events:
            s, out = em.ue_emu_step(s, ev)
            trail.append((s, tuple(out)))
        return trail

    first = replay()
    assert first == replay()
    for s, _ in first:
        if s.phase in (UePhase.ASSOCIATED, UePhase.SLEEPING):
            assert s.assoc_id is not None and s.drb_id is not None
    fell = False
    for s, out in first:
        if fell:
            assert out == ()
        fell = fell or s.phase is UePhase.NAS_FALLBACK


@given(st.lists(st.binary(max_size=300), max_size=20))
def test_data_integrity_in_order(sdus):
    ue, enb, _ = attach()
    got = []
    for sdu in sdus:
        ue, acts = em.ue_emu_step(ue, AppData(sdu))
        enb, up = em.enb_emu_step(enb, PduFromDrb(1, acts[0].pdu, "ue1"))
        got += [a.sdu for a in up]
    assert got == [s for s in sdus if s]
