import pytest
from hypothesis import given, strategies as st

from frugal5g import interworking as iw
from frugal5g.errors import BadCredentials, EpochRegression, ModeMismatch, NoExternalNetwork, NotAuthenticated
from frugal5g.interworking import AuthState, EapKind, NetworkMode, SessionSummary, Target

REGISTRY = {"ue1": "secret-ue1", "ue2": "secret-ue2"}
FOUR = [EapKind.IDENTITY_REQUEST, EapKind.IDENTITY_RESPONSE, EapKind.CHALLENGE, EapKind.CHALLENGE_RESPONSE]


@pytest.mark.parametrize("mode", list(NetworkMode))
def test_four_message_exchange(mode):
    session, msgs = iw.authenticate("ue1", "secret-ue1", mode, REGISTRY)
    assert [m.kind for m in msgs] == FOUR
    assert session.state is AuthState.AUTHENTICATED and session.authenticated
    assert session.key_digest != bytes(16)
    assert session.nas_stub == (mode is NetworkMode.FIVE_G_CORE)


def test_bad_credentials():
    with pytest.raises(BadCredentials) as info:
        iw.authenticate("ue1", "guess", NetworkMode.FIXED_BROADBAND, REGISTRY)
    assert info.value.session.state is AuthState.FAILED
    assert [m.kind for m in info.value.messages] == FOUR
    with pytest.raises(NotAuthenticated):
        iw.forward_uplink(info.value.session, NetworkMode.FIXED_BROADBAND, local=False)


def test_unknown_ue_fails():
    with pytest.raises(BadCredentials):
        iw.authenticate("stranger", "x", NetworkMode.STANDALONE, REGISTRY)


def test_step_by_step_authenticator():
    auth = iw.Authenticator(REGISTRY, NetworkMode.STANDALONE)
    req = auth.start("ue2")
    assert auth.sessions["ue2"].state is AuthState.IDLE
    challenge = auth.receive(iw.supplicant_reply(req, "secret-ue2"))
    assert auth.sessions["ue2"].state is AuthState.CHALLENGED
    # replies out of order are ignored
    assert auth.receive(iw.supplicant_reply(req, "secret-ue2")) is None
    assert auth.receive(iw.supplicant_reply(challenge, "secret-ue2")) is None
    assert auth.sessions["ue2"].authenticated
    auth.revoke("ue2")
    assert auth.sessions["ue2"].state is AuthState.FAILED


def test_restart_uses_fresh_nonce():
    auth = iw.Authenticator(REGISTRY, NetworkMode.STANDALONE)
    auth.start("ue1")
    first = auth.sessions["ue1"].nonce
    auth.start("ue1")
    assert auth.sessions["ue1"].nonce != first


def test_forwarding_targets():
    session, _ = iw.authenticate("ue1", "secret-ue1", NetworkMode.FIVE_G_CORE, REGISTRY)
    assert iw.forward_uplink(session, NetworkMode.FIVE_G_CORE, local=False) == iw.Forward(Target.CORE, "non-3gpp")
    assert iw.forward_uplink(session, NetworkMode.FIXED_BROADBAND, local=False).target is Target.GATEWAY
    assert iw.forward_uplink(session, NetworkMode.STANDALONE, local=True).target is Target.LOCAL
    with pytest.raises(NoExternalNetwork):
        iw.forward_uplink(session, NetworkMode.STANDALONE, local=False)
    with pytest.raises(NotAuthenticated):
        iw.forward_uplink(None, NetworkMode.STANDALONE, local=True)


def summary(ue, subscribed=True, associated=True, auth="Authenticated"):
    return SessionSummary(ue, subscribed, associated, auth)


def test_sync_identical_states_is_fixed_point():
    state = {"ue1": summary("ue1"), "ue2": summary("ue2", associated=False, auth="Idle")}
    rec = iw.sync_cn(state, dict(state), 1, NetworkMode.FIVE_G_CORE)
    assert rec.reconciled == state
    assert rec.an_digest == rec.cn_digest == iw.state_digest(state)


def test_sync_core_revocation_wins():
    an = {"ue1": summary("ue1")}
    cn = {"ue1": summary("ue1", subscribed=False)}
    rec = iw.sync_cn(an, cn, 2, NetworkMode.FIVE_G_CORE)
    assert rec.reconciled["ue1"].auth_state == "Failed" and not rec.reconciled["ue1"].subscribed


def test_sync_access_network_owns_association():
    an = {"ue1": summary("ue1", associated=True)}
    cn = {"ue1": summary("ue1", associated=False)}
    assert iw.sync_cn(an, cn, 3, NetworkMode.FIVE_G_CORE).reconciled["ue1"].associated


def test_sync_errors():
    with pytest.raises(ModeMismatch):
        iw.sync_cn({}, {}, 1, NetworkMode.FIXED_BROADBAND)
    with pytest.raises(EpochRegression):
        iw.sync_cn({}, {}, 4, NetworkMode.FIVE_G_CORE, last_epoch=4)


summaries = st.builds(SessionSummary, st.sampled_from(["ue1", "ue2", "ue3"]), st.booleans(), st.booleans(),
                      st.sampled_from([s.value for s in AuthState]))
states = st.lists(summaries, max_size=3).map(lambda xs: {s.ue_id: s for s in xs})


@given(states, states, st.integers(1, 100))
def test_sync_is_idempotent(an, cn, epoch):
    first = iw.sync_cn(an, cn, epoch, NetworkMode.FIVE_G_CORE)
    again = iw.sync_cn(first.reconciled, first.reconciled, epoch + 1, NetworkMode.FIVE_G_CORE, epoch)
    assert again.reconciled == first.reconciled
    assert first.an_digest == first.cn_digest == again.an_digest
