"""Northbound side of the access network.

Authentication is a four-message EAP-style stub run between the UE and the
interworking function at the PoP. It never looks at the serving RAT, so a UE
sees the same exchange over native Wi-Fi and over the emulated LTE leg.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, replace
from typing import Mapping

from .errors import BadCredentials, EpochRegression, InvariantViolation, ModeMismatch, NoExternalNetwork, NotAuthenticated

NON_3GPP_TAG = "non-3gpp"
BROADBAND_TAG = "broadband"
NONCE_LEN = 16


class NetworkMode(enum.Enum):
    FIVE_G_CORE = "FiveGCore"
    FIXED_BROADBAND = "FixedBroadband"
    STANDALONE = "Standalone"


class AuthState(enum.Enum):
    IDLE = "Idle"
    CHALLENGED = "Challenged"
    AUTHENTICATED = "Authenticated"
    FAILED = "Failed"


class AuthMethod(enum.Enum):
    DOT1X = "Dot1x"
    NAS_STUB = "NasStub"


class EapKind(enum.Enum):
    IDENTITY_REQUEST = "EapIdentityRequest"
    IDENTITY_RESPONSE = "EapIdentityResponse"
    CHALLENGE = "EapChallenge"
    CHALLENGE_RESPONSE = "EapChallengeResponse"


@dataclass(frozen=True)
class EapMessage:
    kind: EapKind
    ue_id: str
    payload: bytes = b""

    @property
    def uplink(self) -> bool:
        return self.kind in (EapKind.IDENTITY_RESPONSE, EapKind.CHALLENGE_RESPONSE)


@dataclass(frozen=True)
class AuthSession:
    ue_id: str
    state: AuthState = AuthState.IDLE
    method: AuthMethod = AuthMethod.DOT1X
    key_digest: bytes = bytes(16)
    nas_stub: bool = False
    nonce: bytes = b""

    def __post_init__(self):
        if len(self.key_digest) != 16:
            raise InvariantViolation("key digest must be 16 bytes")

    @property
    def authenticated(self) -> bool:
        return self.state is AuthState.AUTHENTICATED


def _nonce(ue_id: str, attempt: int) -> bytes:
    return hashlib.sha256(f"nonce|{ue_id}|{attempt}".encode()).digest()[:NONCE_LEN]


def challenge_response(credential: str, nonce: bytes) -> bytes:
    """Digest of credential XOR nonce; strength is not the point."""
    cred = hashlib.sha256(credential.encode()).digest()[:NONCE_LEN]
    mixed = bytes(a ^ b for a, b in zip(cred, nonce))
    return hashlib.sha256(b"resp|" + mixed).digest()[:16]


def _session_key(credential: str, nonce: bytes) -> bytes:
    return hashlib.sha256(b"key|" + credential.encode() + nonce).digest()[:16]


class Authenticator:
    """IWF-side 802.1x stub. One instance serves every UE of the access network."""

    def __init__(self, registry: Mapping[str, str], mode: NetworkMode):
        self.registry = dict(registry)
        self.mode = mode
        self.sessions: dict[str, AuthSession] = {}
        self._attempts: dict[str, int] = {}

    def start(self, ue_id: str) -> EapMessage:
        attempt = self._attempts.get(ue_id, 0) + 1
        self._attempts[ue_id] = attempt
        self.sessions[ue_id] = AuthSession(ue_id, nas_stub=self.mode is NetworkMode.FIVE_G_CORE,
                                           nonce=_nonce(ue_id, attempt))
        return EapMessage(EapKind.IDENTITY_REQUEST, ue_id)

    def receive(self, msg: EapMessage) -> EapMessage | None:
        """Handle an uplink EAP message; returns the reply, if any."""
        session = self.sessions.get(msg.ue_id)
        if session is None:
            return None
        if msg.kind is EapKind.IDENTITY_RESPONSE and session.state is AuthState.IDLE:
            self.sessions[msg.ue_id] = replace(session, state=AuthState.CHALLENGED)
            return EapMessage(EapKind.CHALLENGE, msg.ue_id, session.nonce)
        if msg.kind is EapKind.CHALLENGE_RESPONSE and session.state is AuthState.CHALLENGED:
            credential = self.registry.get(msg.ue_id)
            if credential is not None and msg.payload == challenge_response(credential, session.nonce):
                self.sessions[msg.ue_id] = replace(session, state=AuthState.AUTHENTICATED,
                                                   key_digest=_session_key(credential, session.nonce))
            else:
                self.sessions[msg.ue_id] = replace(session, state=AuthState.FAILED)
        return None

    def revoke(self, ue_id: str) -> None:
        session = self.sessions.get(ue_id)
        if session is not None:
            self.sessions[ue_id] = replace(session, state=AuthState.FAILED)


def supplicant_reply(msg: EapMessage, credential: str) -> EapMessage | None:
    """UE-side answer to a downlink EAP message."""
    if msg.kind is EapKind.IDENTITY_REQUEST:
        return EapMessage(EapKind.IDENTITY_RESPONSE, msg.ue_id, msg.ue_id.encode())
    if msg.kind is EapKind.CHALLENGE:
        return EapMessage(EapKind.CHALLENGE_RESPONSE, msg.ue_id, challenge_response(credential, msg.payload))
    return None


def authenticate(ue_id: str, credentials: str, mode: NetworkMode,
                 registry: Mapping[str, str]) -> tuple[AuthSession, list[EapMessage]]:
    """Run the whole exchange in one go. Raises BadCredentials on mismatch.

    The exception carries the failed session and the four messages as
    ``exc.session`` and ``exc.messages``.
    """
    auth = Authenticator(registry, mode)
    messages = [auth.start(ue_id)]
    while messages[-1] is not None and len(messages) < 4:
        reply = supplicant_reply(messages[-1], credentials)
        messages.append(reply)
        nxt = auth.receive(reply)
        if nxt is not None:
            messages.append(nxt)
    session = auth.sessions[ue_id]
    if session.state is not AuthState.AUTHENTICATED:
        exc = BadCredentials(f"{ue_id} failed authentication")
        exc.session, exc.messages = session, messages
        raise exc
    return session, messages


# -- forwarding -----------------------------------------------------------------

class Target(enum.Enum):
    CORE = "core"
    GATEWAY = "gateway"
    LOCAL = "local"


@dataclass(frozen=True)
class Forward:
    target: Target
    tag: str | None = None


def forward_uplink(session: AuthSession | None, mode: NetworkMode, *, local: bool) -> Forward:
    """Where an uplink packet goes once it reaches the PoP side of the AN."""
    if session is None or not session.authenticated:
        raise NotAuthenticated("session is not authenticated")
    if local:
        return Forward(Target.LOCAL)
    if mode is NetworkMode.FIVE_G_CORE:
        return Forward(Target.CORE, NON_3GPP_TAG)
    if mode is NetworkMode.FIXED_BROADBAND:
        return Forward(Target.GATEWAY, BROADBAND_TAG)
    raise NoExternalNetwork("standalone access network has no external network")


# -- AN/CN synchronisation ------------------------------------------------------

@dataclass(frozen=True)
class SessionSummary:
    ue_id: str
    subscribed: bool = True      # owned by the core
    associated: bool = False     # owned by the access network
    auth_state: str = AuthState.IDLE.value


@dataclass(frozen=True)
class SyncRecord:
    epoch: int
    an_digest: str
    cn_digest: str
    reconciled: dict[str, SessionSummary]


def state_digest(state: Mapping[str, SessionSummary]) -> str:
    doc = [[s.ue_id, s.subscribed, s.associated, s.auth_state] for _, s in sorted(state.items())]
    return hashlib.sha256(json.dumps(doc, separators=(",", ":")).encode()).hexdigest()[:16]


def sync_cn(an_state: Mapping[str, SessionSummary], cn_state: Mapping[str, SessionSummary],
            epoch: int, mode: NetworkMode, last_epoch: int | None = None) -> SyncRecord:
    """Reconcile: the core wins on subscription, the access network on radio state."""
    if mode is not NetworkMode.FIVE_G_CORE:
        raise ModeMismatch(f"sync needs a 5G core, mode is {mode.value}")
    if last_epoch is not None and epoch <= last_epoch:
        raise EpochRegression(f"epoch {epoch} does not follow {last_epoch}")
    merged = {}
    for ue in sorted(set(an_state) | set(cn_state)):
        an, cn = an_state.get(ue), cn_state.get(ue)
        subscribed = cn.subscribed if cn is not None else False
        associated = an.associated if an is not None else False
        auth = an.auth_state if an is not None else AuthState.IDLE.value
        if not subscribed:
            auth = AuthState.FAILED.value
        merged[ue] = SessionSummary(ue, subscribed, associated, auth)
    digest = state_digest(merged)
    return SyncRecord(epoch, digest, digest, merged)
