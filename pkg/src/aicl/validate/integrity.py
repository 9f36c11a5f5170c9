"""HMAC-SHA-256 integrity over the sig-less canonical encoding."""

from __future__ import annotations

import hashlib
import hmac

from ..binary import encode_canonical
from ..core.message import Message


class UnsignedMessage(ValueError):
    """Raised when verification is asked of a message that carries no sig."""


def signing_payload(m: Message) -> bytes:
    return encode_canonical(m.with_meta(sig=None))


def compute_sig(m: Message, key: bytes) -> bytes:
    return hmac.new(key, signing_payload(m), hashlib.sha256).digest()


def sign_message(m: Message, key: bytes) -> Message:
    return m.with_meta(sig=compute_sig(m, key))


def verify_integrity(m: Message, key: bytes) -> bool:
    if m.meta.sig is None:
        raise UnsignedMessage(f"message {m.meta.id} carries no sig")
    return hmac.compare_digest(m.meta.sig, compute_sig(m, key))
