"""Binary codecs for the plain NAS EMM subset carried on the simulated air link.

Identities use the classic BCD mobile-identity layout: the first octet packs
digit 1 in the high nibble, an odd-length flag at bit 3 and the identity type
in the low three bits; every following octet holds two digits with the later
digit in the high nibble, and an even digit count ends with an 0xF filler
nibble.  EMM frames are a protocol-discriminator octet (0x07), a message-type
octet and the message fields in fixed order.  All encoders are pure functions;
decoders either return a valid value or raise a Malformed* error, never a
value that violates the type constraints.
"""

import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Union


_DIGITS_RE = re.compile(r"[0-9]+")

MID_TYPE_IMSI = 0b001
MID_TYPE_GUTI = 0b110
EMM_DISCRIMINATOR = 0x07

CAUSE_ILLEGAL_UE = 3
CAUSE_LABELS = {CAUSE_ILLEGAL_UE: "Illegal UE"}


class CodecError(ValueError):
    """Base class for malformed wire data."""


class MalformedIdentity(CodecError):
    pass


class MalformedPlmn(CodecError):
    pass


class MalformedEmm(CodecError):
    pass


class EmmMsgType(IntEnum):
    ATTACH_REQUEST = 0x41
    ATTACH_ACCEPT = 0x42
    ATTACH_REJECT = 0x44
    TAU_REQUEST = 0x48
    TAU_ACCEPT = 0x49
    TAU_REJECT = 0x4B
    IDENTITY_REQUEST = 0x55
    IDENTITY_RESPONSE = 0x56


class IdentityKind(IntEnum):
    IMSI = 0x01


def _check_digits(value: str, name: str) -> None:
    if not _DIGITS_RE.fullmatch(value):
        raise ValueError(f"{name} must be decimal digits, got {value!r}")


@dataclass(frozen=True)
class Plmn:
    """Network identity: 3-digit MCC plus 2- or 3-digit MNC."""

    mcc: str
    mnc: str

    def __post_init__(self):
        _check_digits(self.mcc, "mcc")
        _check_digits(self.mnc, "mnc")
        if len(self.mcc) != 3:
            raise ValueError(f"mcc must be 3 digits, got {self.mcc!r}")
        if len(self.mnc) not in (2, 3):
            raise ValueError(f"mnc must be 2 or 3 digits, got {self.mnc!r}")

    def __str__(self):
        return f"{self.mcc}-{self.mnc}"


@dataclass(frozen=True)
class Imsi:
    """Permanent subscriber identity, 6..15 decimal digits."""

    digits: str

    def __post_init__(self):
        _check_digits(self.digits, "imsi")
        if not 6 <= len(self.digits) <= 15:
            raise ValueError(f"imsi must have 6..15 digits, got {len(self.digits)}")

    def __str__(self):
        return self.digits


@dataclass(frozen=True)
class Guti:
    """Temporary subscriber identity handed out on attach."""

    plmn: Plmn
    mme_group: int
    mme_code: int
    m_tmsi: int

    def __post_init__(self):
        if not 0 <= self.mme_group <= 0xFFFF:
            raise ValueError(f"mme_group out of range: {self.mme_group}")
        if not 0 <= self.mme_code <= 0xFF:
            raise ValueError(f"mme_code out of range: {self.mme_code}")
        if not 0 <= self.m_tmsi <= 0xFFFFFFFF:
            raise ValueError(f"m_tmsi out of range: {self.m_tmsi}")


@dataclass(frozen=True)
class EmmCause:
    value: int

    def __post_init__(self):
        if not 0 <= self.value <= 0xFF:
            raise ValueError(f"cause out of range: {self.value}")


ILLEGAL_UE = EmmCause(CAUSE_ILLEGAL_UE)


def _check_tac(tac: int) -> None:
    if not 0 <= tac <= 0xFFFF:
        raise ValueError(f"tac out of range: {tac}")


@dataclass(frozen=True)
class AttachRequest:
    identity: Union[Imsi, Guti]


@dataclass(frozen=True)
class AttachAccept:
    guti: Guti
    tac: int

    def __post_init__(self):
        _check_tac(self.tac)


@dataclass(frozen=True)
class AttachReject:
    cause: EmmCause


@dataclass(frozen=True)
class TauRequest:
    guti: Guti
    last_tac: int

    def __post_init__(self):
        _check_tac(self.last_tac)


@dataclass(frozen=True)
class TauAccept:
    pass


@dataclass(frozen=True)
class TauReject:
    cause: EmmCause


@dataclass(frozen=True)
class IdentityRequest:
    requested: IdentityKind = IdentityKind.IMSI


@dataclass(frozen=True)
class IdentityResponse:
    imsi: Imsi


EmmMessage = Union[
    AttachRequest,
    AttachAccept,
    AttachReject,
    TauRequest,
    TauAccept,
    TauReject,
    IdentityRequest,
    IdentityResponse,
]

UE_ORIGINATED = (AttachRequest, TauRequest, IdentityResponse)

_MSG_TYPES = {
    AttachRequest: EmmMsgType.ATTACH_REQUEST,
    AttachAccept: EmmMsgType.ATTACH_ACCEPT,
    AttachReject: EmmMsgType.ATTACH_REJECT,
    TauRequest: EmmMsgType.TAU_REQUEST,
    TauAccept: EmmMsgType.TAU_ACCEPT,
    TauReject: EmmMsgType.TAU_REJECT,
    IdentityRequest: EmmMsgType.IDENTITY_REQUEST,
    IdentityResponse: EmmMsgType.IDENTITY_RESPONSE,
}


def message_label(msg: EmmMessage) -> str:
    """Upper-case wire name of a message, e.g. ATTACH_REJECT."""
    return _MSG_TYPES[type(msg)].name


def encode_plmn(plmn: Plmn) -> bytes:
    """Pack MCC/MNC into the 3-octet swapped-BCD triplet."""
    mcc1, mcc2, mcc3 = (int(c) for c in plmn.mcc)
    mnc1, mnc2 = int(plmn.mnc[0]), int(plmn.mnc[1])
    mnc3 = int(plmn.mnc[2]) if len(plmn.mnc) == 3 else 0xF
    return bytes([(mcc2 << 4) | mcc1, (mnc3 << 4) | mcc3, (mnc2 << 4) | mnc1])


def decode_plmn(octets: bytes) -> Plmn:
    """Inverse of encode_plmn; rejects digit nibbles above 9."""
    if len(octets) != 3:
        raise MalformedPlmn(f"plmn must be 3 octets, got {len(octets)}")
    mcc1, mcc2 = octets[0] & 0xF, octets[0] >> 4
    mcc3, mnc3 = octets[1] & 0xF, octets[1] >> 4
    mnc1, mnc2 = octets[2] & 0xF, octets[2] >> 4
    for nib, name in ((mcc1, "mcc1"), (mcc2, "mcc2"), (mcc3, "mcc3"),
                      (mnc1, "mnc1"), (mnc2, "mnc2")):
        if nib > 9:
            raise MalformedPlmn(f"digit nibble 0x{nib:x} in {name}")
    # 0xF in the mnc3 slot is the 2-digit filler; 0xa..0xe are invalid
    if mnc3 > 9 and mnc3 != 0xF:
        raise MalformedPlmn(f"digit nibble 0x{mnc3:x} in mnc3")
    mnc = f"{mnc1}{mnc2}" if mnc3 == 0xF else f"{mnc1}{mnc2}{mnc3}"
    return Plmn(f"{mcc1}{mcc2}{mcc3}", mnc)


def encode_mobile_identity(identity: Union[Imsi, Guti]) -> bytes:
    """Encode an IMSI (BCD, type 0b001) or GUTI (type 0b110)."""
    if isinstance(identity, Imsi):
        digits = [int(c) for c in identity.digits]
        n = len(digits)
        out = bytearray([(digits[0] << 4) | ((n % 2) << 3) | MID_TYPE_IMSI])
        for i in range(1, n, 2):
            high = digits[i + 1] if i + 1 < n else 0xF
            out.append((high << 4) | digits[i])
        return bytes(out)
    if isinstance(identity, Guti):
        out = bytearray([0xF0 | MID_TYPE_GUTI])
        out += encode_plmn(identity.plmn)
        out += identity.mme_group.to_bytes(2, "big")
        out.append(identity.mme_code)
        out += identity.m_tmsi.to_bytes(4, "big")
        return bytes(out)
    raise TypeError(f"not an identity: {identity!r}")


def decode_mobile_identity(octets: bytes) -> Union[Imsi, Guti]:
    """Inverse of encode_mobile_identity on its image."""
    if not octets:
        raise MalformedIdentity("empty identity")
    kind = octets[0] & 0b111
    if kind == MID_TYPE_IMSI:
        odd = (octets[0] >> 3) & 1
        d1 = octets[0] >> 4
        if d1 > 9:
            raise MalformedIdentity(f"digit nibble 0x{d1:x} in first octet")
        digits = [d1]
        body = octets[1:]
        for i, octet in enumerate(body):
            low, high = octet & 0xF, octet >> 4
            if low > 9:
                raise MalformedIdentity(f"digit nibble 0x{low:x} at octet {i + 2}")
            digits.append(low)
            if i == len(body) - 1 and not odd:
                # even digit count: the final high nibble must be the filler
                if high != 0xF:
                    raise MalformedIdentity(
                        "even-length flag inconsistent with final nibble"
                    )
            else:
                if high > 9:
                    raise MalformedIdentity(f"digit nibble 0x{high:x} at octet {i + 2}")
                digits.append(high)
        if not 6 <= len(digits) <= 15:
            raise MalformedIdentity(f"imsi length {len(digits)} out of range 6..15")
        return Imsi("".join(str(d) for d in digits))
    if kind == MID_TYPE_GUTI:
        if octets[0] != 0xF0 | MID_TYPE_GUTI:
            raise MalformedIdentity(f"malformed guti type octet 0x{octets[0]:02x}")
        if len(octets) != 11:
            raise MalformedIdentity(f"guti must be 11 octets, got {len(octets)}")
        try:
            plmn = decode_plmn(octets[1:4])
        except MalformedPlmn as exc:
            raise MalformedIdentity(f"bad guti plmn: {exc}") from exc
        return Guti(
            plmn=plmn,
            mme_group=int.from_bytes(octets[4:6], "big"),
            mme_code=octets[6],
            m_tmsi=int.from_bytes(octets[7:11], "big"),
        )
    raise MalformedIdentity(f"unknown identity type bits 0b{kind:03b}")


def _identity_ie(identity: Union[Imsi, Guti]) -> bytes:
    body = encode_mobile_identity(identity)
    return bytes([len(body)]) + body


def encode_emm(msg: EmmMessage) -> bytes:
    """Serialize one EMM message to its plain-NAS frame."""
    head = bytes([EMM_DISCRIMINATOR, _MSG_TYPES[type(msg)]])
    if isinstance(msg, AttachRequest):
        return head + _identity_ie(msg.identity)
    if isinstance(msg, AttachAccept):
        return head + _identity_ie(msg.guti) + msg.tac.to_bytes(2, "big")
    if isinstance(msg, (AttachReject, TauReject)):
        return head + bytes([msg.cause.value])
    if isinstance(msg, TauRequest):
        return head + _identity_ie(msg.guti) + msg.last_tac.to_bytes(2, "big")
    if isinstance(msg, TauAccept):
        return head
    if isinstance(msg, IdentityRequest):
        return head + bytes([msg.requested])
    if isinstance(msg, IdentityResponse):
        return head + _identity_ie(msg.imsi)
    raise TypeError(f"not an EMM message: {msg!r}")


def _take_identity(body: bytes, pos: int):
    if pos >= len(body):
        raise MalformedEmm("truncated identity length")
    length = body[pos]
    pos += 1
    if length == 0:
        raise MalformedEmm("zero-length identity")
    if pos + length > len(body):
        raise MalformedEmm("truncated identity")
    try:
        identity = decode_mobile_identity(body[pos:pos + length])
    except MalformedIdentity as exc:
        raise MalformedEmm(f"bad identity: {exc}") from exc
    return identity, pos + length


def _take_u16(body: bytes, pos: int, what: str):
    if pos + 2 > len(body):
        raise MalformedEmm(f"truncated {what}")
    return int.from_bytes(body[pos:pos + 2], "big"), pos + 2


def _take_u8(body: bytes, pos: int, what: str):
    if pos + 1 > len(body):
        raise MalformedEmm(f"truncated {what}")
    return body[pos], pos + 1


def decode_emm(octets: bytes) -> EmmMessage:
    """Inverse of encode_emm on its image; strict about trailing octets."""
    if len(octets) < 2:
        raise MalformedEmm("frame shorter than 2 octets")
    if octets[0] != EMM_DISCRIMINATOR:
        raise MalformedEmm(f"bad protocol discriminator 0x{octets[0]:02x}")
    try:
        mtype = EmmMsgType(octets[1])
    except ValueError:
        raise MalformedEmm(f"unknown message type 0x{octets[1]:02x}") from None
    body = octets[2:]
    pos = 0
    if mtype is EmmMsgType.ATTACH_REQUEST:
        identity, pos = _take_identity(body, pos)
        msg: EmmMessage = AttachRequest(identity)
    elif mtype is EmmMsgType.ATTACH_ACCEPT:
        identity, pos = _take_identity(body, pos)
        if not isinstance(identity, Guti):
            raise MalformedEmm("attach accept must carry a guti")
        tac, pos = _take_u16(body, pos, "tac")
        msg = AttachAccept(identity, tac)
    elif mtype in (EmmMsgType.ATTACH_REJECT, EmmMsgType.TAU_REJECT):
        cause, pos = _take_u8(body, pos, "cause")
        msg = (AttachReject if mtype is EmmMsgType.ATTACH_REJECT else TauReject)(
            EmmCause(cause)
        )
    elif mtype is EmmMsgType.TAU_REQUEST:
        identity, pos = _take_identity(body, pos)
        if not isinstance(identity, Guti):
            raise MalformedEmm("tau request must carry a guti")
        last_tac, pos = _take_u16(body, pos, "last tac")
        msg = TauRequest(identity, last_tac)
    elif mtype is EmmMsgType.TAU_ACCEPT:
        msg = TauAccept()
    elif mtype is EmmMsgType.IDENTITY_REQUEST:
        kind, pos = _take_u8(body, pos, "identity kind")
        if kind != IdentityKind.IMSI:
            raise MalformedEmm(f"unknown requested identity kind 0x{kind:02x}")
        msg = IdentityRequest(IdentityKind.IMSI)
    else:  # IDENTITY_RESPONSE
        identity, pos = _take_identity(body, pos)
        if not isinstance(identity, Imsi):
            raise MalformedEmm("identity response must carry an imsi")
        msg = IdentityResponse(identity)
    if pos != len(body):
        raise MalformedEmm(f"{len(body) - pos} trailing octets")
    return msg
