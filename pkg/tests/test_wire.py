"""QR text codec and the TCP signing service (real sockets, loopback)."""

import socket
import struct

import pytest

from vaxcred import canonical
from vaxcred.coupons import issue_coupon_batch
from vaxcred.credentials import Badge, DoseInfo, Passkey, Status, VaccinationLevel
from vaxcred.crypto import generate_keypair, sha256
from vaxcred.errors import (
    AlreadyUsedError,
    CanonicalError,
    DecodeError,
    LengthExceededError,
    ServiceUnreachableError,
    SignatureInvalidError,
    UnknownPrefixError,
)
from vaxcred.merkle import (DisclosureProof, build_pii_tree,
                            prove_disclosure)
from vaxcred.qr import (
    MAX_QR_CHARS,
    MAX_URL_CHARS,
    decode_qr,
    encode_qr,
    export_coupon_url,
    import_coupon_url,
)
from vaxcred.service import (
    SigningClient,
    encode_request,
    handle_request_bytes,
    serve,
)
from vaxcred.vaccination import BadgeIssuer, PharmacySession


@pytest.fixture
def artifacts(issuer, issuer_key, registry, rng):
    """One of everything that can live in a QR code."""
    coupon = issue_coupon_batch(issuer, 1, "02139", "healthcare",
                                registry=registry)[0]
    pii = [("name", "Quercus Robur"), ("dob", "1972-09-09")]
    session = PharmacySession(vk_issuer=issuer_key, registry=registry,
                              signer=BadgeIssuer(issuer, registry), rng=rng)
    dose = DoseInfo(product="VX-ALPHA", lot="L-7", date="2021-03-03",
                    dose_number=1, site_id="S-02")
    badge, status, passkey = session.issue_credentials_paper(coupon, dose, pii)
    proof = prove_disclosure(build_pii_tree(pii, rng=rng), ["dob"])
    return coupon, badge, status, passkey, proof


def test_qr_round_trip_every_kind(artifacts):
    for obj in artifacts:
        text = encode_qr(obj)
        prefix, _, body = text.partition(":")
        assert prefix in {"CPN1", "BDG1", "STS1", "PSK1", "DSC1"}
        assert len(text) <= MAX_QR_CHARS
        assert "=" not in body  # unpadded
        back = decode_qr(text)
        assert type(back) is type(obj)
        assert back.to_bytes() == obj.to_bytes()


def test_qr_prefixes_are_distinct(artifacts):
    prefixes = {encode_qr(obj).partition(":")[0] for obj in artifacts}
    assert len(prefixes) == 5


def test_qr_case_insensitive(artifacts):
    coupon = artifacts[0]
    text = encode_qr(coupon)
    assert decode_qr(text.lower()).to_bytes() == coupon.to_bytes()


def test_qr_expect_pins_the_type(artifacts):
    coupon, badge = artifacts[0], artifacts[1]
    assert decode_qr(encode_qr(coupon), expect=type(coupon))
    with pytest.raises(UnknownPrefixError):
        decode_qr(encode_qr(badge), expect=type(coupon))


def test_qr_rejects_junk():
    with pytest.raises(UnknownPrefixError):
        decode_qr("XYZ9:AAAA")
    with pytest.raises(UnknownPrefixError):
        decode_qr("no separator here")
    with pytest.raises(DecodeError):
        decode_qr("CPN1:????")
    with pytest.raises(DecodeError):
        decode_qr("CPN1:")
    with pytest.raises(DecodeError):
        decode_qr(b"CPN1:AAAA")  # bytes, not text
    with pytest.raises(DecodeError):
        # valid base-32 of garbage bytes
        decode_qr("CPN1:AAAAAAAA")


def test_qr_length_cap(artifacts):
    with pytest.raises(LengthExceededError):
        decode_qr("CPN1:" + "A" * MAX_QR_CHARS)
    # a disclosure proof over absurdly long values blows the budget on encode
    tree = build_pii_tree([("blob", "x" * 4000)], rng=None)
    with pytest.raises(LengthExceededError):
        encode_qr(prove_disclosure(tree, ["blob"]))


def test_qr_keyed_decode_checks_signatures(artifacts, issuer_key, rng):
    coupon, badge, status = artifacts[0], artifacts[1], artifacts[2]
    assert decode_qr(encode_qr(coupon), coupon_key=issuer_key)
    assert decode_qr(encode_qr(badge), credential_key=issuer_key)
    assert decode_qr(encode_qr(status), credential_key=issuer_key)

    _, wrong = generate_keypair(rng)
    for obj, kw in ((coupon, "coupon_key"), (badge, "credential_key"),
                    (status, "credential_key")):
        with pytest.raises(SignatureInvalidError):
            decode_qr(encode_qr(obj), **{kw: wrong})


def test_qr_unencodable_type():
    with pytest.raises(UnknownPrefixError):
        encode_qr("just a string")


def test_coupon_url_round_trip(artifacts, issuer_key):
    coupon = artifacts[0]
    url = export_coupon_url(coupon)
    assert url.startswith("vax://c/")
    assert len(url) <= MAX_URL_CHARS
    back = import_coupon_url(url, coupon_key=issuer_key)
    assert back.to_bytes() == coupon.to_bytes()
    # scheme is case-insensitive, body is too
    assert import_coupon_url("VAX://C/" + url[len("vax://c/"):].lower())
    with pytest.raises(UnknownPrefixError):
        import_coupon_url("https://example.com/x")


# -- signing service over real sockets ----------------------------------------


@pytest.fixture
def live(issuer, issuer_key, registry, rng):
    server = serve(BadgeIssuer(issuer, registry))
    yield server, SigningClient("127.0.0.1", server.port, timeout=5.0)
    server.shutdown()
    server.server_close()


def _pharmacy(issuer_key, registry, signer, rng):
    return PharmacySession(vk_issuer=issuer_key, registry=registry,
                           signer=signer, rng=rng)


def test_remote_signing_round_trip(issuer, issuer_key, registry, rng, live):
    server, client = live
    coupon = issue_coupon_batch(issuer, 1, "02139", "transit",
                                registry=registry)[0]
    session = _pharmacy(issuer_key, registry, client, rng)
    dose = DoseInfo(product="VX-ALPHA", lot="L-9", date="2021-03-10",
                    dose_number=1, site_id="S-05")
    badge, status, passkey = session.issue_credentials_paper(
        coupon, dose, [("name", "Remote R"), ("dob", "1990-01-01")]
    )
    # the signatures came over the wire and still verify locally
    from vaxcred.verification import verify_badge, verify_status

    assert verify_badge(issuer_key, badge).level == VaccinationLevel.DOSE1
    assert verify_status(issuer_key, status) == VaccinationLevel.DOSE1


def test_remote_errors_surface_as_typed_exceptions(issuer, issuer_key,
                                                   registry, rng, live):
    server, client = live
    coupon = issue_coupon_batch(issuer, 1, "02139", "transit",
                                registry=registry, start_index=10)[0]
    session = _pharmacy(issuer_key, registry, client, rng)
    dose = DoseInfo(product="VX-ALPHA", lot="L-9", date="2021-03-10",
                    dose_number=1, site_id="S-05")
    pii = [("name", "Again A"), ("dob", "1991-01-01")]
    session.issue_credentials_paper(coupon, dose, pii)
    with pytest.raises(AlreadyUsedError):
        # fresh tree salts make this a distinct request for the same coupon
        session.issue_credentials_paper(coupon, dose, pii)


def test_unreachable_service(issuer, issuer_key, registry, rng):
    coupon = issue_coupon_batch(issuer, 1, "02139", "retail",
                                registry=registry, start_index=40)[0]
    session = _pharmacy(issuer_key, registry,
                        SigningClient("127.0.0.1", 1, timeout=0.2), rng)
    dose = DoseInfo(product="VX-ALPHA", lot="L-2", date="2021-03-12",
                    dose_number=1, site_id="S-05")
    with pytest.raises(ServiceUnreachableError):
        session.issue_credentials_paper(
            coupon, dose, [("name", "Offline O"), ("dob", "1994-01-01")]
        )
    # nothing was burned: the coupon can still be redeemed later
    assert not registry.check(coupon.coupon_id).is_used


def test_request_digest_binds_the_payload(issuer, registry, rng):
    """Changing payload bytes without recomputing the digest is rejected."""
    back_issuer = BadgeIssuer(issuer, registry)
    response = handle_request_bytes(back_issuer, b"\x01\x05garbage")
    obj = canonical.decode(response)
    assert obj["ok"] is False and obj["error"] == "canonical"

    response = handle_request_bytes(
        back_issuer, canonical.encode({"badge": b"", "req": b"", "status": b""})
    )
    obj = canonical.decode(response)
    assert obj["ok"] is False

    response = handle_request_bytes(
        back_issuer, canonical.encode({"unexpected": 1})
    )
    assert canonical.decode(response)["ok"] is False


def test_digest_mismatch_rejected(issuer, issuer_key, registry, rng):
    coupon = issue_coupon_batch(issuer, 1, "02139", "retail",
                                registry=registry, start_index=20)[0]
    captured = {}

    class Capture:
        def sign_badge_request(self, badge_info, status_payload):
            captured["req"] = encode_request(badge_info, status_payload)
            raise CanonicalError("stop here")

    session = _pharmacy(issuer_key, registry, Capture(), rng)
    dose = DoseInfo(product="VX-ALPHA", lot="L-2", date="2021-03-11",
                    dose_number=1, site_id="S-05")
    with pytest.raises(CanonicalError):
        session.issue_credentials_paper(
            coupon, dose, [("name", "Digest D"), ("dob", "1993-01-01")]
        )

    obj = canonical.decode(captured["req"])
    assert set(obj) == {"badge", "req", "status"}
    assert obj["req"] == sha256(canonical.encode(
        {"badge": obj["badge"], "status": obj["status"]}
    ))
    # swap the two payloads but keep the stale digest: must be refused
    tampered = canonical.encode(
        {"badge": obj["status"], "req": obj["req"], "status": obj["badge"]}
    )
    out = canonical.decode(
        handle_request_bytes(BadgeIssuer(issuer, registry), tampered)
    )
    assert out["ok"] is False


def test_oversized_frame_closes_connection(live):
    server, client = live
    with socket.create_connection(("127.0.0.1", server.port), 2.0) as sock:
        sock.sendall(struct.pack(">I", 2 << 20))  # claims 2 MiB
        sock.sendall(b"x" * 64)
        sock.settimeout(2.0)
        try:
            leftover = sock.recv(4096)
        except (ConnectionError, socket.timeout):
            leftover = b""
        assert leftover == b""  # server hung up without answering


def test_frame_cap_applies_client_side(live):
    server, client = live
    with socket.create_connection(("127.0.0.1", server.port), 2.0):
        pass  # connect/disconnect is fine; the server stays up
    # follow-up request on a fresh connection still works
    response = handle_request_bytes(server.issuer, b"junk")
    assert canonical.decode(response)["ok"] is False
