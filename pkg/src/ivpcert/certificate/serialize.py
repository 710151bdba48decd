"""Canonical byte form of certificates.

JSON with sorted keys, no insignificant whitespace and UTF-8 text; every
rational is a "p/q" (or integer) string, so identical certificates always
produce identical bytes and emit(parse(b)) == b.
"""

from __future__ import annotations

import json

from .model import ArithObligation, Certificate, CertificateError, RuleApp


class CertificateParseError(CertificateError):
    """The bytes are not a well-formed certificate."""


def node_json(n) -> dict:
    if isinstance(n, ArithObligation):
        return {"obligation": n.kind, "label": n.label, "payload": n.payload}
    return {"rule": n.rule, "bindings": n.bindings, "children": [node_json(c) for c in n.children]}


def emit(result) -> bytes:
    """Canonical bytes of a certificate (or of any result carrying one)."""
    cert = result if isinstance(result, Certificate) else getattr(result, "certificate", None)
    if not isinstance(cert, Certificate):
        raise TypeError("nothing to emit: no certificate attached")
    doc = {"header": cert.header, "root": node_json(cert.root)}
    return (json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode()


def _node(d):
    if not isinstance(d, dict):
        raise CertificateParseError("node is not an object")
    if "obligation" in d:
        if set(d) != {"obligation", "label", "payload"} or not isinstance(d["payload"], dict):
            raise CertificateParseError("malformed obligation")
        return ArithObligation(d["obligation"], d["payload"], d["label"])
    if set(d) != {"rule", "bindings", "children"}:
        raise CertificateParseError("malformed rule application")
    if not isinstance(d["bindings"], dict) or not isinstance(d["children"], list):
        raise CertificateParseError("malformed rule application")
    return RuleApp(d["rule"], d["bindings"], tuple(_node(c) for c in d["children"]))


def parse(data) -> Certificate:
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CertificateParseError(f"not UTF-8: {e}") from None
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, RecursionError) as e:
        raise CertificateParseError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict) or set(doc) != {"header", "root"}:
        raise CertificateParseError("certificate must have exactly a header and a root")
    if not isinstance(doc["header"], dict):
        raise CertificateParseError("header must be an object")
    try:
        root = _node(doc["root"])
    except CertificateError as e:
        raise CertificateParseError(str(e)) from None
    if not isinstance(root, RuleApp):
        raise CertificateParseError("root must be a rule application")
    return Certificate(doc["header"], root)
