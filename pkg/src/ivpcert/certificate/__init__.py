"""Certificates: data model, canonical serialization, independent checker, export."""

from .checker import Accept, Reject, check
from .export import UnsupportedCertificate, export_external
from .model import (CERT_KINDS, FORMAT, OBLIGATION_KINDS, VOCABULARY, ArithObligation,
                    Certificate, CertificateError, RuleApp)
from .serialize import CertificateParseError, emit, parse

__all__ = [
    "Accept", "ArithObligation", "CERT_KINDS", "Certificate", "CertificateError",
    "CertificateParseError", "FORMAT", "OBLIGATION_KINDS", "Reject", "RuleApp",
    "UnsupportedCertificate", "VOCABULARY", "check", "emit", "export_external", "parse",
]
