"""Regulatory checks run identically by merchants, consumers and banks."""

from __future__ import annotations

from dataclasses import dataclass, field

from .asset import Asset

PASS = "pass"
FAIL = "fail"
NEEDS_EVIDENCE = "needs_external_evidence"


@dataclass(frozen=True)
class ComplianceRule:
    max_hops: int | None = None  # None = unlimited
    require_recipient_commitment: bool = False
    commitment_from_hop: int = 1  # first hop the commitment requirement applies to
    deposit_evidence_threshold: int | None = None  # deposits above this need evidence

    def __post_init__(self):
        if self.max_hops is not None and self.max_hops < 1:
            raise ValueError("max_hops must be positive or None")
        if self.commitment_from_hop < 1:
            raise ValueError("commitment_from_hop must be >= 1")


@dataclass
class ComplianceReport:
    verdict: str
    findings: list[tuple[str, str]] = field(default_factory=list)
    hop_commitments: list[str | None] = field(default_factory=list)

    @property
    def failed_hops(self) -> list[int]:
        return [int(d.split()[1]) for r, d in self.findings if r == "recipient_commitment"]


def check_compliance(asset: Asset, rules: ComplianceRule) -> ComplianceReport:
    hops = asset.hops
    commitments = [u.recipient_commitment.hex() if u.recipient_commitment else None for u in asset.updates]
    findings: list[tuple[str, str]] = []
    if hops == 0:
        findings.append(("hops", "asset was never transferred"))
    if rules.max_hops is not None and hops > rules.max_hops:
        findings.append(("max_hops", f"{hops} hops exceeds limit {rules.max_hops}"))
    if rules.require_recipient_commitment:
        for i, c in enumerate(commitments, start=1):
            if i >= rules.commitment_from_hop and c is None:
                findings.append(("recipient_commitment", f"hop {i} lacks a recipient bank-account commitment"))
    if findings:
        return ComplianceReport(FAIL, findings, commitments)
    threshold = rules.deposit_evidence_threshold
    if threshold is not None and asset.value > threshold:
        return ComplianceReport(
            NEEDS_EVIDENCE,
            [("deposit_evidence_threshold", f"value {asset.value} above {threshold}")],
            commitments,
        )
    return ComplianceReport(PASS, [], commitments)
