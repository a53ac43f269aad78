"""Shared fixtures: golden records, a small fixture corpus, scripted mocks."""

import json
import math

import pytest

# One "P<n> <label>: PASS|FAIL" line per acceptance criterion, echoed in the
# terminal summary so verdicts survive output capture.
ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_VERDICTS:
        terminalreporter.write_line(line)

from aura.corpus import Corpus, chunk_corpus
from aura.embedding import HashedTrigramEmbedder
from aura.provider import AuditLog, MockBackend, ProviderGateway, RetryPolicy
from aura.session import TurnDeps
from aura.vector_store import build_index

# Youth Laptop Scheme campaign record, used as the parser golden set. The
# defanged indicators and technique ids are frozen; tests must not edit them.
YOUTH_LAPTOP_RECORD = {
    "id": "youth-laptop-scheme",
    "title": "Phishing Campaign Exploiting Youth Laptop Scheme",
    "malware_tools": ["Crimson RAT", "ElizaRAT", "Poseidon"],
    "ttps": [
        "T1059.001 (PowerShell)",
        "T1071 (Web Protocols)",
        "T1115 (Clipboard Capture)",
        "T1204 (User Execution)",
        "T1409 (Stored App Data)",
        "T1430 (Location Tracking)",
        "T1546.013 (PowerShell Profile)",
        "T1566 (Phishing)",
        "T1573 (Encrypted Channel)",
    ],
    "iocs": [
        "88[.]222[.]245[.]211",
        "email[.]gov[.]in[.]gov-in[.]mywire[.]org",
        "postindia[.]site",
        "287a5f95458301c632d6aa02de26d7fd9b63c6661af331dff1e9b2264d150d23",
        "cbf74574278a22f1c38ca922f91548596630fc67bb234834d52557371b9abf5d",
    ],
    "targets": [
        "India",
        "Government agencies",
        "Aerospace",
        "Defense contractors",
        "Educational institutions",
        "Military",
    ],
    "timeline": "Active during 2024–2025",
    "true_group": "APT36",
    "true_nation": "Pakistan",
}

EXPECTED_TTP_IDS = [
    "T1059.001",
    "T1071",
    "T1115",
    "T1204",
    "T1409",
    "T1430",
    "T1546.013",
    "T1566",
    "T1573",
]

EXPECTED_IOCS = {
    "ipv4": ["88.222.245.211"],
    "domain": ["email.gov.in.gov-in.mywire.org", "postindia.site"],
    "hash": [
        "287a5f95458301c632d6aa02de26d7fd9b63c6661af331dff1e9b2264d150d23",
        "cbf74574278a22f1c38ca922f91548596630fc67bb234834d52557371b9abf5d",
    ],
}

# Small retrieval corpus. Each report carries distinctive markers so both
# the embedder and the scripted mock can tell them apart.
FIXTURE_REPORTS = [
    {
        "id": "r-apt36",
        "title": "Transparent Tribe targets Indian government",
        "text": (
            "Transparent Tribe, tracked as APT36, ran a phishing campaign "
            "against Indian government agencies and defense contractors. "
            "Operators deployed Crimson RAT and Poseidon through malicious "
            "documents themed around Indian state programs. Observed "
            "techniques include T1566 phishing and T1059.001 PowerShell "
            "execution, with encrypted channels used for exfiltration."
        ),
    },
    {
        "id": "r-apt28",
        "title": "Pawn Storm credential phishing wave",
        "text": (
            "Pawn Storm, also tracked as APT28 and Fancy Bear, conducted "
            "credential phishing against NATO member governments and "
            "military organizations. The operators relied on spoofed "
            "webmail portals, the X-Agent implant and brute force password "
            "spraying, consistent with long running Russian espionage "
            "campaigns across Europe."
        ),
    },
    {
        "id": "r-lazarus",
        "title": "Lazarus Group cryptocurrency intrusion",
        "text": (
            "Lazarus Group operators from North Korea compromised a "
            "cryptocurrency exchange through a trojanized trading "
            "application. The intrusion chain used T1204 user execution "
            "and custom ransomware staging tools, matching prior DPRK "
            "financially motivated operations attributed to the group."
        ),
    },
]


def attributor_payload(primary, nation, justification,
                       secondary=None, nation_secondary=None):
    """Serialize a scripted attributor reply."""
    return json.dumps({
        "primary_actor": primary,
        "secondary_actor": secondary or "",
        "nation": nation,
        "nation_secondary": nation_secondary or "",
        "justification": justification,
    })


def decision_payload(relevant, rationale="scripted"):
    return json.dumps({"relevant": relevant, "rationale": rationale})


JUSTIFICATION_APT36 = (
    "The campaign used Crimson RAT and India themed phishing "
    "infrastructure. These tools and targets match APT36 operations "
    "linked to Pakistan."
)


def preprocessor_payload(**overrides):
    """Serialize a scripted entity-extraction reply."""
    base = {
        "malware_tools": ["Crimson RAT"],
        "actors_mentioned": [],
        "targets": ["India"],
        "timeline": "",
        "ttps": ["T1566 (Phishing)"],
        "iocs": [],
    }
    base.update(overrides)
    return json.dumps(base)


def happy_script(n=1, rewritten="Who is behind the Crimson RAT phishing campaign against India?"):
    """Mock script for n full pipeline turns ending in an APT36 attribution."""
    return {
        ("preprocessor", ""): [preprocessor_payload()] * n,
        ("rewriter", ""): [rewritten] * n,
        ("decision", ""): [decision_payload(True, "context names the same tooling")] * n,
        ("attributor", ""): [
            attributor_payload(
                "APT36", "Pakistan", JUSTIFICATION_APT36,
                secondary="APT37", nation_secondary="North Korea",
            )
        ] * n,
    }


def make_gateway(script, max_attempts=1):
    """Wrap a mock script in a gateway with no real sleeping."""
    backend = MockBackend(script)
    gateway = ProviderGateway(
        backends={"mock": backend},
        routing={"default": "mock"},
        audit=AuditLog(),
        retry=RetryPolicy(max_attempts=max_attempts, base_delay=0.0,
                          sleep=lambda s: None),
    )
    return gateway, backend


def make_index(reports=None, chunk_size=64, overlap=8, dims=64):
    """Build a small in-memory index over the fixture corpus."""
    corpus = Corpus()
    for entry in reports if reports is not None else FIXTURE_REPORTS:
        corpus.ingest(
            entry["text"].encode("utf-8"),
            metadata={"id": entry["id"], "title": entry["title"]},
        )
    embedder = HashedTrigramEmbedder(dims=dims)
    index = build_index(chunk_corpus(corpus, chunk_size, overlap), embedder)
    return index, embedder


def make_deps(script, searcher=None, max_attempts=1, retrieval_k=8):
    """TurnDeps over the fixture corpus with a scripted mock gateway."""
    index, embedder = make_index()
    gateway, backend = make_gateway(script, max_attempts=max_attempts)
    deps = TurnDeps(
        index=index,
        embedder=embedder,
        gateway=gateway,
        searcher=searcher,
        retrieval_k=retrieval_k,
    )
    return deps, backend


# Hand-scored batch-eval fixture. Expected scores, derived by hand:
# group top-1 1/3, top-2 3/3, pass@3 at rank 1 2/3; nation all 3/3.
EVAL_RECORDS = [
    {
        "id": "alpha-crimson",
        "true_group": "APT36",
        "true_nation": "Pakistan",
        "malware_tools": ["Crimson RAT"],
        "targets": ["India"],
        "ttps": ["T1566"],
    },
    {
        "id": "bravo-pawnstorm",
        "true_group": "APT28",
        "true_nation": "Russia",
        "malware_tools": ["X-Agent"],
        "targets": ["NATO"],
    },
    {
        "id": "charlie-lazarus",
        "true_group": "Lazarus Group",
        "true_nation": "North Korea",
        "malware_tools": ["AppleJeus"],
        "targets": ["Cryptocurrency exchanges"],
    },
]

JUST_A = ("The campaign relied on Crimson RAT against Indian targets. "
          "That tooling matches APT36 tradecraft.")
JUST_B = ("X-Agent usage and NATO targeting fit Russian espionage. "
          "APT29 and APT28 both remain plausible operators.")
JUST_C = ("Financial targeting suggests North Korean actors. "
          "Kimsuky and Lazarus Group overlap in this tradecraft.")


def eval_script(n=3):
    """Per-record scripted pipeline for the batch-eval fixture.

    The rewriter keys match each record's body marker; later stages see
    retrieved context naming every report, so their keys match the full
    rewritten phrase, which is unique per record.
    """
    ln2 = math.log(2)
    return {
        ("rewriter", "Crimson RAT"): ["Attribution query about Crimson RAT against India"] * n,
        ("rewriter", "X-Agent"): ["Attribution query about X-Agent against NATO"] * n,
        ("rewriter", "AppleJeus"): ["Attribution query about AppleJeus intrusions"] * n,
        ("decision", "about Crimson RAT against India"): [decision_payload(True)] * n,
        ("decision", "about X-Agent against NATO"): [
            decision_payload(False, "retrieved context unrelated")] * n,
        ("decision", "about AppleJeus intrusions"): [decision_payload(True)] * n,
        ("attributor", "about Crimson RAT against India"): [
            {"text": attributor_payload("APT36", "Pakistan", JUST_A,
                                        secondary="APT37", nation_secondary="North Korea"),
             "logprobs": [["x", -ln2], ["y", -ln2]]},
        ] + [attributor_payload("APT36", "Pakistan", JUST_A,
                                secondary="APT37", nation_secondary="North Korea")] * (n - 1),
        ("attributor", "about X-Agent against NATO"): [
            {"text": attributor_payload("APT29", "Russia", JUST_B,
                                        secondary="APT28", nation_secondary="Russia"),
             "logprobs": [["x", 0.0]]},
        ] + [attributor_payload("APT29", "Russia", JUST_B,
                                secondary="APT28", nation_secondary="Russia")] * (n - 1),
        ("attributor", "about AppleJeus intrusions"): [
            attributor_payload("Kimsuky", "North Korea", JUST_C,
                               secondary="Lazarus Group", nation_secondary="North Korea"),
            attributor_payload("Lazarus Group", "North Korea", JUST_C,
                               secondary="Kimsuky", nation_secondary="North Korea"),
            attributor_payload("Kimsuky", "North Korea", JUST_C,
                               secondary="Lazarus Group", nation_secondary="North Korea"),
        ][:n],
    }


@pytest.fixture
def youth_laptop_record():
    return json.loads(json.dumps(YOUTH_LAPTOP_RECORD))


@pytest.fixture
def fixture_index():
    return make_index()
