"""KDD99 wire format, feature schema, and the four-category label taxonomy.

The KDD Cup 1999 connection records are comma-separated lines with 41
feature fields followed by a label field that usually carries a trailing
dot ("smurf."). Three features (protocol_type, service, flag) are symbolic;
the remaining 38 are non-negative numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Mapping, Union

from .errors import (
    EmptyInputError,
    FieldTypeError,
    MalformedLineError,
    UnknownLabelError,
)

# The 41 per-connection features, in wire order.
FEATURE_NAMES = (
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
)

CATEGORICAL_POSITIONS = (1, 2, 3)
CONTINUOUS_POSITIONS = tuple(
    i for i in range(len(FEATURE_NAMES)) if i not in CATEGORICAL_POSITIONS
)
NUM_FEATURES = len(FEATURE_NAMES)
NUM_FIELDS = NUM_FEATURES + 1  # features plus the label

NORMAL = "Normal"
DOS = "DoS"
PROBE = "Probe"
UNAUTHORIZED = "UnauthorizedAccess"
# Canonical category order; coarse class indices follow it.
CATEGORIES = (NORMAL, DOS, PROBE, UNAUTHORIZED)

# Flooding and service-disruption attacks.
_DOS_LABELS = (
    "back",
    "land",
    "neptune",
    "pod",
    "smurf",
    "teardrop",
    "apache2",
    "udpstorm",
    "processtable",
    "worm",
)

# Scanning and reconnaissance.
_PROBE_LABELS = (
    "satan",
    "ipsweep",
    "nmap",
    "portsweep",
    "mscan",
    "saint",
)

# Remote-to-local and user-to-root intrusions.
_UNAUTHORIZED_LABELS = (
    "guess_passwd",
    "ftp_write",
    "imap",
    "phf",
    "multihop",
    "warezmaster",
    "warezclient",
    "spy",
    "xlock",
    "xsnoop",
    "snmpguess",
    "snmpgetattack",
    "httptunnel",
    "sendmail",
    "named",
    "mailbomb",
    "buffer_overflow",
    "loadmodule",
    "rootkit",
    "perl",
    "sqlattack",
    "xterm",
    "ps",
)


@dataclass(frozen=True)
class RawRecord:
    """One connection: 41 feature strings in wire order plus the fine label.

    The label is normalized (lowercase, trailing dot removed).
    """

    values: tuple[str, ...]
    label: str


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    kind: str  # "continuous" or "categorical"


@dataclass(frozen=True)
class FeatureSchema:
    """The 41 feature descriptors plus observed categorical vocabularies.

    Vocabularies are sorted and deduplicated, so the schema is independent
    of record order.
    """

    features: tuple[FeatureDescriptor, ...]
    vocabularies: dict[str, tuple[str, ...]]

    def vocabulary_sizes(self) -> dict[str, int]:
        return {name: len(v) for name, v in self.vocabularies.items()}

    def to_json(self) -> str:
        doc = {
            "features": [
                {"name": f.name, "kind": f.kind} for f in self.features
            ],
            "vocabularies": {k: list(v) for k, v in self.vocabularies.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "FeatureSchema":
        doc = json.loads(text)
        features = tuple(
            FeatureDescriptor(f["name"], f["kind"]) for f in doc["features"]
        )
        vocabularies = {k: tuple(v) for k, v in doc["vocabularies"].items()}
        return FeatureSchema(features=features, vocabularies=vocabularies)


@dataclass(frozen=True)
class LabelTaxonomy:
    """Total mapping from fine attack labels to the four parent categories."""

    mapping: Mapping[str, str]

    def category_of(self, label: str) -> str:
        try:
            return self.mapping[label]
        except KeyError:
            raise UnknownLabelError(label) from None

    def labels_in(self, category: str) -> tuple[str, ...]:
        return tuple(l for l, c in self.mapping.items() if c == category)


def default_taxonomy() -> LabelTaxonomy:
    """The four-way grouping of the KDD99 fine labels.

    Covers the 23 labels of the training file plus the extended test-only
    labels (apache2, mscan, saint, ...), so corpora from either file map
    without gaps.
    """
    mapping: dict[str, str] = {"normal": NORMAL}
    for label in _DOS_LABELS:
        mapping[label] = DOS
    for label in _PROBE_LABELS:
        mapping[label] = PROBE
    for label in _UNAUTHORIZED_LABELS:
        mapping[label] = UNAUTHORIZED
    return LabelTaxonomy(mapping=mapping)


_Line = Union[str, bytes]
_Stream = Union[IO[str], IO[bytes], Iterable[_Line]]


def _decode(line: _Line) -> str:
    if isinstance(line, bytes):
        return line.decode("utf-8")
    return line


def iter_kdd(stream: _Stream) -> Iterator[RawRecord]:
    """Stream RawRecords off a KDD99 file, one line at a time.

    Keeps O(1) state per line; safe for the full 700MB file. Empty lines
    are skipped. Labels come out lowercased with the trailing dot removed.

    Raises MalformedLineError when a line does not have 42 fields and
    FieldTypeError when a continuous field is not a finite non-negative
    number.
    """
    isfinite = math.isfinite
    for line_no, raw in enumerate(stream, start=1):
        line = _decode(raw).strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != NUM_FIELDS:
            raise MalformedLineError(line_no, len(parts))
        label = parts.pop().lower()
        if label.endswith("."):
            label = label[:-1]
        if not label:
            raise MalformedLineError(line_no, NUM_FIELDS)
        for col in CONTINUOUS_POSITIONS:
            try:
                v = float(parts[col])
            except ValueError:
                raise FieldTypeError(line_no, col, parts[col]) from None
            if not isfinite(v) or v < 0.0:
                raise FieldTypeError(line_no, col, parts[col])
        yield RawRecord(values=tuple(parts), label=label)


def parse_kdd(stream: _Stream) -> list[RawRecord]:
    """Parse a whole KDD99 stream into a record list (see iter_kdd)."""
    return list(iter_kdd(stream))


def format_kdd(record: RawRecord) -> str:
    """One KDD99 wire line for the record, trailing dot included."""
    return ",".join(record.values) + f",{record.label}."


def serialize_kdd(records: Iterable[RawRecord]) -> str:
    """Records back to KDD99 text; parse_kdd(serialize_kdd(r)) == r."""
    return "".join(format_kdd(r) + "\n" for r in records)


def build_schema(records: Iterable[RawRecord]) -> FeatureSchema:
    """Collect the observed vocabulary of each categorical feature.

    Order-insensitive: vocabularies are the sorted distinct values.
    """
    observed: dict[int, set[str]] = {pos: set() for pos in CATEGORICAL_POSITIONS}
    count = 0
    for record in records:
        count += 1
        for pos in CATEGORICAL_POSITIONS:
            observed[pos].add(record.values[pos])
    if count == 0:
        raise EmptyInputError("build_schema needs at least one record")
    return schema_from_vocabularies(
        {FEATURE_NAMES[pos]: sorted(observed[pos]) for pos in CATEGORICAL_POSITIONS}
    )


def schema_from_vocabularies(vocabularies: Mapping[str, Iterable[str]]) -> FeatureSchema:
    """Assemble a schema from explicit categorical vocabularies."""
    features = tuple(
        FeatureDescriptor(
            name,
            "categorical" if i in CATEGORICAL_POSITIONS else "continuous",
        )
        for i, name in enumerate(FEATURE_NAMES)
    )
    vocab = {
        FEATURE_NAMES[pos]: tuple(sorted(set(vocabularies[FEATURE_NAMES[pos]])))
        for pos in CATEGORICAL_POSITIONS
    }
    return FeatureSchema(features=features, vocabularies=vocab)


def coarse_counts(
    records: Iterable[RawRecord], taxonomy: LabelTaxonomy
) -> dict[str, int]:
    """Per-category record counts, in canonical category order."""
    counts = {category: 0 for category in CATEGORIES}
    for record in records:
        counts[taxonomy.category_of(record.label)] += 1
    return counts


def counts_csv(counts: Mapping[str, int]) -> bytes:
    """Two-column CSV rendering of category counts."""
    lines = ["category,count"]
    for category in CATEGORIES:
        lines.append(f"{category},{counts.get(category, 0)}")
    return ("\r\n".join(lines) + "\r\n").encode("utf-8")
