"""Versioned JSON persistence for trained models.

The envelope carries a format version and the feature-schema fingerprint;
loading refuses files whose fingerprint does not match the caller's schema.
Floats survive the round trip bitwise because json uses repr semantics.
"""

from __future__ import annotations

import json

from ..errors import SchemaViolation
from ..stream import FeatureSchema

FORMAT_VERSION = 1


def dump_model(path: str, schema: FeatureSchema, sections: dict) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "schema_fingerprint": schema.fingerprint(),
        "schema": schema.to_json(),
    }
    doc.update(sections)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str, schema: FeatureSchema | None = None) -> dict:
    """Read a model file; verifies version and (if given) schema fingerprint."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaViolation(f"unsupported model format version {version!r}")
    if schema is not None and doc.get("schema_fingerprint") != schema.fingerprint():
        raise SchemaViolation("model was trained against a different feature schema")
    return doc
