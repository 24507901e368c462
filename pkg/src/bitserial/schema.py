"""Shipped JSON schemas and validation helpers."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .errors import FormatError


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    ref = resources.files("bitserial").joinpath("schemas").joinpath(f"{name}.schema.json")
    return json.loads(ref.read_text())


def validate_json(doc, schema_name: str) -> None:
    """Validate a document; failures carry the JSON pointer of the bad node."""
    try:
        jsonschema.validate(doc, load_schema(schema_name))
    except jsonschema.ValidationError as e:
        pointer = "/" + "/".join(str(p) for p in e.absolute_path)
        raise FormatError(f"invalid {schema_name} document at {pointer}: {e.message}") from None
