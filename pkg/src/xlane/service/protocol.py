"""Wire formats of the broker client channel and the worker interface.

All message payloads are JSON objects with a "type" field. canonical_json
gives a stable byte serialization (sorted keys, no whitespace), which the
statelessness checks compare directly.
"""

from __future__ import annotations

import json

from ..errors import ValidationError
from ..features import ObservationWindow

CLIENT_TYPES = ("open", "close")
SERVER_TYPES = ("prediction", "session_closed", "roster", "error", "gap", "ack")
EXPLAIN_METHODS = ("lrp-omega", "lrp-identity", "ig")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def parse_client_message(raw) -> dict:
    """Validate a client->broker message; raises ValidationError."""
    if isinstance(raw, (bytes, str)):
        try:
            raw = json.loads(raw)
        except ValueError as e:
            raise ValidationError(f"client message is not JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ValidationError("client message must be an object")
    mtype = raw.get("type")
    if mtype not in CLIENT_TYPES:
        raise ValidationError(f"unknown client message type {mtype!r}")
    if not isinstance(raw.get("uuid"), str) or not raw["uuid"]:
        raise ValidationError("client message needs a vehicle uuid")
    method = raw.get("method", "lrp-omega")
    if method not in EXPLAIN_METHODS:
        raise ValidationError(f"method must be one of {EXPLAIN_METHODS}")
    out = {"type": mtype, "uuid": raw["uuid"], "method": method}
    for key in ("ln_rule", "epsilon", "steps", "explain_class"):
        if key in raw:
            out[key] = raw[key]
    return out


def parse_predict_body(body: dict):
    """Validate a worker /predict body; returns (windows, options, batched).

    The body carries either a single "window" or a list "windows", plus the
    method options. Raises ValidationError on schema violations.
    """
    if not isinstance(body, dict):
        raise ValidationError("predict body must be an object")
    batched = "windows" in body
    if batched == ("window" in body):
        raise ValidationError("provide exactly one of 'window' or 'windows'")
    raw_windows = body["windows"] if batched else [body["window"]]
    if not isinstance(raw_windows, list) or not raw_windows:
        raise ValidationError("'windows' must be a non-empty list")
    windows = [ObservationWindow.from_dict(w) for w in raw_windows]
    method = body.get("method", "lrp-omega")
    if method not in EXPLAIN_METHODS:
        raise ValidationError(f"method must be one of {EXPLAIN_METHODS}")
    options = {
        "method": method,
        "epsilon": float(body.get("epsilon", 1e-3)),
        "omega_variant": body.get("omega_variant", "full-decomposition"),
        "steps": int(body.get("steps", 50)),
        "explain_class": body.get("explain_class", "predicted"),
    }
    if options["explain_class"] not in ("predicted", "left", "keep", "right"):
        raise ValidationError("explain_class must be 'predicted' or a class name")
    return windows, options, batched
