"""Scenario files: JSON description of a ground-truth model.

A scenario looks like::

    {
      "name": "two_agent_standard",
      "num_agents": 2, "Y": 1, "num_types": 1,
      "type_of": [0, 0],
      "peers": [[1], [0]],
      "rates": [1.0, 1.0],
      "selection": [[[1, 1], [1, 1]]],          # [type][own][peer]
      "choice_rule": {"kind": "tabular", "entries": [
          {"type": 0, "own": 0, "counts": [0, 0], "probs": [0.5, 0.5]}, ...]}
    }

A logit rule is ``{"kind": "logit", "alpha": [...], "beta": [...]}`` with
arrays of shape (H, Y+1, Y+1). An optional ``"simulation"`` block holds
defaults for horizon, delta and burn-in.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ValidationError
from .model import LogitRule, ModelSpec, TabularRule, make_model

_NUMBER_GRID = {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}}

SCHEMA = {
    "type": "object",
    "required": ["num_agents", "Y", "num_types", "type_of", "peers", "selection", "choice_rule"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "num_agents": {"type": "integer", "minimum": 2},
        "Y": {"type": "integer", "minimum": 1},
        "num_types": {"type": "integer", "minimum": 1},
        "type_of": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "peers": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        "rates": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "selection": _NUMBER_GRID,
        "choice_rule": {
            "oneOf": [
                {"type": "object", "required": ["kind", "alpha", "beta"],
                 "properties": {"kind": {"const": "logit"}, "alpha": _NUMBER_GRID, "beta": _NUMBER_GRID}},
                {"type": "object", "required": ["kind", "entries"],
                 "properties": {
                     "kind": {"const": "tabular"},
                     "entries": {"type": "array", "items": {
                         "type": "object", "required": ["type", "own", "counts", "probs"],
                         "properties": {
                             "type": {"type": "integer", "minimum": 0},
                             "own": {"type": "integer", "minimum": 0},
                             "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                             "probs": {"type": "array", "items": {"type": "number"}}}}}}},
            ]
        },
        "simulation": {
            "type": "object",
            "properties": {
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "events": {"type": "integer", "minimum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "burn_in": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            },
        },
    },
}

BUILTIN = ("two_agent_standard", "two_agent_same", "two_agent_diff", "example1", "eight_agent")


def scenario_hash(data: dict) -> str:
    """Short sha256 of the canonical JSON encoding."""
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def validate_scenario(data: dict) -> None:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ValidationError(f"scenario invalid at {where}: {exc.message}") from None
    A, K, H = data["num_agents"], data["Y"] + 1, data["num_types"]
    if len(data["type_of"]) != A or len(data["peers"]) != A:
        raise ValidationError("type_of and peers need one entry per agent")
    if "rates" in data and len(data["rates"]) != A:
        raise ValidationError("rates need one entry per agent")
    if np.shape(data["selection"]) != (H, K, K):
        raise ValidationError(f"selection must have shape ({H}, {K}, {K})")
    rule = data["choice_rule"]
    if rule["kind"] == "logit":
        for key in ("alpha", "beta"):
            if np.shape(rule[key]) != (H, K, K):
                raise ValidationError(f"logit {key} must have shape ({H}, {K}, {K})")
    else:
        for e in rule["entries"]:
            if len(e["counts"]) != K or len(e["probs"]) != K:
                raise ValidationError(f"tabular entry {e} needs {K} counts and {K} probs")


def model_from_dict(data: dict) -> ModelSpec:
    validate_scenario(data)
    K, H = data["Y"] + 1, data["num_types"]
    rule_d = data["choice_rule"]
    if rule_d["kind"] == "logit":
        rule = LogitRule(rule_d["alpha"], rule_d["beta"])
    else:
        entries = {(e["type"], e["own"], tuple(e["counts"])): e["probs"] for e in rule_d["entries"]}
        rule = TabularRule(K, H, entries)
    return make_model(data["type_of"], data["peers"], data["selection"], rule,
                      data.get("rates"), data.get("name", ""))


def model_to_dict(model: ModelSpec, simulation: dict | None = None) -> dict:
    rule = model.rule
    if isinstance(rule, LogitRule):
        rule_d = {"kind": "logit", "alpha": rule.alpha.tolist(), "beta": rule.beta.tolist()}
    elif isinstance(rule, TabularRule):
        rule_d = {"kind": "tabular", "entries": [
            {"type": t, "own": own, "counts": list(key), "probs": p.tolist()}
            for (t, own, key), p in sorted(rule.entries.items())]}
    else:
        rule_d = {"kind": "tabular", "entries": model_to_dict(
            model.__class__(model.num_agents, model.num_alternatives, model.types, model.peers, model.selection,
                            rule.as_tabular(model.max_peer_count_by_type()), model.rates))["choice_rule"]["entries"]}
    out = {
        "name": model.name,
        "num_agents": model.num_agents,
        "Y": model.Y,
        "num_types": model.num_types,
        "type_of": list(model.types),
        "peers": [list(p) for p in model.peers],
        "rates": model.rates.tolist(),
        "selection": model.selection.tolist(),
        "choice_rule": rule_d,
    }
    if simulation:
        out["simulation"] = dict(simulation)
    return out


class Scenario:
    """A loaded scenario: raw JSON, model and hash."""

    def __init__(self, data: dict, source: str = "<dict>"):
        self.data = data
        self.model = model_from_dict(data)
        self.source = source
        self.hash = scenario_hash(data)

    @property
    def name(self) -> str:
        return self.data.get("name") or Path(self.source).stem

    @property
    def simulation(self) -> dict:
        return self.data.get("simulation", {})

    def __repr__(self):
        return f"Scenario({self.name!r}, hash={self.hash})"


def load_scenario(ref: str | Path) -> Scenario:
    """Load a scenario from a path, or a builtin by name."""
    path = Path(ref)
    if not path.exists() and str(ref) in BUILTIN:
        text = resources.files("peerchoice").joinpath("scenarios", f"{ref}.json").read_text()
        source = f"builtin:{ref}"
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise FileNotFoundError(f"cannot read scenario {ref}: {exc.strerror}") from exc
        source = str(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario {ref} is not valid JSON: {exc}") from None
    return Scenario(data, source)


def dump_scenario(model: ModelSpec, path, simulation: dict | None = None) -> str:
    data = model_to_dict(model, simulation)
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
    return scenario_hash(data)
