"""Budgets, perturbation sets and their application to a graph."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..errors import ConfigError, ValidationError

STRUCTURAL_MODES = ("global_rate", "per_target")
TEXT_OPS = ("swap", "substitute", "delete", "insert", "replace")


@dataclass(frozen=True)
class BudgetSpec:
    """How much an attack may change.

    ``global_rate`` is a fraction of the clean edge count; every flip (addition or
    removal) costs one unit against ``floor(global_rate * |E|)``.
    """

    structural_mode: str = "global_rate"
    global_rate: float = 0.0
    per_target: int = 0
    textual_edits_per_node: int = 0

    def __post_init__(self):
        if self.structural_mode not in STRUCTURAL_MODES:
            raise ConfigError(f"structural_mode must be one of {STRUCTURAL_MODES}")
        if not 0.0 <= self.global_rate <= 1.0:
            raise ConfigError(f"global_rate={self.global_rate} not in [0, 1]")
        if self.structural_mode == "per_target" and not 1 <= self.per_target <= 5:
            raise ConfigError(f"per_target={self.per_target} not in [1, 5]")
        if self.textual_edits_per_node < 0:
            raise ConfigError("textual_edits_per_node must be non-negative")

    def num_flips(self, num_edges):
        return math.floor(self.global_rate * num_edges + 1e-9)

    @property
    def level(self):
        """Scalar budget used for report rows and plots."""
        if self.structural_mode == "per_target":
            return float(self.per_target)
        return float(self.global_rate)

    @classmethod
    def rate(cls, rate, textual_edits_per_node=0):
        return cls("global_rate", float(rate), 0, textual_edits_per_node)

    @classmethod
    def targeted(cls, per_target, textual_edits_per_node=0):
        return cls("per_target", 0.0, int(per_target), textual_edits_per_node)

    @classmethod
    def textual(cls, edits_per_node):
        return cls("global_rate", 0.0, 0, int(edits_per_node))


class TextEdit(NamedTuple):
    """One character- or word-level edit, positioned in the text as it is when applied."""

    node: int
    op: str
    position: int
    payload: str


_TOKEN_AT = re.compile(r"[^\W_]+", re.UNICODE)


def apply_text_edit(text, op, position, payload):
    p = position
    if op == "swap":
        if not 0 <= p < len(text) - 1:
            raise ValidationError(f"swap position {p} out of range for length {len(text)}")
        return text[:p] + text[p + 1] + text[p] + text[p + 2 :]
    if op == "substitute":
        if not 0 <= p < len(text):
            raise ValidationError(f"substitute position {p} out of range")
        return text[:p] + payload + text[p + 1 :]
    if op == "delete":
        if not 0 <= p < len(text):
            raise ValidationError(f"delete position {p} out of range")
        return text[:p] + text[p + 1 :]
    if op == "insert":
        if not 0 <= p <= len(text):
            raise ValidationError(f"insert position {p} out of range")
        return text[:p] + payload + text[p:]
    if op == "replace":
        m = _TOKEN_AT.match(text, p) if 0 <= p <= len(text) else None
        if m is None or (p > 0 and _TOKEN_AT.match(text, p - 1)):
            raise ValidationError(f"no token starts at position {p}")
        return text[:p] + payload + text[m.end() :]
    raise ValidationError(f"unknown text edit op {op!r}")


@dataclass(eq=False)
class PerturbationSet:
    attack_name: str
    seed: int
    budget: BudgetSpec = field(default_factory=BudgetSpec)
    edge_flips: list = field(default_factory=list)
    text_edits: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def num_additions(self):
        return sum(1 for _, _, op in self.edge_flips if op == "add")

    @property
    def num_removals(self):
        return sum(1 for _, _, op in self.edge_flips if op == "remove")

    def is_empty(self):
        return not self.edge_flips and not self.text_edits

    def inverse(self):
        flips = [(u, v, "remove" if op == "add" else "add") for u, v, op in reversed(self.edge_flips)]
        return PerturbationSet(f"inverse({self.attack_name})", self.seed, self.budget, flips)

    def to_dict(self):
        d = {
            "attack": self.attack_name,
            "seed": self.seed,
            "budget": asdict(self.budget),
            "edge_flips": [[int(u), int(v), op] for u, v, op in self.edge_flips],
            "text_edits": [[int(n), op, int(p), payload] for n, op, p, payload in self.text_edits],
            "warnings": list(self.warnings),
            "info": self.info,
        }
        d["content_hash"] = _hash_payload(d)
        return d

    def content_hash(self):
        return self.to_dict()["content_hash"]

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")
        return Path(path)

    @classmethod
    def from_dict(cls, d, verify=True):
        pset = cls(
            attack_name=d["attack"],
            seed=d["seed"],
            budget=BudgetSpec(**d["budget"]),
            edge_flips=[(int(u), int(v), op) for u, v, op in d["edge_flips"]],
            text_edits=[TextEdit(int(n), op, int(p), payload) for n, op, p, payload in d["text_edits"]],
            warnings=list(d.get("warnings", [])),
            info=dict(d.get("info", {})),
        )
        if verify and "content_hash" in d and d["content_hash"] != pset.content_hash():
            raise ValidationError("perturbation set content hash mismatch")
        return pset

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _hash_payload(d):
    body = {k: v for k, v in d.items() if k != "content_hash"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def merge(name, seed, budget, *psets):
    out = PerturbationSet(name, seed, budget)
    for p in psets:
        out.edge_flips.extend(p.edge_flips)
        out.text_edits.extend(p.text_edits)
        out.warnings.extend(p.warnings)
    return out


def apply_perturbation(graph, pset):
    """Return the perturbed graph; its ``texts`` carry the rewritten texts.

    Every flip is validated against the current graph before anything changes,
    so an invalid set leaves no partially-applied result.
    """
    n = graph.num_nodes
    edges = graph.edge_set()
    adds, removes = set(), set()
    for u, v, op in pset.edge_flips:
        if not (0 <= u < n and 0 <= v < n):
            raise ValidationError(f"flip ({u}, {v}) references a node outside [0, {n})")
        if u == v:
            raise ValidationError(f"flip ({u}, {v}) would create a self-loop")
        key = (min(u, v), max(u, v))
        present = (key in edges or key in adds) and key not in removes
        if op == "add":
            if present:
                raise ValidationError(f"cannot add existing edge {key}")
            if key in removes:
                removes.discard(key)
            else:
                adds.add(key)
        elif op == "remove":
            if not present:
                raise ValidationError(f"cannot remove absent edge {key}")
            if key in adds:
                adds.discard(key)
            else:
                removes.add(key)
        else:
            raise ValidationError(f"unknown flip op {op!r}")
    for e in pset.text_edits:
        if not 0 <= e.node < n:
            raise ValidationError(f"text edit references node {e.node} outside [0, {n})")

    texts = list(graph.texts)
    for e in pset.text_edits:
        texts[e.node] = apply_text_edit(texts[e.node], e.op, e.position, e.payload)
    new_edges = sorted((edges - removes) | adds)
    return type(graph)(n, np.array(new_edges, dtype=np.int64).reshape(-1, 2), texts,
                       graph.labels, graph.num_classes)
