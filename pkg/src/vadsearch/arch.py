"""Cell architecture graphs: definition, validation, sampling, mutation,
serialization, and Weisfeiler-Lehman feature encoding.

A cell is a small DAG with two fixed input ports and three addition nodes.
Each addition node sums the outputs of exactly two operation edges; the three
addition-node outputs are concatenated along the channel axis to form the
cell output.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum


class OpKind(str, Enum):
    MBCONV_3X2 = "MBConv3x2"
    MBCONV_3X4 = "MBConv3x4"
    MBCONV_5X2 = "MBConv5x2"
    MBCONV_5X4 = "MBConv5x4"
    MHA_T_2 = "MHA_T_2"
    MHA_T_4 = "MHA_T_4"
    MHA_F_2 = "MHA_F_2"
    MHA_F_4 = "MHA_F_4"
    MHA_TF_2 = "MHA_TF_2"
    MHA_TF_4 = "MHA_TF_4"
    FFN_05 = "FFN_05"
    FFN_1 = "FFN_1"
    FFN_2 = "FFN_2"
    SE_025 = "SE_025"
    GLU_3 = "GLU_3"
    GLU_5 = "GLU_5"
    SKIP = "SKIP"
    ZERO = "ZERO"


CONV_OPS = frozenset({OpKind.MBCONV_3X2, OpKind.MBCONV_3X4,
                      OpKind.MBCONV_5X2, OpKind.MBCONV_5X4})
ATTENTION_OPS = frozenset({OpKind.MHA_T_2, OpKind.MHA_T_4, OpKind.MHA_F_2,
                           OpKind.MHA_F_4, OpKind.MHA_TF_2, OpKind.MHA_TF_4})
FFN_OPS = frozenset({OpKind.FFN_05, OpKind.FFN_1, OpKind.FFN_2})
ALL_OPS = frozenset(OpKind)

# Node ids: 0 and 1 are the two input ports, 2..4 the addition nodes.
NODE_IN1 = 0
NODE_IN2 = 1
ADD_NODES = (2, 3, 4)
NUM_EDGES = 6
_NODE_NAMES = {0: "in1", 1: "in2", 2: "add1", 3: "add2", 4: "add3"}
_NAME_NODES = {v: k for k, v in _NODE_NAMES.items()}

FORMAT_VERSION = 1


class ArchFormatError(ValueError):
    """Raised when an architecture document cannot be decoded."""


@dataclass(frozen=True)
class CellSpec:
    """Edges are (source_node, target_add_node, op) triples."""

    edges: tuple[tuple[int, int, OpKind], ...]

    def in_edges(self, node: int) -> list[tuple[int, int, OpKind]]:
        return [e for e in self.edges if e[1] == node]


@dataclass(frozen=True)
class ArchSpec:
    cell: CellSpec
    base_channels: int = 16
    num_cells: int = 4
    reduction_index: int = 2
    input_mel_bins: int = 80
    window_frames: int = 64
    target_offsets: tuple[int, ...] = (-19, -10, -1, 0, 1, 10, 19)


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class WLFeatureVector:
    """Sparse label-count map; keys are "{iteration}|{label}" strings."""

    counts: dict[str, int]
    wl_depth: int

    def dot(self, other: "WLFeatureVector") -> float:
        if len(self.counts) > len(other.counts):
            return other.dot(self)
        return float(sum(c * other.counts.get(k, 0)
                         for k, c in self.counts.items()))


def predecessors(add_node: int) -> list[int]:
    """Legal edge sources for a given addition node."""
    return [NODE_IN1, NODE_IN2] + [n for n in ADD_NODES if n < add_node]


def validate_cell(cell: CellSpec) -> ValidationReport:
    violations: list[str] = []
    if len(cell.edges) != NUM_EDGES:
        violations.append(f"expected {NUM_EDGES} edges, got {len(cell.edges)}")
    for src, dst, op in cell.edges:
        if dst not in ADD_NODES:
            violations.append(f"edge target {dst} is not an addition node")
            continue
        if src not in predecessors(dst):
            violations.append(f"edge {src}->{dst} is not a forward edge")
        if not isinstance(op, OpKind):
            violations.append(f"edge {src}->{dst} has unknown op {op!r}")
    for node in ADD_NODES:
        deg = len(cell.in_edges(node))
        if deg != 2:
            violations.append(f"node {_NODE_NAMES[node]} in-degree != 2 (got {deg})")
    if not violations:
        # Liveness: a node contributes iff a chain of non-ZERO edges links it
        # to an input port.
        live = {NODE_IN1, NODE_IN2}
        for node in ADD_NODES:
            if any(op is not OpKind.ZERO and src in live
                   for src, _, op in cell.in_edges(node)):
                live.add(node)
        if not any(n in live for n in ADD_NODES):
            violations.append("output disconnected: no non-ZERO path from an input")
    return ValidationReport(ok=not violations, violations=violations)


def random_cell(rng_seed: int, allowed_ops: frozenset[OpKind] | set[OpKind] = ALL_OPS) -> CellSpec:
    ops = sorted(allowed_ops, key=lambda o: o.value)
    if not ops:
        raise ValueError("allowed_ops must be non-empty")
    if ops == [OpKind.ZERO]:
        raise ValueError("no valid cell exists with only the ZERO op")
    rng = random.Random(rng_seed)
    for _ in range(10_000):
        edges = []
        for dst in ADD_NODES:
            preds = predecessors(dst)
            for _ in range(2):
                edges.append((rng.choice(preds), dst, rng.choice(ops)))
        cell = CellSpec(edges=tuple(edges))
        if validate_cell(cell).ok:
            return cell
    raise RuntimeError("failed to sample a valid cell")  # pragma: no cover


def mutate_cell(cell: CellSpec, rng_seed: int,
                moves: tuple[str, ...] = ("op", "rewire")) -> CellSpec:
    """One primitive change: relabel one edge's op or rewire one edge's source."""
    report = validate_cell(cell)
    if not report.ok:
        raise ValueError(f"cannot mutate invalid cell: {report.violations}")
    rng = random.Random(rng_seed)
    for _ in range(10_000):
        idx = rng.randrange(len(cell.edges))
        src, dst, op = cell.edges[idx]
        move = rng.choice(moves)
        if move == "op":
            choices = [o for o in sorted(OpKind, key=lambda o: o.value) if o is not op]
            new_edge = (src, dst, rng.choice(choices))
        else:
            choices = [p for p in predecessors(dst) if p != src]
            if not choices:
                continue
            new_edge = (rng.choice(choices), dst, op)
        edges = list(cell.edges)
        edges[idx] = new_edge
        candidate = CellSpec(edges=tuple(edges))
        if candidate != cell and validate_cell(candidate).ok:
            return candidate
    raise RuntimeError("no distinct valid neighbor found")  # pragma: no cover


def discovered_cell() -> CellSpec:
    """The bundled reference cell.

    Its operation set is {MBConv3x4, MBConv5x4, MHA_F_2, MHA_F_4, SE_025}
    plus one skip connection; the wiring is one representative layout using
    each of those operations once (see docs/reference-cell.md).
    """
    return CellSpec(edges=(
        (NODE_IN1, 2, OpKind.MBCONV_5X4),
        (NODE_IN2, 2, OpKind.MHA_F_2),
        (2, 3, OpKind.MBCONV_3X4),
        (NODE_IN1, 3, OpKind.SE_025),
        (3, 4, OpKind.MHA_F_4),
        (NODE_IN2, 4, OpKind.SKIP),
    ))


def discovered_arch(**overrides) -> ArchSpec:
    return replace(ArchSpec(cell=discovered_cell()), **overrides)


def validate_arch(arch: ArchSpec) -> ValidationReport:
    report = validate_cell(arch.cell)
    for name in ("base_channels", "num_cells", "reduction_index",
                 "input_mel_bins", "window_frames"):
        if getattr(arch, name) <= 0:
            report.violations.append(f"{name} must be positive")
    if not 1 <= arch.reduction_index <= arch.num_cells:
        report.violations.append("reduction_index out of range")
    if arch.base_channels % 4 != 0:
        report.violations.append("base_channels must be divisible by 4")
    if not arch.target_offsets:
        report.violations.append("target_offsets must be non-empty")
    report.ok = not report.violations
    return report


def serialize_arch(arch: ArchSpec) -> str:
    report = validate_arch(arch)
    if not report.ok:
        raise ValueError(f"refusing to serialize invalid arch: {report.violations}")
    doc = {
        "format_version": FORMAT_VERSION,
        "cell": {
            "nodes": [_NODE_NAMES[n] for n in (0, 1, 2, 3, 4)],
            "edges": [[_NODE_NAMES[s], _NODE_NAMES[d], op.value]
                      for s, d, op in arch.cell.edges],
        },
        "base_channels": arch.base_channels,
        "num_cells": arch.num_cells,
        "reduction_index": arch.reduction_index,
        "input_mel_bins": arch.input_mel_bins,
        "window_frames": arch.window_frames,
        "target_offsets": list(arch.target_offsets),
    }
    return json.dumps(doc, indent=2) + "\n"


def deserialize_arch(document: str | dict) -> ArchSpec:
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ArchFormatError(f"not valid JSON: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ArchFormatError("document must be a JSON object")
    required = ["cell", "base_channels", "num_cells", "reduction_index",
                "input_mel_bins", "window_frames", "target_offsets"]
    missing = [k for k in required if k not in doc]
    if missing:
        raise ArchFormatError(f"missing fields: {missing}")
    cell_doc = doc["cell"]
    if not isinstance(cell_doc, dict) or "edges" not in cell_doc:
        raise ArchFormatError("cell must be an object with an 'edges' list")
    edges = []
    for entry in cell_doc["edges"]:
        if not (isinstance(entry, list) and len(entry) == 3):
            raise ArchFormatError(f"bad edge entry {entry!r}")
        src_name, dst_name, op_name = entry
        if src_name not in _NAME_NODES or dst_name not in _NAME_NODES:
            raise ArchFormatError(f"unknown node in edge {entry!r}")
        try:
            op = OpKind(op_name)
        except ValueError:
            raise ArchFormatError(f"unknown operation {op_name!r}") from None
        edges.append((_NAME_NODES[src_name], _NAME_NODES[dst_name], op))
    arch = ArchSpec(
        cell=CellSpec(edges=tuple(edges)),
        base_channels=int(doc["base_channels"]),
        num_cells=int(doc["num_cells"]),
        reduction_index=int(doc["reduction_index"]),
        input_mel_bins=int(doc["input_mel_bins"]),
        window_frames=int(doc["window_frames"]),
        target_offsets=tuple(int(t) for t in doc["target_offsets"]),
    )
    report = validate_arch(arch)
    if not report.ok:
        raise ArchFormatError(f"invalid architecture: {report.violations}")
    return arch


def _wl_graph(cell: CellSpec) -> tuple[list[str], list[list[int]]]:
    """Expand the cell into a node-labeled digraph for WL refinement.

    Operation edges become intermediate nodes carrying their op name, so op
    identity participates in the label refinement.
    """
    labels = ["IN1", "IN2", "ADD", "ADD", "ADD"]
    in_neighbors: list[list[int]] = [[] for _ in range(5)]
    for src, dst, op in cell.edges:
        op_node = len(labels)
        labels.append(op.value)
        in_neighbors.append([src])
        in_neighbors[dst].append(op_node)
    return labels, in_neighbors


def wl_features(cell: CellSpec, h: int = 2) -> WLFeatureVector:
    if h < 0:
        raise ValueError("h must be >= 0")
    labels, in_neighbors = _wl_graph(cell)
    counts: Counter[str] = Counter()
    for it in range(h + 1):
        if it > 0:
            labels = [f"{labels[n]}({','.join(sorted(labels[m] for m in in_neighbors[n]))})"
                      for n in range(len(labels))]
        counts.update(f"{it}|{lab}" for lab in labels)
    return WLFeatureVector(counts=dict(counts), wl_depth=h)


def _canonical_edge_list(cell: CellSpec) -> list[tuple[int, int, str]]:
    """Relabel addition nodes into a wiring-determined canonical order."""
    placed = {NODE_IN1: 0, NODE_IN2: 1}
    remaining = set(ADD_NODES)
    out: list[tuple[int, int, str]] = []
    while remaining:
        ready = [n for n in remaining
                 if all(src in placed for src, _, _ in cell.in_edges(n))]
        def sort_key(n: int):
            return sorted((placed[src], op.value) for src, _, op in cell.in_edges(n))
        node = min(ready, key=sort_key)
        placed[node] = 2 + len(out) // 2
        for src, _, op in sorted(cell.in_edges(node),
                                 key=lambda e: (placed[e[0]], e[2].value)):
            out.append((placed[src], placed[node], op.value))
        remaining.discard(node)
    return out


def canonical_hash(cell: CellSpec) -> str:
    feats = wl_features(cell, h=3)
    payload = json.dumps({
        "edges": _canonical_edge_list(cell),
        "wl": sorted(feats.counts.items()),
    }, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
