"""Per-relation graph propagation and multi-relation aggregation.

Each relation gets its own LightGCN-style propagation: linear neighborhood
averaging with symmetric degree normalization, no feature transform, no
nonlinearity. Relation-specific embeddings sum layers 0..L (layer 0
included), and the multi-relation table is the sum over relations.
"""

from . import autodiff as ad
from .graph import MultiplexBipartiteGraph
from .sparse import sym_norm_values


def normalized_adjacency(graph: MultiplexBipartiteGraph, relation: str):
    """Constant CSR structure + 1/sqrt(deg_u deg_v) edge values."""
    struct = graph.adjacency(relation)
    return struct, sym_norm_values(struct)


def lightgcn_propagate(graph: MultiplexBipartiteGraph, relation: str,
                       base, num_layers: int):
    """Sum of layers 0..L of degree-normalized propagation under one
    relation. Isolated nodes keep their layer-0 row."""
    if num_layers < 1:
        raise ValueError("need at least one propagation layer")
    struct, vals = normalized_adjacency(graph, relation)
    h = base
    acc = base
    for _ in range(num_layers):
        h = ad.spmm(struct, vals, h)
        acc = ad.add(acc, h)
    return acc


def aggregate_relations(per_relation):
    """Elementwise sum of the relation-specific tables."""
    tables = list(per_relation.values()) if isinstance(per_relation, dict) else list(per_relation)
    if not tables:
        raise ValueError("need at least one relation table")
    shape = ad.val(tables[0]).shape
    for t in tables[1:]:
        if ad.val(t).shape != shape:
            raise ValueError(f"shape mismatch: {ad.val(t).shape} vs {shape}")
    out = tables[0]
    for t in tables[1:]:
        out = ad.add(out, t)
    return out
