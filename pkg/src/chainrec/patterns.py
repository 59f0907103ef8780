"""Behavior-pattern channel: exact-mask pattern matrices and the two
aggregation routes (local edge-weighted propagation, global pattern-count
similarity propagation) that combine into the explicit-pattern embeddings.

A pattern mask selects the user-item pairs whose set of relations is
EXACTLY the masked subset, so the nonzero masks partition all interacting
pairs.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import MultiplexBipartiteGraph, RelationSchema
from .sparse import CSRStruct, SparseMatrix, build_struct


@dataclass(frozen=True)
class PatternMask:
    """Relation subset as a bit per schema relation; never all-zero."""

    bits: tuple

    def __post_init__(self):
        if not any(self.bits):
            raise ValueError("pattern mask must select at least one relation")
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))

    @property
    def signature(self) -> int:
        return sum(b << r for r, b in enumerate(self.bits))

    def label(self, schema: RelationSchema) -> str:
        return "&".join(rel for rel, b in zip(schema.relations, self.bits) if b)

    def relations(self, schema: RelationSchema) -> tuple:
        return tuple(rel for rel, b in zip(schema.relations, self.bits) if b)


def enumerate_patterns(schema: RelationSchema):
    """All 2^|R|-1 nonzero masks in binary-counting order (mask i has
    signature i+1)."""
    n = schema.num_relations
    return [PatternMask(tuple((i >> r) & 1 for r in range(n)))
            for i in range(1, 2 ** n)]


@dataclass(frozen=True)
class BehaviorPatternMatrix:
    """Sparse exact-mask pattern matrix: the (user, item) pairs whose
    relation set equals the mask."""

    mask: PatternMask
    num_nodes: int
    u: np.ndarray
    v: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.u.shape[0])

    def keys(self) -> np.ndarray:
        return self.u * np.int64(self.num_nodes) + self.v

    def contains(self, u: int, v: int) -> bool:
        key = u * np.int64(self.num_nodes) + v
        i = np.searchsorted(self.keys(), key)
        return bool(i < self.edge_count and self.keys()[i] == key)


def build_bbp_matrix(graph: MultiplexBipartiteGraph,
                     mask: PatternMask) -> BehaviorPatternMatrix:
    """Edge-set intersection of required relations minus the union of
    forbidden ones; never materializes a dense complement."""
    n = graph.num_nodes
    required = [graph.edge_keys(r) for r, b in zip(graph.schema.relations, mask.bits) if b]
    forbidden = [graph.edge_keys(r) for r, b in zip(graph.schema.relations, mask.bits) if not b]
    keys = required[0]
    for k in required[1:]:
        keys = np.intersect1d(keys, k, assume_unique=True)
    for k in forbidden:
        if keys.size == 0:
            break
        keys = np.setdiff1d(keys, k, assume_unique=True)
    return BehaviorPatternMatrix(mask=mask, num_nodes=n,
                                 u=keys // n, v=keys % n)


def build_all_bbps(graph: MultiplexBipartiteGraph):
    return [build_bbp_matrix(graph, m) for m in enumerate_patterns(graph.schema)]


@dataclass
class PatternWeights:
    """Learnable per-pattern logits: softmax(local) weights the pattern
    adjacencies, softplus(global) scales the pattern-count columns."""

    local_logits: np.ndarray
    global_logits: np.ndarray

    def __post_init__(self):
        self.local_logits = np.asarray(self.local_logits)
        self.global_logits = np.asarray(self.global_logits)
        if self.local_logits.shape != self.global_logits.shape:
            raise ValueError("local and global logits must have one entry "
                             "per pattern")
        if not (np.all(np.isfinite(self.local_logits))
                and np.all(np.isfinite(self.global_logits))):
            raise ValueError("pattern logits must be finite")


def _local_logits(weights):
    return weights.local_logits if isinstance(weights, PatternWeights) else weights


def _global_logits(weights):
    return weights.global_logits if isinstance(weights, PatternWeights) else weights


@dataclass(frozen=True)
class PatternUnion:
    """Union topology of all pattern pairs with the (unique) owning pattern
    index per directed edge; constant for a fixed graph, so it is built
    once and shared by every training step."""

    struct: CSRStruct
    edge_pattern: np.ndarray


def pattern_union(bbps) -> PatternUnion:
    if not bbps:
        raise ValueError("need at least one pattern matrix")
    n = bbps[0].num_nodes
    u = np.concatenate([b.u for b in bbps])
    v = np.concatenate([b.v for b in bbps])
    pid = np.concatenate([np.full(b.edge_count, i, dtype=np.int64)
                          for i, b in enumerate(bbps)])
    struct = build_struct(n, u, v)
    if struct.nnz == 0:
        return PatternUnion(struct, np.empty(0, dtype=np.int64))
    keys = u * np.int64(n) + v
    order = np.argsort(keys)
    keys = keys[order]
    pid = pid[order]
    lo = np.minimum(struct.rows, struct.cols)
    hi = np.maximum(struct.rows, struct.cols)
    edge_pid = pid[np.searchsorted(keys, lo * np.int64(n) + hi)]
    return PatternUnion(struct, edge_pid)


def local_adjacency(union: PatternUnion, weights,
                    normalize=True) -> SparseMatrix:
    """Per-edge weights softmax(logits)[owning pattern], then symmetric
    degree normalization (skipped when ``normalize`` is False, the literal
    unnormalized form). Zero-degree rows stay zero."""
    struct = union.struct
    w = ad.softmax(_local_logits(weights))
    edge_w = ad.gather(w, union.edge_pattern)
    if not normalize:
        return SparseMatrix(struct, edge_w)
    deg = ad.segsum(edge_w, struct.rows, struct.n)
    inv = ad.rsqrt_safe(deg)
    vals = ad.mul(ad.mul(edge_w, ad.gather(inv, struct.rows)),
                  ad.gather(inv, struct.cols))
    return SparseMatrix(struct, vals)


def aggregate_local(bbps, weights, normalize=True) -> SparseMatrix:
    """Softmax-weighted sum of the pattern matrices as one sparse matrix
    (each interacting pair carries its unique pattern's weight)."""
    return local_adjacency(pattern_union(bbps), weights, normalize)


def propagate_local(adj: SparseMatrix, base, num_layers: int):
    """Mean of the layer-1..L propagated tables (layer 0 excluded)."""
    if num_layers < 1:
        raise ValueError("need at least one propagation layer")
    h = base
    acc = None
    for _ in range(num_layers):
        h = ad.spmm(adj.struct, adj.values, h)
        acc = h if acc is None else ad.add(acc, h)
    return ad.mul(acc, 1.0 / num_layers)


def pattern_count_matrix(bbps) -> np.ndarray:
    """Column p = per-node neighbor counts under pattern p (row sums of the
    pattern matrix); constant for a fixed graph."""
    if not bbps:
        raise ValueError("need at least one pattern matrix")
    num_nodes = bbps[0].num_nodes
    cols = []
    for b in bbps:
        both = np.concatenate([b.u, b.v])
        cols.append(np.bincount(both, minlength=num_nodes).astype(np.float64))
    return np.stack(cols, axis=1)


def build_global_matrix(bbps, weights):
    """Pattern-count matrix with softplus-positive learnable column scales."""
    counts = pattern_count_matrix(bbps)
    return ad.mul(counts, ad.softplus(_global_logits(weights)))


def build_global_similarity(b_matrix, mode="row", top_k=None):
    """Dense pattern-similarity matrix norm(B B^T).

    ``mode='row'`` divides each row by its sum (rows of zeros stay zero);
    ``mode='sym'`` applies 1/sqrt(rowsum) on both sides. ``top_k`` keeps
    only the k largest entries per row before normalizing (ndarray path
    only; for explicit similarity matrices on large graphs).
    """
    s = ad.matmul(b_matrix, ad.transpose(b_matrix))
    if top_k is not None:
        if isinstance(s, ad.Var):
            raise ValueError("top_k sparsification is not differentiable")
        n = s.shape[0]
        if top_k < n:
            drop = np.argpartition(-s, top_k - 1, axis=1)[:, top_k:]
            s = s.copy()
            np.put_along_axis(s, drop, 0.0, axis=1)
    if mode == "row":
        rowsum = ad.asum(s, axis=1)
        inv = ad.reshape(ad.reciprocal_safe(rowsum), (-1, 1))
        return ad.mul(s, inv)
    if mode == "sym":
        rowsum = ad.asum(s, axis=1)
        inv = ad.rsqrt_safe(rowsum)
        return ad.mul(ad.mul(s, ad.reshape(inv, (-1, 1))), inv)
    raise ValueError(f"unknown normalization mode {mode!r}")


def propagate_global(adj_glo, base, num_layers: int):
    """L rounds of dense similarity propagation; returns the final layer only."""
    if num_layers < 1:
        raise ValueError("need at least one propagation layer")
    h = base
    for _ in range(num_layers):
        h = ad.matmul(adj_glo, h)
    return h


def propagate_global_factored(b_matrix, base, num_layers: int, mode="row"):
    """Same result as propagate_global(build_global_similarity(B), ...)
    computed as B (B^T h) per layer, so the N x N similarity matrix is
    never materialized. The normalizer is folded into a pre-scaled copy of
    B once per call rather than rescaling the N x d table every layer."""
    if num_layers < 1:
        raise ValueError("need at least one propagation layer")
    col_tot = ad.asum(b_matrix, axis=0)
    rowsum = ad.matmul(b_matrix, col_tot)
    h = base
    if mode == "row":
        inv = ad.reshape(ad.reciprocal_safe(rowsum), (-1, 1))
        scaled = ad.mul(b_matrix, inv)
        for _ in range(num_layers):
            h = ad.matmul(scaled, ad.matmul(ad.transpose(b_matrix), h))
        return h
    if mode == "sym":
        inv = ad.reshape(ad.rsqrt_safe(rowsum), (-1, 1))
        scaled = ad.mul(b_matrix, inv)
        for _ in range(num_layers):
            h = ad.matmul(scaled, ad.matmul(ad.transpose(scaled), h))
        return h
    raise ValueError(f"unknown normalization mode {mode!r}")


def ebp_embeddings(h_loc, h_glo):
    """Average-pool the local and global tables into the explicit-pattern
    embedding."""
    if ad.val(h_loc).shape != ad.val(h_glo).shape:
        raise ValueError(f"shape mismatch: {ad.val(h_loc).shape} vs {ad.val(h_glo).shape}")
    return ad.mul(ad.add(h_loc, h_glo), 0.5)
