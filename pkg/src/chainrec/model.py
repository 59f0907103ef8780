"""The assembled recommender: graph-derived constants, parameter
initialization, the forward pass producing all embedding tables, and the
joint training objective.

The forward math runs on plain ndarrays for inference and on tape Vars for
training; both paths share the same code via the autodiff dispatch.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import contrastive, patterns, relations
from .chains import (chain_embedding, chain_forward, enumerate_chains,
                     final_embedding)
from .config import RunConfig
from .graph import MultiplexBipartiteGraph, stream_rng
from .sparse import sym_norm_values


class TrainingAbort(RuntimeError):
    """Non-finite value in a named loss term or gradient; CLI exit code 2."""


BASE_KEYS_SHARED = ("base",)
BASE_KEYS_SEPARATE = ("base_local", "base_global", "base_relation")


@dataclass
class ModelParams:
    """Every learnable tensor, keyed by name; optimizer state mirrors keys."""

    tensors: dict

    def names(self):
        return list(self.tensors.keys())

    def as_vars(self) -> dict:
        return {k: ad.Var(v) for k, v in self.tensors.items()}

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def check_finite(self):
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise TrainingAbort(f"non-finite values in parameter {name!r}")


def xavier(rng, shape) -> np.ndarray:
    """Glorot-uniform draw: U(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


@dataclass
class TrainBatch:
    """Sampled (user, positive, negative) triples for one step: per-chain
    triples from each chain's pattern edges, plus target-relation triples
    for the final ranking loss. Items are global node indices."""

    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    chain_triples: dict = field(default_factory=dict)


class DualChannelModel:
    """Constants derived from the (training) graph plus the forward pass."""

    def __init__(self, graph: MultiplexBipartiteGraph, cfg: RunConfig):
        self.graph = graph
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        self.schema = graph.schema
        self.n = graph.num_nodes
        self.num_users = graph.num_users
        self.masks = patterns.enumerate_patterns(self.schema)
        self.bbps = patterns.build_all_bbps(graph)
        self.union = patterns.pattern_union(self.bbps)
        self.counts = patterns.pattern_count_matrix(self.bbps).astype(self.dtype)
        self.chains = enumerate_chains(self.schema,
                                       cfg.chain_order if cfg.chain_order else None)
        self.rel_adj = {r: (graph.adjacency(r),
                            sym_norm_values(graph.adjacency(r), dtype=self.dtype))
                        for r in self.schema.relations}

    # ------------------------------------------------------------------
    # parameters
    # ------------------------------------------------------------------

    def init_params(self, seed: int) -> ModelParams:
        rng = stream_rng(seed, "init")
        d = self.cfg.dim
        p = {}
        base_keys = BASE_KEYS_SEPARATE if self.cfg.separate_base else BASE_KEYS_SHARED
        for key in base_keys:
            p[key] = rng.normal(0.0, 0.1, size=(self.n, d))
        n_pat = len(self.masks)
        p["local_logits"] = np.zeros(n_pat)
        # softplus(x) = 1 at x = ln(e - 1): pattern-count scaling starts at identity
        p["global_logits"] = np.full(n_pat, np.log(np.e - 1.0))
        for i, chain in enumerate(self.chains):
            for j in range(chain.num_steps):
                p[f"chain{i}.user{j}"] = xavier(rng, (d, d))
                p[f"chain{i}.item{j}"] = xavier(rng, (d, d))
        p["enc_chain.w"] = xavier(rng, (3 * d,))
        p["enc_chain.b"] = np.zeros(())
        p["enc_rel.w"] = xavier(rng, (2 * d,))
        p["enc_rel.b"] = np.zeros(())
        return ModelParams({k: v.astype(self.dtype) for k, v in p.items()})

    def _base(self, p, channel: str):
        if self.cfg.separate_base:
            return p[f"base_{channel}"]
        return p["base"]

    def _base_tensors(self, p):
        keys = BASE_KEYS_SEPARATE if self.cfg.separate_base else BASE_KEYS_SHARED
        return [p[k] for k in keys]

    # ------------------------------------------------------------------
    # forward
    # ------------------------------------------------------------------

    def embeddings(self, p: dict, rows=None) -> dict:
        """All embedding tables from a name->tensor (or name->Var) mapping.

        With ``rows`` (sorted unique node indices) the dense chain channel
        and the fused tables are computed only at those rows; the returned
        ``chain_steps``, ``e_c`` and ``final`` are then compact, indexed by
        position in ``rows``. Graph propagation always runs on the full
        node set (it is sparse and cheap); restricting the chain transforms
        is what keeps a training step independent of catalog size.
        """
        cfg = self.cfg
        adj_loc = patterns.local_adjacency(self.union, p["local_logits"],
                                           normalize=not cfg.raw_local_adj)
        h_loc = patterns.propagate_local(adj_loc, self._base(p, "local"), cfg.layers)
        b_mat = ad.mul(self.counts, ad.softplus(p["global_logits"]))
        h_glo = patterns.propagate_global_factored(b_mat, self._base(p, "global"),
                                                   cfg.layers, mode=cfg.glo_norm)

        rel_tables = {}
        base_rel = self._base(p, "relation")
        for r in self.schema.relations:
            struct, vals = self.rel_adj[r]
            h = base_rel
            acc = base_rel
            for _ in range(cfg.layers):
                h = ad.spmm(struct, vals, h)
                acc = ad.add(acc, h)
            rel_tables[r] = acc

        if rows is None:
            n_user_rows = self.num_users
            first = rel_tables
            h_ebp = patterns.ebp_embeddings(h_loc, h_glo)
            e_r = relations.aggregate_relations(rel_tables)
            h_ebp_rows, e_r_rows = h_ebp, e_r
        else:
            # channel fusion only at the touched rows: full-table sums are
            # never materialized on the training path
            n_user_rows = int(np.searchsorted(rows, self.num_users))
            first = {r: ad.gather(t, rows) for r, t in rel_tables.items()}
            h_ebp = patterns.ebp_embeddings(ad.gather(h_loc, rows),
                                            ad.gather(h_glo, rows))
            e_r = relations.aggregate_relations(first)
            h_ebp_rows, e_r_rows = h_ebp, e_r

        chain_steps = []
        for i, chain in enumerate(self.chains):
            w_u = [p[f"chain{i}.user{j}"] for j in range(chain.num_steps)]
            w_v = [p[f"chain{i}.item{j}"] for j in range(chain.num_steps)]
            steps = chain_forward(chain, first[chain.relations[0]],
                                  w_u, w_v, n_user_rows)
            chain_steps.append(steps)
        if chain_steps:
            e_c = chain_embedding(chain_steps)
        else:  # single-relation schema: no chains, channel contributes zeros
            e_c = np.zeros_like(ad.val(e_r_rows))
        e_final = final_embedding(h_ebp_rows, e_r_rows, e_c)

        return {"h_loc": h_loc, "h_glo": h_glo, "h_ebp": h_ebp,
                "rel": rel_tables, "e_r": e_r, "rows": rows,
                "chain_steps": chain_steps, "e_c": e_c, "final": e_final}

    def final_embeddings(self, params: ModelParams) -> np.ndarray:
        """Inference-path final table (plain ndarray)."""
        return ad.val(self.embeddings(params.tensors)["final"])

    # ------------------------------------------------------------------
    # loss
    # ------------------------------------------------------------------

    def _bpr_core(self, table, users, pos, neg, per_user_w=None):
        yu = ad.gather(table, users)
        yp = ad.rowdot(yu, ad.gather(table, pos))
        yn = ad.rowdot(yu, ad.gather(table, neg))
        terms = ad.softplus(ad.add(yn, ad.mul(yp, -1.0)))  # -ln sigmoid(yp - yn)
        if per_user_w is not None:
            terms = ad.mul(terms, per_user_w)
        return ad.asum(terms)

    def _reg(self, p, users, pos, neg, extra=()):
        """lambda * ||theta||^2 over the batch's base rows + extra tensors."""
        idx = np.concatenate([users, pos, neg])
        total = None
        for base in self._base_tensors(p):
            term = ad.sumsq(ad.gather(base, idx))
            total = term if total is None else ad.add(total, term)
        for t in extra:
            total = ad.add(total, ad.sumsq(t))
        return ad.mul(total, self.cfg.l2)

    def total_loss(self, p: dict, batch: TrainBatch):
        """Weighted per-chain ranking losses + weighted contrastive losses
        + final ranking loss; returns (loss, per-term float breakdown)."""
        cfg = self.cfg
        target = self.schema.target
        bu = batch.users

        # the dense channels are only evaluated at rows this batch touches
        touched = [batch.users, batch.pos, batch.neg]
        for cu, cp, cn in batch.chain_triples.values():
            touched += [cu, cp, cn]
        rows = np.unique(np.concatenate(touched))
        emb = self.embeddings(p, rows=rows)

        def at(ids):
            return np.searchsorted(rows, ids)

        # per-(auxiliary, target) contrastive losses over the batch users
        rcl_terms, rcl_losses = {}, {}
        for r in self.schema.auxiliaries:
            terms = contrastive.infonce_terms(emb["rel"][target], emb["rel"][r],
                                              bu, cfg.tau)
            rcl_terms[r] = terms
            rcl_losses[r] = ad.asum(terms)

        bu_c = at(bu)
        e_c_rows = ad.gather(emb["e_c"], bu_c)
        e_final_rows = ad.gather(emb["final"], bu_c)

        # chain ranking losses on chains that drew triples this step
        active = [i for i in range(len(self.chains)) if i in batch.chain_triples]
        chain_losses, chain_raw_w = [], []
        for i in active:
            chain = self.chains[i]
            cu, cp, cn = batch.chain_triples[i]
            cu_c, cp_c, cn_c = at(cu), at(cp), at(cn)
            table = emb["e_c"] if cfg.chain_score == "aggregated" else emb["chain_steps"][i][-1]
            w_u = [p[f"chain{i}.user{j}"] for j in range(chain.num_steps)]
            w_v = [p[f"chain{i}.item{j}"] for j in range(chain.num_steps)]
            reg = self._reg(p, cu, cp, cn, extra=w_u + w_v)
            if cfg.per_user_weights:
                # literal reading: each triple weighted by its own user's feature
                feats = contrastive.chain_knowledge(chain, rcl_losses,
                                                    ad.gather(emb["e_c"], cu_c),
                                                    ad.gather(emb["final"], cu_c),
                                                    cfg.mu_scale, target)
                raw = contrastive.encode_weight(feats, p["enc_chain.w"],
                                                p["enc_chain.b"], cfg.leaky_slope)
                core = self._bpr_core(table, cu_c, cp_c, cn_c, per_user_w=raw)
                chain_losses.append(ad.add(core, reg))
            else:
                feats = contrastive.chain_knowledge(chain, rcl_losses, e_c_rows,
                                                    e_final_rows, cfg.mu_scale, target)
                raw = contrastive.encode_weight(feats, p["enc_chain.w"],
                                                p["enc_chain.b"], cfg.leaky_slope)
                chain_raw_w.append(ad.amean(raw))
                chain_losses.append(ad.add(self._bpr_core(table, cu_c, cp_c, cn_c),
                                           reg))

        loss_chains = None
        if chain_losses:
            if cfg.per_user_weights:
                loss_chains = chain_losses[0]
                for loss_c in chain_losses[1:]:
                    loss_chains = ad.add(loss_chains, loss_c)
            else:
                w_chain = contrastive.normalize_weights(chain_raw_w)
                loss_chains = ad.asum(ad.mul(w_chain, ad.stack_scalars(chain_losses)))

        # weighted contrastive term over auxiliary relations
        rel_losses, rel_raw_w = [], []
        for r in self.schema.auxiliaries:
            feats = contrastive.relation_knowledge(r, rcl_losses[r],
                                                   ad.gather(emb["rel"][r], bu),
                                                   e_final_rows, target)
            raw = contrastive.encode_weight(feats, p["enc_rel.w"],
                                            p["enc_rel.b"], cfg.leaky_slope)
            if cfg.per_user_weights:
                rel_losses.append(ad.asum(ad.mul(rcl_terms[r], raw)))
            else:
                rel_losses.append(rcl_losses[r])
                rel_raw_w.append(ad.amean(raw))

        loss_rcl = None
        if rel_losses:
            if cfg.per_user_weights:
                loss_rcl = rel_losses[0]
                for loss_r in rel_losses[1:]:
                    loss_rcl = ad.add(loss_rcl, loss_r)
            else:
                w_rel = contrastive.normalize_weights(rel_raw_w)
                loss_rcl = ad.asum(ad.mul(w_rel, ad.stack_scalars(rel_losses)))

        # final ranking loss on the fused table
        loss_final = ad.add(self._bpr_core(emb["final"], bu_c, at(batch.pos),
                                           at(batch.neg)),
                            self._reg(p, bu, batch.pos, batch.neg))

        total = ad.mul(loss_final, cfg.mu2)
        if loss_chains is not None:
            total = ad.add(total, loss_chains)
        if loss_rcl is not None:
            total = ad.add(total, ad.mul(loss_rcl, cfg.mu1))

        breakdown = {
            "total": float(ad.val(total)),
            "chain_bpr": float(ad.val(loss_chains)) if loss_chains is not None else 0.0,
            "rcl": float(ad.val(loss_rcl)) if loss_rcl is not None else 0.0,
            "final_bpr": float(ad.val(loss_final)),
        }
        for name, value in breakdown.items():
            if not np.isfinite(value):
                raise TrainingAbort(f"non-finite loss term {name!r}: {value}")
        return total, breakdown
