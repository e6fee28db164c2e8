"""Training objectives: cosine-distance similarity losses over two views,
intra-graph similarity regularization, edge-distribution regularization,
supervised cross-entropy, and their weighted combination.

Stop-gradient placement is the load-bearing detail throughout: targets
(z-sides, anchor similarity structure, anchor edge rows) are detached so the
augmented branch is pulled toward the anchor, never the reverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor, add, detach, exp, l2_normalize, log, matmul, mul, sub,
    tmax, tmean, tsum, transpose, no_grad,
)

__all__ = [
    "VARIANTS", "LossConfig", "DualViewItem", "LossBreakdown",
    "cosine_distance", "local_loss", "global_loss", "selfsim_loss",
    "link_reg", "supervised_loss", "total_loss",
]

VARIANTS = ("baseline", "local", "global", "selfsim")

LOG_GUARD = 1e-12
DIAG_MASK = -1e9


@dataclass
class LossConfig:
    variant: str = "baseline"
    link_reg: bool = False
    alpha: float = 1.0
    beta: float = 0.0
    tau: float = 0.1
    # collapse-study knobs: flipping either breaks the training recipe on
    # purpose so the representation-collapse monitor has something to show
    stop_gradient: bool = True
    use_predictor: bool = True

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.variant == "baseline" and self.beta != 0.0:
            raise ValueError("variant=baseline is supervised-only; set beta=0")
        if self.link_reg and self.variant == "baseline":
            raise ValueError("link_reg requires one of the similarity variants")

    def needs_node_predictor(self) -> bool:
        return self.variant in ("local", "selfsim")

    def needs_graph_predictor(self) -> bool:
        return self.variant == "global"


@dataclass
class DualViewItem:
    """Per-item dual-view quantities; which fields are set depends on variant.

    For the local variant z/p hold all nodes of each view; for selfsim they
    hold the object-id-aligned rows (anchor first). Edge rows r1/r2 are
    aligned by shared (src, dst) object pairs; items with no shared edges
    carry None and are skipped by the link term.
    """

    answer: int
    logits: Tensor | None = None
    z1: Tensor | None = None
    z2: Tensor | None = None
    g1: Tensor | None = None
    g2: Tensor | None = None
    p1: Tensor | None = None
    p2: Tensor | None = None
    r1: Tensor | None = None
    r2: Tensor | None = None


@dataclass
class LossBreakdown:
    total: float
    l_sup: float
    l_prime: float
    j_e: float


def cosine_distance(a: Tensor, b: Tensor) -> Tensor:
    """D(a, b) = 1 - cos(a, b) in [0, 2]; raises on near-zero norms."""
    return sub(Tensor(1.0), tsum(mul(l2_normalize(a, axis=-1), l2_normalize(b, axis=-1))))


def _sorted_mean(values: Tensor) -> Tensor:
    """Mean of a 1-d tensor, summed in value order.

    Sorting first makes the result exactly invariant to input permutation
    (gradient is uniform either way, so only the value changes).
    """
    n = values.data.shape[0]
    order = np.argsort(values.data, kind="stable")
    perm = np.zeros((n, n))
    perm[np.arange(n), order] = 1.0
    return mul(tsum(matmul(Tensor(perm), values)), Tensor(1.0 / n))


def _min_match_term(p: Tensor, z: Tensor) -> Tensor:
    """(1/O_p) sum_i min_j D(p_i, z_j), ties to the lowest j."""
    if p.data.ndim != 2 or z.data.ndim != 2:
        raise ValueError("node-wise loss expects (nodes, dim) matrices")
    if p.data.shape[0] == 0 or z.data.shape[0] == 0:
        raise ValueError("node-wise loss needs a nonempty node set on both sides")
    sims = matmul(l2_normalize(p, axis=1), transpose(l2_normalize(z, axis=1)))
    best = tmax(sims, axis=1)  # min_j D = 1 - max_j cos
    return sub(Tensor(1.0), _sorted_mean(best))


def local_loss(p1: Tensor, z2: Tensor, p2: Tensor, z1: Tensor) -> Tensor:
    """Symmetric best-match cosine loss over node pairs.

    The z-side tensors act as targets: callers pass them already detached.
    """
    return mul(add(_min_match_term(p1, z2), _min_match_term(p2, z1)), Tensor(0.5))


def global_loss(p1: Tensor, z2: Tensor, p2: Tensor, z1: Tensor) -> Tensor:
    """Symmetric cosine distance between pooled graph representations."""
    return mul(add(cosine_distance(p1, z2), cosine_distance(p2, z1)), Tensor(0.5))


def _intra_log_softmax(z: Tensor, tau: float) -> Tensor:
    """Row-wise log-distribution over off-diagonal intra-graph similarities."""
    n = z.data.shape[0]
    sims = matmul(l2_normalize(z, axis=1), transpose(l2_normalize(z, axis=1)))
    logits = mul(sub(sims, Tensor(1.0)), Tensor(1.0 / tau))  # -D/tau
    logits = add(logits, Tensor(np.diag(np.full(n, DIAG_MASK))))
    m = tmax(logits, axis=1, keepdims=True)
    shifted = sub(logits, m)
    return sub(shifted, log(tsum(exp(shifted), axis=1, keepdims=True)))


def selfsim_loss(z1: Tensor, z2: Tensor, p1: Tensor, p2: Tensor, tau: float,
                 stop_gradient: bool = True) -> Tensor:
    """Best-match loss plus intra-similarity-structure cross-entropy.

    z1/z2 must be aligned row-for-row by object id, anchor first. The anchor's
    intra-similarity distribution is the (detached) target; the augmented
    view's distribution is pulled toward it. Needs O >= 2 for off-diagonal
    pairs to exist.
    """
    if z1.data.shape != z2.data.shape:
        raise ValueError("selfsim requires id-aligned views of equal shape")
    if z1.data.shape[0] < 2:
        raise ValueError("selfsim needs at least two aligned nodes")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if stop_gradient:
        with no_grad():
            s1 = exp(_intra_log_softmax(detach(z1), tau))
        local = local_loss(p1, detach(z2), p2, detach(z1))
    else:
        s1 = exp(_intra_log_softmax(z1, tau))
        local = local_loss(p1, z2, p2, z1)
    log_s2 = _intra_log_softmax(z2, tau)
    ce_rows = mul(tsum(mul(s1, log_s2), axis=1), Tensor(-1.0))
    return add(local, tmean(ce_rows))


def link_reg(r1: Tensor, r2: Tensor) -> Tensor:
    """Mean cross-entropy from anchor edge rows (detached by caller) to the
    augmented view's rows: -(1/E) sum_e sum_k r1[e,k] log(r2[e,k] + 1e-12)."""
    if r1.data.ndim != 2 or r1.data.shape != r2.data.shape:
        raise ValueError("link_reg expects two aligned (edges, predicates) matrices")
    if r1.data.shape[0] < 1:
        raise ValueError("link_reg needs at least one aligned edge")
    ce_rows = mul(tsum(mul(r1, log(add(r2, Tensor(LOG_GUARD)))), axis=1), Tensor(-1.0))
    return tmean(ce_rows)


def supervised_loss(logits: Tensor, answer: int) -> Tensor:
    """Cross-entropy of softmax(logits) against the answer id (max-shifted)."""
    n = logits.data.shape[0]
    if not 0 <= answer < n:
        raise ValueError(f"answer id {answer} out of range for {n} logits")
    shifted = sub(logits, tmax(logits))
    lse = log(tsum(exp(shifted)))
    onehot = np.zeros(n)
    onehot[answer] = 1.0
    return sub(lse, tsum(mul(shifted, Tensor(onehot))))


def _ordered_mean(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return mul(total, Tensor(1.0 / len(terms)))


def total_loss(cfg: LossConfig, items: list[DualViewItem]) -> tuple[Tensor, LossBreakdown]:
    """alpha * mean supervised + beta * mean similarity (plus link term).

    Branches with zero weight are not built at all, so their parameters are
    not just zero-gradient but absent from the tape entirely.
    """
    cfg.validate()
    if not items:
        raise ValueError("total_loss needs at least one item")
    total = Tensor(0.0)
    l_sup = l_prime = j_e = 0.0

    if cfg.alpha != 0.0:
        sup_terms = []
        for it in items:
            if it.logits is None:
                raise ValueError("supervised term requires logits on every item")
            sup_terms.append(supervised_loss(it.logits, it.answer))
        sup_mean = _ordered_mean(sup_terms)
        l_sup = float(sup_mean.data)
        total = add(total, mul(sup_mean, Tensor(cfg.alpha)))

    if cfg.variant != "baseline" and cfg.beta != 0.0:
        sg = cfg.stop_gradient
        sim_terms = []
        link_terms = []
        for it in items:
            if cfg.variant == "local":
                args = (it.p1, detach(it.z2) if sg else it.z2,
                        it.p2, detach(it.z1) if sg else it.z1)
                if any(a is None for a in args):
                    raise ValueError("local variant requires z and p on every item")
                sim_terms.append(local_loss(*args))
            elif cfg.variant == "global":
                args = (it.p1, detach(it.g2) if sg else it.g2,
                        it.p2, detach(it.g1) if sg else it.g1)
                if any(a is None for a in args):
                    raise ValueError("global variant requires g and p on every item")
                sim_terms.append(global_loss(*args))
            else:
                if any(a is None for a in (it.z1, it.z2, it.p1, it.p2)):
                    raise ValueError("selfsim variant requires aligned z and p")
                sim_terms.append(selfsim_loss(it.z1, it.z2, it.p1, it.p2, cfg.tau, sg))
            if cfg.link_reg and it.r1 is not None and it.r2 is not None:
                link_terms.append(link_reg(detach(it.r1) if sg else it.r1, it.r2))
        if cfg.link_reg and not link_terms:
            raise ValueError("link_reg enabled but no item has aligned edges")
        sim_mean = _ordered_mean(sim_terms)
        l_prime = float(sim_mean.data)
        sim_total = sim_mean
        if link_terms:
            link_mean = _ordered_mean(link_terms)
            j_e = float(link_mean.data)
            sim_total = add(sim_total, link_mean)
        total = add(total, mul(sim_total, Tensor(cfg.beta)))

    return total, LossBreakdown(total=float(total.data), l_sup=l_sup, l_prime=l_prime, j_e=j_e)
