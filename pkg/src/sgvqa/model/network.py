"""Forward passes: question encoder with instruction decoding, the
question-conditioned graph attention encoder, edge-score head, predictor
heads, and the answer classifier.

All functions are pure in eval mode. Node order never carries meaning: the
graph encoder is permutation equivariant in its nodes and its pooled output
is permutation invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import (
    Tensor, add, batch_norm, concat, dropout, elu, leaky_relu, matmul, mul,
    relu, reshape, softmax, tmean, transpose,
)
from ..scenes import SceneGraph
from .params import ModelParams

__all__ = [
    "InstructionSet", "embed_tokens", "encode_question", "gat_step",
    "encode_graph", "edge_scores", "predict_head", "classify",
]

ATTN_MASK_BIAS = -1e9
GAT_LEAK = 0.2


@dataclass
class InstructionSet:
    question: Tensor            # (question_dim,)
    instructions: list[Tensor]  # num_steps vectors of (question_dim,)


def embed_tokens(params: ModelParams, token_ids: list[int]) -> Tensor:
    """Look up embedding rows (one-hot matmul keeps the table differentiable)."""
    if len(token_ids) == 0:
        raise ValueError("cannot embed an empty question")
    bad = [t for t in token_ids if not 0 <= t < params.n_tokens]
    if bad:
        raise ValueError(f"token ids out of vocabulary: {bad}")
    onehot = np.zeros((len(token_ids), params.n_tokens))
    onehot[np.arange(len(token_ids)), token_ids] = 1.0
    return matmul(Tensor(onehot), params["embed.table"])


def encode_question(
    params: ModelParams, embeddings: Tensor, n_valid: int | None = None
) -> InstructionSet:
    """Contextualize tokens, pool a question vector, decode instructions.

    One self-attention layer contextualizes the tokens; the question vector is
    the masked mean of the contextual states. Instructions are decoded
    autoregressively: each step attends over the token states with the
    previous decoder state as query. Positions >= n_valid are treated as
    padding and cannot influence the output.
    """
    L = embeddings.data.shape[0]
    if L == 0:
        raise ValueError("encode_question requires at least one token")
    if n_valid is None:
        n_valid = L
    if not 1 <= n_valid <= L:
        raise ValueError(f"n_valid must be in [1, {L}], got {n_valid}")
    q_dim = params.dims.question
    inv_sqrt = Tensor(1.0 / np.sqrt(q_dim))

    Q = matmul(embeddings, params["qenc.Wq"])
    K = matmul(embeddings, params["qenc.Wk"])
    V = matmul(embeddings, params["qenc.Wv"])
    S = matmul(embeddings, params["qenc.Ws"])
    logits = mul(matmul(Q, transpose(K)), inv_sqrt)
    key_bias = None
    if n_valid < L:
        bias = np.zeros((1, L))
        bias[0, n_valid:] = ATTN_MASK_BIAS
        key_bias = Tensor(bias)
        logits = add(logits, key_bias)
    A = softmax(logits, axis=1)
    H = elu(add(matmul(A, V), S))

    if n_valid == L:
        qvec = tmean(H, axis=0)
        vec_bias = None
    else:
        mask_row = np.zeros((1, L))
        mask_row[0, :n_valid] = 1.0 / n_valid
        qvec = reshape(matmul(Tensor(mask_row), H), (q_dim,))
        vec_bias = Tensor(np.where(mask_row[0] > 0, 0.0, ATTN_MASK_BIAS))

    instructions: list[Tensor] = []
    state = qvec
    for _ in range(params.num_steps):
        query = matmul(state, params["qenc.dec.Wa"])
        att_logits = mul(matmul(H, query), inv_sqrt)
        if vec_bias is not None:
            att_logits = add(att_logits, vec_bias)
        att = softmax(att_logits, axis=-1)
        context = matmul(att, H)
        state = elu(add(matmul(concat([state, context], axis=0), params["qenc.dec.Wd"]),
                        params["qenc.dec.bd"]))
        instructions.append(state)
    return InstructionSet(question=qvec, instructions=instructions)


def _adjacency_bias(n_nodes: int, edge_pairs: list[tuple[int, int]]) -> np.ndarray:
    """bias[u, v] = 0 where u attends into v (edges plus self-loops)."""
    bias = np.full((n_nodes, n_nodes), ATTN_MASK_BIAS)
    np.fill_diagonal(bias, 0.0)
    for src, dst in edge_pairs:
        bias[src, dst] = 0.0
    return bias


def gat_step(
    params: ModelParams,
    step: int,
    node_states: Tensor,
    adj_bias: Tensor,
    instruction: Tensor,
) -> Tensor:
    """One attention step: condition on the instruction, attend over in-edges.

    Each node state is concatenated with the step's instruction before the
    step's linear map; W_node/W_instr are the two blocks of that map, so the
    concat is folded into a broadcast add. Attention coefficients are
    leaky-relu scores normalized over in-neighbors plus the self-loop.
    """
    cond = reshape(matmul(instruction, params[f"gat.{step}.W_instr"]), (1, params.dims.node))
    Wh = add(matmul(node_states, params[f"gat.{step}.W_node"]), cond)
    s1 = matmul(Wh, params[f"gat.{step}.a1"])   # (O, 1): source score
    s2 = matmul(Wh, params[f"gat.{step}.a2"])   # (O, 1): target score
    scores = leaky_relu(add(s1, transpose(s2)), GAT_LEAK)  # scores[u, v]
    alpha = softmax(add(scores, adj_bias), axis=0)          # normalize over u
    return elu(matmul(transpose(alpha), Wh))


def encode_graph(
    params: ModelParams, graph: SceneGraph, instr: InstructionSet
) -> tuple[Tensor, Tensor]:
    """Run all instruction-conditioned steps; return (node embeddings, graph vector)."""
    if graph.n_nodes < 1:
        raise ValueError("encode_graph requires at least one node")
    feats = graph.feature_matrix()
    if feats.shape[1] != params.dims.node:
        raise ValueError(
            f"node feature dim {feats.shape[1]} does not match preset node dim "
            f"{params.dims.node}"
        )
    adj_bias = Tensor(_adjacency_bias(graph.n_nodes, [(e.src, e.dst) for e in graph.edges]))
    h = Tensor(feats)
    for t in range(params.num_steps):
        h = gat_step(params, t, h, adj_bias, instr.instructions[t])
    pooled = tmean(h, axis=0)
    gvec = add(matmul(pooled, params["pool.W"]), params["pool.b"])
    return h, gvec


def edge_scores(params: ModelParams, z: Tensor, edge_pairs: list[tuple[int, int]]) -> Tensor:
    """Predicate distributions per edge from the node embeddings, row-stochastic."""
    if not edge_pairs:
        raise ValueError("edge_scores needs at least one edge")
    O = z.data.shape[0]
    E = len(edge_pairs)
    src_sel = np.zeros((E, O))
    dst_sel = np.zeros((E, O))
    for i, (s, d) in enumerate(edge_pairs):
        src_sel[i, s] = 1.0
        dst_sel[i, d] = 1.0
    x = concat([matmul(Tensor(src_sel), z), matmul(Tensor(dst_sel), z)], axis=1)
    hidden = elu(add(matmul(x, params["edge.W1"]), params["edge.b1"]))
    logits = add(matmul(hidden, params["edge.W2"]), params["edge.b2"])
    return softmax(logits, axis=1)


def predict_head(params: ModelParams, x: Tensor, role: str) -> Tensor:
    """Three-layer MLP head (batch norm + relu after all but the last layer).

    ``role`` selects the node-level or graph-level parameter set; output dim
    equals input dim. Train mode needs a batch of rows (>= 2) for batch norm.
    Training-only machinery: never part of the inference path.
    """
    if role not in ("node", "graph"):
        raise ValueError(f"predictor role must be node or graph, got {role!r}")
    p = f"pred_{role}"
    h = matmul(x, params[f"{p}.fc1.W"])
    h = relu(batch_norm(h, params.norm_states[f"{p}.bn1"],
                        params[f"{p}.bn1.gamma"], params[f"{p}.bn1.beta"]))
    h = matmul(h, params[f"{p}.fc2.W"])
    h = relu(batch_norm(h, params.norm_states[f"{p}.bn2"],
                        params[f"{p}.bn2.gamma"], params[f"{p}.bn2.beta"]))
    return add(matmul(h, params[f"{p}.fc3.W"]), params[f"{p}.fc3.b"])


def classify(
    params: ModelParams,
    graph_vec: Tensor,
    question_vec: Tensor,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Two-layer ELU MLP over [graph vector, question vector] -> answer logits.

    Dropout is active only in train mode, which then requires an rng stream.
    """
    x = concat([graph_vec, question_vec], axis=0)
    h = elu(add(matmul(x, params["clf.W1"]), params["clf.b1"]))
    h = dropout(h, params.clf_dropout, train=params.mode == "train", rng=rng)
    return add(matmul(h, params["clf.W2"]), params["clf.b2"])
