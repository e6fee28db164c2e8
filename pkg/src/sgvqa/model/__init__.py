from .params import (
    CheckpointError, ModelDims, ModelParams, NUM_GAT_STEPS, PRESETS,
)
from .network import (
    InstructionSet, classify, edge_scores, embed_tokens, encode_graph,
    encode_question, gat_step, predict_head,
)

__all__ = [
    "CheckpointError", "ModelDims", "ModelParams", "NUM_GAT_STEPS", "PRESETS",
    "InstructionSet", "classify", "edge_scores", "embed_tokens",
    "encode_graph", "encode_question", "gat_step", "predict_head",
]
