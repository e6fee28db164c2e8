from .spec import (
    AUGMENT_KINDS, CATEGORIES, COLORS, PREDICATES, PRED_INVERSE, SIZES,
    AugmentError, PlacementError, Relation, SceneObject, SceneSpec,
    augment_scene, derive_relations, predicate_between, sample_scene,
)
from .realize import GraphEdge, GraphNode, GraphRealizer, RealizeNoise, SceneGraph
from .questions import (
    ANSWERS, COUNT_MAX, EXTREMES, QTYPES, TOKENS, QAItem, QuestionParseError,
    TemplateUnsatisfiable, answer_id, generate_qa_pair, oracle_answer,
    token_ids, tokens_of,
)
from .corpus import Corpus, CorpusConfig, SPLITS, build_corpus, config_hash, load_corpus

__all__ = [
    "AUGMENT_KINDS", "CATEGORIES", "COLORS", "PREDICATES", "PRED_INVERSE", "SIZES",
    "AugmentError", "PlacementError", "Relation", "SceneObject", "SceneSpec",
    "augment_scene", "derive_relations", "predicate_between", "sample_scene",
    "GraphEdge", "GraphNode", "GraphRealizer", "RealizeNoise", "SceneGraph",
    "ANSWERS", "COUNT_MAX", "EXTREMES", "QTYPES", "TOKENS", "QAItem",
    "QuestionParseError", "TemplateUnsatisfiable", "answer_id",
    "generate_qa_pair", "oracle_answer", "token_ids", "tokens_of",
    "Corpus", "CorpusConfig", "SPLITS", "build_corpus", "config_hash", "load_corpus",
]
