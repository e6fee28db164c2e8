"""Corpus assembly: scenes, QA splits, vocabularies, manifest.

Files written per corpus directory:
  scenes.jsonl   one scene per line
  train.jsonl / val.jsonl / test.jsonl   one QA item per line (scene by id)
  vocab.json     token/answer/predicate id maps
  manifest.json  seed, full config, config hash, counts

Rebuilding with the same config is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..rng import stream
from .questions import ANSWERS, QTYPES, TOKENS, QAItem, TemplateUnsatisfiable, generate_qa_pair
from .realize import RealizeNoise
from .spec import PREDICATES, SceneSpec, sample_scene

__all__ = ["CorpusConfig", "Corpus", "build_corpus", "load_corpus", "config_hash"]

SPLITS = ("train", "val", "test")


@dataclass
class CorpusConfig:
    n_scenes: int = 2000
    questions_per_scene: int = 4
    max_objects: int = 8
    min_object_distance: float = 0.08
    near_margin: float = 0.15
    link_radius: float = 0.45
    node_dim: int = 32
    noise: RealizeNoise = field(default_factory=RealizeNoise)
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def validate(self) -> None:
        if self.n_scenes < 1 or self.questions_per_scene < 1:
            raise ValueError("corpus counts must be positive")
        if not 2 <= self.max_objects:
            raise ValueError("max_objects must be >= 2")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.split_fractions}")
        if min(self.split_fractions) <= 0:
            raise ValueError("split fractions must be positive")
        self.noise.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        d = dict(d)
        d["noise"] = RealizeNoise(**d.get("noise", {}))
        d["split_fractions"] = tuple(d.get("split_fractions", (0.8, 0.1, 0.1)))
        return cls(**d)


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Corpus:
    config: CorpusConfig
    scenes: dict[int, SceneSpec]
    splits: dict[str, list[QAItem]]

    @property
    def seed(self) -> int:
        return self.config.seed

    def split_scene_ids(self, split: str) -> list[int]:
        seen: list[int] = []
        for item in self.splits[split]:
            if item.scene_id not in seen[-1:] and item.scene_id not in seen:
                seen.append(item.scene_id)
        return seen

    def counts(self) -> dict:
        return {
            "scenes": len(self.scenes),
            **{s: len(items) for s, items in self.splits.items()},
        }


def _assign_splits(cfg: CorpusConfig) -> dict[int, str]:
    order = stream(cfg.seed, "corpus.split").permutation(cfg.n_scenes)
    n_val = int(round(cfg.split_fractions[1] * cfg.n_scenes))
    n_test = int(round(cfg.split_fractions[2] * cfg.n_scenes))
    n_train = cfg.n_scenes - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError("each split needs at least one scene")
    assignment = {}
    for rank, scene_id in enumerate(order.tolist()):
        if rank < n_train:
            assignment[scene_id] = "train"
        elif rank < n_train + n_val:
            assignment[scene_id] = "val"
        else:
            assignment[scene_id] = "test"
    return assignment


def build_corpus(cfg: CorpusConfig, out_dir: str | Path | None = None) -> Corpus:
    """Sample scenes and QA items, split by scene, optionally write to disk."""
    cfg.validate()
    scenes: dict[int, SceneSpec] = {}
    for i in range(cfg.n_scenes):
        spec = sample_scene(stream(cfg.seed, "corpus.scene", i), cfg)
        spec.scene_id = i
        scenes[i] = spec

    assignment = _assign_splits(cfg)
    splits: dict[str, list[QAItem]] = {s: [] for s in SPLITS}
    next_item = 0
    next_group = 0
    for i in range(cfg.n_scenes):
        spec = scenes[i]
        qrng = stream(cfg.seed, "corpus.qa", i)
        qtype_cycle = [QTYPES[j] for j in qrng.permutation(len(QTYPES))]
        emitted: list[QAItem] = []
        cursor = 0
        while len(emitted) < cfg.questions_per_scene:
            qtype = qtype_cycle[cursor % len(qtype_cycle)]
            cursor += 1
            try:
                pair = generate_qa_pair(spec, qtype, qrng, next_group, cfg.near_margin)
            except TemplateUnsatisfiable:
                continue  # object/global/category are always satisfiable
            next_group += 1
            for item in pair:
                if len(emitted) < cfg.questions_per_scene:
                    emitted.append(item)
        for item in emitted:
            item.item_id = next_item
            next_item += 1
            splits[assignment[i]].append(item)

    corpus = Corpus(config=cfg, scenes=scenes, splits=splits)
    if out_dir is not None:
        write_corpus(corpus, Path(out_dir))
    return corpus


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_corpus(corpus: Corpus, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "scenes.jsonl", "w") as f:
        for i in sorted(corpus.scenes):
            f.write(_dumps(corpus.scenes[i].to_dict()) + "\n")
    for split in SPLITS:
        with open(out_dir / f"{split}.jsonl", "w") as f:
            for item in corpus.splits[split]:
                f.write(_dumps(item.to_dict()) + "\n")
    vocab = {
        "tokens": {t: i for i, t in enumerate(TOKENS)},
        "answers": {a: i for i, a in enumerate(ANSWERS)},
        "predicates": {p: i for i, p in enumerate(PREDICATES)},
    }
    with open(out_dir / "vocab.json", "w") as f:
        f.write(json.dumps(vocab, sort_keys=True, indent=1) + "\n")
    cfg_dict = corpus.config.to_dict()
    manifest = {
        "kind": "corpus",
        "seed": corpus.config.seed,
        "config": cfg_dict,
        "config_hash": config_hash(cfg_dict),
        "counts": corpus.counts(),
        "vocab_sizes": {"tokens": len(TOKENS), "answers": len(ANSWERS),
                        "predicates": len(PREDICATES)},
    }
    with open(out_dir / "manifest.json", "w") as f:
        f.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def load_corpus(corpus_dir: str | Path) -> Corpus:
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no corpus manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    cfg = CorpusConfig.from_dict(manifest["config"])
    scenes: dict[int, SceneSpec] = {}
    with open(corpus_dir / "scenes.jsonl") as f:
        for line in f:
            spec = SceneSpec.from_dict(json.loads(line))
            scenes[spec.scene_id] = spec
    splits: dict[str, list[QAItem]] = {}
    for split in SPLITS:
        with open(corpus_dir / f"{split}.jsonl") as f:
            splits[split] = [QAItem.from_dict(json.loads(line)) for line in f]
    return Corpus(config=cfg, scenes=scenes, splits=splits)
