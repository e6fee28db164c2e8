"""Experimental protocols: perturbation sensitivity and the labeled-fraction
sweep."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..model import ModelParams
from ..scenes import Corpus
from .evaluate import MetricsReport, Perturbation, evaluate
from .loop import TrainConfig, TrainResult, train

__all__ = ["PerturbationRow", "perturbation_report", "fraction_sweep"]


@dataclass
class PerturbationRow:
    name: str
    qtype: str | None
    n_items: int
    clean_acc: float
    perturbed_acc: float
    delta: float

    def to_dict(self) -> dict:
        return {"name": self.name, "qtype": self.qtype, "n_items": self.n_items,
                "clean_acc": self.clean_acc, "perturbed_acc": self.perturbed_acc,
                "delta": self.delta}


def perturbation_report(
    params: ModelParams,
    corpus: Corpus,
    setups: list[Perturbation],
    split: str = "test",
) -> list[PerturbationRow]:
    """Accuracy deltas (perturbed minus clean) on matched question subsets.

    Clean accuracy is recomputed per setup on exactly the subset the
    perturbation is scored on, so an identity setup yields delta 0.
    """
    rows = []
    for setup in setups:
        clean = evaluate(params, corpus, split, Perturbation(qtype=setup.qtype))
        perturbed = evaluate(params, corpus, split, setup)
        rows.append(PerturbationRow(
            name=setup.name,
            qtype=setup.qtype,
            n_items=perturbed.counts["total"],
            clean_acc=clean.overall,
            perturbed_acc=perturbed.overall,
            delta=perturbed.overall - clean.overall,
        ))
    return rows


def fraction_sweep(
    cfg: TrainConfig,
    corpus: Corpus,
    fractions: list[float],
) -> list[tuple[float, MetricsReport, TrainResult]]:
    """Train once per labeled fraction (nested scene subsets), score on test.

    Fractions must be sorted ascending; each run shares the sweep seed, so
    the 20% scene set is a subset of the 50% set and so on.
    """
    if not fractions:
        raise ValueError("no fractions given")
    if sorted(fractions) != list(fractions):
        raise ValueError("fractions must be sorted ascending")
    if not all(0.0 < f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    out = []
    for frac in fractions:
        result = train(replace(cfg, data_fraction=frac), corpus)
        report = evaluate(result.params, corpus, "test")
        out.append((frac, report, result))
    return out
