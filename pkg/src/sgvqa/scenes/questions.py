"""Templated questions whose answers are provable from the scene.

Every question is a token sequence matching one of a closed set of patterns;
`oracle_answer` re-parses the tokens and evaluates the scene exhaustively, so
stored answers can always be independently re-checked. Each generated item
comes with one entailed rewording (same answer, different tokens) sharing its
paraphrase group, which feeds the consistency metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spec import (
    CATEGORIES, COLORS, PREDICATES, PRED_INVERSE, SIZES,
    SceneSpec, predicate_between,
)

__all__ = [
    "QTYPES", "ANSWERS", "TOKENS", "COUNT_MAX", "EXTREMES",
    "QAItem", "TemplateUnsatisfiable", "QuestionParseError",
    "generate_qa_pair", "oracle_answer", "answer_id", "token_ids", "tokens_of",
]

QTYPES = ["relation", "attribute", "object", "global", "category"]
EXTREMES = ["leftmost", "rightmost", "topmost", "bottommost"]
COUNT_MAX = 5
COUNT_ANSWERS = [str(i) for i in range(COUNT_MAX + 1)]

# 2 + 5 + 6 + 3 + 10 + 6 = 32 answer classes
ANSWERS = ["yes", "no"] + PREDICATES + COLORS + SIZES + CATEGORIES + COUNT_ANSWERS
_ANSWER_ID = {a: i for i, a in enumerate(ANSWERS)}

_K_RANGE = [str(k) for k in range(2, 8)]

_TEMPLATE_WORDS = [
    "is", "the", "a", "what", "which", "how", "of", "to", "relation", "placed",
    "relative", "color", "does", "have", "look", "size", "big", "there",
    "scene", "contain", "object", "objects", "items", "many", "are", "number",
    "in", "more", "than", "greater", "count", "kind", "one", "would", "you",
    "call",
]

TOKENS = ["<pad>"] + sorted(
    set(_TEMPLATE_WORDS) | set(CATEGORIES) | set(COLORS) | set(SIZES)
    | set(PREDICATES) | set(EXTREMES) | set(_K_RANGE)
)
_TOKEN_ID = {t: i for i, t in enumerate(TOKENS)}


def answer_id(ans: str) -> int:
    return _ANSWER_ID[ans]


def token_ids(words: list[str]) -> list[int]:
    return [_TOKEN_ID[w] for w in words]


def tokens_of(ids: list[int]) -> list[str]:
    return [TOKENS[i] for i in ids]


class TemplateUnsatisfiable(RuntimeError):
    """No template of the requested qtype fits this scene."""


class QuestionParseError(RuntimeError):
    """Token sequence does not match the template grammar."""


@dataclass
class QAItem:
    item_id: int
    scene_id: int
    question: list[int]
    qtype: str
    answer: int
    valid_answers: list[int]
    paraphrase_group: int
    binary: bool
    template: str

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "scene_id": self.scene_id,
            "question": self.question,
            "qtype": self.qtype,
            "answer": self.answer,
            "valid_answers": self.valid_answers,
            "paraphrase_group": self.paraphrase_group,
            "binary": self.binary,
            "template": self.template,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QAItem":
        return cls(
            d["item_id"], d["scene_id"], list(d["question"]), d["qtype"], d["answer"],
            list(d["valid_answers"]), d["paraphrase_group"], d["binary"], d["template"],
        )


# ---------------------------------------------------------------------------
# scene helpers
# ---------------------------------------------------------------------------

def _unique_category_objects(spec: SceneSpec):
    counts: dict[int, int] = {}
    for o in spec.objects:
        counts[o.category] = counts.get(o.category, 0) + 1
    return [o for o in spec.objects if counts[o.category] == 1]


def _resolve_unique_category(spec: SceneSpec, cat: int):
    matches = [o for o in spec.objects if o.category == cat]
    if len(matches) != 1:
        raise QuestionParseError(f"category {CATEGORIES[cat]!r} does not resolve uniquely")
    return matches[0]


def _resolve_unique_color(spec: SceneSpec, col: int):
    matches = [o for o in spec.objects if o.color == col]
    if len(matches) != 1:
        raise QuestionParseError(f"color {COLORS[col]!r} does not resolve uniquely")
    return matches[0]


def _extremal_object(spec: SceneSpec, extreme: str):
    # y points up; ties cannot occur for generated scenes (continuous coords)
    key = {
        "leftmost": lambda o: o.x,
        "rightmost": lambda o: -o.x,
        "topmost": lambda o: -o.y,
        "bottommost": lambda o: o.y,
    }[extreme]
    return min(spec.objects, key=key)


def _yes_no(b: bool) -> str:
    return "yes" if b else "no"


_VALID = {
    "binary": ["yes", "no"],
    "predicate": list(PREDICATES),
    "color": list(COLORS),
    "size": list(SIZES),
    "category": list(CATEGORIES),
    "count": list(COUNT_ANSWERS),
}


# ---------------------------------------------------------------------------
# template grammar: patterns mix literal words and (slot, class) markers
# ---------------------------------------------------------------------------

_SLOT_CLASSES = {
    "cat": set(CATEGORIES),
    "cat2": set(CATEGORIES),
    "color": set(COLORS),
    "pred": set(PREDICATES),
    "extreme": set(EXTREMES),
    "k": set(_K_RANGE),
}


@dataclass(frozen=True)
class _Pattern:
    template: str
    qtype: str
    words: tuple[str, ...]  # slot markers spelled "{name}"

    def match(self, tokens: list[str]) -> dict | None:
        if len(tokens) != len(self.words):
            return None
        slots = {}
        for got, want in zip(tokens, self.words):
            if want.startswith("{"):
                name = want[1:-1]
                if got not in _SLOT_CLASSES[name]:
                    return None
                slots[name] = got
            elif got != want:
                return None
        return slots


def _pat(template: str, qtype: str, text: str) -> _Pattern:
    return _Pattern(template, qtype, tuple(text.split()))


_PATTERNS = [
    _pat("rel_yesno", "relation", "is the {cat} {pred} the {cat2}"),
    _pat("rel_open", "relation", "what is the relation of the {cat} to the {cat2}"),
    _pat("rel_open", "relation", "how is the {cat} placed relative to the {cat2}"),
    _pat("attr_color", "attribute", "what color is the {cat}"),
    _pat("attr_color", "attribute", "which color does the {cat} have"),
    _pat("attr_yesno", "attribute", "is the {cat} {color}"),
    _pat("attr_yesno", "attribute", "does the {cat} look {color}"),
    _pat("attr_size", "attribute", "what size is the {cat}"),
    _pat("attr_size", "attribute", "how big is the {cat}"),
    _pat("obj_exists", "object", "is there a {cat}"),
    _pat("obj_exists", "object", "does the scene contain a {cat}"),
    _pat("obj_bycolor", "object", "what is the {color} object"),
    _pat("obj_bycolor", "object", "which object is {color}"),
    _pat("glob_count", "global", "how many objects are there"),
    _pat("glob_count", "global", "what is the number of objects in the scene"),
    _pat("glob_count_cat", "global", "how many {cat} objects are there"),
    _pat("glob_count_cat", "global", "how many {cat} items are there"),
    _pat("glob_morethan", "global", "are there more than {k} objects"),
    _pat("glob_morethan", "global", "is the object count greater than {k}"),
    _pat("cat_extreme", "category", "what is the {extreme} object"),
    _pat("cat_extreme", "category", "which kind of object is the {extreme} one"),
    _pat("cat_yesno", "category", "is the {extreme} object a {cat}"),
    _pat("cat_yesno", "category", "would you call the {extreme} object a {cat}"),
]


def _evaluate(template: str, spec: SceneSpec, slots: dict, near_margin: float) -> str:
    if template == "rel_yesno":
        u = _resolve_unique_category(spec, CATEGORIES.index(slots["cat"]))
        v = _resolve_unique_category(spec, CATEGORIES.index(slots["cat2"]))
        derived = PREDICATES[predicate_between(u, v, near_margin)]
        return _yes_no(derived == slots["pred"])
    if template == "rel_open":
        u = _resolve_unique_category(spec, CATEGORIES.index(slots["cat"]))
        v = _resolve_unique_category(spec, CATEGORIES.index(slots["cat2"]))
        return PREDICATES[predicate_between(u, v, near_margin)]
    if template == "attr_color":
        return COLORS[_resolve_unique_category(spec, CATEGORIES.index(slots["cat"])).color]
    if template == "attr_yesno":
        o = _resolve_unique_category(spec, CATEGORIES.index(slots["cat"]))
        return _yes_no(COLORS[o.color] == slots["color"])
    if template == "attr_size":
        return SIZES[_resolve_unique_category(spec, CATEGORIES.index(slots["cat"])).size]
    if template == "obj_exists":
        cat = CATEGORIES.index(slots["cat"])
        return _yes_no(any(o.category == cat for o in spec.objects))
    if template == "obj_bycolor":
        return CATEGORIES[_resolve_unique_color(spec, COLORS.index(slots["color"])).category]
    if template == "glob_count":
        n = len(spec.objects)
        if n > COUNT_MAX:
            raise QuestionParseError(f"count {n} outside the answer vocabulary")
        return str(n)
    if template == "glob_count_cat":
        cat = CATEGORIES.index(slots["cat"])
        n = sum(o.category == cat for o in spec.objects)
        if n > COUNT_MAX:
            raise QuestionParseError(f"count {n} outside the answer vocabulary")
        return str(n)
    if template == "glob_morethan":
        return _yes_no(len(spec.objects) > int(slots["k"]))
    if template == "cat_extreme":
        return CATEGORIES[_extremal_object(spec, slots["extreme"]).category]
    if template == "cat_yesno":
        o = _extremal_object(spec, slots["extreme"])
        return _yes_no(CATEGORIES[o.category] == slots["cat"])
    raise AssertionError(template)


def oracle_answer(spec: SceneSpec, question: list[int], near_margin: float = 0.15) -> int:
    """Parse a token-id question against the grammar and evaluate it exactly."""
    words = tokens_of(question)
    for pattern in _PATTERNS:
        slots = pattern.match(words)
        if slots is not None:
            return answer_id(_evaluate(pattern.template, spec, slots, near_margin))
    raise QuestionParseError(f"unparseable question: {' '.join(words)}")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

_VALID_BY_TEMPLATE = {
    "rel_yesno": "binary",
    "rel_open": "predicate",
    "attr_color": "color",
    "attr_yesno": "binary",
    "attr_size": "size",
    "obj_exists": "binary",
    "obj_bycolor": "category",
    "glob_count": "count",
    "glob_count_cat": "count",
    "glob_morethan": "binary",
    "cat_extreme": "category",
    "cat_yesno": "binary",
}

_TEMPLATES_BY_QTYPE = {
    "relation": ["rel_yesno", "rel_open"],
    "attribute": ["attr_color", "attr_yesno", "attr_size"],
    "object": ["obj_exists", "obj_bycolor"],
    "global": ["glob_count", "glob_count_cat", "glob_morethan"],
    "category": ["cat_extreme", "cat_yesno"],
}


def _instantiate(template: str, spec: SceneSpec, rng: np.random.Generator,
                 near_margin: float) -> tuple[str, str] | None:
    """Return (primary wording, paraphrase wording) or None if unavailable."""
    if template in ("rel_yesno", "rel_open"):
        uniq = _unique_category_objects(spec)
        if len(uniq) < 2:
            return None
        i, j = rng.choice(len(uniq), size=2, replace=False)
        u, v = uniq[int(i)], uniq[int(j)]
        c1, c2 = CATEGORIES[u.category], CATEGORIES[v.category]
        derived = PREDICATES[predicate_between(u, v, near_margin)]
        if template == "rel_open":
            return (
                f"what is the relation of the {c1} to the {c2}",
                f"how is the {c1} placed relative to the {c2}",
            )
        if derived in ("left-of", "right-of"):
            p = str(rng.choice(["left-of", "right-of"]))
        elif derived in ("above", "below"):
            p = str(rng.choice(["above", "below"]))
        else:
            # never ask left/right about a near pair: that keeps "flip inverts
            # every left/right question" an exact corpus-wide property
            p = str(rng.choice(["above", "below", "near"]))
        return (
            f"is the {c1} {p} the {c2}",
            f"is the {c2} {PRED_INVERSE[p]} the {c1}",
        )
    if template in ("attr_color", "attr_yesno", "attr_size"):
        uniq = _unique_category_objects(spec)
        if not uniq:
            return None
        o = uniq[int(rng.integers(len(uniq)))]
        c = CATEGORIES[o.category]
        if template == "attr_color":
            return f"what color is the {c}", f"which color does the {c} have"
        if template == "attr_size":
            return f"what size is the {c}", f"how big is the {c}"
        if rng.random() < 0.5:
            col = COLORS[o.color]
        else:
            col = COLORS[int(rng.integers(len(COLORS)))]
        return f"is the {c} {col}", f"does the {c} look {col}"
    if template == "obj_exists":
        present = sorted({o.category for o in spec.objects})
        absent = [c for c in range(len(CATEGORIES)) if c not in present]
        if rng.random() < 0.5 or not absent:
            cat = CATEGORIES[present[int(rng.integers(len(present)))]]
        else:
            cat = CATEGORIES[absent[int(rng.integers(len(absent)))]]
        return f"is there a {cat}", f"does the scene contain a {cat}"
    if template == "obj_bycolor":
        counts: dict[int, int] = {}
        for o in spec.objects:
            counts[o.color] = counts.get(o.color, 0) + 1
        unique_colors = sorted(c for c, n in counts.items() if n == 1)
        if not unique_colors:
            return None
        col = COLORS[unique_colors[int(rng.integers(len(unique_colors)))]]
        return f"what is the {col} object", f"which object is {col}"
    if template == "glob_count":
        if len(spec.objects) > COUNT_MAX:
            return None
        return "how many objects are there", "what is the number of objects in the scene"
    if template == "glob_count_cat":
        present = sorted({o.category for o in spec.objects})
        absent = [c for c in range(len(CATEGORIES)) if c not in present]
        pool = present if (rng.random() < 0.7 or not absent) else absent
        cat_idx = pool[int(rng.integers(len(pool)))]
        if sum(o.category == cat_idx for o in spec.objects) > COUNT_MAX:
            return None
        cat = CATEGORIES[cat_idx]
        return f"how many {cat} objects are there", f"how many {cat} items are there"
    if template == "glob_morethan":
        k = int(rng.integers(2, 8))
        return f"are there more than {k} objects", f"is the object count greater than {k}"
    if template == "cat_extreme":
        e = EXTREMES[int(rng.integers(len(EXTREMES)))]
        return f"what is the {e} object", f"which kind of object is the {e} one"
    if template == "cat_yesno":
        e = EXTREMES[int(rng.integers(len(EXTREMES)))]
        true_cat = _extremal_object(spec, e).category
        if rng.random() < 0.5:
            cat = CATEGORIES[true_cat]
        else:
            cat = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
        return f"is the {e} object a {cat}", f"would you call the {e} object a {cat}"
    raise AssertionError(template)


def generate_qa_pair(
    spec: SceneSpec,
    qtype: str,
    rng: np.random.Generator,
    paraphrase_group: int,
    near_margin: float = 0.15,
) -> tuple[QAItem, QAItem]:
    """Generate one question and its entailed paraphrase (same answer).

    Raises TemplateUnsatisfiable when no template of the qtype fits the scene
    (e.g. relation questions on scenes without two uniquely-named objects).
    """
    if qtype not in QTYPES:
        raise ValueError(f"unknown qtype {qtype!r}")
    templates = list(_TEMPLATES_BY_QTYPE[qtype])
    rng.shuffle(templates)
    for template in templates:
        wordings = _instantiate(template, spec, rng, near_margin)
        if wordings is None:
            continue
        primary_text, paraphrase_text = wordings
        items = []
        for text in (primary_text, paraphrase_text):
            q = token_ids(text.split())
            ans = oracle_answer(spec, q, near_margin)
            valid = [answer_id(a) for a in _VALID[_VALID_BY_TEMPLATE[template]]]
            items.append(
                QAItem(
                    item_id=-1,
                    scene_id=spec.scene_id,
                    question=q,
                    qtype=qtype,
                    answer=ans,
                    valid_answers=valid,
                    paraphrase_group=paraphrase_group,
                    binary=_VALID_BY_TEMPLATE[template] == "binary",
                    template=template,
                )
            )
        assert items[0].answer == items[1].answer, "paraphrase must be answer-preserving"
        return items[0], items[1]
    raise TemplateUnsatisfiable(f"no {qtype!r} template fits scene {spec.scene_id}")
