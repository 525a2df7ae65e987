"""Aligned multiset F1 for morpheme tagging.

Gold and predicted words are aligned one-to-one; within a word the tag
sequences may differ in length (segmentation errors upstream), so counts come
from the multiset intersection of the two tag lists rather than from
positions.  Intersections are taken per word and then pooled.
"""

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

from .corpus import load_corpus
from .errors import AlignmentError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WordScore:
    gold: Counter
    pred: Counter
    intersection: Counter

    @property
    def n_gold(self):
        return sum(self.gold.values())

    @property
    def n_pred(self):
        return sum(self.pred.values())

    @property
    def n_common(self):
        return sum(self.intersection.values())

    @property
    def precision(self):
        return _ratio(self.n_common, self.n_pred)

    @property
    def recall(self):
        return _ratio(self.n_common, self.n_gold)

    @property
    def f1(self):
        return harmonic_mean(self.precision, self.recall)


def _ratio(num, den):
    return num / den if den else 0.0


def harmonic_mean(p, r):
    return 2 * p * r / (p + r) if p + r else 0.0


def score_word(gold, pred):
    g, p = Counter(gold), Counter(pred)
    return WordScore(g, p, g & p)


def micro_f1(scores):
    """Pooled (precision, recall, f1) over all words."""
    scores = list(scores)
    common = sum(s.n_common for s in scores)
    precision = _ratio(common, sum(s.n_pred for s in scores))
    recall = _ratio(common, sum(s.n_gold for s in scores))
    return precision, recall, harmonic_mean(precision, recall)


@dataclass(frozen=True)
class TagScore:
    common: int
    gold: int
    pred: int

    @property
    def precision(self):
        return _ratio(self.common, self.pred)

    @property
    def recall(self):
        return _ratio(self.common, self.gold)

    @property
    def f1(self):
        return harmonic_mean(self.precision, self.recall)


def per_tag_counts(scores):
    common, gold, pred = Counter(), Counter(), Counter()
    for s in scores:
        common.update(s.intersection)
        gold.update(s.gold)
        pred.update(s.pred)
    tags = sorted(set(gold) | set(pred))
    return {t: TagScore(common[t], gold[t], pred[t]) for t in tags}


def macro_f1(scores, tag_universe=None):
    """Unweighted mean of per-tag F1 over ``tag_universe``.

    The default universe is every tag seen in gold or predictions; tags passed
    explicitly but never seen contribute an F1 of 0.
    """
    counts = per_tag_counts(scores)
    universe = sorted(tag_universe) if tag_universe is not None else sorted(counts)
    if not universe:
        return 0.0
    empty = TagScore(0, 0, 0)
    return sum(counts.get(t, empty).f1 for t in universe) / len(universe)


@dataclass
class EvalReport:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float
    per_tag: dict = field(default_factory=dict)
    word_count: int = 0
    mismatch_count: int = 0

    def to_dict(self):
        d = asdict(self)
        d["per_tag"] = {
            t: {"common": s.common, "gold": s.gold, "pred": s.pred,
                "precision": s.precision, "recall": s.recall, "f1": s.f1}
            for t, s in self.per_tag.items()
        }
        return d

    @classmethod
    def from_dict(cls, d):
        per_tag = {t: TagScore(v["common"], v["gold"], v["pred"]) for t, v in d.get("per_tag", {}).items()}
        return cls(d["micro_precision"], d["micro_recall"], d["micro_f1"], d["macro_f1"],
                   per_tag, d.get("word_count", 0), d.get("mismatch_count", 0))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        lines = [
            f"words\t{self.word_count}",
            f"length_mismatches\t{self.mismatch_count}",
            f"micro_precision\t{self.micro_precision:.6f}",
            f"micro_recall\t{self.micro_recall:.6f}",
            f"micro_f1\t{self.micro_f1:.6f}",
            f"macro_f1\t{self.macro_f1:.6f}",
            "",
            "tag\tcommon\tgold\tpred\tprecision\trecall\tf1",
        ]
        for t, s in self.per_tag.items():
            lines.append(f"{t}\t{s.common}\t{s.gold}\t{s.pred}\t{s.precision:.6f}\t{s.recall:.6f}\t{s.f1:.6f}")
        return "\n".join(lines) + "\n"


def report_from_scores(scores, mismatch_count=0):
    scores = list(scores)
    p, r, f = micro_f1(scores)
    return EvalReport(p, r, f, macro_f1(scores), per_tag_counts(scores), len(scores), mismatch_count)


def evaluate_words(gold_words, pred_words):
    gold_words, pred_words = list(gold_words), list(pred_words)
    if len(gold_words) != len(pred_words):
        raise AlignmentError(f"{len(gold_words)} gold words but {len(pred_words)} predicted")
    scores, mismatches = [], 0
    for g, p in zip(gold_words, pred_words):
        if g.raw_word != p.raw_word:
            log.warning("word mismatch: gold %r vs predicted %r", g.raw_word, p.raw_word)
        if len(g.tags) != len(p.tags):
            mismatches += 1
        scores.append(score_word(g.tags, p.tags))
    return report_from_scores(scores, mismatches)


def evaluate_sentences(gold_sentences, pred_sentences):
    """Score aligned sentences (each a sequence of AnnotatedWord)."""
    gold_sentences, pred_sentences = list(gold_sentences), list(pred_sentences)
    if len(gold_sentences) != len(pred_sentences):
        raise AlignmentError(f"{len(gold_sentences)} gold sentences but {len(pred_sentences)} predicted")
    gold_words, pred_words = [], []
    for i, (g, p) in enumerate(zip(gold_sentences, pred_sentences), start=1):
        g = g.words if hasattr(g, "words") else list(g)
        p = p.words if hasattr(p, "words") else list(p)
        if len(g) != len(p):
            raise AlignmentError(f"sentence {i}: {len(g)} gold words but {len(p)} predicted")
        gold_words.extend(g)
        pred_words.extend(p)
    return evaluate_words(gold_words, pred_words)


def evaluate_files(gold_path, pred_path):
    gold = load_corpus(gold_path)
    pred = load_corpus(pred_path)
    return evaluate_sentences(gold.sentences, pred.sentences)
