"""Synthetic corpora with a known morpheme-to-tag rule.

Most morphemes carry one fixed tag.  The exception is ``ku`` in the word
``ku-thi``: its tag is ``CtxA`` after a word starting with ``a`` and ``CtxB``
after a word starting with ``u``.  The word form is identical in both
readings, so only a model that sees the neighbouring word can get it right.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import AnnotatedWord, Corpus, Morpheme, Sentence

PREFIXES = {"a": "RelConc", "u": "SubjConc", "i": "NPrePre", "ba": "BPre"}
STEMS = {
    "hlobo": "NStem", "como": "NStem", "qela": "NStem", "bhunga": "NStem",
    "ntu": "NStem", "fundo": "NStem", "hamb": "VStem", "bon": "VStem",
    "sebenz": "VStem", "fund": "VStem", "dl": "VStem", "khulum": "VStem",
}
SUFFIXES = {"a": "VerbTerm", "ile": "VerbTerm", "yo": "RelSuf", "ana": "RecSuf"}
AMBIGUOUS = ("ku", "thi", "VStem")
CONTEXT_TAG = {"a": "CtxA", "u": "CtxB"}
TAGS = sorted(set(PREFIXES.values()) | set(STEMS.values()) | set(SUFFIXES.values()) | set(CONTEXT_TAG.values()))


@dataclass
class SyntheticCorpus:
    corpus: Corpus
    context_words: list  # (sentence index, word index) of the ambiguous words


def _pick(rng, options):
    options = list(options)
    return options[int(rng.integers(len(options)))]


def _regular_word(rng, prefix=None):
    prefix = prefix or _pick(rng, PREFIXES)
    stem = _pick(rng, STEMS)
    parts = [(Morpheme(prefix), PREFIXES[prefix]), (Morpheme(stem), STEMS[stem])]
    if STEMS[stem] == "VStem" or rng.random() < 0.3:
        suffix = _pick(rng, SUFFIXES)
        parts.append((Morpheme(suffix), SUFFIXES[suffix]))
    return AnnotatedWord("".join(m.text for m, _ in parts), tuple(parts))


def _ambiguous_word(cue):
    ku, thi, stem_tag = AMBIGUOUS
    return AnnotatedWord(ku + thi, ((Morpheme(ku), CONTEXT_TAG[cue]), (Morpheme(thi), stem_tag)))


def generate(n_words=200, context_fraction=0.10, sentence_length=5, seed=0):
    """Build ``n_words`` words in sentences of ``sentence_length``.

    ``round(context_fraction * n_words)`` of them are the ambiguous word,
    alternating between the two readings, never sentence-initial and never
    adjacent to another ambiguous word.
    """
    rng = np.random.default_rng(seed)
    n_sent = -(-n_words // sentence_length)
    n_ctx = int(round(context_fraction * n_words))
    slots = [(s, w) for s in range(n_sent) for w in range(1, sentence_length, 2)
             if s * sentence_length + w < n_words]
    if n_ctx > len(slots):
        raise ValueError("context_fraction too large for this sentence length")
    chosen = sorted(slots[i] for i in rng.choice(len(slots), size=n_ctx, replace=False))
    chosen_set = set(chosen)
    cues = {pos: ("a" if i % 2 == 0 else "u") for i, pos in enumerate(chosen)}

    sentences = []
    for s in range(n_sent):
        length = min(sentence_length, n_words - s * sentence_length)
        words = []
        for w in range(length):
            if (s, w) in chosen_set:
                words.append(_ambiguous_word(cues[(s, w)]))
            else:
                cue = cues.get((s, w + 1))
                words.append(_regular_word(rng, prefix=cue))
        sentences.append(Sentence(tuple(words)))
    return SyntheticCorpus(Corpus(tuple(sentences), "synthetic", "canonical"), chosen)
