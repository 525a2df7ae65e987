"""Morphologically annotated corpora: parsing, vocabularies and encoding.

An analysis string looks like ``ku[LocPre]-i[NPrePre5]-(li)[BPre5]-bhunga[NStem]``:
hyphen-joined units, each a morpheme followed by its bracketed tag.  A
parenthesised morpheme is elided, i.e. present canonically but absent from the
written word.

Corpus files are UTF-8, one word per line as ``raw_word<TAB>analysis``, with a
blank line closing each sentence.  Lines starting with ``#`` are comments; the
optional header comments ``# segmentation: canonical|surface`` and
``# language: <id>`` record corpus metadata.
"""

import io
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyCorpus, KindMismatch, MalformedAnalysis, UnknownTag

SEGMENTATION_KINDS = ("canonical", "surface")

UNK, PAD, WORD_BOUNDARY = 0, 1, 2
UNK_CHAR, BOUNDARY_CHAR = 0, 1
IGNORE = -1

_RESERVED_MORPHEMES = ("<unk>", "<pad>", "<wb>")
_RESERVED_CHARS = ("<unk>", "<wb>")
_TEXT_FORBIDDEN = set("[]()-")

VOCAB_FORMAT = "morphtag-vocab"
VOCAB_VERSION = 1


@dataclass(frozen=True)
class Morpheme:
    text: str
    elided: bool = False

    def __str__(self):
        return f"({self.text})" if self.elided else self.text


@dataclass(frozen=True)
class AnnotatedWord:
    raw_word: str
    analysis: tuple
    line: Optional[int] = field(default=None, compare=False)

    @property
    def morphemes(self):
        return tuple(m for m, _ in self.analysis)

    @property
    def tags(self):
        return tuple(t for _, t in self.analysis)

    def __len__(self):
        return len(self.analysis)


@dataclass(frozen=True)
class Sentence:
    words: tuple

    def __len__(self):
        return len(self.words)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple
    language_id: str = ""
    segmentation_kind: str = "canonical"

    def __post_init__(self):
        if self.segmentation_kind not in SEGMENTATION_KINDS:
            raise ValueError(f"unknown segmentation kind {self.segmentation_kind!r}")

    def __len__(self):
        return len(self.sentences)

    @property
    def words(self):
        return [w for s in self.sentences for w in s.words]

    def with_sentences(self, sentences):
        return Corpus(tuple(sentences), self.language_id, self.segmentation_kind)


def merge_corpora(*corpora):
    kinds = {c.segmentation_kind for c in corpora}
    if len(kinds) != 1:
        raise ValueError(f"cannot merge corpora of different segmentation kinds: {sorted(kinds)}")
    first = corpora[0]
    return Corpus(tuple(s for c in corpora for s in c.sentences), first.language_id, first.segmentation_kind)


# -- analysis strings ---------------------------------------------------------


def _byte_offset(s, pos):
    return len(s[:pos].encode("utf-8"))


def _read_text(s, pos, stop, what):
    start = pos
    while pos < len(s) and s[pos] not in stop:
        ch = s[pos]
        if ch in _TEXT_FORBIDDEN or ch.isspace():
            raise MalformedAnalysis(f"unexpected {ch!r} in {what}", offset=_byte_offset(s, pos))
        pos += 1
    if pos == start:
        raise MalformedAnalysis(f"empty {what}", offset=_byte_offset(s, pos))
    return s[start:pos], pos


def _read_morpheme(s, pos):
    if s[pos] == "(":
        text, pos = _read_text(s, pos + 1, ")", "morpheme")
        if pos >= len(s):
            raise MalformedAnalysis("unbalanced '('", offset=_byte_offset(s, pos))
        return Morpheme(text, True), pos + 1
    text, pos = _read_text(s, pos, "[-", "morpheme")
    return Morpheme(text), pos


def _skip_space(s, pos):
    while pos < len(s) and s[pos].isspace():
        pos += 1
    return pos


def parse_analysis(raw, raw_word=None):
    """Parse ``a[RelConc6]-li[BPre5]-qela[NStem]`` into an AnnotatedWord.

    Whitespace around hyphens is tolerated.  Errors carry the UTF-8 byte
    offset of the offending position.
    """
    s = raw
    pos = _skip_space(s, 0)
    if pos >= len(s):
        raise MalformedAnalysis("empty analysis", offset=0)
    pairs = []
    while True:
        morpheme, pos = _read_morpheme(s, pos)
        if pos >= len(s) or s[pos] != "[":
            raise MalformedAnalysis("expected '[' after morpheme", offset=_byte_offset(s, pos))
        start = pos + 1
        pos = start
        while pos < len(s) and s[pos] != "]":
            if s[pos] == "[" or s[pos].isspace():
                raise MalformedAnalysis(f"unexpected {s[pos]!r} in tag", offset=_byte_offset(s, pos))
            pos += 1
        if pos >= len(s):
            raise MalformedAnalysis("unbalanced '['", offset=_byte_offset(s, start - 1))
        if pos == start:
            raise MalformedAnalysis("empty tag", offset=_byte_offset(s, pos))
        pairs.append((morpheme, s[start:pos]))
        pos = _skip_space(s, pos + 1)
        if pos >= len(s):
            break
        if s[pos] != "-":
            raise MalformedAnalysis(f"expected '-' between units, found {s[pos]!r}", offset=_byte_offset(s, pos))
        hyphen = pos
        pos = _skip_space(s, pos + 1)
        if pos >= len(s):
            raise MalformedAnalysis("stray hyphen at end of analysis", offset=_byte_offset(s, hyphen))
    if raw_word is None:
        raw_word = "".join(m.text for m, _ in pairs if not m.elided)
    return AnnotatedWord(raw_word, tuple(pairs))


def format_analysis(word):
    return "-".join(f"{m}[{tag}]" for m, tag in word.analysis)


def parse_segmentation(raw):
    """Parse a tagless segmentation such as ``i-zin-hlobo`` or ``za-u-(bu)-bomi``."""
    s = raw.strip()
    if not s:
        raise MalformedAnalysis("empty segmentation", offset=0)
    morphemes = []
    pos = 0
    while True:
        if s[pos] == "-":
            raise MalformedAnalysis("stray hyphen", offset=_byte_offset(s, pos))
        if s[pos] == "(":
            text, pos = _read_text(s, pos + 1, ")", "morpheme")
            if pos >= len(s):
                raise MalformedAnalysis("unbalanced '('", offset=_byte_offset(s, pos))
            morphemes.append(Morpheme(text, True))
            pos += 1
        else:
            text, pos = _read_text(s, pos, "-", "morpheme")
            morphemes.append(Morpheme(text))
        if pos >= len(s):
            return tuple(morphemes)
        if s[pos] != "-":
            raise MalformedAnalysis(f"expected '-', found {s[pos]!r}", offset=_byte_offset(s, pos))
        pos += 1
        if pos >= len(s):
            raise MalformedAnalysis("stray hyphen at end of segmentation", offset=_byte_offset(s, pos - 1))


def format_segmentation(morphemes):
    return "-".join(str(m) for m in morphemes)


# -- files ----------------------------------------------------------------------


def _read_lines(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return fh.read().splitlines(), str(source)
    return source.read().splitlines(), getattr(source, "name", None)


def _header_value(line):
    body = line[1:].strip()
    if ":" not in body:
        return None, None
    key, value = body.split(":", 1)
    return key.strip().lower(), value.strip()


def _group_sentences(lines, path, parse_line):
    meta = {}
    sentences, current = [], []
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#"):
            key, value = _header_value(line)
            if key in ("segmentation", "language") and not sentences and not current:
                meta[key] = value
            continue
        if not line.strip():
            if current:
                sentences.append(current)
                current = []
            continue
        try:
            current.append(parse_line(line, lineno))
        except MalformedAnalysis as err:
            raise MalformedAnalysis(str(err), offset=err.offset, path=path, line=lineno) from None
    if current:
        sentences.append(current)
    return sentences, meta


def _resolve_kind(requested, declared, path):
    if declared is not None and declared not in SEGMENTATION_KINDS:
        raise MalformedAnalysis(f"unknown segmentation kind {declared!r} in header", path=path)
    if requested is not None and declared is not None and requested != declared:
        raise KindMismatch(f"{path}: file declares {declared!r} segmentation but {requested!r} was requested")
    return requested or declared or "canonical"


def load_corpus(source, segmentation_kind=None, language_id=None):
    """Read an annotated corpus file (path or text stream)."""
    lines, path = _read_lines(source)

    def parse_line(line, lineno):
        fields = line.split("\t")
        if len(fields) != 2:
            raise MalformedAnalysis(f"expected 2 tab-separated columns, found {len(fields)}")
        raw_word, analysis = fields[0].strip(), fields[1]
        word = parse_analysis(analysis, raw_word=raw_word)
        return AnnotatedWord(word.raw_word, word.analysis, line=lineno)

    sentences, meta = _group_sentences(lines, path, parse_line)
    if not sentences:
        raise EmptyCorpus(f"{path or 'corpus'}: no annotated words")
    kind = _resolve_kind(segmentation_kind, meta.get("segmentation"), path)
    return Corpus(
        tuple(Sentence(tuple(ws)) for ws in sentences),
        language_id if language_id is not None else meta.get("language", ""),
        kind,
    )


@dataclass(frozen=True)
class SegmentedWord:
    raw_word: str
    morphemes: tuple
    line: Optional[int] = field(default=None, compare=False)


def load_segmented(source):
    """Read tagless input: one segmented word per line, blank lines between sentences.

    A line is either ``segmentation`` or ``raw_word<TAB>segmentation``.  Full
    corpus lines are accepted too; their tags are ignored.  Returns a list of
    sentences (lists of SegmentedWord), possibly empty.
    """
    lines, path = _read_lines(source)

    def parse_line(line, lineno):
        fields = line.split("\t")
        if len(fields) > 2:
            raise MalformedAnalysis(f"expected 1 or 2 tab-separated columns, found {len(fields)}")
        seg = fields[-1]
        if "[" in seg:
            morphemes = parse_analysis(seg).morphemes
        else:
            morphemes = parse_segmentation(seg)
        raw = fields[0].strip() if len(fields) == 2 else "".join(m.text for m in morphemes if not m.elided)
        return SegmentedWord(raw, morphemes, lineno)

    sentences, _ = _group_sentences(lines, path, parse_line)
    return sentences


def write_corpus(target, sentences, segmentation_kind=None, language_id=None):
    """Write sentences of AnnotatedWords in corpus format to a path or stream."""
    if isinstance(sentences, Corpus):
        segmentation_kind = segmentation_kind or sentences.segmentation_kind
        language_id = language_id if language_id is not None else sentences.language_id
        sentences = [s.words for s in sentences.sentences]
    buf = io.StringIO()
    if segmentation_kind:
        buf.write(f"# segmentation: {segmentation_kind}\n")
    if language_id:
        buf.write(f"# language: {language_id}\n")
    for i, words in enumerate(sentences):
        if isinstance(words, Sentence):
            words = words.words
        if i:
            buf.write("\n")
        for w in words:
            buf.write(f"{w.raw_word}\t{format_analysis(w)}\n")
    text = buf.getvalue()
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        target.write(text)


# -- vocabulary -----------------------------------------------------------------


@dataclass
class Vocabulary:
    """Symbol tables for morphemes, characters and tags.

    Morpheme ids 0-2 are reserved for UNK, PAD and the sentence-mode word
    boundary; character ids 0-1 for UNK and the boundary.  Treat instances as
    immutable once built.
    """

    morpheme_to_id: dict
    char_to_id: dict
    tag_to_id: dict
    min_count: int = 2
    lowercase: bool = False
    word_boundary_id: int = WORD_BOUNDARY

    def __post_init__(self):
        self.id_to_tag = [None] * len(self.tag_to_id)
        for tag, i in self.tag_to_id.items():
            self.id_to_tag[i] = tag

    def fold(self, text):
        return text.lower() if self.lowercase else text

    def morpheme_id(self, text):
        return self.morpheme_to_id.get(self.fold(text), UNK)

    def char_ids(self, text):
        return tuple(self.char_to_id.get(ch, UNK_CHAR) for ch in self.fold(text))

    @property
    def n_tags(self):
        return len(self.tag_to_id)

    def to_dict(self):
        return {
            "version": VOCAB_VERSION,
            "min_count": self.min_count,
            "lowercase": self.lowercase,
            "morphemes": sorted(self.morpheme_to_id, key=self.morpheme_to_id.get),
            "chars": sorted(self.char_to_id, key=self.char_to_id.get),
            "tags": list(self.id_to_tag),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != VOCAB_VERSION:
            raise ValueError(f"unsupported vocabulary version {d.get('version')}")
        return cls(
            {s: i for i, s in enumerate(d["morphemes"])},
            {s: i for i, s in enumerate(d["chars"])},
            {s: i for i, s in enumerate(d["tags"])},
            min_count=d["min_count"],
            lowercase=d["lowercase"],
        )

    def save(self, path):
        lines = [f"#{VOCAB_FORMAT}\t{VOCAB_VERSION}", f"meta\tmin_count\t{self.min_count}", f"meta\tlowercase\t{int(self.lowercase)}"]
        for kind, table in (("morph", self.morpheme_to_id), ("char", self.char_to_id), ("tag", self.tag_to_id)):
            for sym in sorted(table, key=table.get):
                lines.append(f"{kind}\t{sym}\t{table[sym]}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != f"#{VOCAB_FORMAT}\t{VOCAB_VERSION}":
            raise ValueError(f"{path}: not a version {VOCAB_VERSION} vocabulary file")
        tables = {"morph": {}, "char": {}, "tag": {}}
        meta = {}
        for lineno, line in enumerate(lines[1:], start=2):
            kind, sym, value = line.split("\t")
            if kind == "meta":
                meta[sym] = int(value)
            else:
                tables[kind][sym] = int(value)
        for kind, table in tables.items():
            if sorted(table.values()) != list(range(len(table))):
                raise ValueError(f"{path}: {kind} ids are not dense")
        return cls(tables["morph"], tables["char"], tables["tag"], meta["min_count"], bool(meta["lowercase"]))


def build_vocabulary(train, min_count=2, lowercase=False):
    """Morphemes seen fewer than ``min_count`` times in ``train`` map to UNK."""
    words = train.words if isinstance(train, Corpus) else list(train)
    if not words:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    fold = str.lower if lowercase else (lambda s: s)
    counts = Counter()
    chars = set()
    tags = set()
    for w in words:
        for m, tag in w.analysis:
            text = fold(m.text)
            counts[text] += 1
            chars.update(text)
            tags.add(tag)
    morphemes = {s: i for i, s in enumerate(_RESERVED_MORPHEMES)}
    for text in sorted(t for t, c in counts.items() if c >= min_count):
        morphemes.setdefault(text, len(morphemes))
    char_ids = {s: i for i, s in enumerate(_RESERVED_CHARS)}
    for ch in sorted(chars):
        char_ids.setdefault(ch, len(char_ids))
    return Vocabulary(morphemes, char_ids, {t: i for i, t in enumerate(sorted(tags))}, min_count, lowercase)


# -- encoding -------------------------------------------------------------------


@dataclass
class Encoded:
    """One model instance.

    ``inputs`` holds morpheme ids or per-morpheme character-id tuples.
    ``tags`` holds gold tag ids with IGNORE at boundary positions (and, in
    evaluation mode, for tags unknown to the vocabulary); ``gold`` keeps the
    gold tag strings (None at boundaries).
    """

    inputs: list
    tags: list
    gold: list
    boundary: list

    def __len__(self):
        return len(self.inputs)

    @property
    def n_supervised(self):
        return sum(1 for t in self.tags if t != IGNORE)


def encode_inputs(words_morphemes, vocab, feature_level="morpheme"):
    """Encode a sequence of words (each a sequence of Morphemes) with boundaries between words."""
    inputs, boundary = [], []
    for i, morphemes in enumerate(words_morphemes):
        if i:
            inputs.append((BOUNDARY_CHAR,) if feature_level == "char_sum" else vocab.word_boundary_id)
            boundary.append(True)
        for m in morphemes:
            inputs.append(vocab.char_ids(m.text) if feature_level == "char_sum" else vocab.morpheme_id(m.text))
            boundary.append(False)
    return inputs, boundary


def encode(unit, vocab, context="word", feature_level="morpheme", train=True):
    """Encode an AnnotatedWord (``context='word'``) or a Sentence (``'sentence'``)."""
    if isinstance(unit, AnnotatedWord):
        words = [unit]
    elif isinstance(unit, Sentence):
        words = list(unit.words)
    else:
        words = list(unit)
    if context == "word" and len(words) != 1:
        raise ValueError("word context encodes a single word; iterate over the sentence instead")
    inputs, boundary = encode_inputs([w.morphemes for w in words], vocab, feature_level)
    tags, gold = [], []
    for i, w in enumerate(words):
        if i:
            tags.append(IGNORE)
            gold.append(None)
        for tag in w.tags:
            tid = vocab.tag_to_id.get(tag)
            if tid is None:
                if train:
                    raise UnknownTag(f"tag {tag!r} (word {w.raw_word!r}) is not in the training tag set")
                tid = IGNORE
            tags.append(tid)
            gold.append(tag)
    return Encoded(inputs, tags, gold, boundary)


def encode_corpus(corpus, vocab, context="word", feature_level="morpheme", train=True):
    if context == "sentence":
        return [encode(s, vocab, "sentence", feature_level, train) for s in corpus.sentences]
    return [encode(w, vocab, "word", feature_level, train) for s in corpus.sentences for w in s.words]


def split_validation(train, fraction=0.10, seed=0):
    """Hold out ``fraction`` of the sentences (at least one) as a validation corpus."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(train.sentences)
    if n < 2:
        raise EmptyCorpus("need at least two sentences to split off a validation set")
    n_valid = min(max(1, int(round(fraction * n))), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    held = set(int(i) for i in order[:n_valid])
    keep = [s for i, s in enumerate(train.sentences) if i not in held]
    valid = [s for i, s in enumerate(train.sentences) if i in held]
    return train.with_sentences(keep), train.with_sentences(valid)
