"""Sentences, triplets and the ASTE triplet file format.

Records look like::

    The battery life is short####[([1, 2], [4], 'NEG')]

Index lists are 0-based, inclusive and must be contiguous.
"""
from __future__ import annotations

import ast
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

SEPARATOR = "####"


class ParseError(ValueError):
    """Malformed dataset record."""

    def __init__(self, cause: str, line_no: int | None = None, path: str | None = None):
        self.cause = cause
        self.line_no = line_no
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line_no is not None:
            where += f"line {line_no}: "
        elif where:
            where += " "
        super().__init__(where + cause)


class ConfigError(ValueError):
    pass


class Sentiment(Enum):
    POSITIVE = "POS"
    NEGATIVE = "NEG"
    NEUTRAL = "NEU"


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid span ({self.start}, {self.end})")

    @property
    def width(self) -> int:
        return self.end - self.start + 1

    def indices(self) -> list[int]:
        return list(range(self.start, self.end + 1))


@dataclass(frozen=True)
class Triplet:
    aspect: Span
    opinion: Span
    sentiment: Sentiment


@dataclass
class Sentence:
    tokens: list[str]
    domain: str
    gold: list[Triplet] | None = None

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("sentence has no tokens")
        if self.gold is not None:
            n = len(self.tokens)
            for trip in self.gold:
                if trip.aspect.end >= n or trip.opinion.end >= n:
                    raise ValueError(f"triplet {trip} out of range for {n} tokens")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class TransferPair:
    source_train: list[Sentence]
    source_dev: list[Sentence]
    target_train: list[Sentence]
    target_test: list[Sentence]
    target_dev: list[Sentence] = field(default_factory=list)

    @property
    def source_domain(self) -> str:
        return self.source_train[0].domain if self.source_train else ""

    @property
    def target_domain(self) -> str:
        return self.target_train[0].domain if self.target_train else ""

    @property
    def name(self) -> str:
        return f"{_short_tag(self.source_domain)}→{_short_tag(self.target_domain)}"


def _short_tag(domain: str) -> str:
    # "14res" -> "14R", "14lap" -> "14L"
    digits = "".join(ch for ch in domain if ch.isdigit())
    letters = "".join(ch for ch in domain if ch.isalpha())
    if digits and letters:
        return digits + letters[0].upper()
    return domain


def _index_run(raw, what: str) -> Span:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ParseError(f"{what} indices must be a non-empty list, got {raw!r}")
    if not all(isinstance(i, int) and not isinstance(i, bool) for i in raw):
        raise ParseError(f"{what} indices must be integers, got {raw!r}")
    for prev, cur in zip(raw, raw[1:]):
        if cur != prev + 1:
            raise ParseError(f"{what} indices are not a contiguous ascending run: {list(raw)}")
    if raw[0] < 0:
        raise ParseError(f"{what} index {raw[0]} is negative")
    return Span(raw[0], raw[-1])


def parse_dataset_line(line: str, domain: str = "") -> Sentence:
    line = line.rstrip("\r\n")
    if line.count(SEPARATOR) != 1:
        raise ParseError(f"expected exactly one '{SEPARATOR}' separator")
    text, raw_triplets = line.split(SEPARATOR)
    tokens = text.split(" ")
    if not text or any(tok == "" for tok in tokens):
        raise ParseError("sentence must be non-empty tokens separated by single spaces")
    try:
        entries = ast.literal_eval(raw_triplets.strip())
    except (ValueError, SyntaxError) as exc:
        raise ParseError(f"unreadable triplet list: {exc}") from None
    if not isinstance(entries, list):
        raise ParseError("triplet list must be a bracketed list")

    gold = []
    for entry in entries:
        if not isinstance(entry, tuple) or len(entry) != 3:
            raise ParseError(f"triplet entry must be a 3-tuple, got {entry!r}")
        aspect = _index_run(entry[0], "aspect")
        opinion = _index_run(entry[1], "opinion")
        try:
            sentiment = Sentiment(entry[2])
        except ValueError:
            raise ParseError(f"unknown polarity tag {entry[2]!r}") from None
        for span, what in ((aspect, "aspect"), (opinion, "opinion")):
            if span.end >= len(tokens):
                raise ParseError(
                    f"{what} index {span.end} out of range for {len(tokens)} tokens"
                )
        gold.append(Triplet(aspect, opinion, sentiment))
    return Sentence(tokens=tokens, domain=domain, gold=gold)


def serialize_sentence(sentence: Sentence) -> str:
    """Canonical dataset line for a sentence (gold-free sentences get ``[]``)."""
    entries = [
        (t.aspect.indices(), t.opinion.indices(), t.sentiment.value)
        for t in (sentence.gold or [])
    ]
    return " ".join(sentence.tokens) + SEPARATOR + repr(entries)


def load_split(path: str | Path, domain: str) -> list[Sentence]:
    path = Path(path)
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                sentences.append(parse_dataset_line(line, domain))
            except ParseError as exc:
                raise ParseError(exc.cause, line_no=line_no, path=str(path)) from None
    return sentences


def write_split(path: str | Path, sentences: Iterable[Sentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            fh.write(serialize_sentence(sent) + "\n")


@dataclass(frozen=True)
class Stats:
    num_sentences: int = 0
    num_positive: int = 0
    num_neutral: int = 0
    num_negative: int = 0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.num_sentences, self.num_positive, self.num_neutral, self.num_negative)


def dataset_statistics(sentences: Sequence[Sentence]) -> Stats:
    counts = {s: 0 for s in Sentiment}
    for sent in sentences:
        for trip in sent.gold or []:
            counts[trip.sentiment] += 1
    return Stats(
        num_sentences=len(sentences),
        num_positive=counts[Sentiment.POSITIVE],
        num_neutral=counts[Sentiment.NEUTRAL],
        num_negative=counts[Sentiment.NEGATIVE],
    )


# (#S, #+, #O, #-) per domain and split for the public ASTE-Data-V2 release.
PUBLISHED_STATISTICS: dict[str, dict[str, Stats]] = {
    "14res": {
        "train": Stats(1266, 1692, 166, 480),
        "dev": Stats(310, 404, 54, 119),
        "test": Stats(492, 773, 66, 155),
    },
    "14lap": {
        "train": Stats(906, 817, 126, 517),
        "dev": Stats(219, 169, 36, 141),
        "test": Stats(328, 364, 63, 116),
    },
    "15res": {
        "train": Stats(605, 783, 25, 205),
        "dev": Stats(148, 185, 11, 53),
        "test": Stats(322, 317, 25, 143),
    },
    "16res": {
        "train": Stats(857, 1015, 50, 329),
        "dev": Stats(210, 252, 11, 76),
        "test": Stats(326, 407, 29, 78),
    },
}


def strip_gold(sentences: Iterable[Sentence]) -> list[Sentence]:
    return [Sentence(tokens=list(s.tokens), domain=s.domain, gold=None) for s in sentences]


def build_transfer_pair(source_splits: dict, target_splits: dict) -> TransferPair:
    """Combine labeled source splits with unlabeled target training data.

    Both arguments map split names ("train", "dev", "test") to sentence lists.
    """
    src_domains = {s.domain for split in source_splits.values() for s in split}
    tgt_domains = {s.domain for split in target_splits.values() for s in split}
    if src_domains & tgt_domains:
        raise ConfigError(
            f"source and target share domain tag(s) {sorted(src_domains & tgt_domains)}"
        )
    for name, splits in (("source", source_splits), ("target", target_splits)):
        if "train" not in splits:
            raise ConfigError(f"{name} splits lack a 'train' split")
    return TransferPair(
        source_train=list(source_splits["train"]),
        source_dev=list(source_splits.get("dev", [])),
        target_train=strip_gold(target_splits["train"]),
        target_test=list(target_splits.get("test", [])),
        target_dev=list(target_splits.get("dev", [])),
    )


# --- synthetic two-domain corpus -------------------------------------------

_SHARED_FILLERS = ["honestly", "overall", "today", "again", "yesterday", "here", "now", "still"]
_ADVERBS = ["very", "really", "quite", "so", "rather"]
_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "tr", "pl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "n", "r", "l", "s", "k", "m"]


@dataclass(frozen=True)
class SyntheticSpec:
    n_sentences: int = 20
    aspect_vocab: int = 10
    opinion_vocab: int = 10
    filler_vocab: int = 6
    domain_shift: float = 0.5
    multiword_rate: float = 0.3
    neutral_rate: float = 0.15
    source_domain: str = "synsrc"
    target_domain: str = "syntgt"

    def __post_init__(self):
        if self.n_sentences < 0 or min(self.aspect_vocab, self.opinion_vocab) < 2:
            raise ConfigError("synthetic spec needs n_sentences >= 0 and vocab sizes >= 2")
        if not 0.0 <= self.domain_shift <= 1.0:
            raise ConfigError("domain_shift must lie in [0, 1]")


@dataclass
class _Lexicon:
    aspects: list[tuple[str, ...]]
    opinions: list[tuple[str, Sentiment]]
    fillers: list[str]


def _make_word(rng: random.Random, used: set[str]) -> str:
    while True:
        word = "".join(
            rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(rng.randint(1, 2))
        ) + rng.choice(_CODAS)
        if len(word) >= 3 and word not in used:
            used.add(word)
            return word


def _make_lexicon(rng: random.Random, spec: SyntheticSpec, used: set[str]) -> _Lexicon:
    aspects = []
    for _ in range(spec.aspect_vocab):
        if rng.random() < spec.multiword_rate:
            aspects.append((_make_word(rng, used), _make_word(rng, used)))
        else:
            aspects.append((_make_word(rng, used),))
    opinions = []
    for i in range(spec.opinion_vocab):
        if rng.random() < spec.neutral_rate:
            polarity = Sentiment.NEUTRAL
        else:
            polarity = Sentiment.POSITIVE if i % 2 == 0 else Sentiment.NEGATIVE
        opinions.append((_make_word(rng, used), polarity))
    fillers = [_make_word(rng, used) for _ in range(spec.filler_vocab)]
    return _Lexicon(aspects, opinions, fillers)


# Templates: "A"/"B" aspect slots, "o"/"p" opinion slots, "F" filler, "V" adverb.
# Each entry lists the (aspect slot, opinion slot) triplets it produces.
_TEMPLATES = [
    ("the A is o", [("A", "o")]),
    ("the A was V o", [("A", "o")]),
    ("F the A is o", [("A", "o")]),
    ("o A F", [("A", "o")]),
    ("the A is o but the B is p", [("A", "o"), ("B", "p")]),
    ("i think the A was o and the B was V p", [("A", "o"), ("B", "p")]),
    ("the A and the B are o", [("A", "o"), ("B", "o")]),
    ("F , o A and p B", [("A", "o"), ("B", "p")]),
]


def _sample_sentence(rng: random.Random, lex: _Lexicon, spec: SyntheticSpec, domain: str) -> Sentence:
    template, links = rng.choice(_TEMPLATES)
    a_choice = rng.sample(range(len(lex.aspects)), 2)
    o_choice = rng.sample(range(len(lex.opinions)), 2)
    fill = {
        "A": lex.aspects[a_choice[0]],
        "B": lex.aspects[a_choice[1]],
        "o": (lex.opinions[o_choice[0]][0],),
        "p": (lex.opinions[o_choice[1]][0],),
    }
    polarity = {"o": lex.opinions[o_choice[0]][1], "p": lex.opinions[o_choice[1]][1]}
    tokens: list[str] = []
    where: dict[str, Span] = {}
    for slot in template.split():
        if slot in fill:
            where[slot] = Span(len(tokens), len(tokens) + len(fill[slot]) - 1)
            tokens.extend(fill[slot])
        elif slot == "F":
            if rng.random() < spec.domain_shift:
                tokens.append(rng.choice(lex.fillers))
            else:
                tokens.append(rng.choice(_SHARED_FILLERS))
        elif slot == "V":
            tokens.append(rng.choice(_ADVERBS))
        else:
            tokens.append(slot)
    gold = [Triplet(where[a], where[o], polarity[o]) for a, o in links]
    return Sentence(tokens=tokens, domain=domain, gold=gold)


def generate_synthetic_corpus(seed: int, spec: SyntheticSpec = SyntheticSpec()) -> tuple[list[Sentence], list[Sentence]]:
    """Two labeled domains sharing templates and function words.

    Aspect, opinion and domain-filler lexicons are disjoint between the
    domains; ``domain_shift`` is the probability that a filler slot draws a
    domain-specific word rather than a shared one.
    """
    rng = random.Random(seed)
    used = set(_SHARED_FILLERS) | set(_ADVERBS) | {
        w for t, _ in _TEMPLATES for w in t.split()
    }
    lex_src = _make_lexicon(rng, spec, used)
    lex_tgt = _make_lexicon(rng, spec, used)
    source = [_sample_sentence(rng, lex_src, spec, spec.source_domain) for _ in range(spec.n_sentences)]
    target = [_sample_sentence(rng, lex_tgt, spec, spec.target_domain) for _ in range(spec.n_sentences)]
    return source, target


def synthetic_splits(seed: int, spec: SyntheticSpec, n_train: int, n_dev: int, n_test: int) -> tuple[dict, dict]:
    """Source and target split dicts cut from one synthetic corpus."""
    total = n_train + n_dev + n_test
    source, target = generate_synthetic_corpus(seed, replace(spec, n_sentences=total))

    def cut(items):
        return {
            "train": items[:n_train],
            "dev": items[n_train:n_train + n_dev],
            "test": items[n_train + n_dev:],
        }

    return cut(source), cut(target)
