"""Corpus ingestion: tokenization, truncation, span candidates, gold labels.

Examples arrive as JSON lines with fields ``id``, ``question``,
``documents`` (array of strings) and ``answers`` (array of alias strings).
Documents are tokenized by documented rules (whitespace split, edge
punctuation peeled off, sentences closed at ./?/! chunk ends), truncated,
and turned into the candidate structures the scoring cascade consumes:
every within-sentence token window up to a maximum length, grouped into
unique candidates by lowercased text, with every alias occurrence marked
gold (distant supervision).
"""

from __future__ import annotations

import io
import json
import string
from dataclasses import dataclass, field

from .errors import ContractError, ParseError
from .evaluation import normalize_answer

_PUNCT = set(string.punctuation)
_SENTENCE_ENDERS = {".", "?", "!"}

# articles, prepositions, wh-words and forms of "be"; used only by the
# question-in-span feature (punctuation-only tokens are excluded separately)
STOPWORDS = frozenset(
    """
    a an the
    who whom whose what which when where why how
    am is are was were be been being
    of in to for with on at by from up about into over after under between
    out against during without before around among across behind beyond near
    through toward towards upon within off above below along past per
    """.split()
)

DEFAULT_MAX_TOKENS = 6000
DEFAULT_MAX_SENTENCES = 1000
DEFAULT_MAX_SENTENCE_LEN = 50
DEFAULT_SPAN_LIMIT = 5


@dataclass
class Document:
    """Tokenized evidence text with sentence ranges and origin positions.

    ``sentences`` holds [start, end) index ranges that partition the
    retained tokens in order; ``positions`` records each retained token's
    index in the original (pre-truncation) document.
    """

    tokens: list
    positions: list
    sentences: list

    def __len__(self):
        return len(self.tokens)

    def sentence_tokens(self, index: int) -> list:
        s, e = self.sentences[index]
        return self.tokens[s:e]


@dataclass
class SpanCandidate:
    """One consecutive within-sentence token window [start, end)."""

    doc_index: int
    sentence_index: int
    start: int
    end: int
    unique_id: int = -1
    is_gold: bool = False

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class UniqueCandidate:
    """Equivalence class of spans sharing the same lowercased token text."""

    tokens: tuple
    surface: str
    mentions: list = field(default_factory=list)


@dataclass
class QAExample:
    """One question with its evidence documents and answer aliases."""

    example_id: str
    question: list
    documents: list
    answers: list


@dataclass
class CandidateSet:
    """All spans of an example with their unique-candidate grouping."""

    spans: list
    uniques: list
    gold_unique_ids: list


def _peel(chunk: str):
    i, j = 0, len(chunk)
    lead = []
    while i < j and chunk[i] in _PUNCT:
        lead.append(chunk[i])
        i += 1
    trail = []
    while j > i and chunk[j - 1] in _PUNCT:
        trail.append(chunk[j - 1])
        j -= 1
    trail.reverse()
    core = chunk[i:j]
    return lead, core, trail


def tokenize(text: str) -> Document:
    """Rule-based tokenizer: whitespace split with edge punctuation peeled.

    A sentence closes when a chunk's last emitted token is '.', '?' or '!'
    (i.e. the terminator is followed by whitespace or end of text).
    Deterministic; empty text yields an empty document.
    """
    tokens: list[str] = []
    sentences: list[tuple[int, int]] = []
    sent_start = 0
    for chunk in text.split():
        lead, core, trail = _peel(chunk)
        emitted = lead + ([core] if core else []) + trail
        tokens.extend(emitted)
        if emitted and emitted[-1] in _SENTENCE_ENDERS:
            sentences.append((sent_start, len(tokens)))
            sent_start = len(tokens)
    if sent_start < len(tokens):
        sentences.append((sent_start, len(tokens)))
    return Document(tokens, list(range(len(tokens))), sentences)


def truncate(
    doc: Document,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    max_sentences: int = DEFAULT_MAX_SENTENCES,
    max_sentence_len: int = DEFAULT_MAX_SENTENCE_LEN,
) -> Document:
    """Apply the three caps: sentence length, sentence count, total tokens.

    Sentences past ``max_sentences`` are dropped, each sentence keeps its
    first ``max_sentence_len`` tokens, then the document is cut at
    ``max_tokens`` keeping whole sentences except possibly the last.
    Idempotent.
    """
    if max_tokens < 1 or max_sentences < 1 or max_sentence_len < 1:
        raise ContractError("truncation limits must be positive")
    tokens: list = []
    positions: list = []
    sentences: list = []
    for s, e in doc.sentences[:max_sentences]:
        e = min(e, s + max_sentence_len)
        remaining = max_tokens - len(tokens)
        if remaining <= 0:
            break
        take = min(e - s, remaining)
        start_new = len(tokens)
        tokens.extend(doc.tokens[s:s + take])
        positions.extend(doc.positions[s:s + take])
        sentences.append((start_new, start_new + take))
        if take < e - s:
            break
    return Document(tokens, positions, sentences)


def generate_spans(doc: Document, span_limit: int = DEFAULT_SPAN_LIMIT,
                   doc_index: int = 0) -> list[SpanCandidate]:
    """Every within-sentence window of length 1..span_limit.

    Enumeration order is lexicographic in (sentence, start, length); a
    sentence of G tokens yields sum over o of (G - o + 1) spans.
    """
    if span_limit < 1:
        raise ContractError(f"span limit must be >= 1, got {span_limit}")
    spans = []
    for si, (s, e) in enumerate(doc.sentences):
        for start in range(s, e):
            for length in range(1, min(span_limit, e - start) + 1):
                spans.append(SpanCandidate(doc_index, si, start, start + length))
    return spans


def build_unique_map(spans: list, doc) -> list[UniqueCandidate]:
    """Group spans with identical lowercased token text into uniques.

    Mutates each span's ``unique_id``; unique candidates appear in
    first-mention order and their mention lists partition the span list.
    ``doc`` may be a single Document or a sequence of them (multi-document
    instances index spans by ``doc_index``).
    """
    docs = [doc] if isinstance(doc, Document) else list(doc)
    uniques: list[UniqueCandidate] = []
    index: dict[tuple, int] = {}
    for i, span in enumerate(spans):
        raw = docs[span.doc_index].tokens[span.start:span.end]
        key = tuple(t.lower() for t in raw)
        uid = index.get(key)
        if uid is None:
            uid = len(uniques)
            index[key] = uid
            uniques.append(UniqueCandidate(tokens=key, surface=" ".join(raw)))
        span.unique_id = uid
        uniques[uid].mentions.append(i)
    return uniques


def mark_gold(spans: list, uniques: list, answers: list) -> list:
    """Flag every span whose normalized text equals a normalized alias.

    Returns the gold unique-candidate ids. Aliases normalizing to the
    empty string match nothing. Adding aliases never unmarks a span.
    """
    if not answers:
        raise ContractError("mark_gold needs a non-empty alias list")
    alias_set = {normalize_answer(a) for a in answers}
    alias_set.discard("")
    gold_ids = []
    for uid, unique in enumerate(uniques):
        text = normalize_answer(" ".join(unique.tokens))
        if text and text in alias_set:
            gold_ids.append(uid)
            for mi in unique.mentions:
                spans[mi].is_gold = True
    return gold_ids


def _content_tokens(tokens) -> set:
    out = set()
    for t in tokens:
        lt = t.lower()
        if lt in STOPWORDS:
            continue
        if lt and all(c in _PUNCT for c in lt):
            continue
        out.add(lt)
    return out


def question_in_span(question_tokens: list, span_tokens: list) -> int:
    """1 iff any non-stopword question token occurs in the span."""
    content = _content_tokens(question_tokens)
    if not content:
        return 0
    return int(any(t.lower() in content for t in span_tokens))


def build_candidates(example: QAExample,
                     span_limit: int = DEFAULT_SPAN_LIMIT) -> CandidateSet:
    """Enumerate, deduplicate and gold-mark all spans of an example.

    An empty alias list (prediction-only use) skips gold marking.
    """
    spans: list[SpanCandidate] = []
    for di, doc in enumerate(example.documents):
        spans.extend(generate_spans(doc, span_limit, doc_index=di))
    uniques = build_unique_map(spans, example.documents)
    gold_ids = mark_gold(spans, uniques, example.answers) if example.answers else []
    return CandidateSet(spans=spans, uniques=uniques, gold_unique_ids=gold_ids)


def load_examples(
    source,
    mode: str = "wiki",
    max_tokens: int = DEFAULT_MAX_TOKENS,
    max_sentences: int = DEFAULT_MAX_SENTENCES,
    max_sentence_len: int = DEFAULT_MAX_SENTENCE_LEN,
) -> list[QAExample]:
    """Read JSON-lines QA records into tokenized, truncated examples.

    ``mode`` selects instance construction: "wiki" keeps one instance per
    question with all its documents; "web" emits one instance per
    question-document pair (ids suffixed ``::<doc index>``).
    """
    if mode not in ("wiki", "web"):
        raise ContractError(f"mode must be 'wiki' or 'web', got {mode!r}")
    if isinstance(source, str) and "\n" not in source:
        with open(source, "r", encoding="utf-8") as fh:
            return load_examples(fh, mode, max_tokens, max_sentences,
                                 max_sentence_len)
    if isinstance(source, str):
        source = io.StringIO(source)
    examples: list[QAExample] = []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc}", line_number=lineno) from None
        for key in ("id", "question", "documents", "answers"):
            if key not in record:
                raise ParseError(f"missing field {key!r}", line_number=lineno)
        question = tokenize(str(record["question"])).tokens
        if not question:
            raise ContractError(
                f"line {lineno}: question of example {record['id']!r} "
                "has no tokens"
            )
        answers = [str(a) for a in record["answers"]]
        if not answers:
            raise ParseError("empty answers array", line_number=lineno)
        raw_docs = record["documents"]
        if not raw_docs:
            raise ParseError("empty documents array", line_number=lineno)
        docs = [
            truncate(tokenize(str(d)), max_tokens, max_sentences,
                     max_sentence_len)
            for d in raw_docs
        ]
        if mode == "wiki":
            examples.append(
                QAExample(str(record["id"]), question, docs, answers)
            )
        else:
            for di, doc in enumerate(docs):
                examples.append(
                    QAExample(f"{record['id']}::{di}", question, [doc], answers)
                )
    return examples
