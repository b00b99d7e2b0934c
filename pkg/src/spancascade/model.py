"""The four-submodel span-scoring cascade and its candidate distributions.

Level 1 scores each candidate span from bags of embeddings: one submodel
pairs the span with a learned weighted summary of the question, the other
pairs it with averaged K-token left/right contexts. Level 2 aligns the
question with the span's sentence using attend/compare attention computed
once per sentence (shared by every span in it) and rescores using the
level-1 hidden states. Level 3 passes each mention's level-2 hidden state
through a transform, sums the results over all mentions of the same unique
candidate, and produces the score used for prediction.

Two forward implementations are provided and cross-checked by tests: a
tape-recorded pass used for training, and a plain numpy inference pass
that can fan out over worker threads for long documents.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import (
    DropoutState,
    FfnnParams,
    LinearParams,
    Tape,
    Tensor,
    bind_ffnn,
    bind_linear,
    ffnn,
    linear,
)
from .corpus import CandidateSet, QAExample, build_candidates, question_in_span
from .embeddings import EmbeddingTable
from .errors import (
    CheckpointError,
    ContractError,
    DimensionError,
    EmptyCandidateError,
)
from .evaluation import ScoredExample

CHECKPOINT_MAGIC = b"SPANCASCADE-CKPT-v1\n"


@dataclass(frozen=True)
class Architecture:
    """Dimensions and level wiring of the cascade."""

    embed_dim: int
    hidden_width: int = 300
    span_limit: int = 5
    context_size: int = 1
    level1_mode: str = "both"    # both | qs | sc
    use_level2: bool = True
    use_level3: bool = True
    combined_level1: bool = False

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden_width < 1:
            raise ContractError("embed_dim and hidden_width must be positive")
        if self.span_limit < 1 or self.context_size < 1:
            raise ContractError("span_limit and context_size must be positive")
        if self.level1_mode not in ("both", "qs", "sc"):
            raise ContractError(f"bad level1_mode {self.level1_mode!r}")
        if self.combined_level1 and self.level1_mode != "both":
            raise ContractError("combined_level1 uses both level-1 inputs")
        if self.use_level3 and not self.use_level2:
            raise ContractError("level 3 requires level 2 (no documented wiring "
                                "feeds aggregation from level 1 directly)")

    @property
    def m1_active(self) -> bool:
        return not self.combined_level1 and self.level1_mode in ("both", "qs")

    @property
    def m2_active(self) -> bool:
        return not self.combined_level1 and self.level1_mode in ("both", "sc")

    @property
    def needs_question_nets(self) -> bool:
        return self.m1_active or self.combined_level1

    @property
    def level2_in_dim(self) -> int:
        w = self.hidden_width
        n_hidden = int(self.m1_active) + int(self.m2_active) + int(self.combined_level1)
        return n_hidden * w + 2 * w + 1

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ForwardStats:
    """Per-forward instrumentation (attention sharing, MACs, softmax audit)."""

    attention_calls: int = 0
    macs: int = 0
    collect_distributions: bool = False
    probability_vectors: list = field(default_factory=list)

    def record_probs(self, array: np.ndarray):
        if not self.collect_distributions:
            return
        if array.ndim == 1:
            self.probability_vectors.append(np.array(array))
        else:
            self.probability_vectors.extend(np.array(row) for row in array)


# ---------------------------------------------------------------------------
# parameters


@dataclass
class CascadeParams:
    """All trainable weights, grouped by submodel; inactive ones are None."""

    arch: Architecture
    seed: int
    ffnn_q: FfnnParams | None = None
    linear_q: LinearParams | None = None
    ffnn_qs: FfnnParams | None = None
    linear_qs: LinearParams | None = None
    ffnn_c: FfnnParams | None = None
    linear_c: LinearParams | None = None
    ffnn_comb: FfnnParams | None = None
    linear_comb: LinearParams | None = None
    ffnn_att1: FfnnParams | None = None
    ffnn_att2: FfnnParams | None = None
    ffnn_l2: FfnnParams | None = None
    linear_l2: LinearParams | None = None
    ffnn_agg: FfnnParams | None = None
    ffnn_l3: FfnnParams | None = None
    linear_l3: LinearParams | None = None

    _FFNN_FIELDS = (
        "ffnn_q", "ffnn_qs", "ffnn_c", "ffnn_comb",
        "ffnn_att1", "ffnn_att2", "ffnn_l2", "ffnn_agg", "ffnn_l3",
    )
    _LINEAR_FIELDS = (
        "linear_q", "linear_qs", "linear_c", "linear_comb",
        "linear_l2", "linear_l3",
    )

    @classmethod
    def _submodel_dims(cls, arch: Architecture) -> dict:
        """Active submodels and their input dims, in initialization order."""
        e, w = arch.embed_dim, arch.hidden_width
        dims = {}
        if arch.needs_question_nets:
            dims["ffnn_q"], dims["linear_q"] = e, w
        if arch.m1_active:
            dims["ffnn_qs"], dims["linear_qs"] = 2 * e + 2, w
        if arch.m2_active:
            dims["ffnn_c"], dims["linear_c"] = 3 * e + 1, w
        if arch.combined_level1:
            dims["ffnn_comb"], dims["linear_comb"] = 4 * e + 2, w
        if arch.use_level2:
            dims["ffnn_att1"] = e
            dims["ffnn_att2"] = 2 * e
            dims["ffnn_l2"], dims["linear_l2"] = arch.level2_in_dim, w
        if arch.use_level3:
            dims["ffnn_agg"] = w + 1
            dims["ffnn_l3"], dims["linear_l3"] = w, w
        return dims

    @classmethod
    def initialize(cls, arch: Architecture, seed: int) -> "CascadeParams":
        """Seeded scaled-uniform init over the active submodels."""
        rng = np.random.default_rng(seed)
        w = arch.hidden_width
        p = cls(arch=arch, seed=int(seed))
        for name, in_dim in cls._submodel_dims(arch).items():
            if name.startswith("ffnn"):
                setattr(p, name, FfnnParams.initialize(in_dim, w, rng))
            else:
                setattr(p, name, LinearParams.initialize(in_dim, rng))
        return p

    def named_arrays(self) -> list:
        """(name, array) pairs in a fixed order; the flat parameter view."""
        out = []
        for name in self._FFNN_FIELDS:
            net = getattr(self, name)
            if net is not None:
                out += [(f"{name}.V", net.V), (f"{name}.a", net.a),
                        (f"{name}.U", net.U), (f"{name}.b", net.b)]
        for name in self._LINEAR_FIELDS:
            net = getattr(self, name)
            if net is not None:
                out += [(f"{name}.w", net.w), (f"{name}.z", net.z)]
        return out

    def as_dict(self) -> dict:
        return dict(self.named_arrays())

    def bind(self, tape: Tape) -> "CascadeParams":
        """Register every array as a named tape variable; returns the bound view."""
        bound = replace(self)
        for name in self._FFNN_FIELDS:
            net = getattr(self, name)
            if net is not None:
                setattr(bound, name, bind_ffnn(tape, net, name))
        for name in self._LINEAR_FIELDS:
            net = getattr(self, name)
            if net is not None:
                setattr(bound, name, bind_linear(tape, net, name))
        return bound

    @classmethod
    def from_arrays(cls, arch: Architecture, seed: int, arrays: dict) -> "CascadeParams":
        """Rebuild from a {name: array} mapping (checkpoint load)."""
        p = cls(arch=arch, seed=int(seed))
        for name in cls._submodel_dims(arch):
            if name.startswith("ffnn"):
                keys = [f"{name}.V", f"{name}.a", f"{name}.U", f"{name}.b"]
            else:
                keys = [f"{name}.w", f"{name}.z"]
            for key in keys:
                if key not in arrays:
                    raise CheckpointError(f"missing tensor {key!r}")
            if name.startswith("ffnn"):
                setattr(p, name, FfnnParams(*(arrays[k] for k in keys)))
            else:
                setattr(p, name, LinearParams(*(arrays[k] for k in keys)))
        return p


# ---------------------------------------------------------------------------
# encoding: fixed-embedding features, computed once per example


@dataclass
class EncodedExample:
    """Numeric view of one example; everything here is parameter-free."""

    example_id: str
    aliases: list
    question: np.ndarray        # (m, e)
    doc_embed: np.ndarray       # (n, e), documents concatenated
    sentence_ranges: list       # [start, end) over concatenated tokens
    span_sentence: np.ndarray   # (S,) sentence index per span
    span_unique: np.ndarray     # (S,) unique-candidate id per span
    gamma: np.ndarray           # (S,) question-in-span flag, 0.0 or 1.0
    span_avg: np.ndarray        # (S, e) mean token embedding of each span
    ctx_left: np.ndarray        # (S, e) K-token left context average
    ctx_right: np.ndarray       # (S, e) K-token right context average
    n_unique: int
    gold_spans: np.ndarray      # indices into the span list
    gold_uniques: np.ndarray    # indices into the unique list
    unique_surfaces: list
    mention_counts: np.ndarray

    @property
    def n_spans(self) -> int:
        return len(self.span_sentence)


def span_embeddings(span_avg: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Append the question-in-span flag to each span's averaged embedding."""
    return np.concatenate([span_avg, gamma[:, None]], axis=1)


def encode_example(example: QAExample, cands: CandidateSet,
                   table: EmbeddingTable, arch: Architecture) -> EncodedExample:
    """Precompute every parameter-free feature of an example.

    Context windows never cross document boundaries; positions outside a
    document contribute zero vectors (the sum is always divided by K).
    """
    if not example.question:
        raise ContractError(f"example {example.example_id!r} has no question tokens")
    K = arch.context_size
    q_embed = table.lookup_all(example.question)
    if q_embed.shape[1] != arch.embed_dim:
        raise DimensionError(
            f"table dimension {q_embed.shape[1]} vs architecture embed_dim "
            f"{arch.embed_dim}"
        )

    doc_mats, doc_csums, token_offsets, sent_offsets = [], [], [], []
    sentence_ranges: list[tuple[int, int]] = []
    tok_off = 0
    for doc in example.documents:
        mat = table.lookup_all(doc.tokens)
        doc_mats.append(mat)
        cs = np.zeros((len(doc.tokens) + 1, arch.embed_dim))
        np.cumsum(mat, axis=0, out=cs[1:])
        doc_csums.append(cs)
        token_offsets.append(tok_off)
        sent_offsets.append(len(sentence_ranges))
        sentence_ranges.extend(
            (s + tok_off, e + tok_off) for s, e in doc.sentences
        )
        tok_off += len(doc.tokens)
    doc_embed = (
        np.concatenate(doc_mats) if doc_mats else np.zeros((0, arch.embed_dim))
    )

    S = len(cands.spans)
    span_sentence = np.zeros(S, dtype=np.intp)
    span_unique = np.zeros(S, dtype=np.intp)
    span_avg = np.zeros((S, arch.embed_dim))
    ctx_left = np.zeros((S, arch.embed_dim))
    ctx_right = np.zeros((S, arch.embed_dim))
    gamma_unique = np.array(
        [
            float(question_in_span(example.question, u.tokens))
            for u in cands.uniques
        ]
    )
    for i, sp in enumerate(cands.spans):
        cs = doc_csums[sp.doc_index]
        n_doc = cs.shape[0] - 1
        span_sentence[i] = sent_offsets[sp.doc_index] + sp.sentence_index
        span_unique[i] = sp.unique_id
        span_avg[i] = (cs[sp.end] - cs[sp.start]) / sp.length
        lo = max(0, sp.start - K)
        ctx_left[i] = (cs[sp.start] - cs[lo]) / K
        hi = min(n_doc, sp.end + K)
        ctx_right[i] = (cs[hi] - cs[sp.end]) / K
    gamma = gamma_unique[span_unique] if S else np.zeros(0)

    mention_counts = np.array([len(u.mentions) for u in cands.uniques], dtype=np.intp)
    gold_spans = np.array(
        [i for i, sp in enumerate(cands.spans) if sp.is_gold], dtype=np.intp
    )
    return EncodedExample(
        example_id=example.example_id,
        aliases=list(example.answers),
        question=q_embed,
        doc_embed=doc_embed,
        sentence_ranges=sentence_ranges,
        span_sentence=span_sentence,
        span_unique=span_unique,
        gamma=gamma,
        span_avg=span_avg,
        ctx_left=ctx_left,
        ctx_right=ctx_right,
        n_unique=len(cands.uniques),
        gold_spans=gold_spans,
        gold_uniques=np.array(cands.gold_unique_ids, dtype=np.intp),
        unique_surfaces=[u.surface for u in cands.uniques],
        mention_counts=mention_counts,
    )


# ---------------------------------------------------------------------------
# tape forward (training path)


@dataclass
class CascadeScores:
    """Scores per level; spans for 1..3, unique candidates for 4.

    Entries are tape Tensors in training and plain arrays at inference;
    inactive levels are None.
    """

    phi1: object = None
    phi2: object = None
    phi_comb: object = None
    phi3: object = None
    phi4: object = None

    def values(self) -> "CascadeScores":
        def v(x):
            return x.value if isinstance(x, Tensor) else x
        return CascadeScores(v(self.phi1), v(self.phi2), v(self.phi_comb),
                             v(self.phi3), v(self.phi4))


def question_vector(tape: Tape, q_embed, bound: CascadeParams,
                    drop: DropoutState | None = None,
                    stats: ForwardStats | None = None) -> Tensor:
    """Softmax-weighted question summary with learned per-token weights."""
    q = q_embed if isinstance(q_embed, Tensor) else tape.constant(q_embed)
    if q.value.shape[0] < 1:
        raise ContractError("question must have at least one token")
    h = ffnn(q, bound.ffnn_q, drop)
    delta = linear(h, bound.linear_q)
    weights = ad.softmax_normalize(delta)
    if stats is not None:
        stats.record_probs(weights.value)
    return ad.matmul(weights, q)


def level1_question_span(tape: Tape, s_tilde, q_tilde: Tensor, gamma_col,
                         bound: CascadeParams,
                         drop: DropoutState | None = None):
    """Question+span submodel: hidden states and scores for all spans."""
    s_tilde = s_tilde if isinstance(s_tilde, Tensor) else tape.constant(s_tilde)
    gamma_col = gamma_col if isinstance(gamma_col, Tensor) else tape.constant(gamma_col)
    n = s_tilde.value.shape[0]
    x = ad.hstack([s_tilde, ad.tile_rows(q_tilde, n), gamma_col])
    h = ffnn(x, bound.ffnn_qs, drop)
    return h, linear(h, bound.linear_qs)


def level1_span_context(tape: Tape, s_avg, ctx_left, ctx_right, gamma_col,
                        bound: CascadeParams,
                        drop: DropoutState | None = None):
    """Span+context submodel: hidden states and scores for all spans."""
    to_t = lambda x: x if isinstance(x, Tensor) else tape.constant(x)
    x = ad.hstack([to_t(s_avg), to_t(ctx_left), to_t(ctx_right), to_t(gamma_col)])
    h = ffnn(x, bound.ffnn_c, drop)
    return h, linear(h, bound.linear_c)


def combined_level1(tape: Tape, s_tilde, q_tilde: Tensor, ctx_left, ctx_right,
                    gamma_col, bound: CascadeParams,
                    drop: DropoutState | None = None):
    """Single-net variant merging the two level-1 submodels."""
    to_t = lambda x: x if isinstance(x, Tensor) else tape.constant(x)
    s_tilde = to_t(s_tilde)
    n = s_tilde.value.shape[0]
    x = ad.hstack([s_tilde, ad.tile_rows(q_tilde, n), to_t(ctx_left),
                   to_t(ctx_right), to_t(gamma_col)])
    h = ffnn(x, bound.ffnn_comb, drop)
    return h, linear(h, bound.linear_comb)


def sentence_attention(tape: Tape, q_embed, sent_embed, bound: CascadeParams,
                       drop: DropoutState | None = None,
                       stats: ForwardStats | None = None,
                       q_projected: Tensor | None = None):
    """Attend/compare between the question and one sentence.

    Returns the sentence-aware question summary and the question-aware
    sentence summary (both hidden-width vectors). Called once per
    (question, sentence) pair and shared by every span in the sentence;
    ``q_projected`` lets callers reuse the question-side projection.
    """
    q = q_embed if isinstance(q_embed, Tensor) else tape.constant(q_embed)
    g = sent_embed if isinstance(sent_embed, Tensor) else tape.constant(sent_embed)
    if g.value.shape[0] < 1:
        raise ContractError("sentence must have at least one token")
    if stats is not None:
        stats.attention_calls += 1
    if q_projected is None:
        q_projected = ffnn(q, bound.ffnn_att1, drop)
    g_projected = ffnn(g, bound.ffnn_att1, drop)
    eta = ad.matmul(q_projected, ad.transpose(g_projected))  # (m, G)
    align_q = ad.softmax_rows(eta)       # each question token over the sentence
    align_g = ad.softmax_cols(eta)       # each sentence token over the question
    if stats is not None:
        stats.record_probs(align_q.value)
        stats.record_probs(align_g.value.T)
    q_attended = ad.matmul(align_q, g)               # (m, e)
    g_attended = ad.matmul(ad.transpose(align_g), q)  # (G, e)
    q_bar = ad.sum_rows(ffnn(ad.hstack([q, q_attended]), bound.ffnn_att2, drop))
    g_bar = ad.sum_rows(ffnn(ad.hstack([g, g_attended]), bound.ffnn_att2, drop))
    return q_bar, g_bar


def level2(tape: Tape, hidden_states: list, q_bar_rows: Tensor,
           g_bar_rows: Tensor, gamma_col, bound: CascadeParams,
           drop: DropoutState | None = None):
    """Attention-informed rescoring on top of the level-1 hidden states."""
    gamma_col = gamma_col if isinstance(gamma_col, Tensor) else tape.constant(gamma_col)
    x = ad.hstack(list(hidden_states) + [q_bar_rows, g_bar_rows, gamma_col])
    h = ffnn(x, bound.ffnn_l2, drop)
    return h, linear(h, bound.linear_l2)


def level3_aggregate(tape: Tape, h_spans: Tensor, gamma_col, span_unique,
                     n_unique: int, bound: CascadeParams,
                     drop: DropoutState | None = None):
    """Sum transformed mention vectors per unique candidate, then score.

    Mention contributions are summed in span-index order, so permuting
    the mention list of a candidate cannot change its score; duplicating
    a mention does (sum, not mean, semantics).
    """
    if n_unique < 1:
        raise ContractError("aggregation needs at least one unique candidate")
    gamma_col = gamma_col if isinstance(gamma_col, Tensor) else tape.constant(gamma_col)
    per_mention = ffnn(ad.hstack([h_spans, gamma_col]), bound.ffnn_agg, drop)
    summed = ad.segment_sum(per_mention, span_unique, n_unique)
    h = ffnn(summed, bound.ffnn_l3, drop)
    return h, linear(h, bound.linear_l3)


def forward_cascade(tape: Tape, bound: CascadeParams, enc: EncodedExample,
                    drop: DropoutState | None = None,
                    stats: ForwardStats | None = None) -> CascadeScores:
    """Run every active level over an encoded example on the tape."""
    arch = bound.arch
    S = enc.n_spans
    if S == 0:
        raise EmptyCandidateError("example has no candidate spans")
    macs_before = tape.stats.macs
    gamma_col = tape.constant(enc.gamma[:, None])
    s_avg = tape.constant(enc.span_avg)
    s_tilde = tape.constant(span_embeddings(enc.span_avg, enc.gamma))

    q_const = None
    q_tilde = None
    if arch.needs_question_nets or arch.use_level2:
        q_const = tape.constant(enc.question)
    if arch.needs_question_nets:
        q_tilde = question_vector(tape, q_const, bound, drop, stats)

    scores = CascadeScores()
    hidden_states = []
    if arch.m1_active:
        h1, scores.phi1 = level1_question_span(
            tape, s_tilde, q_tilde, gamma_col, bound, drop)
        hidden_states.append(h1)
    if arch.m2_active:
        h2, scores.phi2 = level1_span_context(
            tape, s_avg, tape.constant(enc.ctx_left),
            tape.constant(enc.ctx_right), gamma_col, bound, drop)
        hidden_states.append(h2)
    if arch.combined_level1:
        hc, scores.phi_comb = combined_level1(
            tape, s_tilde, q_tilde, tape.constant(enc.ctx_left),
            tape.constant(enc.ctx_right), gamma_col, bound, drop)
        hidden_states.append(hc)

    if arch.use_level2:
        q_projected = ffnn(q_const, bound.ffnn_att1, drop)
        q_bars, g_bars = [], []
        for s, e in enc.sentence_ranges:
            sent = tape.constant(enc.doc_embed[s:e])
            q_bar, g_bar = sentence_attention(
                tape, q_const, sent, bound, drop, stats, q_projected)
            q_bars.append(q_bar)
            g_bars.append(g_bar)
        q_bar_rows = ad.gather_rows(ad.stack_rows(q_bars), enc.span_sentence)
        g_bar_rows = ad.gather_rows(ad.stack_rows(g_bars), enc.span_sentence)
        h3, scores.phi3 = level2(
            tape, hidden_states, q_bar_rows, g_bar_rows, gamma_col, bound, drop)
        if arch.use_level3:
            _, scores.phi4 = level3_aggregate(
                tape, h3, gamma_col, enc.span_unique, enc.n_unique, bound, drop)
    if stats is not None:
        stats.macs += tape.stats.macs - macs_before
    return scores


# ---------------------------------------------------------------------------
# distributions and prediction


def distributions(scores: CascadeScores,
                  stats: ForwardStats | None = None) -> dict:
    """Softmax each active level's scores into probability vectors."""
    vals = scores.values()
    out = {}
    for level, phi in ((1, vals.phi1), (2, vals.phi2), ("1c", vals.phi_comb),
                       (3, vals.phi3), (4, vals.phi4)):
        if phi is None:
            continue
        phi = np.asarray(phi)
        if phi.size == 0:
            raise EmptyCandidateError(f"level {level} has no candidates")
        shifted = np.exp(phi - phi.max())
        p = shifted / shifted.sum()
        out[level] = p
        if stats is not None:
            stats.record_probs(p)
    return out


def _max_over_mentions(phi_spans: np.ndarray, span_unique: np.ndarray,
                       n_unique: int) -> np.ndarray:
    out = np.full(n_unique, -np.inf)
    np.fmax.at(out, span_unique, phi_spans)
    return out


def prediction_scores(scores: CascadeScores, enc: EncodedExample) -> np.ndarray:
    """Per-unique-candidate scores at the highest active level.

    With level 3 active this is its score directly; otherwise span-level
    scores map to unique candidates by max over mentions. If only the two
    level-1 submodels are active their scores are added first.
    """
    vals = scores.values()
    if vals.phi4 is not None:
        return np.asarray(vals.phi4)
    if vals.phi3 is not None:
        span_phi = np.asarray(vals.phi3)
    elif vals.phi_comb is not None:
        span_phi = np.asarray(vals.phi_comb)
    elif vals.phi1 is not None and vals.phi2 is not None:
        span_phi = np.asarray(vals.phi1) + np.asarray(vals.phi2)
    elif vals.phi1 is not None:
        span_phi = np.asarray(vals.phi1)
    elif vals.phi2 is not None:
        span_phi = np.asarray(vals.phi2)
    else:
        raise ContractError("no active scoring level")
    return _max_over_mentions(span_phi, enc.span_unique, enc.n_unique)


@dataclass
class Prediction:
    unique_id: int
    text: str
    score: float
    mention_count: int


def predict(scores: CascadeScores, enc: EncodedExample) -> Prediction | None:
    """Argmax unique candidate; ties break to the earliest candidate.

    Returns None when the example has no candidates (unanswerable).
    """
    if enc.n_unique == 0:
        return None
    u_scores = prediction_scores(scores, enc)
    best = int(np.argmax(u_scores))  # first maximum wins on exact ties
    return Prediction(
        unique_id=best,
        text=enc.unique_surfaces[best],
        score=float(u_scores[best]),
        mention_count=int(enc.mention_counts[best]),
    )


# ---------------------------------------------------------------------------
# inference forward: plain numpy, optionally fanned out over worker threads


def _ffnn_np(x: np.ndarray, p: FfnnParams) -> np.ndarray:
    h = np.maximum(x @ p.V.T + p.a, 0.0)
    return np.maximum(h @ p.U.T + p.b, 0.0)


def _linear_np(h: np.ndarray, p: LinearParams) -> np.ndarray:
    return h @ p.w + p.z


def _ffnn_macs(rows: int, in_dim: int, width: int) -> int:
    return rows * in_dim * width + rows * width * width


_MAX_CHUNK_ROWS = 8192  # bounds the working set of one span-stage chunk


def _chunks(n: int, workers: int, cap: int | None = None) -> list:
    if n == 0:
        return []
    pieces = max(1, workers)
    if cap is not None:
        pieces = max(pieces, -(-n // cap))
    step = max(1, -(-n // pieces))
    return [(i, min(n, i + step)) for i in range(0, n, step)]


def _run_chunked(fn, n: int, pool: ThreadPoolExecutor | None, workers: int,
                 cap: int | None = None):
    """Apply fn to (lo, hi) ranges and return results in chunk order."""
    ranges = _chunks(n, workers, cap)
    if pool is None or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    return list(pool.map(lambda r: fn(*r), ranges))


def score_example(params: CascadeParams, enc: EncodedExample,
                  workers: int = 1,
                  stats: ForwardStats | None = None) -> CascadeScores:
    """Inference-mode scores (no dropout, no tape).

    ``workers`` > 1 fans span rows and sentences out over a thread pool;
    parameters are shared read-only and chunk results merge in fixed
    order. Multiply-accumulate counts in ``stats`` are independent of the
    worker count.
    """
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")
    arch = params.arch
    S = enc.n_spans
    if S == 0:
        raise EmptyCandidateError("example has no candidate spans")
    if stats is None:
        stats = ForwardStats()
    w = arch.hidden_width
    e = arch.embed_dim
    m = enc.question.shape[0]
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        gamma_col = enc.gamma[:, None]
        scores = CascadeScores()
        q_tilde = None
        if arch.needs_question_nets:
            hq = _ffnn_np(enc.question, params.ffnn_q)
            delta = _linear_np(hq, params.linear_q)
            stats.macs += _ffnn_macs(m, e, w) + m * w
            shifted = np.exp(delta - delta.max())
            weights = shifted / shifted.sum()
            stats.record_probs(weights)
            q_tilde = weights @ enc.question
            stats.macs += m * e

        def span_stage(build_chunk, net, head):
            # concatenate features chunk by chunk: keeps the working set
            # small and lets chunks run on worker threads
            def run(lo, hi):
                h = _ffnn_np(build_chunk(lo, hi), net)
                return h, (None if head is None else _linear_np(h, head))

            parts = _run_chunked(run, S, pool, workers, cap=_MAX_CHUNK_ROWS)
            hidden = np.concatenate([p[0] for p in parts])
            phi = (None if head is None
                   else np.concatenate([p[1] for p in parts]))
            return hidden, phi

        hidden_states = []
        if arch.m1_active:
            def build_m1(lo, hi):
                return np.concatenate(
                    [enc.span_avg[lo:hi], gamma_col[lo:hi],
                     np.broadcast_to(q_tilde, (hi - lo, e)),
                     gamma_col[lo:hi]], axis=1)

            stats.macs += _ffnn_macs(S, 2 * e + 2, w) + S * w
            h1, scores.phi1 = span_stage(build_m1, params.ffnn_qs,
                                         params.linear_qs)
            hidden_states.append(h1)
        if arch.m2_active:
            def build_m2(lo, hi):
                return np.concatenate(
                    [enc.span_avg[lo:hi], enc.ctx_left[lo:hi],
                     enc.ctx_right[lo:hi], gamma_col[lo:hi]], axis=1)

            stats.macs += _ffnn_macs(S, 3 * e + 1, w) + S * w
            h2, scores.phi2 = span_stage(build_m2, params.ffnn_c,
                                         params.linear_c)
            hidden_states.append(h2)
        if arch.combined_level1:
            def build_comb(lo, hi):
                return np.concatenate(
                    [enc.span_avg[lo:hi], gamma_col[lo:hi],
                     np.broadcast_to(q_tilde, (hi - lo, e)),
                     enc.ctx_left[lo:hi], enc.ctx_right[lo:hi],
                     gamma_col[lo:hi]], axis=1)

            stats.macs += _ffnn_macs(S, 4 * e + 2, w) + S * w
            hc, scores.phi_comb = span_stage(build_comb, params.ffnn_comb,
                                             params.linear_comb)
            hidden_states.append(hc)

        if arch.use_level2:
            q_proj = _ffnn_np(enc.question, params.ffnn_att1)
            stats.macs += _ffnn_macs(m, e, w)
            n_sent = len(enc.sentence_ranges)
            for s, t in enc.sentence_ranges:
                G = t - s
                stats.macs += (_ffnn_macs(G, e, w) + m * w * G + m * G * e
                               + G * m * e + _ffnn_macs(m, 2 * e, w)
                               + _ffnn_macs(G, 2 * e, w))
            stats.attention_calls += n_sent
            q_bar = np.zeros((n_sent, w))
            g_bar = np.zeros((n_sent, w))
            if stats.collect_distributions:
                # audit mode: per-sentence loop so every alignment row and
                # column can be recorded individually
                for k, (s, t) in enumerate(enc.sentence_ranges):
                    sent = enc.doc_embed[s:t]
                    g_proj = _ffnn_np(sent, params.ffnn_att1)
                    eta = q_proj @ g_proj.T
                    sq = np.exp(eta - eta.max(axis=1, keepdims=True))
                    align_q = sq / sq.sum(axis=1, keepdims=True)
                    sg = np.exp(eta - eta.max(axis=0, keepdims=True))
                    align_g = sg / sg.sum(axis=0, keepdims=True)
                    stats.probability_vectors.extend(np.array(r) for r in align_q)
                    stats.probability_vectors.extend(np.array(c) for c in align_g.T)
                    q_att = align_q @ sent
                    g_att = align_g.T @ enc.question
                    qh = _ffnn_np(np.concatenate([enc.question, q_att], axis=1),
                                  params.ffnn_att2)
                    gh = _ffnn_np(np.concatenate([sent, g_att], axis=1),
                                  params.ffnn_att2)
                    q_bar[k] = qh.sum(axis=0)
                    g_bar[k] = gh.sum(axis=0)
            else:
                # group sentences by length so each group runs as batched
                # matrix work; one attend/compare per sentence either way
                groups: dict[int, list[int]] = {}
                for k, (s, t) in enumerate(enc.sentence_ranges):
                    groups.setdefault(t - s, []).append(k)
                question = enc.question
                for G, idxs in sorted(groups.items()):
                    stacked = np.stack(
                        [enc.doc_embed[s:t] for s, t in
                         (enc.sentence_ranges[k] for k in idxs)])

                    def run_group(lo, hi, stacked=stacked, G=G):
                        S = stacked[lo:hi]
                        B = hi - lo
                        gp = _ffnn_np(S.reshape(B * G, e),
                                      params.ffnn_att1).reshape(B, G, w)
                        eta_t = gp @ q_proj.T               # (B, G, m)
                        sq = np.exp(eta_t - eta_t.max(axis=1, keepdims=True))
                        align_q_t = sq / sq.sum(axis=1, keepdims=True)
                        sg = np.exp(eta_t - eta_t.max(axis=2, keepdims=True))
                        align_g_t = sg / sg.sum(axis=2, keepdims=True)
                        q_att = np.matmul(align_q_t.transpose(0, 2, 1), S)
                        g_att = np.matmul(align_g_t, question)
                        q_in = np.concatenate(
                            [np.broadcast_to(question, (B, m, e)), q_att],
                            axis=2)
                        qh = _ffnn_np(q_in.reshape(B * m, 2 * e),
                                      params.ffnn_att2).reshape(B, m, w)
                        g_in = np.concatenate([S, g_att], axis=2)
                        gh = _ffnn_np(g_in.reshape(B * G, 2 * e),
                                      params.ffnn_att2).reshape(B, G, w)
                        return qh.sum(axis=1), gh.sum(axis=1)

                    parts = _run_chunked(run_group, len(idxs), pool, workers)
                    qb = np.concatenate([p[0] for p in parts])
                    gb = np.concatenate([p[1] for p in parts])
                    q_bar[idxs] = qb
                    g_bar[idxs] = gb

            def build_l2(lo, hi):
                return np.concatenate(
                    [h[lo:hi] for h in hidden_states]
                    + [q_bar[enc.span_sentence[lo:hi]],
                       g_bar[enc.span_sentence[lo:hi]], gamma_col[lo:hi]],
                    axis=1)

            stats.macs += _ffnn_macs(S, arch.level2_in_dim, w) + S * w
            h3, scores.phi3 = span_stage(build_l2, params.ffnn_l2,
                                         params.linear_l2)

            if arch.use_level3:
                stats.macs += _ffnn_macs(S, w + 1, w)

                def run_agg(lo, hi):
                    za = _ffnn_np(
                        np.concatenate([h3[lo:hi], gamma_col[lo:hi]], axis=1),
                        params.ffnn_agg)
                    part = np.zeros((enc.n_unique, w))
                    np.add.at(part, enc.span_unique[lo:hi], za)
                    return part

                parts = _run_chunked(run_agg, S, pool, workers,
                                     cap=_MAX_CHUNK_ROWS)
                summed = parts[0]
                for p in parts[1:]:
                    summed = summed + p
                hu = _ffnn_np(summed, params.ffnn_l3)
                scores.phi4 = _linear_np(hu, params.linear_l3)
                stats.macs += _ffnn_macs(enc.n_unique, w, w) + enc.n_unique * w
        for phi in (scores.phi1, scores.phi2, scores.phi_comb, scores.phi3,
                    scores.phi4):
            if phi is not None and not np.all(np.isfinite(phi)):
                raise ContractError("non-finite score at inference")
        return scores
    finally:
        if pool is not None:
            pool.shutdown(wait=False)


# ---------------------------------------------------------------------------
# scorer plumbing for evaluation


def make_scorer(params: CascadeParams, table: EmbeddingTable,
                workers: int = 1):
    """Wrap params+table into the callable the evaluator consumes."""
    arch = params.arch

    def scorer(example: QAExample) -> ScoredExample:
        cands = build_candidates(example, arch.span_limit)
        if not cands.spans:
            return ScoredExample(example.example_id, list(example.answers),
                                 [], np.zeros(0), np.zeros(0, dtype=np.intp))
        enc = encode_example(example, cands, table, arch)
        scores = score_example(params, enc, workers=workers)
        return ScoredExample(
            example.example_id,
            list(example.answers),
            enc.unique_surfaces,
            prediction_scores(scores, enc),
            enc.mention_counts,
        )

    return scorer


# ---------------------------------------------------------------------------
# checkpoint format
#
# magic line, 8-byte little-endian header length, JSON header, then the
# tensors' float64 little-endian bytes concatenated in header order.


def save_checkpoint(path, params: CascadeParams):
    """Write a versioned checkpoint; the write is atomic (temp + rename)."""
    named = params.named_arrays()
    header = {
        "format_version": 1,
        "arch": params.arch.to_dict(),
        "seed": params.seed,
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in named
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(len(blob).to_bytes(8, "little"))
            fh.write(blob)
            for _, arr in named:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> CascadeParams:
    """Read a checkpoint; raises CheckpointError on any mismatch."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a recognized checkpoint")
        header_len = int.from_bytes(fh.read(8), "little")
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header: {exc}") from None
        if header.get("format_version") != 1:
            raise CheckpointError(
                f"{path}: unsupported format version {header.get('format_version')}"
            )
        arch = Architecture(**header["arch"])
        arrays = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated tensor {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError(f"{path}: trailing bytes after tensors")
    return CascadeParams.from_arrays(arch, int(header["seed"]), arrays)
