"""Reference-free evaluation of weighted vs. unweighted context summaries.

QAG: questions with true answers come from the scope's top rank-ordered
members; each summary answers them; a judge gives pre-triage verdicts and an
embedding-similarity threshold gives post-triage verdicts, computed from
scratch. The {-1, 0, +1} encoding compares the two post-triage counts.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .backends import (
    Backend,
    BackendError,
    GenerationRequest,
    cosine,
    parse_geval,
    parse_qa_pairs,
    parse_verdict,
)
from .corpus import DataPoint
from .hierarchy import HierarchyAssignment
from .snr import SnrScore, rank_order
from .sos import UNWEIGHTED, WEIGHTED, ContextSummary
from .text import tokenize

GEVAL_DIMENSIONS = ("coherence", "fluency", "relevance", "consistency")
MAX_QUESTIONS = 5

CONSISTENCY_NOTE = (
    "consistency is scored like the other dimensions; published reference runs "
    "report a constant 0.5 for it, so it is not comparable across sources"
)


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class GEvalScores:
    coherence: float
    fluency: float
    relevance: float
    consistency: float

    def __post_init__(self) -> None:
        for name in GEVAL_DIMENSIONS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0 or round(v, 1) != v:
                raise EvalError(f"{name}={v} is not on the 0.1 grid in [0, 1]")

    @classmethod
    def from_raw(cls, raw: Mapping[str, float]) -> GEvalScores:
        return cls(**{k: round(min(1.0, max(0.0, float(raw[k]))), 1) for k in GEVAL_DIMENSIONS})

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in GEVAL_DIMENSIONS}


@dataclass
class QagUnit:
    level: str
    id: int
    questions: list[str]
    true_answers: list[str]
    extracted: dict[str, list[str]]
    pre_triage: dict[str, int]
    post_triage: dict[str, int]
    encoding: int
    geval: dict[str, GEvalScores] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.questions) != len(self.true_answers):
            raise EvalError("questions and true answers must align")
        if not 1 <= len(self.questions) <= MAX_QUESTIONS:
            raise EvalError(f"{len(self.questions)} questions; expected 1..{MAX_QUESTIONS}")

    def to_dict(self) -> dict:
        return {
            "scope": {"level": self.level, "id": self.id},
            "questions": self.questions,
            "true_answers": self.true_answers,
            "extracted_weighted": self.extracted[WEIGHTED],
            "extracted_unweighted": self.extracted[UNWEIGHTED],
            "pre_triage": self.pre_triage,
            "post_triage": self.post_triage,
            "encoding": self.encoding,
            "geval_weighted": self.geval[WEIGHTED].to_dict() if WEIGHTED in self.geval else None,
            "geval_unweighted": self.geval[UNWEIGHTED].to_dict() if UNWEIGHTED in self.geval else None,
        }


def generate_questions(
    source: Sequence[str], backend: Backend, n: int = MAX_QUESTIONS, seed: int = 0
) -> tuple[list[str], list[str]]:
    if not source:
        raise EvalError("question generation needs a non-empty source")
    n = min(n, MAX_QUESTIONS)
    raw = backend.generate(GenerationRequest("gen_questions", tuple(source), {"n": n}, seed))
    pairs = parse_qa_pairs(raw)[:n]
    return [q for q, _ in pairs], [a for _, a in pairs]


def extract_answers(summary: str, questions: Sequence[str], backend: Backend, seed: int = 0) -> list[str]:
    requests = [GenerationRequest("extract_answer", (q, summary), {}, seed) for q in questions]
    return [r.strip() for r in backend.generate_many(requests)]


def score_pre_triage(
    true_answers: Sequence[str], extracted: Sequence[str], backend: Backend, seed: int = 0
) -> int:
    if len(true_answers) != len(extracted):
        raise EvalError("answer sequences must align")
    requests = [GenerationRequest("judge", (t, e), {}, seed) for t, e in zip(true_answers, extracted)]
    return sum(parse_verdict(r) for r in backend.generate_many(requests))


def triage(
    true_answers: Sequence[str], extracted: Sequence[str], backend: Backend, theta: float = 0.7
) -> int:
    """Count pairs whose answer embeddings reach cosine ``theta``; identical texts always pass."""
    if len(true_answers) != len(extracted):
        raise EvalError("answer sequences must align")
    if not 0.0 < theta <= 1.0:
        raise EvalError("theta must lie in (0, 1]")
    if not true_answers:
        return 0
    vecs = backend.embed(list(true_answers) + list(extracted))
    n = len(true_answers)
    correct = 0
    for i, (t, e) in enumerate(zip(true_answers, extracted)):
        if tokenize(t) == tokenize(e) or cosine(vecs[i], vecs[n + i]) >= theta:
            correct += 1
    return correct


def encode_comparison(weighted_post: int, unweighted_post: int) -> int:
    return (weighted_post > unweighted_post) - (weighted_post < unweighted_post)


def geval(summary: str, source: str, backend: Backend, seed: int = 0) -> GEvalScores:
    if not source.strip():
        raise EvalError("G-Eval needs a non-empty source")
    raw = backend.generate(GenerationRequest("geval", (summary, source), {}, seed))
    return GEvalScores.from_raw(parse_geval(raw))


def aggregate_wins(encodings: Sequence[int]) -> float:
    """Percentage of units where the weighted summary is as good or better."""
    if not encodings:
        raise EvalError("no units to aggregate")
    return 100.0 * sum(1 for e in encodings if e >= 0) / len(encodings)


def evaluate_scope(
    level: str,
    node_id: int,
    source: Sequence[str],
    summaries: Mapping[str, ContextSummary],
    backend: Backend,
    theta: float = 0.7,
    n: int = MAX_QUESTIONS,
    seed: int = 0,
) -> QagUnit:
    try:
        questions, truths = generate_questions(source, backend, n, seed)
        extracted, pre, post, scores = {}, {}, {}, {}
        joined = " ".join(source)
        for mode in (WEIGHTED, UNWEIGHTED):
            body = summaries[mode].body
            extracted[mode] = extract_answers(body, questions, backend, seed)
            pre[mode] = score_pre_triage(truths, extracted[mode], backend, seed)
            post[mode] = triage(truths, extracted[mode], backend, theta)
            scores[mode] = geval(body, joined, backend, seed)
    except BackendError as exc:
        raise BackendError(f"{level} {node_id}: {exc}", retryable=exc.retryable, attempts=exc.attempts) from exc
    return QagUnit(
        level,
        node_id,
        questions,
        truths,
        extracted,
        pre,
        post,
        encode_comparison(post[WEIGHTED], post[UNWEIGHTED]),
        scores,
    )


def evaluate_all(
    points: Mapping[str, DataPoint],
    assignments: Sequence[HierarchyAssignment],
    scores: Mapping[str, SnrScore],
    trees: Mapping[str, Mapping[tuple[str, int], ContextSummary]],
    backend: Backend,
    theta: float = 0.7,
    n: int = MAX_QUESTIONS,
    seed: int = 0,
) -> tuple[list[QagUnit], dict]:
    """Evaluate every story and theme; both modes face the same questions."""
    members: dict[tuple[str, int], list[str]] = defaultdict(list)
    for a in assignments:
        if a.irrelevant:
            continue
        members[("story", a.story_id)].append(a.point_id)
        members[("theme", a.theme_id)].append(a.point_id)
    units = []
    for level in ("story", "theme"):
        for node in sorted(i for lv, i in members if lv == level):
            top = rank_order(members[(level, node)], scores)[:MAX_QUESTIONS]
            source = [points[p].text for p in top]
            pair = {mode: trees[mode][(level, node)] for mode in (WEIGHTED, UNWEIGHTED)}
            units.append(evaluate_scope(level, node, source, pair, backend, theta, n, seed))
    return units, aggregate_report(units)


def aggregate_report(units: Sequence[QagUnit]) -> dict:
    out: dict = {}
    for level, key in (("story", "stories_pct"), ("theme", "themes_pct")):
        enc = [u.encoding for u in units if u.level == level]
        out[key] = aggregate_wins(enc) if enc else None
        out[f"{level}_units"] = len(enc)
    out["consistency_note"] = CONSISTENCY_NOTE
    return out
