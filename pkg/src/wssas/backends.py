"""Generative and embedding backends.

Two implementations share one surface: ``StubBackend`` is fully deterministic
and offline, ``HttpBackend`` talks to OpenAI-compatible chat and embedding
endpoints. Every pipeline stage goes through ``embed`` and ``generate`` only.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from collections import Counter
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .text import content_tokens, default_stopwords, first_sentence, ranked_terms, sentences, tokenize

log = logging.getLogger(__name__)

TEMPLATE_IDS = frozenset(
    {"summarize", "gen_questions", "extract_answer", "judge", "geval", "topics", "title"}
)
API_KEY_ENV = "WSSAS_API_KEY"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class BackendError(RuntimeError):
    """A backend call failed. ``retryable`` marks transport/rate-limit failures."""

    def __init__(self, message: str, *, retryable: bool = False, attempts: int = 1):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


class BackendConfigError(BackendError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    template_id: str
    inputs: tuple[str, ...] = ()
    params: Mapping[str, object] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.template_id not in TEMPLATE_IDS:
            raise ValueError(f"unknown template_id {self.template_id!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector is all-zero."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = float(np.dot(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, c))


class Backend:
    """Common surface. Subclasses implement ``embed`` and ``generate``."""

    dimension: int
    max_inflight: int = 1

    def embed(self, texts: Sequence[str]) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def generate(self, request: GenerationRequest) -> str:  # pragma: no cover - interface
        raise NotImplementedError

    def generate_many(self, requests: Sequence[GenerationRequest]) -> list[str]:
        """Run requests with bounded parallelism; results keep request order."""
        if self.max_inflight <= 1 or len(requests) <= 1:
            return [self.generate(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            return list(pool.map(self.generate, requests))


class StubBackend(Backend):
    """Deterministic hashed bag-of-tokens embedder plus rule-based generator."""

    def __init__(self, dimension: int = 256, stopwords: frozenset[str] | None = None):
        if dimension < 1:
            raise BackendConfigError("dimension must be positive")
        self.dimension = dimension
        self.stopwords = default_stopwords() if stopwords is None else frozenset(stopwords)

    # embeddings

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        for token, count in sorted(Counter(content_tokens(text, self.stopwords)).items()):
            vec[fnv1a_64(token.encode("utf-8")) % self.dimension] += count
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if len(texts) == 0:
            raise ValueError("embed requires at least one text")
        return np.vstack([self.embed_one(t) for t in texts])

    # generation

    def generate(self, request: GenerationRequest) -> str:
        handler = getattr(self, f"_gen_{request.template_id}")
        return handler(request)

    def _tokens(self, text: str) -> list[str]:
        return content_tokens(text, self.stopwords)

    def _gen_summarize(self, req: GenerationRequest) -> str:
        tokens = [t for text in req.inputs for t in self._tokens(text)]
        title = " ".join(term for term, _ in ranked_terms(tokens)[:3])
        firsts = [first_sentence(text) for text in req.inputs[:5]]
        body = " ".join(s for s in firsts if s)[:400]
        return f"{title}\n{body}"

    def _gen_gen_questions(self, req: GenerationRequest) -> str:
        n = min(int(req.params.get("n", 5)), 5)
        pairs = []
        for i, text in enumerate(req.inputs[:n], start=1):
            ranked = ranked_terms(self._tokens(text)) or ranked_terms(tokenize(text))
            topic = ranked[0][0] if ranked else "it"
            pairs.append(
                {"question": f"What does record {i} state about {topic}?", "answer": first_sentence(text)}
            )
        return json.dumps(pairs, ensure_ascii=False)

    def _gen_extract_answer(self, req: GenerationRequest) -> str:
        question, summary = req.inputs[0], req.inputs[1] if len(req.inputs) > 1 else ""
        candidates = sentences(summary)
        if not candidates:
            return ""
        q = self.embed_one(question)
        best, best_cos = candidates[0], -2.0
        for sent in candidates:
            c = cosine(q, self.embed_one(sent))
            if c > best_cos:
                best, best_cos = sent, c
        return best

    def _gen_judge(self, req: GenerationRequest) -> str:
        truth, extracted = req.inputs[0], req.inputs[1]
        return "correct" if judge_match(truth, extracted) else "incorrect"

    def _gen_geval(self, req: GenerationRequest) -> str:
        summary, source = req.inputs[0], req.inputs[1]
        sim = round(max(0.0, cosine(self.embed_one(summary), self.embed_one(source))), 1)
        fluency = 1.0 if summary.strip() else 0.0
        return json.dumps(
            {"coherence": sim, "fluency": fluency, "relevance": sim, "consistency": sim}
        )

    def _gen_topics(self, req: GenerationRequest) -> str:
        text = req.inputs[0]
        tokens = self._tokens(text) or tokenize(text) or ["unknown"]
        ranked = [term for term, _ in ranked_terms(tokens)]
        if len(req.inputs) > 1 and req.inputs[1]:
            ctx = set(self._tokens(req.inputs[1]))
            shared = [t for t in ranked if t in ctx]
            if shared:
                ranked = shared + [t for t in ranked if t not in ctx]
        secondary = ranked[1] if len(ranked) > 1 else None
        return json.dumps({"primary": ranked[0], "secondary": secondary})

    def _gen_title(self, req: GenerationRequest) -> str:
        tokens = [t for text in req.inputs for t in self._tokens(text)]
        if not tokens:
            tokens = [t for text in req.inputs for t in tokenize(text)]
        ranked = ranked_terms(tokens)
        return ranked[0][0] if ranked else "untitled"


def judge_match(truth: str, extracted: str) -> bool:
    """Normalized exact match, or token Jaccard of at least 0.5."""
    a, b = tokenize(truth), tokenize(extracted)
    if a == b:
        return True
    sa, sb = set(a), set(b)
    union = sa | sb
    return bool(union) and len(sa & sb) / len(union) >= 0.5


# HTTP backend


class _Blank(dict):
    def __missing__(self, key):
        return ""


def load_template(template_id: str) -> str:
    path = resources.files("wssas") / "prompts" / f"{template_id}.txt"
    return path.read_text(encoding="utf-8")


def render_prompt(request: GenerationRequest) -> str:
    values = _Blank({k: v for k, v in request.params.items()})
    values["inputs"] = "\n\n".join(f"[{i + 1}] {t}" for i, t in enumerate(request.inputs))
    for i, text in enumerate(request.inputs):
        values[f"input_{i}"] = text
    if request.template_id == "topics":
        ctx = request.inputs[1] if len(request.inputs) > 1 else ""
        values["input_1"] = ""
        values["context_block"] = f"\nUse this context summary to guide the topics:\n{ctx}\n" if ctx else ""
    return load_template(request.template_id).format_map(values)


class HttpBackend(Backend):
    def __init__(
        self,
        base_url: str,
        gen_model: str,
        embed_model: str,
        dimension: int,
        *,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_retries: int = 5,
        max_inflight: int = 4,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        batch_size: int = 64,
        client=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        import httpx

        if not base_url:
            raise BackendConfigError("backend.base_url is required for the http backend")
        self.base_url = base_url.rstrip("/")
        self.gen_model = gen_model
        self.embed_model = embed_model
        self.dimension = dimension
        self.max_retries = max_retries
        self.max_inflight = max(1, max_inflight)
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.batch_size = batch_size
        self._sleep = sleep
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)
        if client is not None and key:
            self._client.headers.update(headers)
        self._httpx = httpx

    def _post(self, path: str, payload: dict) -> dict:
        attempts = 0
        while True:
            attempts += 1
            try:
                resp = self._client.post(f"{self.base_url}{path}", json=payload)
            except self._httpx.TransportError as exc:
                err = BackendError(f"transport failure: {exc}", retryable=True, attempts=attempts)
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    err = BackendError(
                        f"HTTP {resp.status_code} from {path}", retryable=True, attempts=attempts
                    )
                elif resp.status_code >= 400:
                    raise BackendError(f"HTTP {resp.status_code} from {path}: {resp.text[:200]}", attempts=attempts)
                else:
                    try:
                        return resp.json()
                    except ValueError:
                        raise BackendError(f"non-JSON response from {path}", attempts=attempts) from None
            if attempts > self.max_retries:
                raise err
            delay = min(self.backoff_cap, self.backoff_base * 2 ** (attempts - 1))
            log.warning("%s; retrying in %.2fs (attempt %d)", err, delay, attempts)
            self._sleep(delay)

    def generate(self, request: GenerationRequest) -> str:
        payload = {
            "model": self.gen_model,
            "messages": [{"role": "user", "content": render_prompt(request)}],
            "temperature": 0,
            "seed": request.seed,
        }
        data = self._post("/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {exc!r}") from None

    def _embed_batch(self, batch: Sequence[str]) -> np.ndarray:
        data = self._post("/embeddings", {"model": self.embed_model, "input": list(batch)})
        try:
            rows = sorted(data["data"], key=lambda d: d.get("index", 0))
            out = np.asarray([r["embedding"] for r in rows], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed embedding response: {exc!r}") from None
        if out.ndim != 2 or out.shape[0] != len(batch):
            raise BackendError("embedding response does not match request size")
        if out.shape[1] != self.dimension:
            raise BackendConfigError(
                f"remote embedding dimension {out.shape[1]} != configured {self.dimension}"
            )
        return out

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if len(texts) == 0:
            raise ValueError("embed requires at least one text")
        batches = [texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        if self.max_inflight > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
                parts = list(pool.map(self._embed_batch, batches))
        else:
            parts = [self._embed_batch(b) for b in batches]
        return np.vstack(parts)


# wire-format parsing shared by both backends

_FENCE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$")


def _json_payload(text: str):
    cleaned = _FENCE.sub("", text.strip())
    try:
        return json.loads(cleaned)
    except json.JSONDecodeError as exc:
        raise BackendError(f"backend output is not valid JSON: {text[:120]!r}") from exc


def parse_summary(text: str) -> tuple[str, str]:
    title, _, body = text.strip("\n").partition("\n")
    return title.strip().strip("*#").strip(), body.strip()


def parse_qa_pairs(text: str) -> list[tuple[str, str]]:
    data = _json_payload(text)
    if not isinstance(data, list):
        raise BackendError("question output must be a JSON array")
    try:
        return [(str(d["question"]), str(d.get("answer", ""))) for d in data]
    except (KeyError, TypeError, AttributeError) as exc:
        raise BackendError(f"malformed question entry: {exc!r}") from None


def parse_verdict(text: str) -> bool:
    word = text.strip().lower().split()
    return bool(word) and word[0].strip(".") == "correct"


def parse_geval(text: str) -> dict[str, float]:
    data = _json_payload(text)
    try:
        return {k: float(data[k]) for k in ("coherence", "fluency", "relevance", "consistency")}
    except (KeyError, TypeError, ValueError) as exc:
        raise BackendError(f"malformed G-Eval output: {exc!r}") from None


def parse_topics(text: str) -> tuple[str, str | None]:
    data = _json_payload(text)
    if not isinstance(data, dict):
        raise BackendError("topic output must be a JSON object")
    primary = str(data.get("primary") or "").strip()
    secondary = data.get("secondary")
    secondary = str(secondary).strip() if secondary else None
    if not primary:
        raise BackendError("topic output has an empty primary topic")
    if secondary == primary or secondary == "":
        secondary = None
    return primary, secondary


def make_backend(cfg, stopwords: frozenset[str] | None = None) -> Backend:
    """Build a backend from a ``BackendConfig``-like object."""
    if cfg.kind == "stub":
        return StubBackend(cfg.dimension, stopwords)
    if cfg.kind == "http":
        return HttpBackend(
            cfg.base_url,
            cfg.gen_model,
            cfg.embed_model,
            cfg.dimension,
            timeout=cfg.timeout,
            max_retries=cfg.max_retries,
            max_inflight=cfg.max_inflight,
        )
    raise BackendConfigError(f"unknown backend kind {cfg.kind!r}")
