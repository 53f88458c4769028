"""Seeded synthetic review corpora with planted structure, for tests and demos."""

from __future__ import annotations

import random
from datetime import date, timedelta

from .corpus import Corpus, DataPoint

THEME_WORDS = {
    "food": ["pasta", "pizza", "sauce", "cheese", "bread", "salad", "dessert", "noodles", "burger", "fries", "soup", "steak"],
    "service": ["waiter", "staff", "manager", "rude", "friendly", "slow", "attentive", "host", "server", "tip", "smile", "greeting"],
    "parking": ["parking", "garage", "lot", "meter", "valet", "street", "spaces", "ticket", "curb", "driveway", "tow", "permit"],
    "booking": ["reservation", "booking", "table", "online", "phone", "confirmed", "cancelled", "waitlist", "deposit", "slot", "calendar", "email"],
}

FILLER = ["the", "was", "and", "it", "very", "a", "of", "to", "in", "with", "this", "our"]
NOISE_TEMPLATES = [
    "It was the same.",
    "And so it was.",
    "This is what it is.",
    "We were there and then we were not.",
    "It is what it was.",
    "They did it all over again.",
    "Is it? It is.",
    "So what about it then.",
    "All of this and more.",
    "It was to be.",
]


def _date(rng: random.Random, start: date, days: int) -> date:
    return start + timedelta(days=rng.randrange(days))


def planted_theme_corpus(
    n_themes: int = 3, per_theme: int = 20, n_noise: int = 10, seed: int = 0, words_per_doc: int = 6
) -> tuple[Corpus, dict[str, str | None]]:
    """Themed documents over disjoint vocabularies plus stopword-only noise.

    Returns the corpus and the planted theme of every point (None for noise).
    """
    rng = random.Random(seed)
    names = list(THEME_WORDS)[:n_themes]
    points, planted = [], {}
    start = date(2020, 1, 1)
    i = 0
    for name in names:
        vocab = THEME_WORDS[name][:8]
        for _ in range(per_theme):
            words = rng.sample(vocab, words_per_doc)
            text = f"The {words[0]} was {words[1]} and {' '.join(words[2:4])}. It had {' '.join(words[4:])}."
            pid = f"p{i:04d}"
            points.append(DataPoint(pid, text, f"e{i % 7}", _date(rng, start, 730)))
            planted[pid] = name
            i += 1
    for j in range(n_noise):
        pid = f"p{i:04d}"
        points.append(DataPoint(pid, NOISE_TEMPLATES[j % len(NOISE_TEMPLATES)], f"e{i % 7}", _date(rng, start, 730)))
        planted[pid] = None
        i += 1
    return Corpus(tuple(sorted(points, key=lambda p: p.id))), planted


_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_words(rng: random.Random, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(3))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def pipeline_corpus(
    n_points: int = 200,
    seed: int = 0,
    n_noise: int | None = None,
    stories_per_theme: int = 2,
    clusters_per_story: int = 4,
) -> Corpus:
    """Three themes, each with stories of several clusters, plus stopword-only noise.

    Each document carries its theme's 3 core words, its story's 3 words and
    its cluster's 3 words, one of which (the focus) is repeated. Under the
    stub embedder this puts same-cluster documents above cosine 0.9,
    same-story cluster centroids near 0.67 and same-theme story centroids
    near 0.44, which the default thresholds separate cleanly.
    """
    rng = random.Random(seed)
    n_noise = max(1, n_points // 20) if n_noise is None else n_noise
    taken = {w for words in THEME_WORDS.values() for w in words}
    leaves = []
    for name in list(THEME_WORDS)[:3]:
        vocab = THEME_WORDS[name]
        theme_core = vocab[:3]
        for s in range(stories_per_theme):
            story_core = vocab[3 + 3 * s : 6 + 3 * s] if 6 + 3 * s <= len(vocab) else _pseudo_words(rng, 3, taken)
            for _ in range(clusters_per_story):
                leaves.append((theme_core, story_core, _pseudo_words(rng, 3, taken)))
    points = []
    start = date(2019, 1, 1)
    n_themed = n_points - n_noise
    for i in range(n_themed):
        theme_core, story_core, cluster_core = leaves[rng.randrange(len(leaves))]
        focus = rng.choice(cluster_core)
        words = theme_core + story_core + cluster_core + [focus]
        rng.shuffle(words)
        filler = rng.sample(FILLER, 3)
        text = f"{filler[0].capitalize()} {' '.join(words[:5])} {filler[1]}. {' '.join(words[5:])} {filler[2]}!"
        points.append(
            DataPoint(f"r{i:05d}", text, f"biz{rng.randrange(12):02d}", _date(rng, start, 1095), rng.randint(1, 5))
        )
    for j in range(n_noise):
        i = n_themed + j
        points.append(
            DataPoint(
                f"r{i:05d}",
                NOISE_TEMPLATES[j % len(NOISE_TEMPLATES)],
                f"biz{rng.randrange(12):02d}",
                _date(rng, start, 1095),
            )
        )
    return Corpus(tuple(sorted(points, key=lambda p: p.id)))
