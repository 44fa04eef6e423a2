"""Corpora, type hierarchies, and the synthetic benchmark generator.

File formats (all versioned with a header line):

- corpus: JSON lines. First line ``{"format": "hyfet-corpus", "version": 1}``,
  then one sentence per line:
  ``{"tokens": [...], "mentions": [{"start": s, "end": e, "labels": ["/path", ...]}]}``
  with half-open token spans.
- hierarchy: text. First line ``hyfet-hierarchy 1``, then one type path per
  line (e.g. ``/person/artist``); a parent must appear before its children.
- vectors sidecar: JSON lines. First line
  ``{"format": "hyfet-vectors", "version": 1, "dim": d}``, then
  ``{"sentence": i, "mention": j, "vector": [...]}`` rows keyed by sentence
  and mention index, for corpora that ship precomputed mention embeddings.

A mention is *clean* when its gold types form a single root-to-node chain
in the hierarchy, *noisy* when the types diverge onto multiple paths —
the usual situation under distant supervision, where a knowledge base
assigns every known type of an entity regardless of sentence context.
"""

from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CORPUS_FORMAT = "hyfet-corpus"
VECTORS_FORMAT = "hyfet-vectors"
HIERARCHY_MAGIC = "hyfet-hierarchy"
FORMAT_VERSION = 1


class CorpusError(ValueError):
    """Malformed corpus/hierarchy/vector input, with file position context."""


def _fail(path, lineno: int | None, msg: str):
    where = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
    raise CorpusError(where + msg)


class TypeHierarchy:
    """Forest of slash-separated type paths; ids are assignment order."""

    def __init__(self, paths: Iterable[str]):
        self._paths: list[str] = []
        self._index: dict[str, int] = {}
        for p in paths:
            self.add(p)

    def add(self, path: str) -> int:
        if not path.startswith("/") or path.endswith("/") or "//" in path or path == "/":
            raise CorpusError(f"malformed type path {path!r}")
        if path in self._index:
            raise CorpusError(f"duplicate type path {path!r}")
        parent = path.rsplit("/", 1)[0]
        if parent and parent not in self._index:
            raise CorpusError(f"type path {path!r} appears before its parent {parent!r}")
        self._index[path] = len(self._paths)
        self._paths.append(path)
        return self._index[path]

    def __len__(self) -> int:
        return len(self._paths)

    def __contains__(self, path: str) -> bool:
        return path in self._index

    def index(self, path: str) -> int:
        try:
            return self._index[path]
        except KeyError:
            raise CorpusError(f"unknown type path {path!r}") from None

    def path(self, type_id: int) -> str:
        return self._paths[type_id]

    @property
    def paths(self) -> list[str]:
        return list(self._paths)

    def depth(self, type_id: int) -> int:
        """Number of path segments; top-level types have depth 1."""
        return self._paths[type_id].count("/")

    def parent(self, type_id: int) -> int | None:
        parent = self._paths[type_id].rsplit("/", 1)[0]
        return self._index[parent] if parent else None

    def is_ancestor(self, a: int, b: int) -> bool:
        """True when a is a proper ancestor of b."""
        return self._paths[b].startswith(self._paths[a] + "/")

    def is_chain(self, type_ids: Sequence[int]) -> bool:
        """True when the ids lie on one root-to-node path (each pair nested)."""
        ids = sorted(set(type_ids), key=self.depth)
        return all(
            self.is_ancestor(ids[i], ids[i + 1]) or ids[i] == ids[i + 1]
            for i in range(len(ids) - 1)
        )


@dataclass(frozen=True)
class MentionSpan:
    """One labeled mention inside a sentence; [start, end) token span."""

    start: int
    end: int
    labels: tuple[int, ...]


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    mentions: tuple[MentionSpan, ...]


@dataclass(frozen=True, eq=False)
class MentionRecord:
    """A mention flattened out of its sentence, ready for encoding."""

    tokens: tuple[str, ...]
    start: int
    end: int
    labels: tuple[int, ...]
    is_clean: bool
    sentence_index: int
    mention_index: int
    vector: np.ndarray | None = None

    @property
    def mention_tokens(self) -> tuple[str, ...]:
        return self.tokens[self.start : self.end]

    @property
    def left_tokens(self) -> tuple[str, ...]:
        return self.tokens[: self.start]

    @property
    def right_tokens(self) -> tuple[str, ...]:
        return self.tokens[self.end :]

    @property
    def key(self) -> tuple[int, int]:
        return (self.sentence_index, self.mention_index)


class Corpus:
    """Validated sentences plus the hierarchy they are labeled against."""

    def __init__(
        self,
        hierarchy: TypeHierarchy,
        sentences: Iterable[Sentence],
        vectors: dict[tuple[int, int], np.ndarray] | None = None,
    ):
        self.hierarchy = hierarchy
        self.sentences = tuple(sentences)
        self.vectors = dict(vectors) if vectors else None
        records = []
        for si, sent in enumerate(self.sentences):
            for mi, span in enumerate(sent.mentions):
                if not (0 <= span.start < span.end <= len(sent.tokens)):
                    raise CorpusError(
                        f"sentence {si} mention {mi}: span [{span.start}, {span.end}) "
                        f"out of range for {len(sent.tokens)} tokens"
                    )
                if not span.labels:
                    raise CorpusError(f"sentence {si} mention {mi}: empty label set")
                records.append(
                    MentionRecord(
                        tokens=sent.tokens,
                        start=span.start,
                        end=span.end,
                        labels=tuple(sorted(span.labels)),
                        is_clean=hierarchy.is_chain(span.labels),
                        sentence_index=si,
                        mention_index=mi,
                        vector=None if self.vectors is None else self.vectors.get((si, mi)),
                    )
                )
        self.records: tuple[MentionRecord, ...] = tuple(records)

    def __len__(self) -> int:
        return len(self.records)

    def word_tokens(self) -> list[str]:
        """Sorted vocabulary over all sentence tokens."""
        seen = set()
        for sent in self.sentences:
            seen.update(sent.tokens)
        return sorted(seen)

    def characters(self) -> list[str]:
        seen = set()
        for sent in self.sentences:
            for tok in sent.tokens:
                seen.update(tok)
        seen.add(" ")
        return sorted(seen)


def bifurcate(
    records: Sequence[MentionRecord], hierarchy: TypeHierarchy
) -> tuple[list[MentionRecord], list[MentionRecord]]:
    """Partition mentions into (clean, noisy) by the single-chain test."""
    clean = [r for r in records if hierarchy.is_chain(r.labels)]
    noisy = [r for r in records if not hierarchy.is_chain(r.labels)]
    return clean, noisy


# -- hierarchy I/O -----------------------------------------------------------


def save_hierarchy(hierarchy: TypeHierarchy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{HIERARCHY_MAGIC} {FORMAT_VERSION}\n")
        for p in hierarchy.paths:
            fh.write(p + "\n")


def load_hierarchy(path) -> TypeHierarchy:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(HIERARCHY_MAGIC):
        _fail(path, 1, f"expected header line starting with {HIERARCHY_MAGIC!r}")
    hierarchy = TypeHierarchy([])
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            hierarchy.add(line)
        except CorpusError as exc:
            _fail(path, lineno, str(exc))
    return hierarchy


# -- corpus I/O ---------------------------------------------------------------


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": CORPUS_FORMAT, "version": FORMAT_VERSION}) + "\n")
        for sent in corpus.sentences:
            row = {
                "tokens": list(sent.tokens),
                "mentions": [
                    {
                        "start": m.start,
                        "end": m.end,
                        "labels": [corpus.hierarchy.path(t) for t in m.labels],
                    }
                    for m in sent.mentions
                ],
            }
            fh.write(json.dumps(row) + "\n")


def load_corpus(path, hierarchy: TypeHierarchy, vectors_path=None) -> Corpus:
    """Parse and validate a corpus file against a hierarchy.

    Every malformed line is reported with its line number; unknown type
    paths and out-of-range spans are rejected.
    """
    sentences: list[Sentence] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        try:
            meta = json.loads(header) if header.strip() else {}
        except json.JSONDecodeError:
            meta = {}
        if meta.get("format") != CORPUS_FORMAT:
            _fail(path, 1, f"expected corpus header with format={CORPUS_FORMAT!r}")
        if meta.get("version") != FORMAT_VERSION:
            _fail(path, 1, f"unsupported corpus version {meta.get('version')!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                _fail(path, lineno, f"invalid JSON: {exc.msg}")
            try:
                tokens = tuple(str(t) for t in row["tokens"])
                raw_mentions = row["mentions"]
            except (KeyError, TypeError):
                _fail(path, lineno, "sentence rows need 'tokens' and 'mentions' fields")
            mentions = []
            for m in raw_mentions:
                try:
                    start, end = int(m["start"]), int(m["end"])
                    labels = tuple(hierarchy.index(str(p)) for p in m["labels"])
                except CorpusError as exc:
                    _fail(path, lineno, str(exc))
                except (KeyError, TypeError, ValueError):
                    _fail(path, lineno, "mentions need integer 'start'/'end' and a 'labels' list")
                if not (0 <= start < end <= len(tokens)):
                    _fail(path, lineno, f"span [{start}, {end}) out of range for {len(tokens)} tokens")
                if not labels:
                    _fail(path, lineno, "mention has an empty label set")
                mentions.append(MentionSpan(start, end, labels))
            sentences.append(Sentence(tokens, tuple(mentions)))
    vectors = load_vectors(vectors_path) if vectors_path else None
    return Corpus(hierarchy, sentences, vectors)


def save_vectors(vectors: dict[tuple[int, int], np.ndarray], path) -> None:
    dims = {v.size for v in vectors.values()}
    if len(dims) > 1:
        raise CorpusError(f"inconsistent vector dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"format": VECTORS_FORMAT, "version": FORMAT_VERSION, "dim": dim}) + "\n"
        )
        for (si, mi) in sorted(vectors):
            row = {"sentence": si, "mention": mi, "vector": [float(x) for x in vectors[(si, mi)]]}
            fh.write(json.dumps(row) + "\n")


def load_vectors(path) -> dict[tuple[int, int], np.ndarray]:
    out: dict[tuple[int, int], np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        try:
            meta = json.loads(header) if header.strip() else {}
        except json.JSONDecodeError:
            meta = {}
        if meta.get("format") != VECTORS_FORMAT:
            _fail(path, 1, f"expected vectors header with format={VECTORS_FORMAT!r}")
        dim = int(meta.get("dim", 0))
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                key = (int(row["sentence"]), int(row["mention"]))
                vec = np.array([float(x) for x in row["vector"]])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                _fail(path, lineno, "vector rows need 'sentence', 'mention', 'vector'")
            if vec.size != dim:
                _fail(path, lineno, f"vector dimension {vec.size} != header dim {dim}")
            if key in out:
                _fail(path, lineno, f"duplicate vector for mention {key}")
            out[key] = vec
    return out


# -- deterministic source vectors ---------------------------------------------


@functools.lru_cache(maxsize=65536)
def _token_vector(token: str, dim: int) -> np.ndarray:
    """A fixed pseudo-random direction per token, derived from its hash."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.standard_normal(dim)


def derive_mention_vectors(corpus: Corpus, dim: int = 64) -> np.ndarray:
    """Bag-of-tokens mention embeddings, deterministic across processes.

    Each mention's vector is the normalized sum of its sentence's token
    vectors plus its own mention tokens (counted once more, so the surface
    form gets extra weight). Stands in for pretrained contextual
    embeddings when a corpus ships no vector sidecar.
    """
    out = np.zeros((len(corpus.records), dim))
    for i, rec in enumerate(corpus.records):
        acc = np.zeros(dim)
        for tok in rec.tokens:
            acc += _token_vector(tok, dim)
        for tok in rec.mention_tokens:
            acc += _token_vector(tok, dim)
        norm = np.linalg.norm(acc)
        out[i] = acc / norm if norm > 0 else acc
    return out


def source_vectors(corpus: Corpus, dim: int = 64) -> np.ndarray:
    """Per-record source vectors: the sidecar when present, else derived."""
    if corpus.vectors is not None:
        missing = [r.key for r in corpus.records if r.vector is None]
        if missing:
            raise CorpusError(f"vector sidecar is missing entries for mentions {missing[:5]}")
        return np.stack([r.vector for r in corpus.records])
    return derive_mention_vectors(corpus, dim)


# -- synthetic benchmark corpus ------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Shape of the generated corpus.

    The hierarchy is a uniform tree: `branching` top-level types, each
    splitting `branching` ways down to `depth` levels. Every type owns a
    few specific context tokens, and a node's effective vocabulary is the
    union of its ancestors' tokens with its own — so sibling leaves share
    most of their vocabulary and are the hardest pair to tell apart.
    """

    depth: int = 3
    branching: int = 2
    n_mentions: int = 2000
    noise_rate: float = 0.3
    seed: int = 0
    tokens_per_type: int = 6
    names_per_leaf: int = 5
    shared_names_per_branch: int = 2
    ambiguous_rate: float = 0.25
    min_side: int = 2
    max_side: int = 6

    def __post_init__(self):
        if not (0.0 <= self.noise_rate < 1.0):
            raise CorpusError(f"noise rate must lie in [0, 1), got {self.noise_rate}")
        if self.depth < 1 or self.branching < 2:
            raise CorpusError("synthetic hierarchy needs depth >= 1 and branching >= 2")


def synth_hierarchy(depth: int, branching: int) -> TypeHierarchy:
    """The uniform tree: segment names encode their position, e.g. /n1/n10."""
    hierarchy = TypeHierarchy([])
    frontier = [f"/n{i}" for i in range(branching)]
    for p in frontier:
        hierarchy.add(p)
    for _ in range(depth - 1):
        nxt = []
        for p in frontier:
            seg = p.rsplit("/", 1)[1]
            for j in range(branching):
                child = f"{p}/{seg}{j}"
                hierarchy.add(child)
                nxt.append(child)
        frontier = nxt
    return hierarchy


def _type_tokens(path: str, count: int) -> list[str]:
    seg = path.rsplit("/", 1)[1]
    return [f"{seg}_tok{k}" for k in range(count)]


def _leaf_names(path: str, spec: SynthSpec) -> list[str]:
    """Surface-form pool: leaf-specific names plus branch-shared homonyms."""
    seg = path.rsplit("/", 1)[1]
    parent_seg = path.rsplit("/", 2)[1]
    names = [f"{seg}_name{k}" for k in range(spec.names_per_leaf)]
    names += [f"{parent_seg}_shared{k}" for k in range(spec.shared_names_per_branch)]
    return names


def synth_corpus(spec: SynthSpec) -> Corpus:
    """Generate a distantly-supervised corpus over the uniform hierarchy.

    Each mention's true label set is the full root-to-leaf chain (clean).
    With probability `noise_rate` one stray label from a divergent path is
    added — a sibling leaf (60%), the sibling of the mention's mid-level
    type (30%), or a type from a different top-level branch (10%) — which
    makes the mention noisy under the chain test. With probability
    `ambiguous_rate` the context draws only on ancestor vocabulary, so the
    sentence alone cannot separate the leaf from its sibling.
    """
    hierarchy = synth_hierarchy(spec.depth, spec.branching)
    rng = np.random.default_rng(spec.seed)

    leaves = [i for i in range(len(hierarchy)) if hierarchy.depth(i) == spec.depth]
    chains = {}
    for leaf in leaves:
        chain = [leaf]
        node = leaf
        while (node := hierarchy.parent(node)) is not None:
            chain.append(node)
        chains[leaf] = list(reversed(chain))  # root ... leaf

    ancestor_vocab = {
        leaf: [t for node in chains[leaf][:-1] for t in _type_tokens(hierarchy.path(node), spec.tokens_per_type)]
        for leaf in leaves
    }
    leaf_vocab = {
        leaf: _type_tokens(hierarchy.path(leaf), spec.tokens_per_type) for leaf in leaves
    }
    name_pool = {leaf: _leaf_names(hierarchy.path(leaf), spec) for leaf in leaves}

    def siblings(node: int) -> list[int]:
        parent = hierarchy.parent(node)
        return [
            j
            for j in range(len(hierarchy))
            if j != node
            and hierarchy.parent(j) == parent
            and hierarchy.depth(j) == hierarchy.depth(node)
        ]

    def sample_context(leaf: int, n: int, ambiguous: bool) -> list[str]:
        pool = ancestor_vocab[leaf] if ambiguous else ancestor_vocab[leaf] + leaf_vocab[leaf]
        out = [pool[rng.integers(len(pool))] for _ in range(n)]
        if not ambiguous:  # anchor at least two leaf-specific tokens
            for slot in rng.choice(n, size=min(2, n), replace=False):
                out[slot] = leaf_vocab[leaf][rng.integers(len(leaf_vocab[leaf]))]
        return out

    sentences = []
    for _ in range(spec.n_mentions):
        leaf = leaves[rng.integers(len(leaves))]
        chain = chains[leaf]
        name = name_pool[leaf][rng.integers(len(name_pool[leaf]))]
        mention = [name, name + "jr"] if rng.random() < 0.15 else [name]
        ambiguous = rng.random() < spec.ambiguous_rate
        left = sample_context(leaf, int(rng.integers(spec.min_side, spec.max_side + 1)), ambiguous)
        right = sample_context(leaf, int(rng.integers(spec.min_side, spec.max_side + 1)), ambiguous)
        labels = list(chain)
        if rng.random() < spec.noise_rate:
            roll = rng.random()
            if roll < 0.6:
                stray_pool = siblings(leaf)
            elif roll < 0.9:
                stray_pool = siblings(chain[-2]) if len(chain) >= 2 else siblings(leaf)
            else:
                other = [
                    j
                    for j in range(len(hierarchy))
                    if hierarchy.path(j).split("/")[1] != hierarchy.path(chain[0]).split("/")[1]
                ]
                stray_pool = other
            stray = int(stray_pool[rng.integers(len(stray_pool))])
            if stray not in labels:
                labels.append(stray)
        tokens = tuple(left + mention + right)
        span = MentionSpan(len(left), len(left) + len(mention), tuple(labels))
        sentences.append(Sentence(tokens, (span,)))
    return Corpus(hierarchy, sentences)
