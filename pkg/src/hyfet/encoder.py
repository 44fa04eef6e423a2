"""Stage-I mention encoding: character, context, and position LSTMs.

Each entity mention is encoded as the concatenation of five recurrent
summaries of its surface form and surroundings:

    x_m = [left positions; left context; mention chars; right context;
           right positions]

- mention chars: a unidirectional LSTM over the character sequence of the
  mention tokens (joined with spaces), final hidden state, size e;
- left/right context: two independent Bi-LSTMs over word embeddings of
  up to `window` tokens on each side, each contributing the concatenation
  [backward final; forward final], size c = 2*context_hidden per side;
- left/right positions: two independent LSTMs over learned embeddings of
  signed token offsets (-1, -2, ... to the left; +1, +2, ... to the
  right), size p = position_hidden per side.

Total output dimension L = e + 2c + 2p.

Everything is built on :mod:`hyfet.autodiff`, so encodings participate in
the end-to-end gradient. Batched entry points pad and mask internally;
masked steps are exact no-ops on the hidden state, so an empty side
encodes to the zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from hyfet import autodiff as ad

UNK_TOKEN = "<unk>"


@dataclass(frozen=True)
class EncoderConfig:
    """Dimensions of the stage-I encoder."""

    char_hidden: int = 200
    context_hidden: int = 100  # per direction; one side outputs 2x this
    position_hidden: int = 100
    word_embedding_dim: int = 300
    char_embedding_dim: int = 50
    position_embedding_dim: int = 25
    window: int = 15  # context tokens kept per side

    def __post_init__(self):
        for name in (
            "char_hidden",
            "context_hidden",
            "position_hidden",
            "word_embedding_dim",
            "char_embedding_dim",
            "position_embedding_dim",
            "window",
        ):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"EncoderConfig.{name} must be positive")

    @property
    def output_dim(self) -> int:
        """L = e + 2c + 2p with c covering both Bi-LSTM directions."""
        return self.char_hidden + 2 * (2 * self.context_hidden) + 2 * self.position_hidden


class Vocab:
    """Sorted token -> index mapping with index 0 reserved for unknowns."""

    def __init__(self, tokens: Iterable[str]):
        uniq = sorted(set(tokens) - {UNK_TOKEN})
        self._index = {UNK_TOKEN: 0}
        for i, tok in enumerate(uniq, start=1):
            self._index[tok] = i
        self._tokens = [UNK_TOKEN] + uniq

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, 0)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)


def _uniform(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-0.1, 0.1, size=shape)


class Lstm:
    """Single-direction LSTM producing the final hidden state.

    Gates are fused into one matmul with column order [input, forget,
    cell, output]; the forget-gate bias starts at 1. Steps where the mask
    is 0 leave hidden and cell state untouched exactly.
    """

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int, prefix: str):
        self.hidden = hidden
        self.wx = ad.parameter(_uniform(rng, (in_dim, 4 * hidden)), name=f"{prefix}.wx")
        self.wh = ad.parameter(_uniform(rng, (hidden, 4 * hidden)), name=f"{prefix}.wh")
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        self.b = ad.parameter(bias, name=f"{prefix}.b")

    def params(self) -> dict[str, ad.Tensor]:
        return {t.name: t for t in (self.wx, self.wh, self.b)}

    def run(self, x: ad.Tensor, mask: np.ndarray) -> ad.Tensor:
        """x: (B, T, D) inputs, mask: (B, T) in {0,1} -> (B, H) final state."""
        bsz, steps = mask.shape
        h = ad.Tensor(np.zeros((bsz, self.hidden)))
        c = ad.Tensor(np.zeros((bsz, self.hidden)))
        n = self.hidden
        for t in range(steps):
            m = mask[:, t : t + 1]
            if not m.any():
                continue
            z = x[:, t, :] @ self.wx + h @ self.wh + self.b
            i = ad.sigmoid(z[:, :n])
            f = ad.sigmoid(z[:, n : 2 * n])
            g = ad.tanh(z[:, 2 * n : 3 * n])
            o = ad.sigmoid(z[:, 3 * n :])
            c_new = f * c + i * g
            h_new = o * ad.tanh(c_new)
            c = m * c_new + (1.0 - m) * c
            h = m * h_new + (1.0 - m) * h
        return h


class BiLstm:
    """Forward and backward LSTMs; output is [backward final; forward final]."""

    def __init__(self, rng: np.random.Generator, in_dim: int, hidden: int, prefix: str):
        self.fwd = Lstm(rng, in_dim, hidden, f"{prefix}.fwd")
        self.bwd = Lstm(rng, in_dim, hidden, f"{prefix}.bwd")

    def params(self) -> dict[str, ad.Tensor]:
        return {**self.fwd.params(), **self.bwd.params()}

    def run(self, x: ad.Tensor, mask: np.ndarray) -> ad.Tensor:
        forward = self.fwd.run(x, mask)
        backward = self.bwd.run(x[:, ::-1, :], mask[:, ::-1])
        return ad.concatenate([backward, forward], axis=-1)


class MentionEncoder:
    """Holds all stage-I parameters and turns raw mentions into vectors."""

    def __init__(
        self,
        config: EncoderConfig,
        word_vocab: Vocab,
        char_vocab: Vocab,
        rng: np.random.Generator,
        word_vectors: dict[str, np.ndarray] | None = None,
    ):
        self.config = config
        self.word_vocab = word_vocab
        self.char_vocab = char_vocab
        cfg = config

        word_table = _uniform(rng, (len(word_vocab), cfg.word_embedding_dim))
        if word_vectors:
            for tok, vec in word_vectors.items():
                if tok in word_vocab:
                    word_table[word_vocab.index(tok)] = vec
        self.word_emb = ad.parameter(word_table, name="encoder.word_emb")
        self.char_emb = ad.parameter(
            _uniform(rng, (len(char_vocab), cfg.char_embedding_dim)), name="encoder.char_emb"
        )
        self.pos_emb = ad.parameter(
            _uniform(rng, (2 * cfg.window + 1, cfg.position_embedding_dim)),
            name="encoder.pos_emb",
        )

        self.mention_lstm = Lstm(rng, cfg.char_embedding_dim, cfg.char_hidden, "encoder.mention")
        self.left_ctx = BiLstm(rng, cfg.word_embedding_dim, cfg.context_hidden, "encoder.ctx_left")
        self.right_ctx = BiLstm(rng, cfg.word_embedding_dim, cfg.context_hidden, "encoder.ctx_right")
        self.left_pos = Lstm(rng, cfg.position_embedding_dim, cfg.position_hidden, "encoder.pos_left")
        self.right_pos = Lstm(rng, cfg.position_embedding_dim, cfg.position_hidden, "encoder.pos_right")

    def params(self) -> dict[str, ad.Tensor]:
        out = {
            "encoder.word_emb": self.word_emb,
            "encoder.char_emb": self.char_emb,
            "encoder.pos_emb": self.pos_emb,
        }
        for part in (self.mention_lstm, self.left_ctx, self.right_ctx, self.left_pos, self.right_pos):
            out.update(part.params())
        return out

    # -- batching helpers ---------------------------------------------------

    @staticmethod
    def _pad(rows: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
        width = max((len(r) for r in rows), default=0)
        width = max(width, 1)  # keep shapes nonempty so slicing stays simple
        ids = np.zeros((len(rows), width), dtype=np.int64)
        mask = np.zeros((len(rows), width))
        for i, row in enumerate(rows):
            ids[i, : len(row)] = row
            mask[i, : len(row)] = 1.0
        return ids, mask

    def _char_ids(self, mention_tokens: Sequence[str]) -> list[int]:
        text = " ".join(mention_tokens)
        if not text:
            raise ValueError("cannot encode a mention with no characters")
        return [self.char_vocab.index(ch) for ch in text]

    def _context_ids(self, tokens: Sequence[str], side: str) -> list[int]:
        w = self.config.window
        kept = list(tokens[-w:]) if side == "left" else list(tokens[:w])
        return [self.word_vocab.index(t) for t in kept]

    def _offset_ids(self, length: int, side: str) -> list[int]:
        w = self.config.window
        n = min(length, w)
        offsets = range(-1, -n - 1, -1) if side == "left" else range(1, n + 1)
        return [off + w for off in offsets]

    # -- batched encoding ---------------------------------------------------

    def encode_batch(
        self,
        mentions: Sequence[Sequence[str]],
        lefts: Sequence[Sequence[str]],
        rights: Sequence[Sequence[str]],
    ) -> ad.Tensor:
        """Encode aligned (mention tokens, left context, right context) triples.

        Returns an (n, L) tensor with rows ordered as the inputs.
        """
        if not (len(mentions) == len(lefts) == len(rights)):
            raise ValueError("mention/left/right sequences must align")
        char_ids, char_mask = self._pad([self._char_ids(m) for m in mentions])
        left_ids, left_mask = self._pad([self._context_ids(t, "left") for t in lefts])
        right_ids, right_mask = self._pad([self._context_ids(t, "right") for t in rights])
        lpos_ids, lpos_mask = self._pad([self._offset_ids(len(t), "left") for t in lefts])
        rpos_ids, rpos_mask = self._pad([self._offset_ids(len(t), "right") for t in rights])

        phi_e = self.mention_lstm.run(ad.take_rows(self.char_emb, char_ids), char_mask)
        phi_cl = self.left_ctx.run(ad.take_rows(self.word_emb, left_ids), left_mask)
        phi_cr = self.right_ctx.run(ad.take_rows(self.word_emb, right_ids), right_mask)
        phi_pl = self.left_pos.run(ad.take_rows(self.pos_emb, lpos_ids), lpos_mask)
        phi_pr = self.right_pos.run(ad.take_rows(self.pos_emb, rpos_ids), rpos_mask)
        return concat_encoding([phi_pl, phi_cl, phi_e, phi_cr, phi_pr])

    # -- single-mention views ------------------------------------------------

    def encode_mention_chars(self, mention_tokens: Sequence[str]) -> ad.Tensor:
        """Final hidden state of the character LSTM, shape (e,)."""
        ids, mask = self._pad([self._char_ids(mention_tokens)])
        return self.mention_lstm.run(ad.take_rows(self.char_emb, ids), mask)[0]

    def encode_context(
        self, left_tokens: Sequence[str], right_tokens: Sequence[str]
    ) -> tuple[ad.Tensor, ad.Tensor]:
        """Per-side Bi-LSTM summaries, each of shape (2*context_hidden,)."""
        lids, lmask = self._pad([self._context_ids(left_tokens, "left")])
        rids, rmask = self._pad([self._context_ids(right_tokens, "right")])
        left = self.left_ctx.run(ad.take_rows(self.word_emb, lids), lmask)[0]
        right = self.right_ctx.run(ad.take_rows(self.word_emb, rids), rmask)[0]
        return left, right

    def encode_positions(self, left_len: int, right_len: int) -> tuple[ad.Tensor, ad.Tensor]:
        """Offset-LSTM summaries for the two sides, each of shape (p,)."""
        if left_len < 0 or right_len < 0:
            raise ValueError("context lengths must be nonnegative")
        lids, lmask = self._pad([self._offset_ids(left_len, "left")])
        rids, rmask = self._pad([self._offset_ids(right_len, "right")])
        left = self.left_pos.run(ad.take_rows(self.pos_emb, lids), lmask)[0]
        right = self.right_pos.run(ad.take_rows(self.pos_emb, rids), rmask)[0]
        return left, right

    def encode_mention(
        self,
        mention_tokens: Sequence[str],
        left_tokens: Sequence[str],
        right_tokens: Sequence[str],
    ) -> ad.Tensor:
        """Full x_m vector for one mention, shape (L,)."""
        return self.encode_batch([mention_tokens], [left_tokens], [right_tokens])[0]


def concat_encoding(parts: Sequence[ad.Tensor]) -> ad.Tensor:
    """Concatenate the five encoder outputs in their fixed order.

    Order is [left positions; left context; mention; right context;
    right positions]; slicing the result at the part widths recovers the
    inputs exactly.
    """
    if len(parts) != 5:
        raise ValueError(f"expected 5 encoding parts, got {len(parts)}")
    return ad.concatenate(list(parts), axis=-1)


def load_word_vectors(path) -> dict[str, np.ndarray]:
    """Read a whitespace-separated embedding table: token then d floats.

    A first line holding exactly two integers (count, dim) is treated as a
    header and skipped. All rows must share one dimension.
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.rstrip("\n").split()
            if not fields:
                continue
            if lineno == 1 and len(fields) == 2 and all(f.lstrip("-").isdigit() for f in fields):
                continue
            token, values = fields[0], fields[1:]
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed embedding row") from exc
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ValueError(
                    f"{path}:{lineno}: embedding dimension {vec.size} != expected {dim}"
                )
            vectors[token] = vec
    return vectors
