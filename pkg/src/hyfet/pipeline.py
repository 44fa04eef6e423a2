"""End-to-end wiring: corpora in, trained typing model and metrics out.

The flow for one run:

1. build vocabularies from the training corpus and encode every mention
   (train plus any held-out splits — the *universe*) with the stage-I
   encoder;
2. lift encodings onto the chosen manifold;
3. build the mention graph over the universe from source vectors and
   the training labels (held-out mentions never contribute prototype
   mass or labels; under ``universe = train_only`` they are barred from
   edges entirely and keep just their self-loops);
4. smooth representations with the refinement stack and score types;
5. train with Adam on the margin losses, logging dev metrics per epoch.

Minibatches smaller than the train split forward the induced subgraph
over the batch (rows renormalized so neighbor weights still sum to 1);
a batch size covering the whole split forwards the full universe in one
step, which keeps held-out mentions attached to their train neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from hyfet import autodiff as ad
from hyfet.config import Config, Universe, dump_config, parse_config
from hyfet.corpus import Corpus, MentionRecord, TypeHierarchy, source_vectors
from hyfet.encoder import MentionEncoder, Vocab
from hyfet.graphbuild import GraphVariant, MentionGraph, build_graph
from hyfet.hyperlayer import Geometry, GraphOperator, RefinementStack
from hyfet.trainer import (
    Adam,
    Checkpoint,
    Trainer,
    TrainingError,
    load_checkpoint,
    restore_adam,
    restore_params,
    save_checkpoint,
)
from hyfet.typer import LabelScorer, Metrics, evaluate, predict, total_loss


class PipelineError(RuntimeError):
    """Inconsistent corpora or checkpoints handed to the pipeline."""


class TypingModel:
    """Stage-I encoder, manifold lift, smoothing stack, and type scorer."""

    def __init__(
        self,
        config: Config,
        word_tokens,
        char_tokens,
        n_types: int,
        rng: np.random.Generator,
        word_vectors: dict[str, np.ndarray] | None = None,
    ):
        self.config = config
        self.n_types = n_types
        self.geometry = Geometry(config.manifold.model, config.manifold.curvature)
        self.word_vocab = Vocab(word_tokens)
        self.char_vocab = Vocab(char_tokens)
        self.encoder = MentionEncoder(
            config.encoder, self.word_vocab, self.char_vocab, rng, word_vectors
        )
        width = config.encoder.output_dim
        layer_dim = config.trainer.layer_dim or width
        dims = [width] + [layer_dim] * config.trainer.layers
        self.stack = RefinementStack(
            self.geometry, dims, rng, basepoint=config.trainer.basepoint
        )
        self.scorer = LabelScorer(
            self.geometry,
            n_types,
            dims[-1],
            rng,
            space=config.score.space,
            inner=config.score.inner,
        )

    def params(self) -> dict[str, ad.Tensor]:
        out = {}
        out.update(self.encoder.params())
        out.update(self.stack.params())
        out.update(self.scorer.params())
        return out

    def encode(self, records) -> ad.Tensor:
        """Stage-I features (n, L) for a list of mention records."""
        return self.encoder.encode_batch(
            [r.mention_tokens for r in records],
            [r.left_tokens for r in records],
            [r.right_tokens for r in records],
        )

    def lift(self, encoded):
        return self.geometry.exp0(encoded)

    def refine(self, points, operator: GraphOperator):
        return self.stack.forward(points, operator)

    def forward(self, records, operator: GraphOperator) -> ad.Tensor:
        """Score matrix (n, T) for records wired by the given operator."""
        return self.scorer.scores(self.refine(self.lift(self.encode(records)), operator))


def induced_operator(operator: GraphOperator, idx: np.ndarray) -> GraphOperator:
    """Restrict the smoothing operator to a subset, renormalizing rows."""
    sub = operator.mat[idx][:, idx].tocsr()
    rowsum = np.asarray(sub.sum(axis=1)).ravel()
    return GraphOperator(sp.diags(1.0 / rowsum) @ sub)


@dataclass(frozen=True)
class SplitView:
    name: str
    start: int
    stop: int

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.stop)

    def __len__(self) -> int:
        return self.stop - self.start


class Pipeline:
    """One training/evaluation run over a train corpus and optional splits."""

    def __init__(
        self,
        config: Config,
        train_corpus: Corpus,
        dev_corpus: Corpus | None = None,
        test_corpus: Corpus | None = None,
        word_tokens=None,
        char_tokens=None,
    ):
        self.config = config
        self.hierarchy = train_corpus.hierarchy
        corpora = {"train": train_corpus}
        if dev_corpus is not None:
            corpora["dev"] = dev_corpus
        if test_corpus is not None:
            corpora["test"] = test_corpus
        for name, corpus in corpora.items():
            if corpus.hierarchy.paths != self.hierarchy.paths:
                raise PipelineError(f"{name} corpus uses a different type hierarchy")
            if len(corpus) == 0:
                raise PipelineError(f"{name} corpus contains no mentions")

        self.records: list[MentionRecord] = []
        self.splits: dict[str, SplitView] = {}
        for name, corpus in corpora.items():
            start = len(self.records)
            self.records.extend(corpus.records)
            self.splits[name] = SplitView(name, start, len(self.records))

        self.vectors = np.vstack(
            [source_vectors(c, config.graph.vector_dim) for c in corpora.values()]
        )

        rng = np.random.default_rng(config.trainer.seed)
        self.model = TypingModel(
            config,
            word_tokens if word_tokens is not None else train_corpus.word_tokens(),
            char_tokens if char_tokens is not None else train_corpus.characters(),
            len(self.hierarchy),
            rng,
        )

        train = self.splits["train"]
        graph_labels = [
            self.records[i].labels if train.start <= i < train.stop else ()
            for i in range(len(self.records))
        ]
        eligible = None
        if config.graph.universe is Universe.TRAIN_ONLY:
            eligible = np.zeros(len(self.records), dtype=bool)
            eligible[train.indices] = True
        self.graph: MentionGraph = build_graph(
            self.vectors,
            graph_labels,
            len(self.hierarchy),
            delta=config.graph.delta,
            variant=config.graph.variant,
            seed=config.trainer.seed if config.graph.variant is GraphVariant.RANDOM else None,
            eligible=eligible,
        )
        self.operator = GraphOperator.from_graph(self.graph)
        self._trainer: Trainer | None = None
        self._epochs_done = 0

    # -- forward/eval ----------------------------------------------------------

    def forward_scores(self) -> np.ndarray:
        """Score matrix over the whole universe, as plain values."""
        return np.asarray(self.model.forward(self.records, self.operator).data)

    def split_records(self, split: str) -> list[MentionRecord]:
        view = self._view(split)
        return self.records[view.start : view.stop]

    def _view(self, split: str) -> SplitView:
        if split not in self.splits:
            raise PipelineError(
                f"unknown split {split!r}; have {sorted(self.splits)}"
            )
        return self.splits[split]

    def predictions(self, split: str):
        """(keys, gold label sets, predicted label sets) for one split."""
        view = self._view(split)
        scores = self.forward_scores()[view.start : view.stop]
        records = self.split_records(split)
        pred = predict(scores)
        gold = [r.labels for r in records]
        keys = [r.key for r in records]
        return keys, gold, pred

    def evaluate(self, split: str = "test") -> Metrics:
        _, gold, pred = self.predictions(split)
        return evaluate(gold, pred)

    # -- training ---------------------------------------------------------------

    def _loss_fn(self, idx: np.ndarray) -> ad.Tensor:
        train = self.splits["train"]
        if idx.size >= len(train):
            scores = self.model.forward(self.records, self.operator)
            rows = ad.take(scores, (train.indices,))
            records = self.split_records("train")
        else:
            universe_idx = train.start + idx
            records = [self.records[i] for i in universe_idx]
            op = induced_operator(self.operator, universe_idx)
            rows = self.model.forward(records, op)
        return total_loss(
            rows, [r.labels for r in records], [r.is_clean for r in records]
        )

    def train(self, log_path=None, checkpoint_path=None, resume: Checkpoint | None = None):
        """Run the configured number of epochs; returns per-epoch stats."""
        cfg = self.config.trainer
        adam = Adam(self.model.params(), lr=cfg.lr)
        trainer = Trainer(adam, seed=cfg.seed)
        start_epoch = 0
        if resume is not None:
            restore_params(self.model.params(), resume)
            restore_adam(adam, resume)
            trainer.rng.bit_generator.state = resume.meta["rng_state"]
            start_epoch = int(resume.meta["epoch"])
        eval_split = "dev" if "dev" in self.splits else "train"
        history = trainer.fit(
            loss_fn=self._loss_fn,
            eval_fn=lambda: self.evaluate(eval_split),
            n_train=len(self.splits["train"]),
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            log_path=log_path,
            start_epoch=start_epoch,
        )
        self._trainer = trainer
        self._epochs_done = start_epoch + cfg.epochs
        if checkpoint_path is not None:
            self.save(checkpoint_path)
        return history

    # -- persistence -------------------------------------------------------------

    def save(self, path) -> None:
        if self._trainer is None:
            raise PipelineError("nothing trained yet; call train() first")
        meta = {
            "config": dump_config(self.config),
            "hierarchy": self.hierarchy.paths,
            "word_tokens": self.model.word_vocab.tokens,
            "char_tokens": self.model.char_vocab.tokens,
            "epoch": self._epochs_done,
            "rng_state": self._trainer.rng.bit_generator.state,
        }
        save_checkpoint(path, self.model.params(), self._trainer.adam, meta)

    @classmethod
    def from_checkpoint(
        cls,
        path,
        train_corpus: Corpus,
        dev_corpus: Corpus | None = None,
        test_corpus: Corpus | None = None,
    ) -> tuple["Pipeline", Checkpoint]:
        """Rebuild a pipeline around stored config/vocabulary and load weights.

        The graph is reconstructed over the supplied corpora; prototypes
        still come only from the train corpus labels, so evaluation
        corpora can differ from the training run's.
        """
        ckpt = load_checkpoint(path)
        config = parse_config(ckpt.meta["config"])
        if train_corpus.hierarchy.paths != list(ckpt.meta["hierarchy"]):
            raise PipelineError("checkpoint was trained against a different hierarchy")
        pipeline = cls(
            config,
            train_corpus,
            dev_corpus,
            test_corpus,
            word_tokens=ckpt.meta["word_tokens"],
            char_tokens=ckpt.meta["char_tokens"],
        )
        restore_params(pipeline.model.params(), ckpt)
        return pipeline, ckpt
