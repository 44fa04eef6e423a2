"""Universe assembly, end-to-end training runs, and checkpoint rebuilds."""

import numpy as np
import pytest

from hyfet import autodiff as ad
from hyfet.config import Config, Universe
from hyfet.corpus import SynthSpec, synth_corpus, synth_hierarchy
from hyfet.graphbuild import GraphVariant
from hyfet.pipeline import Pipeline, PipelineError, induced_operator
from hyfet.trainer import load_checkpoint
from hyfet.typer import total_loss


def small_config(**trainer_overrides) -> Config:
    cfg = Config()
    cfg = cfg.replace(
        "encoder",
        char_hidden=10,
        context_hidden=6,
        position_hidden=5,
        word_embedding_dim=12,
        char_embedding_dim=8,
        position_embedding_dim=6,
        window=5,
    )
    cfg = cfg.replace("graph", delta=0.4, vector_dim=32)
    trainer_kwargs = dict(lr=0.02, epochs=3, batch_size=1000, seed=11, layers=1)
    trainer_kwargs.update(trainer_overrides)
    return cfg.replace("trainer", **trainer_kwargs)


def make_corpora(seed=5, n_train=60, n_dev=20, n_test=20):
    base = dict(depth=2, branching=2, tokens_per_type=5, names_per_leaf=4)
    train = synth_corpus(SynthSpec(n_mentions=n_train, noise_rate=0.3, seed=seed, **base))
    dev = synth_corpus(SynthSpec(n_mentions=n_dev, noise_rate=0.0, seed=seed + 1, **base))
    test = synth_corpus(SynthSpec(n_mentions=n_test, noise_rate=0.0, seed=seed + 2, **base))
    return train, dev, test


@pytest.fixture(scope="module")
def corpora():
    return make_corpora()


@pytest.fixture(scope="module")
def pipeline(corpora):
    return Pipeline(small_config(), *corpora)


class TestUniverse:
    def test_split_layout(self, pipeline, corpora):
        train, dev, test = corpora
        assert pipeline.splits["train"].start == 0
        assert pipeline.splits["train"].stop == len(train)
        assert pipeline.splits["dev"].start == len(train)
        assert pipeline.splits["test"].stop == len(train) + len(dev) + len(test)
        assert len(pipeline.records) == len(train) + len(dev) + len(test)

    def test_split_records_match_corpora(self, pipeline, corpora):
        _, dev, _ = corpora
        got = pipeline.split_records("dev")
        assert [r.key for r in got] == [r.key for r in dev.records]

    def test_unknown_split_rejected(self, pipeline):
        with pytest.raises(PipelineError, match="unknown split"):
            pipeline.evaluate("validation")

    def test_hierarchy_mismatch_rejected(self, corpora):
        train, _, _ = corpora
        other_h = synth_hierarchy(depth=3, branching=2)
        other = synth_corpus(SynthSpec(depth=3, branching=2, n_mentions=10, seed=0))
        assert other.hierarchy.paths != train.hierarchy.paths
        assert other_h.paths == other.hierarchy.paths
        with pytest.raises(PipelineError, match="hierarchy"):
            Pipeline(small_config(), train, dev_corpus=other)

    def test_graph_prototypes_ignore_heldout_labels(self, pipeline, corpora):
        """The pipeline's graph must equal one built with held-out labels
        blanked: prototypes draw only on training annotations."""
        from hyfet.graphbuild import build_graph

        train, _, _ = corpora
        cfg = small_config()
        labels = [
            r.labels if i < len(train) else ()
            for i, r in enumerate(pipeline.records)
        ]
        want = build_graph(
            pipeline.vectors,
            labels,
            len(train.hierarchy),
            delta=cfg.graph.delta,
            variant=cfg.graph.variant,
        )
        assert pipeline.graph.n == len(pipeline.records)
        np.testing.assert_array_equal(pipeline.graph.ei, want.ei)
        np.testing.assert_array_equal(pipeline.graph.ej, want.ej)
        np.testing.assert_array_equal(pipeline.graph.weights, want.weights)

    def test_train_only_universe_confines_edges(self, corpora):
        train, dev, test = corpora
        cfg = small_config().replace("graph", universe=Universe.TRAIN_ONLY)
        pipe = Pipeline(cfg, train, dev, test)
        assert pipe.graph.n_edges > 0
        assert (pipe.graph.ei < len(train)).all()
        assert (pipe.graph.ej < len(train)).all()

    def test_transductive_universe_reaches_heldout(self, corpora):
        train, dev, test = corpora
        pipe = Pipeline(small_config(), train, dev, test)
        assert (pipe.graph.ej >= len(train)).any()

    def test_random_variant_uses_trainer_seed(self, corpora):
        cfg = small_config().replace("graph", variant=GraphVariant.RANDOM)
        a = Pipeline(cfg, *corpora)
        b = Pipeline(cfg, *corpora)
        np.testing.assert_array_equal(a.graph.ei, b.graph.ei)
        np.testing.assert_array_equal(a.graph.ej, b.graph.ej)
        assert a.graph.seed == cfg.trainer.seed


class TestForward:
    def test_scores_shape_and_finiteness(self, pipeline, corpora):
        scores = pipeline.forward_scores()
        n = sum(len(c) for c in corpora)
        assert scores.shape == (n, len(corpora[0].hierarchy))
        assert np.isfinite(scores).all()

    def test_identical_builds_agree_bitwise(self, corpora):
        a = Pipeline(small_config(), *corpora).forward_scores()
        b = Pipeline(small_config(), *corpora).forward_scores()
        np.testing.assert_array_equal(a, b)

    def test_induced_operator_rows_sum_to_one(self, pipeline):
        idx = np.array([0, 3, 7, 20, 41])
        sub = induced_operator(pipeline.operator, idx)
        rowsums = np.asarray(sub.mat.sum(axis=1)).ravel()
        np.testing.assert_allclose(rowsums, 1.0, atol=1e-12)
        assert sub.mat.shape == (5, 5)

    def test_induced_operator_keeps_relative_weights(self, pipeline):
        idx = np.array([0, 1, 2, 3, 4, 5])
        full = pipeline.operator.mat.toarray()
        sub = induced_operator(pipeline.operator, idx).mat.toarray()
        block = full[np.ix_(idx, idx)]
        np.testing.assert_allclose(
            sub, block / block.sum(axis=1, keepdims=True), atol=1e-12
        )

    def test_full_batch_loss_matches_sliced_scores(self, pipeline):
        train = pipeline.splits["train"]
        loss = pipeline._loss_fn(np.arange(len(train))).item()
        rows = ad.as_tensor(pipeline.forward_scores()[train.start : train.stop])
        records = pipeline.split_records("train")
        want = total_loss(
            rows, [r.labels for r in records], [r.is_clean for r in records]
        ).item()
        assert loss == pytest.approx(want, rel=1e-12)

    def test_minibatch_loss_runs_on_induced_subgraph(self, pipeline):
        loss = pipeline._loss_fn(np.array([2, 5, 9, 13])).item()
        assert np.isfinite(loss)


class TestTraining:
    def test_loss_decreases_and_log_written(self, corpora, tmp_path):
        pipe = Pipeline(small_config(epochs=4), *corpora)
        log = tmp_path / "train.csv"
        history = pipe.train(log_path=log)
        assert len(history) == 4
        assert history[-1].loss < history[0].loss
        lines = log.read_text().splitlines()
        assert lines[0] == "epoch,loss,strict,macro_f1,micro_f1"
        assert len(lines) == 5

    def test_same_seed_runs_are_byte_identical(self, corpora, tmp_path):
        def run(tag):
            pipe = Pipeline(small_config(epochs=2, batch_size=25), *corpora)
            log = tmp_path / f"{tag}.csv"
            ckpt = tmp_path / f"{tag}.ckpt"
            pipe.train(log_path=log, checkpoint_path=ckpt)
            return log.read_bytes(), ckpt.read_bytes()

        log_a, ckpt_a = run("a")
        log_b, ckpt_b = run("b")
        assert log_a == log_b
        assert ckpt_a == ckpt_b

    def test_checkpoint_restores_identical_model(self, corpora, tmp_path):
        train, dev, test = corpora
        pipe = Pipeline(small_config(epochs=2), train, dev, test)
        path = tmp_path / "run.ckpt"
        pipe.train(checkpoint_path=path)
        want_scores = pipe.forward_scores()
        want_metrics = pipe.evaluate("test")

        rebuilt, ckpt = Pipeline.from_checkpoint(path, train, dev, test)
        assert ckpt.meta["epoch"] == 2
        np.testing.assert_array_equal(rebuilt.forward_scores(), want_scores)
        assert rebuilt.evaluate("test") == want_metrics

    def test_from_checkpoint_rejects_other_hierarchy(self, corpora, tmp_path):
        train, dev, test = corpora
        pipe = Pipeline(small_config(epochs=1), train)
        path = tmp_path / "run.ckpt"
        pipe.train(checkpoint_path=path)
        deep = synth_corpus(SynthSpec(depth=3, branching=2, n_mentions=10, seed=0))
        with pytest.raises(PipelineError, match="hierarchy"):
            Pipeline.from_checkpoint(path, deep)

    def test_resume_matches_straight_run(self, corpora, tmp_path):
        straight = Pipeline(small_config(epochs=4, batch_size=25), *corpora)
        straight.train()

        first = Pipeline(small_config(epochs=2, batch_size=25), *corpora)
        path = tmp_path / "half.ckpt"
        first.train(checkpoint_path=path)

        second = Pipeline(small_config(epochs=2, batch_size=25), *corpora)
        ckpt = load_checkpoint(path)
        second.train(resume=ckpt)

        a = straight.model.params()
        b = second.model.params()
        assert sorted(a) == sorted(b)
        for name in a:
            np.testing.assert_array_equal(a[name].data, b[name].data)

    def test_save_before_train_rejected(self, corpora, tmp_path):
        pipe = Pipeline(small_config(), *corpora)
        with pytest.raises(PipelineError, match="train"):
            pipe.save(tmp_path / "x.ckpt")
