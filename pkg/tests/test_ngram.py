import numpy as np
import pytest

from helpers import naive_backoff_predict, naive_backoff_usage, naive_gram_counts
from nextaction import evaluation, ngram
from nextaction.errors import ConfigError, UnfittedModelError
from nextaction.ingest import Corpus, StudentSequence


def corpus_of(sequences, vocab_size):
    seqs = [StudentSequence(f"s{i}", list(a), True) for i, a in enumerate(sequences)]
    return Corpus(vocabulary=None, sequences=seqs, vocab_size=vocab_size)


A, B, Z = 0, 1, 2


class TestFit:
    def test_hand_counts_order_two(self):
        table = ngram.fit(corpus_of([[A, B, A, B]], 3), max_order=2)
        assert table.count(2, (A,), B) == 2
        assert table.count(2, (B,), A) == 1
        assert table.count(2, (B,), B) == 0

    def test_unigram_counts_continuation_positions(self):
        table = ngram.fit(corpus_of([[A, B, A, B]], 3), max_order=1)
        # continuations are B, A, B: position 1 is never a continuation
        assert table.count(1, (), A) == 1
        assert table.count(1, (), B) == 2
        assert table.total(1, ()) == 3

    def test_two_identical_sequences_double_counts(self):
        one = ngram.fit(corpus_of([[A, B, A, B]], 3), max_order=3)
        two = ngram.fit(corpus_of([[A, B, A, B]] * 2, 3), max_order=3)
        for order in (1, 2, 3):
            for ctx, counter in one.continuations[order].items():
                for nxt, count in counter.items():
                    assert two.count(order, ctx, nxt) == 2 * count

    def test_context_totals_are_sums(self):
        rng = np.random.default_rng(4)
        seqs = [rng.integers(0, 5, size=30).tolist() for _ in range(4)]
        table = ngram.fit(corpus_of(seqs, 5), max_order=4)
        for order in range(1, 5):
            for ctx, counter in table.continuations[order].items():
                assert sum(counter.values()) == table.total(order, ctx)
                assert all(c <= table.total(order, ctx) for c in counter.values())

    def test_invalid_order(self):
        with pytest.raises(ConfigError):
            ngram.fit(corpus_of([[A, B]], 2), max_order=0)

    def test_empty_corpus(self):
        with pytest.raises(ConfigError):
            ngram.fit(Corpus(None, [], 2), max_order=2)


class TestPredict:
    def test_only_continuation(self):
        table = ngram.fit(corpus_of([[A, B, A, B]], 3), max_order=2)
        pred = ngram.predict_next(table, [A])
        assert (pred.predicted, pred.order_used) == (B, 2)

    def test_unseen_context_backs_off_to_unigram(self):
        table = ngram.fit(corpus_of([[A, B, A, B]], 3), max_order=2)
        pred = ngram.predict_next(table, [Z])
        assert (pred.predicted, pred.order_used) == (B, 1)

    def test_empty_context_uses_unigram(self):
        table = ngram.fit(corpus_of([[A, B, A, B]], 3), max_order=3)
        pred = ngram.predict_next(table, [])
        assert (pred.predicted, pred.order_used) == (B, 1)

    def test_unfitted_table_raises(self):
        table = ngram.NGramTable(2, 3)
        with pytest.raises(UnfittedModelError):
            ngram.predict_next(table, [A])

    def test_tie_break_lowest_id(self):
        # continuations of A are B once and Z once: tie broken toward B
        table = ngram.fit(corpus_of([[A, B], [A, Z]], 3), max_order=2)
        assert ngram.predict_next(table, [A]).predicted == B

    def test_training_order_never_changes_predictions(self):
        rng = np.random.default_rng(11)
        seqs = [rng.integers(0, 4, size=25).tolist() for _ in range(6)]
        t1 = ngram.fit(corpus_of(seqs, 4), max_order=3)
        t2 = ngram.fit(corpus_of(list(reversed(seqs)), 4), max_order=3)
        for seq in seqs:
            for t in range(1, len(seq)):
                assert (
                    ngram.predict_next(t1, seq[:t]).predicted
                    == ngram.predict_next(t2, seq[:t]).predicted
                )

    def test_distribution_normalized(self):
        rng = np.random.default_rng(12)
        seqs = [rng.integers(0, 6, size=40).tolist() for _ in range(3)]
        table = ngram.fit(corpus_of(seqs, 6), max_order=3)
        for seq in seqs:
            for t in range(1, len(seq), 5):
                pred = ngram.predict_next(table, seq[:t], with_distribution=True)
                assert abs(sum(pred.distribution.values()) - 1.0) <= 1e-9

    def test_matches_known_markov_chain_argmax(self):
        # order-2 chain: dominant successor (a + 2b + 1) mod V with mass 0.7
        V = 6
        rng = np.random.default_rng(21)

        def dominant(a, b):
            return (a + 2 * b + 1) % V

        seqs = []
        for _ in range(40):
            seq = [int(rng.integers(V)), int(rng.integers(V))]
            for _ in range(400):
                probs = np.full(V, 0.3 / (V - 1))
                probs[dominant(seq[-2], seq[-1])] = 0.7
                seq.append(int(rng.choice(V, p=probs)))
            seqs.append(seq)
        table = ngram.fit(corpus_of(seqs, V), max_order=3)

        checked = agreed = 0
        for a in range(V):
            for b in range(V):
                total = table.total(3, (a, b))
                if total < 50:
                    continue
                checked += 1
                pred = ngram.predict_next(table, [a, b])
                agreed += pred.predicted == dominant(a, b)
        assert checked >= 30
        assert agreed / checked >= 0.99


class TestAgainstNaiveOracle:
    def test_counts_and_predictions_match_brute_force(self):
        rng = np.random.default_rng(31)
        for _ in range(8):
            vocab_size = int(rng.integers(3, 8))
            seqs = [
                rng.integers(0, vocab_size, size=rng.integers(2, 60)).tolist()
                for _ in range(int(rng.integers(1, 6)))
            ]
            max_order = int(rng.integers(1, 5))
            table = ngram.fit(corpus_of(seqs, vocab_size), max_order)
            naive = naive_gram_counts(seqs, max_order)
            for order in range(1, max_order + 1):
                assert {
                    ctx: dict(c) for ctx, c in table.continuations[order].items()
                } == {ctx: dict(c) for ctx, c in naive[order].items()}
            for seq in seqs:
                for t in range(1, len(seq)):
                    pred = ngram.predict_next(table, seq[:t])
                    expected = naive_backoff_predict(naive, seq[:t], max_order)
                    assert (pred.predicted, pred.order_used) == expected


class TestBackoffUsage:
    def test_trained_on_eval_itself_always_top_order(self):
        rng = np.random.default_rng(41)
        seqs = [rng.integers(0, 4, size=30).tolist() for _ in range(4)]
        corpus = corpus_of(seqs, 4)
        table = ngram.fit(corpus, max_order=2)
        usage = ngram.backoff_usage(table, corpus)
        assert usage[2] == 1.0
        assert usage[1] == 0.0

    def test_fractions_sum_to_one_and_match_naive(self):
        rng = np.random.default_rng(42)
        train = [rng.integers(0, 5, size=40).tolist() for _ in range(4)]
        eval_seqs = [rng.integers(0, 5, size=40).tolist() for _ in range(3)]
        table = ngram.fit(corpus_of(train, 5), max_order=4)
        usage = ngram.backoff_usage(table, corpus_of(eval_seqs, 5))
        assert abs(sum(usage.values()) - 1.0) <= 1e-9
        naive = naive_backoff_usage(naive_gram_counts(train, 4), eval_seqs, 4)
        assert usage == naive


class TestSweepAndFiles:
    def test_cyclic_corpus_perfect_for_all_orders(self):
        cycle = [(i % 3) for i in range(30)]
        seqs = [list(cycle)] * 6
        corpus = corpus_of(seqs, 3)
        plan = evaluation.make_folds(corpus.student_ids(), 3, seed=5)
        reports = ngram.sweep_orders(corpus, range(2, 5), plan)
        for order, report in reports.items():
            assert report.cv_accuracy == 1.0, f"order {order}"

    def test_model_file_round_trip_and_stability(self, tmp_path):
        rng = np.random.default_rng(51)
        seqs = [rng.integers(0, 5, size=30).tolist() for _ in range(4)]
        table = ngram.fit(corpus_of(seqs, 5), max_order=3)
        p1, p2 = tmp_path / "m1.ngram", tmp_path / "m2.ngram"
        ngram.save_table(table, p1)
        loaded = ngram.load_table(p1)
        ngram.save_table(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        for seq in seqs:
            for t in range(1, len(seq)):
                assert (
                    ngram.predict_next(loaded, seq[:t]).predicted
                    == ngram.predict_next(table, seq[:t]).predicted
                )
