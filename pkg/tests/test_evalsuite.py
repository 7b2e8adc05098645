from collections import Counter

import numpy as np
import pytest

from bridgescore import (
    DegenerateLabelsError,
    EmptySetError,
    InfeasibleWindowsError,
    LabeledCorpus,
    LatentTrajectory,
    NoNontrivialPermutationError,
    ShuffleSpec,
    SpatialCovariance,
    SpdMatrix,
    ValidationError,
    bbscore,
    discrimination_accuracy,
    domain_swap_compare,
    global_shuffle,
    label_relation,
    local_shuffle,
    make_shuffle_set,
    mle_sigma,
    relative_accuracy,
    sample_bridge,
    stable_seed,
    threshold_classify,
)
from conftest import random_spd, random_trajectory


def point_multiset(traj):
    return Counter(tuple(p) for p in traj.points)


def simulate(spatial, d, T, n, seed0, prefix="doc"):
    return [
        sample_bridge(d, T, spatial, np.zeros(d), np.zeros(d), seed=seed0 + i,
                      id=f"{prefix}-{i:03d}")
        for i in range(n)
    ]


class TestStableSeed:
    def test_deterministic_and_distinct(self):
        assert stable_seed(7, "doc-1") == stable_seed(7, "doc-1")
        assert stable_seed(7, "doc-1") != stable_seed(7, "doc-2")
        assert stable_seed(7, "doc-1") != stable_seed(8, "doc-1")


class TestGlobalShuffle:
    def test_single_block_rejected(self, rng):
        t = random_trajectory(rng, 2, 3)  # 4 points
        with pytest.raises(NoNontrivialPermutationError):
            global_shuffle(t, 4, seed=0)
        with pytest.raises(NoNontrivialPermutationError):
            global_shuffle(t, 3, seed=0)  # 4 < 2 * 3

    def test_two_blocks_forced_swap(self):
        t = LatentTrajectory("a", "x", [[0.0], [1.0], [2.0], [3.0]])
        out = global_shuffle(t, 2, seed=11)
        np.testing.assert_array_equal(out.points, [[2.0], [3.0], [0.0], [1.0]])

    def test_multiset_preserved(self, rng):
        t = random_trajectory(rng, 2, 9)
        for seed in range(10):
            out = global_shuffle(t, 2, seed=seed)
            assert point_multiset(out) == point_multiset(t)
            assert out.T == t.T

    def test_block_one_never_identity(self, rng):
        t = random_trajectory(rng, 1, 4)
        for seed in range(25):
            out = global_shuffle(t, 1, seed=seed)
            assert not np.array_equal(out.points, t.points)


class TestLocalShuffle:
    def test_locality(self, rng):
        t = random_trajectory(rng, 2, 3)  # 4 points, window of 3 at start 0 or 1
        for seed in range(10):
            out = local_shuffle(t, 1, 3, seed=seed)
            changed = [i for i in range(4) if not np.array_equal(out.points[i], t.points[i])]
            assert changed
            assert set(changed) <= {0, 1, 2} or set(changed) <= {1, 2, 3}
            assert point_multiset(out) == point_multiset(t)

    def test_tiling_windows(self, rng):
        t = random_trajectory(rng, 1, 5)  # 6 points, two windows of 3 tile exactly
        out = local_shuffle(t, 2, 3, seed=4)
        for lo in (0, 3):
            window_before = Counter(tuple(p) for p in t.points[lo:lo + 3])
            window_after = Counter(tuple(p) for p in out.points[lo:lo + 3])
            assert window_before == window_after
            assert not np.array_equal(out.points[lo:lo + 3], t.points[lo:lo + 3])

    def test_infeasible_windows(self, rng):
        t = random_trajectory(rng, 1, 4)  # 5 points
        with pytest.raises(InfeasibleWindowsError):
            local_shuffle(t, 2, 3, seed=0)

    def test_multiset_and_change(self, rng):
        t = random_trajectory(rng, 3, 12)
        out = local_shuffle(t, 3, 3, seed=2)
        assert point_multiset(out) == point_multiset(t)
        assert not np.array_equal(out.points, t.points)


class TestMakeShuffleSet:
    def test_forced_single_copy(self):
        t = LatentTrajectory("a", "x", [[0.0], [1.0], [2.0], [3.0]])
        spec = ShuffleSpec(kind="global_block", block_size=2, copies=20, seed=3)
        copies = make_shuffle_set(t, spec)
        assert len(copies) == 1

    def test_long_sequence_yields_all_copies(self, rng):
        t = random_trajectory(rng, 2, 40)
        spec = ShuffleSpec(kind="global_block", block_size=1, copies=20, seed=3)
        copies = make_shuffle_set(t, spec)
        assert len(copies) == 20
        keys = {c.points.tobytes() for c in copies}
        assert len(keys) == 20

    def test_never_contains_original(self):
        t = LatentTrajectory("a", "x", np.ones((6, 2)))  # any permutation == original
        spec = ShuffleSpec(kind="global_block", block_size=1, copies=20, seed=3)
        assert make_shuffle_set(t, spec) == []

    def test_deterministic_per_seed(self, rng):
        t = random_trajectory(rng, 2, 15)
        spec = ShuffleSpec(kind="local_window", num_windows=2, window_size=3,
                           copies=20, seed=9)
        first = make_shuffle_set(t, spec)
        second = make_shuffle_set(t, spec)
        assert len(first) == len(second)
        for a, b in zip(first, second):
            assert np.array_equal(a.points, b.points)

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            ShuffleSpec(kind="sideways")
        with pytest.raises(ValidationError):
            ShuffleSpec(kind="local_window", window_size=1)
        with pytest.raises(ValidationError):
            ShuffleSpec(kind="global_block", copies=0)


@pytest.fixture(scope="module")
def sim_setup():
    rng = np.random.default_rng(77)
    d, T = 3, 30
    spatial = SpatialCovariance(sigma=SpdMatrix(random_spd(rng, d)))
    originals = simulate(spatial, d, T, 20, seed0=400)
    return spatial, originals


class TestDiscrimination:
    def test_tie_rule_via_injection(self, monkeypatch, sim_setup):
        spatial, originals = sim_setup
        import bridgescore.evalsuite as ev

        monkeypatch.setattr(ev, "make_shuffle_set", lambda traj, spec: [traj])
        spec = ShuffleSpec(kind="global_block", block_size=1, copies=5, seed=0)
        assert ev.discrimination_accuracy(originals, spec, spatial) == 0.5

    def test_true_sigma_detects_block_shuffles(self, sim_setup):
        spatial, originals = sim_setup
        spec = ShuffleSpec(kind="global_block", block_size=1, copies=10, seed=5)
        assert discrimination_accuracy(originals, spec, spatial) > 0.9

    def test_identity_sigma_still_beats_chance(self, sim_setup):
        _, originals = sim_setup
        spec = ShuffleSpec(kind="global_block", block_size=1, copies=10, seed=5)
        acc = discrimination_accuracy(originals, spec, SpatialCovariance.identity(3))
        assert acc > 0.5

    def test_local_windows_detectable(self, sim_setup):
        spatial, originals = sim_setup
        spec = ShuffleSpec(kind="local_window", num_windows=2, window_size=3,
                           copies=10, seed=5)
        assert discrimination_accuracy(originals, spec, spatial) > 0.65

    def test_corpus_order_invariant(self, sim_setup):
        spatial, originals = sim_setup
        spec = ShuffleSpec(kind="global_block", block_size=2, copies=5, seed=5)
        a = discrimination_accuracy(originals, spec, spatial)
        b = discrimination_accuracy(originals[::-1], spec, spatial)
        assert a == b

    def test_pvalue_ordering_matches_at_fixed_dof(self, sim_setup):
        spatial, originals = sim_setup
        spec = ShuffleSpec(kind="global_block", block_size=2, copies=5, seed=5)
        raw = discrimination_accuracy(originals, spec, spatial, use_pvalue=False)
        pv = discrimination_accuracy(originals, spec, spatial, use_pvalue=True)
        assert raw == pv

    def test_rescaling_with_refit_invariant(self, sim_setup):
        spatial, originals = sim_setup
        reference = simulate(spatial, 3, 30, 30, seed0=9000)
        fitted = mle_sigma(reference)
        spec = ShuffleSpec(kind="global_block", block_size=2, copies=5, seed=5)
        base = discrimination_accuracy(originals, spec, fitted)
        scaled = [LatentTrajectory(t.id, t.domain, 3.0 * t.points) for t in originals]
        refit = mle_sigma([LatentTrajectory(t.id, t.domain, 3.0 * t.points)
                           for t in reference])
        assert discrimination_accuracy(scaled, spec, refit) == base

    def test_per_document_flag(self, sim_setup):
        spatial, originals = sim_setup
        spec = ShuffleSpec(kind="global_block", block_size=2, copies=5, seed=5)
        pooled = discrimination_accuracy(originals, spec, spatial)
        per_doc = discrimination_accuracy(originals, spec, spatial, per_document=True)
        assert 0.0 <= per_doc <= 1.0 and 0.0 <= pooled <= 1.0

    def test_empty_corpus(self, sim_setup):
        spatial, _ = sim_setup
        spec = ShuffleSpec(kind="global_block", block_size=1, copies=5, seed=0)
        with pytest.raises(EmptySetError):
            discrimination_accuracy([], spec, spatial)


class TestRelativeAccuracy:
    def test_reduces_to_pairwise_discrimination(self, sim_setup):
        spatial, originals = sim_setup
        set_a = originals[:6]
        set_b = []
        for t in set_a:
            spec = ShuffleSpec(kind="global_block", block_size=1, copies=3,
                               seed=stable_seed(5, t.id))
            set_b.extend(make_shuffle_set(t, spec))
        acc = relative_accuracy(set_a, set_b, lambda a, b: 1, spatial)
        scores_a = {t.id: bbscore(t, spatial).bbscore for t in set_a}
        scores_b = {t.id: bbscore(t, spatial).bbscore for t in set_b}
        wins = sum(1 for sa in scores_a.values() for sb in scores_b.values() if sa < sb)
        assert acc == pytest.approx(wins / (len(set_a) * len(set_b)))

    def test_self_generated_truth_scores_one(self, sim_setup):
        spatial, originals = sim_setup
        set_a, set_b = originals[:5], originals[5:10]
        scores = {t.id: bbscore(t, spatial).bbscore for t in originals[:10]}

        def truth(a, b):
            return (scores[b.id] > scores[a.id]) - (scores[b.id] < scores[a.id])

        assert relative_accuracy(set_a, set_b, truth, spatial) == 1.0

    def test_complement_under_reversed_truth(self, sim_setup):
        spatial, originals = sim_setup
        set_a, set_b = originals[:5], originals[5:10]
        forward = relative_accuracy(set_a, set_b, lambda a, b: 1, spatial)
        backward = relative_accuracy(set_a, set_b, lambda a, b: -1, spatial)
        assert forward + backward == pytest.approx(1.0)

    def test_heavily_shuffled_set_loses(self, sim_setup):
        spatial, originals = sim_setup
        set_a = originals[:10]
        set_b = []
        for t in originals[10:20]:
            spec = ShuffleSpec(kind="global_block", block_size=1, copies=3,
                               seed=stable_seed(21, t.id))
            set_b.extend(make_shuffle_set(t, spec))
        assert relative_accuracy(set_a, set_b, lambda a, b: 1, spatial) > 0.85

    def test_empty_sets(self, sim_setup):
        spatial, originals = sim_setup
        with pytest.raises(EmptySetError):
            relative_accuracy([], originals, lambda a, b: 1, spatial)


def scored_corpus_by_class(spatial, d, T, counts, seed0, scales):
    """Simulated corpora whose classes are separated by residual scale."""
    items = []
    idx = 0
    for label, (count, scale) in zip(("low", "middle", "high"), zip(counts, scales)):
        for _ in range(count):
            base = sample_bridge(d, T, spatial, np.zeros(d), np.zeros(d),
                                 seed=seed0 + idx, id=f"c-{idx:04d}")
            pts = base.points * scale
            items.append((LatentTrajectory(base.id, base.domain, pts), label))
            idx += 1
    return items


class TestThresholdClassify:
    def test_separable_classes_perfect_rho(self, sim_setup):
        spatial, _ = sim_setup
        # scales 4 > 2 > 1 make "low"-coherence docs score far above "high"
        items = scored_corpus_by_class(spatial, 3, 30, (15, 15, 15), 3000,
                                       scales=(4.0, 2.0, 1.0))
        train = LabeledCorpus(items=tuple(items[::2]), label_order=("low", "middle", "high"))
        test = LabeledCorpus(items=tuple(items[1::2]), label_order=("low", "middle", "high"))
        predicted, rho = threshold_classify(train, test, spatial)
        assert rho == pytest.approx(1.0)
        assert [p for p in predicted] == [label for _, label in test.items]

    def test_independent_labels_near_zero_rho(self):
        rng = np.random.default_rng(8)
        spatial = SpatialCovariance(sigma=SpdMatrix(random_spd(rng, 2)))
        rhos = []
        for trial in range(3):
            trajs = simulate(spatial, 2, 20, 200, seed0=6000 + 500 * trial)
            labels = rng.choice(["low", "middle", "high"], size=200)
            items = tuple(zip(trajs, labels))
            train = LabeledCorpus(items=items[:100], label_order=("low", "middle", "high"))
            test = LabeledCorpus(items=items[100:], label_order=("low", "middle", "high"))
            _, rho = threshold_classify(train, test, spatial)
            rhos.append(abs(rho))
        assert float(np.median(rhos)) < 0.15

    def test_two_class_threshold_matches_sweep_oracle(self, sim_setup):
        spatial, _ = sim_setup
        items = scored_corpus_by_class(spatial, 3, 30, (12, 0, 12), 4000,
                                       scales=(3.0, 1.0, 1.0))
        items = [(t, "low" if lab == "low" else "high") for t, lab in items]
        train = LabeledCorpus(items=tuple(items), label_order=("low", "high"))
        predicted, _ = threshold_classify(train, train, spatial)
        scores = {t.id: bbscore(t, spatial).bbscore for t, _ in items}
        xs = np.array([scores[t.id] for t, _ in items])
        ys = np.array([0 if lab == "low" else 1 for _, lab in items])
        # exhaustive sweep over all candidate cuts
        best = -1
        for cut in np.concatenate([[xs.min() - 1], np.unique(xs), [xs.max() + 1]]):
            hits = int(np.sum((xs >= cut) & (ys == 0)) + np.sum((xs < cut) & (ys == 1)))
            best = max(best, hits)
        got = sum(1 for (t, lab), pred in zip(items, predicted) if lab == pred)
        assert got == best

    def test_predictions_monotone_in_score(self, sim_setup):
        spatial, _ = sim_setup
        items = scored_corpus_by_class(spatial, 3, 30, (10, 10, 10), 5000,
                                       scales=(3.0, 1.7, 1.0))
        corpus = LabeledCorpus(items=tuple(items), label_order=("low", "middle", "high"))
        predicted, _ = threshold_classify(corpus, corpus, spatial)
        order = {"low": 0, "middle": 1, "high": 2}
        scored = sorted(
            ((bbscore(t, spatial).bbscore, order[p]) for (t, _), p in zip(corpus.items, predicted))
        )
        ranks = [r for _, r in scored]
        assert all(a >= b for a, b in zip(ranks, ranks[1:]))

    def test_degenerate_labels(self, sim_setup):
        spatial, originals = sim_setup
        items = tuple((t, "low") for t in originals[:4])
        corpus = LabeledCorpus(items=items, label_order=("low", "middle", "high"))
        with pytest.raises(DegenerateLabelsError):
            threshold_classify(corpus, corpus, spatial)

    def test_label_relation_helper(self, sim_setup):
        _, originals = sim_setup
        labels = {originals[0].id: "low", originals[1].id: "high"}
        rel = label_relation(labels, ("low", "middle", "high"))
        assert rel(originals[1], originals[0]) == 1
        assert rel(originals[0], originals[1]) == -1
        assert rel(originals[0], originals[0]) == 0
        with pytest.raises(ValidationError):
            label_relation({"x": "unknown"}, ("low", "high"))


class TestDomainSwap:
    def test_same_corpus_exactly_half(self, sim_setup):
        spatial, originals = sim_setup
        result = domain_swap_compare(originals, originals, spatial, spatial)
        assert result["sigma_a"] == 0.5
        assert result["sigma_b"] == 0.5

    def test_swap_flips_favored_corpus(self):
        rng = np.random.default_rng(10)
        d, T, n = 3, 40, 40
        sig_a = random_spd(rng, d)
        # equal-determinant rotation so the difference is shape, not scale
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        sig_b = q @ sig_a @ q.T
        spatial_a = SpatialCovariance(sigma=SpdMatrix(sig_a))
        spatial_b = SpatialCovariance(sigma=SpdMatrix(0.5 * (sig_b + sig_b.T)))
        corpus_a = simulate(spatial_a, d, T, n, seed0=100, prefix="a")
        corpus_b = simulate(spatial_b, d, T, n, seed0=900, prefix="b")
        fit_a = mle_sigma(simulate(spatial_a, d, T, 60, seed0=5000, prefix="ha"))
        fit_b = mle_sigma(simulate(spatial_b, d, T, 60, seed0=7000, prefix="hb"))
        result = domain_swap_compare(corpus_a, corpus_b, fit_a, fit_b)
        assert result["sigma_a"] > 0.6
        assert result["sigma_b"] < 0.4

    def test_reference_model_included(self, sim_setup):
        spatial, originals = sim_setup
        result = domain_swap_compare(originals[:5], originals[5:10], spatial, spatial,
                                     sigma_ref=SpatialCovariance.identity(3))
        assert set(result) == {"sigma_a", "sigma_b", "sigma_ref"}

    def test_matched_pairing_requires_aligned_ids(self, sim_setup):
        spatial, originals = sim_setup
        with pytest.raises(ValidationError):
            domain_swap_compare(originals[:4], originals[4:8], spatial, spatial,
                                pairing="matched")
        renamed = [LatentTrajectory(t.id, "b", t.points + 1.0) for t in originals[:4]]
        result = domain_swap_compare(originals[:4], renamed, spatial, spatial,
                                     pairing="matched")
        assert 0.0 <= result["sigma_a"] <= 1.0
