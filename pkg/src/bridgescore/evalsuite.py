"""Coherence evaluation harness: shuffles, discrimination, classification.

Shuffles permute latent vectors directly (one vector per sentence), so the
same machinery runs on simulated and ingested embedding trajectories alike.
All randomized operations are deterministic given their seed; per-document
randomness derives from a stable hash of the document id, so results never
depend on corpus order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .bridge import LatentTrajectory, SpatialCovariance
from .errors import (
    DegenerateInputError,
    DegenerateLabelsError,
    DimensionMismatchError,
    EmptySetError,
    InfeasibleWindowsError,
    NoNontrivialPermutationError,
    ValidationError,
)
from .numerics import spearman_rho
from .score import bbscore


def stable_seed(base_seed: int, *parts) -> int:
    """A 64-bit seed derived from a base seed and string parts via SHA-256."""
    text = "|".join([str(int(base_seed)), *map(str, parts)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class ShuffleSpec:
    """Parameters of a shuffle perturbation task.

    kind "global_block": permute consecutive blocks of block_size points.
    kind "local_window": permute points inside num_windows disjoint windows
    of window_size consecutive points each.
    """

    kind: str
    block_size: int = 1
    num_windows: int = 1
    window_size: int = 3
    copies: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("global_block", "local_window"):
            raise ValidationError(f"unknown shuffle kind {self.kind!r}")
        if self.kind == "global_block" and self.block_size < 1:
            raise ValidationError(f"block_size must be >= 1, got {self.block_size}")
        if self.kind == "local_window":
            if self.window_size < 2:
                raise ValidationError(f"window_size must be >= 2, got {self.window_size}")
            if self.num_windows < 1:
                raise ValidationError(f"num_windows must be >= 1, got {self.num_windows}")
        if self.copies < 1:
            raise ValidationError(f"copies must be >= 1, got {self.copies}")


def _nonidentity_permutation(rng: np.random.Generator, n: int) -> np.ndarray:
    identity = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if np.any(perm != identity):
            return perm


def global_shuffle(traj: LatentTrajectory, block_size: int, seed, *,
                   new_id: str | None = None) -> LatentTrajectory:
    """Permute consecutive blocks of block_size points (final short block kept).

    The block permutation is uniform over non-identity permutations.
    Requires T+1 >= 2 * block_size.
    """
    if block_size < 1:
        raise ValidationError(f"block_size must be >= 1, got {block_size}")
    n = traj.T + 1
    if n < 2 * block_size:
        raise NoNontrivialPermutationError(
            f"trajectory {traj.id!r}: {n} points cannot form two blocks of {block_size}"
        )
    rng = np.random.default_rng(seed)
    starts = range(0, n, block_size)
    blocks = [traj.points[i:i + block_size] for i in starts]
    perm = _nonidentity_permutation(rng, len(blocks))
    points = np.concatenate([blocks[i] for i in perm])
    return LatentTrajectory(
        id=new_id or f"{traj.id}#global-b{block_size}",
        domain=traj.domain,
        points=points,
    )


def local_shuffle(traj: LatentTrajectory, w: int, window_size: int, seed, *,
                  new_id: str | None = None) -> LatentTrajectory:
    """Shuffle points inside w disjoint windows of window_size consecutive points.

    Window placements are uniform over all disjoint placements; each selected
    window receives a uniform non-identity internal permutation. Points
    outside the windows are untouched.
    """
    if window_size < 2:
        raise ValidationError(f"window_size must be >= 2, got {window_size}")
    if w < 1:
        raise ValidationError(f"number of windows must be >= 1, got {w}")
    n = traj.T + 1
    slots = n - w * window_size + w
    if slots < w:
        raise InfeasibleWindowsError(
            f"trajectory {traj.id!r}: cannot place {w} disjoint windows of {window_size} in {n} points"
        )
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(slots, size=w, replace=False))
    starts = picks + np.arange(w) * (window_size - 1)
    points = traj.points.copy()
    for s in starts:
        perm = _nonidentity_permutation(rng, window_size)
        points[s:s + window_size] = points[s:s + window_size][perm]
    return LatentTrajectory(
        id=new_id or f"{traj.id}#local-w{w}",
        domain=traj.domain,
        points=points,
    )


def make_shuffle_set(traj: LatentTrajectory, spec: ShuffleSpec) -> list[LatentTrajectory]:
    """Up to spec.copies distinct shuffled copies; never contains the original.

    Duplicates (exact point-sequence equality) are discarded, so short
    sequences can yield fewer copies than requested. Deterministic per seed.
    """
    rng = np.random.default_rng(spec.seed)
    seen = {traj.points.tobytes()}
    out: list[LatentTrajectory] = []
    for i in range(spec.copies):
        if spec.kind == "global_block":
            copy = global_shuffle(traj, spec.block_size, rng, new_id=f"{traj.id}#g{spec.block_size}-{i}")
        else:
            copy = local_shuffle(traj, spec.num_windows, spec.window_size, rng,
                                 new_id=f"{traj.id}#l{spec.num_windows}-{i}")
        key = copy.points.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(copy)
    return out


def _incoherence(report, use_pvalue: bool) -> float:
    # Orient so that larger always means less coherent.
    return -report.p_value if use_pvalue else report.bbscore


def discrimination_accuracy(originals, spec: ShuffleSpec, spatial: SpatialCovariance,
                            use_pvalue: bool = False, per_document: bool = False) -> float:
    """Original-vs-shuffled discrimination accuracy.

    Every (original, shuffled copy) pair scores 1 when the original comes out
    strictly more coherent (lower bbscore, or higher p-value with
    use_pvalue), 0.5 on ties, else 0. Pooled over all pairs by default;
    per_document averages per-document accuracies instead. Shuffle seeds are
    derived per document from spec.seed and the document id.
    """
    originals = sorted(originals, key=lambda t: t.id)
    if not originals:
        raise EmptySetError("discrimination needs a nonempty corpus")
    credits = []
    doc_means = []
    for traj in originals:
        doc_spec = replace(spec, seed=stable_seed(spec.seed, traj.id))
        copies = make_shuffle_set(traj, doc_spec)
        base = _incoherence(bbscore(traj, spatial), use_pvalue)
        doc_credits = []
        for copy in copies:
            other = _incoherence(bbscore(copy, spatial), use_pvalue)
            doc_credits.append(1.0 if base < other else 0.5 if base == other else 0.0)
        credits.extend(doc_credits)
        if doc_credits:
            doc_means.append(float(np.mean(doc_credits)))
    if not credits:
        raise EmptySetError("no shuffled copies were produced")
    return float(np.mean(doc_means)) if per_document else float(np.mean(credits))


def label_relation(labels, order):
    """Pairwise coherence relation from ordinal labels.

    labels maps trajectory id to label; order lists labels from least to
    most coherent. The returned relation(a, b) is +1 when a is more
    coherent, -1 when less, 0 on equal labels.
    """
    rank = {lab: i for i, lab in enumerate(order)}
    missing = [lab for lab in set(labels.values()) if lab not in rank]
    if missing:
        raise ValidationError(f"labels {missing} not in declared order {list(order)}")

    def relation(a: LatentTrajectory, b: LatentTrajectory) -> int:
        ra, rb = rank[labels[a.id]], rank[labels[b.id]]
        return (ra > rb) - (ra < rb)

    return relation


def relative_accuracy(set_a, set_b, coherence_order, spatial: SpatialCovariance,
                      use_pvalue: bool = False) -> float:
    """Fraction of cross pairs whose score ordering matches the ground truth.

    coherence_order(a, b) returns +1 / -1 / 0 for a more / less / equally
    coherent than b; 0 pairs drop out of the denominator. Lower score means
    more coherent; pairs with tied scores never count as concordant.
    """
    set_a = sorted(set_a, key=lambda t: t.id)
    set_b = sorted(set_b, key=lambda t: t.id)
    if not set_a or not set_b:
        raise EmptySetError("relative accuracy needs two nonempty sets")
    scores_a = [_incoherence(bbscore(t, spatial), use_pvalue) for t in set_a]
    scores_b = [_incoherence(bbscore(t, spatial), use_pvalue) for t in set_b]
    concordant = 0
    counted = 0
    for a, sa in zip(set_a, scores_a):
        for b, sb in zip(set_b, scores_b):
            truth = coherence_order(a, b)
            if truth == 0:
                continue
            counted += 1
            if (truth > 0 and sa < sb) or (truth < 0 and sa > sb):
                concordant += 1
    if counted == 0:
        raise DegenerateInputError("ground truth orders no cross pair")
    return concordant / counted


@dataclass(frozen=True)
class LabeledCorpus:
    """Trajectories with ordinal coherence labels from a declared ordered set."""

    items: tuple
    label_order: tuple

    def __post_init__(self):
        items = tuple(self.items)
        order = tuple(self.label_order)
        if len(set(order)) != len(order):
            raise ValidationError("label_order contains duplicates")
        known = set(order)
        for traj, label in items:
            if label not in known:
                raise ValidationError(
                    f"trajectory {traj.id!r} has label {label!r} outside {list(order)}"
                )
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "label_order", order)


def _best_boundary(values_low, values_high) -> float:
    """Threshold maximizing accuracy for 'x >= threshold means less coherent'."""
    both = np.concatenate([values_low, values_high])
    candidates = np.unique(both)
    midpoints = (candidates[:-1] + candidates[1:]) / 2.0
    candidates = np.concatenate([[both.min() - 1.0], midpoints, [both.max() + 1.0]])
    best_t, best_hits = candidates[0], -1
    for t in candidates:
        hits = int(np.sum(values_low >= t)) + int(np.sum(values_high < t))
        if hits > best_hits:
            best_hits, best_t = hits, float(t)
    return best_t


def threshold_classify(train: LabeledCorpus, test: LabeledCorpus,
                       spatial: SpatialCovariance, use_pvalue: bool | None = None):
    """Threshold discretization of scores into ordinal classes.

    Thresholds between each adjacent label pair maximize training split
    accuracy on the score axis (p-value axis when lengths vary, or when
    use_pvalue is set). Returns (predicted labels for test items, Spearman
    rank correlation between predicted and true labels). When either side of
    the correlation is constant (uninformative labels can collapse all
    predictions into one class) the correlation is reported as 0.0.
    """
    if train.label_order != test.label_order:
        raise ValidationError("train and test corpora declare different label orders")
    order = train.label_order
    present = {label for _, label in train.items}
    if len(present) < 2:
        raise DegenerateLabelsError(f"training corpus has labels {sorted(present)}; need >= 2")
    if use_pvalue is None:
        lengths = {traj.T for traj, _ in train.items} | {traj.T for traj, _ in test.items}
        use_pvalue = len(lengths) > 1
    rank = {lab: i for i, lab in enumerate(order)}
    train_x = np.array([_incoherence(bbscore(t, spatial), use_pvalue) for t, _ in train.items])
    train_y = np.array([rank[label] for _, label in train.items])
    boundaries = []
    for c in range(len(order) - 1):
        low = train_x[train_y <= c]      # less coherent side: higher scores
        high = train_x[train_y > c]
        if low.size == 0 or high.size == 0:
            boundaries.append(np.inf if low.size == 0 else -np.inf)
            continue
        boundaries.append(_best_boundary(low, high))
    # Predictions must be monotone in score even if per-pair optima cross.
    boundaries = np.sort(np.asarray(boundaries))[::-1]
    predicted = []
    for traj, _ in test.items:
        x = _incoherence(bbscore(traj, spatial), use_pvalue)
        predicted.append(order[int(np.sum(x < boundaries))])
    true_idx = [rank[label] for _, label in test.items]
    pred_idx = [rank[label] for label in predicted]
    try:
        rho = spearman_rho(pred_idx, true_idx)
    except DegenerateInputError:
        rho = 0.0
    return predicted, rho


def domain_swap_compare(corpus_a, corpus_b, sigma_a: SpatialCovariance,
                        sigma_b: SpatialCovariance, sigma_ref: SpatialCovariance | None = None,
                        pairing: str = "cross") -> dict:
    """Score two corpora under swapped domain models.

    For each supplied covariance, returns the fraction of (a, b) pairs with
    bbscore(a) < bbscore(b), ties counting 0.5, i.e. how often corpus A looks
    more coherent under that model. pairing "cross" uses the full cross
    product; "matched" pairs records with equal ids.
    """
    if pairing not in ("cross", "matched"):
        raise ValidationError(f"pairing must be 'cross' or 'matched', got {pairing!r}")
    corpus_a = sorted(corpus_a, key=lambda t: t.id)
    corpus_b = sorted(corpus_b, key=lambda t: t.id)
    if not corpus_a or not corpus_b:
        raise EmptySetError("domain comparison needs two nonempty corpora")
    models = {"sigma_a": sigma_a, "sigma_b": sigma_b}
    if sigma_ref is not None:
        models["sigma_ref"] = sigma_ref
    for tag, model in models.items():
        if model.dim != corpus_a[0].d:
            raise DimensionMismatchError(
                f"{tag} has dim {model.dim}, corpora have d={corpus_a[0].d}"
            )
    if pairing == "matched":
        ids_a = {t.id for t in corpus_a}
        ids_b = {t.id for t in corpus_b}
        if ids_a != ids_b:
            raise ValidationError("matched pairing requires identical id sets in both corpora")
    results = {}
    for tag, model in models.items():
        scores_a = {t.id: bbscore(t, model).bbscore for t in corpus_a}
        scores_b = {t.id: bbscore(t, model).bbscore for t in corpus_b}
        if pairing == "matched":
            pairs = [(scores_a[i], scores_b[i]) for i in sorted(scores_a)]
        else:
            pairs = [(sa, sb) for sa in scores_a.values() for sb in scores_b.values()]
        credit = sum(1.0 if sa < sb else 0.5 if sa == sb else 0.0 for sa, sb in pairs)
        results[tag] = credit / len(pairs)
    return results
