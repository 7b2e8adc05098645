"""Command-line interface tying the library into reproducible workflows.

Every command is deterministic given its input files, flags, and --seed;
output files embed the tool version and input digests. Exit codes: 0 on
success, 1 on validation errors, 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import __version__
from .bridge import (
    SpatialCovariance,
    mle_sigma,
    pooled_covariance,
    sample_bridge,
)
from .encoder import LinearEncoder, RawSequence, TrainerState, train
from .errors import (
    InsufficientDataError,
    NotPositiveDefiniteError,
    NumericalError,
    SingularEstimateError,
    ValidationError,
)
from .evalsuite import (
    LabeledCorpus,
    ShuffleSpec,
    discrimination_accuracy,
    domain_swap_compare,
    label_relation,
    make_shuffle_set,
    relative_accuracy,
    stable_seed,
    threshold_classify,
)
from .fileio import (
    SigmaModel,
    TrajectoryRecord,
    file_digest,
    read_sigma_model,
    read_trajectories,
    read_weights,
    write_sigma_model,
    write_trainer_state,
    write_trajectories,
)
from .numerics import SpdMatrix, log_det_spd
from .score import bbscore_batch, heuristic_bbscore


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Default knobs shared by the commands; flags mirror these fields."""

    seed: int = 0
    epsilon: float = 1e-7
    use_pvalue: bool = False
    triplet_mode: bool = False
    copies: int = 20
    block_sizes: tuple = (1, 2, 5, 10)
    windows: tuple = (1, 2, 3)
    window_size: int = 3
    step_size: float = 1e-3
    batch_size: int = 8
    epochs: int = 10

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.copies < 1 or self.window_size < 2:
            raise ValidationError("copies must be >= 1 and window_size >= 2")
        if self.step_size <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("step_size > 0, batch_size >= 1, epochs >= 0 required")


_DEFAULTS = RunConfig()


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _load_corpus(path):
    records, header = read_trajectories(path)
    if not records:
        raise ValidationError(f"{path}: corpus contains no records")
    return records, header


def _check_model_dim(model: SigmaModel, records, path, model_path) -> None:
    d = records[0].trajectory.d
    if model.d != d:
        raise ValidationError(
            f"dimension mismatch: corpus {path} has d={d}, model {model_path} has d={model.d}"
        )


def _random_spd(d: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    return a @ a.T / d + 0.5 * np.eye(d)


def _parse_sigma_spec(spec: str, d: int) -> SpatialCovariance:
    if spec == "identity":
        return SpatialCovariance.identity(d)
    if spec.startswith("random-spd:"):
        return SpatialCovariance(sigma=SpdMatrix(_random_spd(d, int(spec.split(":", 1)[1]))))
    model = read_sigma_model(spec)
    if model.d != d:
        raise ValidationError(f"sigma model {spec} has d={model.d}, requested d={d}")
    return model.spatial


def _parse_length_spec(spec: str) -> tuple[int, int]:
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        lo, hi = int(lo), int(hi)
    else:
        lo = hi = int(spec)
    if lo < 2 or hi < lo:
        raise ValidationError(f"invalid length spec {spec!r}; need 2 <= min <= max")
    return lo, hi


def cmd_simulate(args) -> int:
    spatial = _parse_sigma_spec(args.sigma, args.d)
    t_lo, t_hi = _parse_length_spec(args.T)
    if args.endpoints != "zero" and not args.endpoints.startswith("random"):
        raise ValidationError(f"endpoints must be 'zero' or 'random[:scale]', got {args.endpoints!r}")
    scale = 0.0
    if args.endpoints.startswith("random"):
        parts = args.endpoints.split(":", 1)
        scale = float(parts[1]) if len(parts) == 2 else 1.0
    records = []
    for i in range(args.n):
        doc_id = f"{args.domain}-{i:05d}"
        rng = np.random.default_rng(stable_seed(args.seed, doc_id))
        T = int(rng.integers(t_lo, t_hi + 1)) if t_hi > t_lo else t_lo
        if scale > 0.0:
            s0 = scale * rng.standard_normal(args.d)
            sT = scale * rng.standard_normal(args.d)
        else:
            s0 = np.zeros(args.d)
            sT = np.zeros(args.d)
        traj = sample_bridge(args.d, T, spatial, s0, sT, rng, id=doc_id, domain=args.domain)
        records.append(TrajectoryRecord(trajectory=traj, label=args.label))
    meta = {
        "seed": args.seed,
        "spec": {"d": args.d, "T": args.T, "n": args.n, "sigma": args.sigma,
                 "endpoints": args.endpoints, "domain": args.domain},
    }
    write_trajectories(args.out, records, meta=meta)
    print(f"simulate: wrote {len(records)} trajectories to {args.out} (seed={args.seed})")
    return 0


def cmd_fit(args) -> int:
    records, _ = _load_corpus(args.input)
    if args.domain is not None:
        records = [r for r in records if r.trajectory.domain == args.domain]
        if not records:
            raise InsufficientDataError(f"{args.input}: no records in domain {args.domain!r}")
    trajs = [r.trajectory for r in records]
    m, weight = pooled_covariance(trajs)
    d = m.shape[0]
    if weight < d:
        raise InsufficientDataError(f"pooled weight {weight} is below dimension {d}")
    sigma2 = float(np.trace(m)) / d
    blended = (1.0 - args.epsilon) * m + args.epsilon * sigma2 * np.eye(d)
    try:
        spatial = SpatialCovariance(sigma=SpdMatrix(blended))
    except NotPositiveDefiniteError as exc:
        raise SingularEstimateError(f"fitted covariance is singular: {exc}") from exc
    domain = args.domain if args.domain is not None else records[0].trajectory.domain
    model = SigmaModel(
        spatial=spatial,
        weight=weight,
        domain=domain,
        epsilon=args.epsilon,
        source_corpus_digest=file_digest(args.input),
    )
    write_sigma_model(args.out, model)
    print(
        f"fit: d={d} weight={weight} logdet={log_det_spd(spatial.sigma):.6f} "
        f"trace={float(np.trace(spatial.sigma.entries)):.6f} sigma2={sigma2:.6f} "
        f"epsilon={args.epsilon} seed={args.seed} -> {args.out}"
    )
    if args.compare_to:
        ref = read_sigma_model(args.compare_to)
        if ref.d != d:
            raise ValidationError(f"--compare-to model has d={ref.d}, fitted d={d}")
        err = np.linalg.norm(spatial.sigma.entries - ref.spatial.sigma.entries)
        rel = err / np.linalg.norm(ref.spatial.sigma.entries)
        print(f"fit: relative Frobenius error vs {args.compare_to}: {rel:.6f}")
    return 0


def cmd_score(args) -> int:
    records, _ = _load_corpus(args.input)
    model = read_sigma_model(args.model)
    _check_model_dim(model, records, args.input, args.model)
    digest = file_digest(args.input)
    if digest == model.source_corpus_digest and not args.allow_in_sample:
        raise ValidationError(
            f"{args.input} is the corpus the model was fitted on; "
            "pass --allow-in-sample to score it anyway (biases bbscore toward 1)"
        )
    reports = bbscore_batch([r.trajectory for r in records], model.spatial)
    if args.with_heuristic:
        reports = [
            dataclasses.replace(rep, heuristic_score=heuristic_bbscore(rec.trajectory))
            for rep, rec in zip(reports, records)
        ]
    header = {
        "kind": "scores",
        "created_by": f"bridgescore {__version__}",
        "model": args.model,
        "model_digest": file_digest(args.model),
        "corpus_digest": digest,
        "in_sample": bool(digest == model.source_corpus_digest),
        "seed": args.seed,
    }
    if args.with_heuristic:
        header["heuristic"] = "reconstruction"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for rep in reports:
            row = {
                "id": rep.trajectory_id,
                "bbscore": rep.bbscore,
                "statistic": rep.statistic,
                "dof": rep.dof,
                "p_value": rep.p_value,
            }
            if rep.heuristic_score is not None:
                row["heuristic_score"] = rep.heuristic_score
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    mean_score = float(np.mean([r.bbscore for r in reports]))
    print(f"score: {len(reports)} documents, mean bbscore {mean_score:.4f} -> {args.out}")
    return 0


def cmd_shuffle(args) -> int:
    records, _ = _load_corpus(args.input)
    out_records = []
    for rec in records:
        spec = _shuffle_spec(args, seed=stable_seed(args.seed, rec.trajectory.id))
        for copy in make_shuffle_set(rec.trajectory, spec):
            out_records.append(TrajectoryRecord(trajectory=copy))
    meta = {"seed": args.seed, "kind_of_shuffle": args.kind, "copies": args.copies,
            "source_corpus_digest": file_digest(args.input)}
    write_trajectories(args.out, out_records, meta=meta)
    print(f"shuffle: wrote {len(out_records)} copies of {len(records)} originals to {args.out} "
          f"(seed={args.seed})")
    return 0


def _shuffle_spec(args, seed: int) -> ShuffleSpec:
    if args.kind == "global":
        return ShuffleSpec(kind="global_block", block_size=args.block_size,
                           copies=args.copies, seed=seed)
    return ShuffleSpec(kind="local_window", num_windows=args.windows,
                       window_size=args.window_size, copies=args.copies, seed=seed)


def cmd_discriminate(args) -> int:
    records, _ = _load_corpus(args.input)
    model = read_sigma_model(args.model)
    _check_model_dim(model, records, args.input, args.model)
    originals = [r.trajectory for r in records]
    print(f"discrimination ({args.kind}, copies={args.copies}, seed={args.seed}, "
          f"use_pvalue={args.use_pvalue}, per_document={args.per_document})")
    if args.kind == "global":
        print(f"{'block_size':>10}  {'accuracy':>8}")
        for bs in args.block_sizes:
            spec = ShuffleSpec(kind="global_block", block_size=bs,
                               copies=args.copies, seed=args.seed)
            acc = discrimination_accuracy(originals, spec, model.spatial,
                                          use_pvalue=args.use_pvalue,
                                          per_document=args.per_document)
            print(f"{bs:>10}  {acc:>8.4f}")
    else:
        print(f"{'windows':>10}  {'accuracy':>8}")
        for w in args.windows:
            spec = ShuffleSpec(kind="local_window", num_windows=w,
                               window_size=args.window_size,
                               copies=args.copies, seed=args.seed)
            acc = discrimination_accuracy(originals, spec, model.spatial,
                                          use_pvalue=args.use_pvalue,
                                          per_document=args.per_document)
            print(f"{w:>10}  {acc:>8.4f}")
    return 0


def cmd_relative(args) -> int:
    records_a, _ = _load_corpus(args.set_a)
    records_b, _ = _load_corpus(args.set_b)
    model = read_sigma_model(args.model)
    _check_model_dim(model, records_a, args.set_a, args.model)
    set_a = [r.trajectory for r in records_a]
    set_b = [r.trajectory for r in records_b]
    if args.truth == "a-more-coherent":
        relation = lambda a, b: 1  # noqa: E731
    else:
        labels = {}
        for rec in records_a + records_b:
            if rec.label is None:
                raise ValidationError(
                    f"record {rec.trajectory.id!r} has no label; --truth labels needs labeled sets"
                )
            labels[rec.trajectory.id] = rec.label
        relation = label_relation(labels, args.label_order.split(","))
    acc = relative_accuracy(set_a, set_b, relation, model.spatial, use_pvalue=args.use_pvalue)
    print(f"relative accuracy: {acc:.4f} over {len(set_a)}x{len(set_b)} cross pairs "
          f"(truth={args.truth}, use_pvalue={args.use_pvalue}, seed={args.seed})")
    return 0


def _labeled_corpus(path, order) -> LabeledCorpus:
    records, _ = _load_corpus(path)
    items = []
    for rec in records:
        if rec.label is None:
            raise ValidationError(f"{path}: record {rec.trajectory.id!r} has no label")
        items.append((rec.trajectory, rec.label))
    return LabeledCorpus(items=tuple(items), label_order=tuple(order))


def cmd_classify(args) -> int:
    order = args.label_order.split(",")
    train_corpus = _labeled_corpus(args.train, order)
    test_corpus = _labeled_corpus(args.test, order)
    model = read_sigma_model(args.model)
    use_pvalue = {"auto": None, "score": False, "pvalue": True}[args.axis]
    predicted, rho = threshold_classify(train_corpus, test_corpus, model.spatial,
                                        use_pvalue=use_pvalue)
    hits = sum(1 for (_, truth), pred in zip(test_corpus.items, predicted) if truth == pred)
    print(f"classify: spearman_rho={rho:.4f} accuracy={hits / len(predicted):.4f} "
          f"n={len(predicted)} axis={args.axis} seed={args.seed}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            header = {"kind": "predictions", "created_by": f"bridgescore {__version__}",
                      "spearman_rho": rho, "seed": args.seed}
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
            for (traj, truth), pred in zip(test_corpus.items, predicted):
                fh.write(json.dumps({"id": traj.id, "label": truth, "predicted": pred},
                                    sort_keys=True, separators=(",", ":")) + "\n")
    return 0


def cmd_compare_domains(args) -> int:
    records_a, _ = _load_corpus(args.corpus_a)
    records_b, _ = _load_corpus(args.corpus_b)
    sigma_a = read_sigma_model(args.model_a)
    sigma_b = read_sigma_model(args.model_b)
    sigma_ref = read_sigma_model(args.model_ref) if args.model_ref else None
    results = domain_swap_compare(
        [r.trajectory for r in records_a],
        [r.trajectory for r in records_b],
        sigma_a.spatial,
        sigma_b.spatial,
        sigma_ref.spatial if sigma_ref else None,
        pairing=args.pairing,
    )
    print(f"domain comparison (pairing={args.pairing}, seed={args.seed})")
    print(f"{'model':>10}  {'frac A more coherent':>22}")
    for tag in ("sigma_a", "sigma_b", "sigma_ref"):
        if tag in results:
            print(f"{tag:>10}  {results[tag]:>22.4f}")
    return 0


def cmd_train(args) -> int:
    records, _ = _load_corpus(args.corpora)
    corpora: dict[str, list[RawSequence]] = {}
    for rec in records:
        traj = rec.trajectory
        corpora.setdefault(traj.domain, []).append(
            RawSequence(id=traj.id, domain=traj.domain, inputs=traj.points)
        )
    d_in = records[0].trajectory.d
    if args.init == "identity":
        weights = np.eye(args.d_out if args.d_out else d_in, d_in)
    else:
        weights = read_weights(args.init)
        if weights.shape[1] != d_in:
            raise ValidationError(
                f"init weights expect d_in={weights.shape[1]}, corpus has d={d_in}"
            )
    state = TrainerState(
        encoder=LinearEncoder(weights=weights),
        epsilon=args.epsilon,
        step_size=args.step_size,
        batch_size=args.batch_size,
        triplet_mode=args.triplet_mode,
        shrinkage=not args.no_shrinkage,
        seed=args.seed,
    )
    state, trace = train(state, corpora, args.epochs)
    if trace:
        print(f"train: initial nll={trace[0]:.6f}")
        for epoch, value in enumerate(trace[1:], start=1):
            print(f"train: epoch {epoch}: nll={value:.6f}")
    write_trainer_state(args.out, state, extra={"seed": args.seed, "epochs": args.epochs,
                                                "nll_trace": trace,
                                                "source_corpus_digest": file_digest(args.corpora)})
    print(f"train: wrote state to {args.out} (seed={args.seed})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgescore",
        description="Brownian-bridge sequence modeling, covariance fitting, and coherence scoring",
    )
    parser.add_argument("--version", action="version", version=f"bridgescore {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write simulated bridge trajectories")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--T", required=True, help="length T, fixed ('50') or range ('10:60')")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", default="identity",
                   help="'identity', 'random-spd:<seed>', or a sigma model file")
    p.add_argument("--endpoints", default="zero", help="'zero' or 'random[:scale]'")
    p.add_argument("--domain", default="sim")
    p.add_argument("--label", default=None)
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the pooled spatial covariance")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--domain", default=None, help="only fit records in this domain")
    p.add_argument("--epsilon", type=float, default=_DEFAULTS.epsilon)
    p.add_argument("--compare-to", default=None, help="print relative error vs this model")
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score a corpus against a fitted model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--allow-in-sample", action="store_true")
    p.add_argument("--with-heuristic", action="store_true",
                   help="also emit the reconstructed heuristic score")
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("shuffle", help="write shuffled copies of each document")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kind", choices=("global", "local"), default="global")
    p.add_argument("--block-size", type=int, default=1)
    p.add_argument("--windows", type=int, default=1)
    p.add_argument("--window-size", type=int, default=_DEFAULTS.window_size)
    p.add_argument("--copies", type=int, default=_DEFAULTS.copies)
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shuffle)

    p = sub.add_parser("discriminate", help="original-vs-shuffled discrimination accuracy")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--kind", choices=("global", "local"), default="global")
    p.add_argument("--block-sizes", type=_int_list, default=list(_DEFAULTS.block_sizes))
    p.add_argument("--windows", type=_int_list, default=list(_DEFAULTS.windows))
    p.add_argument("--window-size", type=int, default=_DEFAULTS.window_size)
    p.add_argument("--copies", type=int, default=_DEFAULTS.copies)
    p.add_argument("--use-pvalue", action="store_true")
    p.add_argument("--per-document", action="store_true")
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.set_defaults(func=cmd_discriminate)

    p = sub.add_parser("relative", help="relative accuracy over cross-set pairs")
    p.add_argument("--set-a", required=True)
    p.add_argument("--set-b", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--truth", choices=("labels", "a-more-coherent"), default="a-more-coherent")
    p.add_argument("--label-order", default="low,middle,high",
                   help="labels from least to most coherent")
    p.add_argument("--use-pvalue", action="store_true")
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.set_defaults(func=cmd_relative)

    p = sub.add_parser("classify", help="threshold classification with Spearman correlation")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--label-order", default="low,middle,high")
    p.add_argument("--axis", choices=("auto", "score", "pvalue"), default="auto")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("compare-domains", help="score two corpora under swapped domain models")
    p.add_argument("--corpus-a", required=True)
    p.add_argument("--corpus-b", required=True)
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--model-ref", default=None)
    p.add_argument("--pairing", choices=("cross", "matched"), default="cross")
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.set_defaults(func=cmd_compare_domains)

    p = sub.add_parser("train", help="train the linear encoder on a multi-domain corpus")
    p.add_argument("--corpora", required=True, help="trajectory file; domains come from records")
    p.add_argument("--epochs", type=int, default=_DEFAULTS.epochs)
    p.add_argument("--step-size", type=float, default=_DEFAULTS.step_size)
    p.add_argument("--batch-size", type=int, default=_DEFAULTS.batch_size)
    p.add_argument("--epsilon", type=float, default=_DEFAULTS.epsilon)
    p.add_argument("--triplet-mode", action="store_true")
    p.add_argument("--no-shrinkage", action="store_true",
                   help="update covariances with the raw MLE instead of the epsilon blend")
    p.add_argument("--d-out", type=int, default=None)
    p.add_argument("--init", default="identity", help="'identity' or a JSON weights file")
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
