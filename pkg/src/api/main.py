from dotenv import load_dotenv # Import load_dotenv
load_dotenv() # Load environment variables from .env file

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

sys.path.append(str(Path(__file__).parent.parent.parent))

from pydantic import ValidationError

from src.core.config import VERSION, Settings, configure_logging, get_settings, load_config_file
from src.core.errors import ArgumentError, ConfigurationError, DegeneracyError, RankFusionError
from src.core.schemas import MergedRecord, RunManifest, SynthConfig, TrainConfig
from src.core import storage
from src.processors.similarity import FingerprintSimilarity, hits_frame
from src.processors.tokenizer import SmilesTokenizer
from src.services.elo import elo_report
from src.services.ensemble_study import STUDY_SCHEMES, average_gain, pairwise_study
from src.services.metrics import DEFAULT_KS, buckets_frame, evaluate
from src.services.ranking import BASELINE_KINDS, baseline_theta, merge, single_model_lists, weights_from_top1
from src.services.synthgen import complementary_fixture, gen_dataset
from src.services.theta_learner import ThetaLearner

logger = logging.getLogger(__name__)

FIXTURES = ("complementary",)
_INTERNAL_ARGS = ("func", "command", "config", "log_level", "progress")


# --- argument helpers ---

def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise ArgumentError(f"{args.command}: missing required option(s) {', '.join(missing)}")


def _train_config(args: argparse.Namespace) -> TrainConfig:
    try:
        return TrainConfig(
            steps=args.steps,
            lr0=args.lr0,
            T0=args.t0,
            decay_factor=args.decay_factor,
            decay_every=args.decay_every,
            epsilon_margin=args.epsilon_margin,
            w_reg=args.w_reg,
            schedule_kind=args.schedule,
            parameterization=args.parameterization,
        )
    except ValidationError as e:
        raise ArgumentError(f"Invalid training configuration: {e.errors()[0]['msg']}")


def _write_manifest(
    args: argparse.Namespace,
    output: Path,
    inputs: Iterable[Optional[str]],
    seed: Optional[int] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _INTERNAL_ARGS}
    inputs = [*inputs, args.config]
    digests = {str(p): storage.file_digest(p) for p in inputs if p is not None and Path(p).is_file()}
    manifest = RunManifest(
        subcommand=args.command, version=VERSION, seed=seed, config=config, inputs=digests, extra=extra or {}
    )
    storage.write_manifest(output, manifest)


# --- subcommands ---

def cmd_fit(args: argparse.Namespace) -> int:
    _require(args, "predictions", "ground_truth", "out")
    cfg = _train_config(args)
    dataset = storage.load_instances(args.predictions, args.ground_truth, args.k_max)
    logger.info(f"Fitting theta on {len(dataset)} inputs (k_max={args.k_max}, {cfg.parameterization})")
    result = ThetaLearner(cfg).fit(dataset, args.k_max, progress=args.progress)
    if result.status == "empty_pair_table":
        raise DegeneracyError(f"Cannot fit theta: {result.warning}")

    out = Path(args.out)
    log_path = Path(args.log_out) if args.log_out else out.with_suffix(".log.csv")
    storage.write_theta(out, result.theta)
    storage.write_csv(log_path, result.history)
    _write_manifest(args, out, [args.predictions, args.ground_truth],
                    extra={"n_pairs": result.n_pairs, "n_instances": result.n_instances, "log": str(log_path)})
    logger.info(f"✅ Theta checkpoint written to {out}")
    return 0


def cmd_merge(args: argparse.Namespace) -> int:
    _require(args, "predictions", "theta", "out")
    if args.output_limit <= 0:
        raise ArgumentError(f"--output-limit must be positive, got {args.output_limit}")
    theta = storage.read_theta(args.theta)

    def records():
        aligned = None
        for instance in storage.iter_instances(args.predictions, k_max=theta.k_max):
            if aligned is None:
                aligned = theta.align(instance.model_ids)
            merged = merge(instance, aligned, args.output_limit)
            yield MergedRecord(
                input_id=instance.input_id,
                ranked=[key for key, _ in merged],
                scores=[score for _, score in merged] if args.with_scores else None,
            )

    out = Path(args.out)
    n = storage.write_jsonl(out, records())
    _write_manifest(args, out, [args.predictions, args.theta])
    logger.info(f"✅ Merged {n} inputs into {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    _require(args, "merged", "ground_truth", "out")
    merged = storage.read_merged(args.merged)
    truth = storage.read_ground_truth(args.ground_truth)
    metadata = storage.read_metadata_csv(args.metadata) if args.metadata else None
    if metadata is not None and not args.boundaries:
        raise ArgumentError("--metadata needs --boundaries")
    per_model = None
    if args.per_model:
        per_model = single_model_lists(list(storage.iter_instances(args.per_model)))

    report = evaluate(merged, truth, args.ks, metadata, args.boundaries, args.bucket_k, per_model)
    out = Path(args.out)
    storage.write_json(out, report.model_dump(exclude_none=True))
    if args.buckets_out and report.buckets is not None:
        storage.write_csv(args.buckets_out, buckets_frame(report.buckets))
    _write_manifest(args, out, [args.merged, args.ground_truth, args.metadata, args.per_model])
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    _require(args, "kind", "out")
    model_ids = args.model_ids
    weights = args.weights
    if args.auto_weights:
        dataset = storage.load_instances(args.auto_weights[0], args.auto_weights[1], args.k_max)
        weights = weights_from_top1(dataset)
        model_ids = model_ids or list(dataset[0].model_ids)
        logger.info(f"Weights from top-1 accuracy: {dict(zip(model_ids, weights))}")
    m = args.m if args.m is not None else (len(model_ids) if model_ids else None)
    if m is None:
        raise ArgumentError("baseline: give --m, --model-ids or --auto-weights")
    theta = baseline_theta(args.kind, m, args.k_max, weights, model_ids)

    out = Path(args.out)
    storage.write_theta(out, theta)
    _write_manifest(args, out, list(args.auto_weights or []))
    logger.info(f"✅ {args.kind} baseline theta ({m} x {args.k_max}) written to {out}")
    return 0


def cmd_simfilter(args: argparse.Namespace) -> int:
    _require(args, "queries", "references", "out")
    queries = storage.read_fingerprints(args.queries)
    references = storage.read_fingerprints(args.references)
    dims = {fp.dim for fp in queries} | {fp.dim for fp in references}
    if args.dim is not None and dims != {args.dim}:
        logger.warning(f"⚠️ Fingerprint dimension(s) {sorted(dims)} differ from the expected {args.dim}")

    similarity = FingerprintSimilarity(args.block)
    hits = similarity.max_similarity(queries, references)
    kept = similarity.below_threshold(hits, args.threshold)

    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as f:
        f.writelines(f"{query_id}\n" for query_id in kept)
    if args.max_sim_out:
        storage.write_csv(args.max_sim_out, hits_frame(hits))
    _write_manifest(args, out, [args.queries, args.references], extra={"kept": len(kept), "total": len(hits)})
    return 0


def cmd_tokenize(args: argparse.Namespace) -> int:
    tokenizer = SmilesTokenizer()
    source = sys.stdin if args.input in (None, "-") else open(args.input, "r", encoding="utf-8")
    sink = sys.stdout if args.output in (None, "-") else open(args.output, "w", encoding="utf-8")
    try:
        n = tokenizer.tokenize_stream(source, sink)
    finally:
        if source is not sys.stdin:
            source.close()
        if sink is not sys.stdout:
            sink.close()
    if sink is not sys.stdout:
        _write_manifest(args, Path(args.output), [args.input])
    logger.info(f"✅ Tokenized {n} lines")
    return 0


def cmd_elo(args: argparse.Namespace) -> int:
    _require(args, "comparisons", "anchor", "out")
    comparisons = storage.read_comparisons(args.comparisons)
    report = elo_report(
        comparisons,
        args.anchor,
        n_resamples=args.n_resamples,
        confidence=args.confidence,
        seed=args.seed,
        progress=args.progress,
    )
    out = Path(args.out)
    storage.write_json(out, report)
    _write_manifest(args, out, [args.comparisons], seed=args.seed)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    _require(args, "out")
    if args.fixture == "complementary":
        dataset = complementary_fixture(args.seed, args.n_instances or 20_000)
    elif args.synth_config:
        raw = storage.read_json(args.synth_config)
        overrides = {"seed": args.seed}
        if args.n_instances:
            overrides["n_instances"] = args.n_instances
        try:
            cfg = SynthConfig.model_validate({**raw, **overrides})
        except ValidationError as e:
            raise ArgumentError(f"Invalid generator configuration: {e.errors()[0]['msg']}")
        dataset = gen_dataset(cfg)
    else:
        raise ArgumentError("synth: give --fixture or --synth-config")

    out = Path(args.out)
    pred_path, truth_path = storage.write_instances(out, dataset)
    _write_manifest(args, out, [args.synth_config], seed=args.seed, extra={"params": dataset.params})
    logger.info(f"✅ Wrote {len(dataset)} instances to {pred_path} and {truth_path}")
    return 0


def cmd_study(args: argparse.Namespace) -> int:
    _require(args, "predictions", "ground_truth", "out")
    dataset = storage.load_instances(args.predictions, args.ground_truth, args.k_max)
    study = pairwise_study(dataset, args.ks, args.scheme, _train_config(args), args.k_max, args.progress)
    summary = average_gain(study)

    out = Path(args.out)
    storage.write_csv(out, study)
    for k, gain in zip(summary["k"], summary["gain"]):
        logger.info(f"Average top-{k} gain over pairs: {gain:+.4f}")
    _write_manifest(args, out, [args.predictions, args.ground_truth],
                    extra={"average_gain": {int(k): float(g) for k, g in zip(summary["k"], summary["gain"])}})
    return 0


# --- parser ---

class OptionParser(argparse.ArgumentParser):
    """ArgumentParser that keeps a dest -> action map of the options it accepts."""

    def __init__(self, *args, **kwargs):
        self.options: Dict[str, argparse.Action] = {}
        super().__init__(*args, **kwargs)

    def add_argument(self, *args, **kwargs) -> argparse.Action:
        action = super().add_argument(*args, **kwargs)
        self.options[action.dest] = action
        return action


def _train_options(settings: Settings) -> OptionParser:
    defaults = TrainConfig()
    p = OptionParser(add_help=False)
    p.add_argument("--predictions", help="Predictions JSONL")
    p.add_argument("--ground-truth", help="Ground-truth JSONL")
    p.add_argument("--k-max", type=int, default=settings.k_max)
    p.add_argument("--steps", type=int, default=defaults.steps)
    p.add_argument("--lr0", type=float, default=defaults.lr0)
    p.add_argument("--t0", type=float, default=defaults.T0, help="Initial temperature")
    p.add_argument("--decay-factor", type=float, default=defaults.decay_factor)
    p.add_argument("--decay-every", type=int, default=defaults.decay_every)
    p.add_argument("--epsilon-margin", type=float, default=defaults.epsilon_margin)
    p.add_argument("--w-reg", type=float, default=defaults.w_reg)
    p.add_argument("--schedule", choices=("geometric", "linear"), default=defaults.schedule_kind)
    p.add_argument("--parameterization", choices=("constrained", "unconstrained"), default=defaults.parameterization)
    return p


def build_parser(settings: Optional[Settings] = None) -> Tuple[OptionParser, Dict[str, OptionParser]]:
    settings = settings or get_settings()
    common = OptionParser(add_help=False)
    common.add_argument("--config", help="dotenv-style file of option defaults (flags override it)")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--progress", action="store_true", help="Show progress bars")
    train = _train_options(settings)

    parser = OptionParser(prog="rankfusion", description="Learned fusion of ranked prediction lists")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=OptionParser)
    commands: Dict[str, OptionParser] = {}

    def add(name: str, func, summary: str, parents: Sequence[OptionParser] = ()) -> OptionParser:
        p = sub.add_parser(name, help=summary, parents=[common, *parents])
        for parent in (common, *parents):
            p.options.update(parent.options)
        p.set_defaults(func=func)
        commands[name] = p
        return p

    p = add("fit", cmd_fit, "Learn theta on a validation set", [train])
    p.add_argument("--out", help="Theta checkpoint JSON")
    p.add_argument("--log-out", help="Training log CSV (default: <out>.log.csv)")

    p = add("merge", cmd_merge, "Fuse model lists with a theta checkpoint")
    p.add_argument("--predictions", help="Predictions JSONL")
    p.add_argument("--theta", help="Theta checkpoint JSON")
    p.add_argument("--output-limit", type=int, default=settings.k_max)
    p.add_argument("--with-scores", action="store_true", help="Include fused scores in each record")
    p.add_argument("--out", help="Merged JSONL")

    p = add("eval", cmd_eval, "Top-k accuracy, MRR and bucketed accuracy")
    p.add_argument("--merged", help="Merged JSONL")
    p.add_argument("--ground-truth", help="Ground-truth JSONL")
    p.add_argument("--ks", type=_int_list, default=",".join(map(str, DEFAULT_KS)))
    p.add_argument("--metadata", help="CSV with columns input_id,value")
    p.add_argument("--boundaries", type=_float_list, help="Increasing bucket lower bounds, e.g. 0,0.4,0.6,0.8")
    p.add_argument("--bucket-k", type=int)
    p.add_argument("--per-model", help="Predictions JSONL whose single-model lists are evaluated too")
    p.add_argument("--buckets-out", help="CSV of bucket rows")
    p.add_argument("--out", help="Report JSON")

    p = add("baseline", cmd_baseline, "Write a hand-designed theta")
    p.add_argument("--kind", choices=BASELINE_KINDS)
    p.add_argument("--m", type=int)
    p.add_argument("--k-max", type=int, default=settings.k_max)
    p.add_argument("--weights", type=_float_list, help="Per-model c_i for weighted_reciprocal")
    p.add_argument("--model-ids", type=_str_list)
    p.add_argument("--auto-weights", nargs=2, metavar=("PREDICTIONS", "GROUND_TRUTH"),
                   help="Derive c_i from top-1 accuracy (2 for the best model, 1 otherwise)")
    p.add_argument("--out", help="Theta checkpoint JSON")

    p = add("simfilter", cmd_simfilter, "Drop queries too similar to a reference set")
    p.add_argument("--queries", help="Fingerprint JSONL")
    p.add_argument("--references", help="Fingerprint JSONL")
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--block", type=int, default=settings.block_size)
    p.add_argument("--dim", type=int, default=settings.fingerprint_dim, help="Expected fingerprint dimension")
    p.add_argument("--max-sim-out", help="CSV input_id,value,reference_id of each query's max similarity")
    p.add_argument("--out", help="Retained query ids, one per line")

    p = add("tokenize", cmd_tokenize, "Space-join SMILES tokens line by line")
    p.add_argument("--input", default="-", help="SMILES lines (default: stdin)")
    p.add_argument("--output", default="-", help="Token lines (default: stdout)")

    p = add("elo", cmd_elo, "Bradley-Terry ratings on an ELO scale with bootstrap intervals")
    p.add_argument("--comparisons", help="Comparisons JSONL")
    p.add_argument("--anchor", help="Source pinned at ELO 0")
    p.add_argument("--n-resamples", type=int, default=settings.bootstrap_resamples)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="Report JSON")

    p = add("synth", cmd_synth, "Generate a synthetic multi-model dataset")
    p.add_argument("--fixture", choices=FIXTURES)
    p.add_argument("--synth-config", help="JSON generator configuration")
    p.add_argument("--n-instances", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="Output directory")

    p = add("study", cmd_study, "Ensemble every model pair and report the gain", [train])
    p.add_argument("--scheme", choices=STUDY_SCHEMES, default="learned")
    p.add_argument("--ks", type=_int_list, default=",".join(map(str, DEFAULT_KS)))
    p.add_argument("--out", help="Study CSV")

    return parser, commands


def _apply_config_file(subparser: OptionParser, values: Dict[str, str]) -> None:
    """File values become defaults, so explicit flags still win."""
    actions = subparser.options
    defaults: Dict[str, Any] = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise ConfigurationError(f"Unknown option {key!r} in config file")
        if action.nargs == 0:
            defaults[key] = value.strip().lower() in ("1", "true", "yes", "on")
        elif action.nargs is not None:
            defaults[key] = value.split()
        else:
            defaults[key] = value
    subparser.set_defaults(**defaults)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        settings = get_settings()
        parser, commands = build_parser(settings)
        args = parser.parse_args(argv)
        configure_logging(args.log_level or settings.log_level)
        if args.config:
            _apply_config_file(commands[args.command], load_config_file(args.config))
            args = parser.parse_args(argv)
            configure_logging(args.log_level or settings.log_level)
        return args.func(args)
    except RankFusionError as e:
        logger.error(f"❌ {e.detail}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
