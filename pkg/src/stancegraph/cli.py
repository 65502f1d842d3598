"""Command line entry points for the full pipeline.

Subcommands: ingest, build, train, eval, curve, synth. Every command takes
--config (key=value file) plus flags for individual keys; flags win. Exit
codes: 0 ok, 2 bad configuration, 3 parse failure, 4 missing file, 5 other
domain errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, config_lines, resolve, stage_rng, stage_seed
from .errors import (
    BoundsError,
    ConfigError,
    RecordError,
    ShapeError,
    StanceGraphError,
)
from .evaluate import (
    HoldoutSplit,
    SynthConfig,
    annotation_curve,
    bundled_annotations,
    graph_without_edges,
    kfold_split,
    load_annotations,
    run_protocol,
    save_annotations,
    save_planted,
    synth_generate,
    with_usage,
    write_report,
)
from .graphs import (
    MetaPathSpec,
    SocialWeights,
    build_interaction_graph,
    build_social_graph,
    compute_pathsim,
    load_bipartite,
    load_user_graph,
    save_bipartite,
    save_user_graph,
    sparsify,
)
from .ingest import (
    CorpusFilterConfig,
    apply_filters,
    extract_interactions,
    load_counts,
    parse_corpus,
    save_counts,
)
from .model import (
    ChannelSet,
    ModelConfig,
    build_operators,
    forward,
    load_checkpoint,
    load_pretrained_vectors,
    save_checkpoint,
)
from .train import TrainConfig, save_history, train

LOGGER = logging.getLogger(__name__)

_CONFIG_KEYS = [f.name for f in dataclasses.fields(RunConfig)]


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value config file")
    for field in dataclasses.fields(RunConfig):
        flag = "--" + field.name.replace("_", "-")
        if field.type == "bool":
            sub.add_argument(flag, dest=field.name, default=None,
                             action=argparse.BooleanOptionalAction)
        else:
            sub.add_argument(flag, dest=field.name, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stancegraph",
        description="Stance inference over weighted user-hashtag graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a tweet corpus into interaction counts")
    p.add_argument("--tweets", required=True, help="JSON-lines tweet file")
    p.add_argument("--follows", help="tab-separated follower/followee pairs")
    p.add_argument("--outlets", help="news outlet account ids, one per line")
    p.add_argument("--out", required=True, help="output counts.json path")
    _add_config_flags(p)

    p = sub.add_parser("build", help="build and serialize the graphs")
    p.add_argument("--counts", required=True, help="counts.json from ingest")
    p.add_argument("--out", required=True, help="output dataset directory")
    _add_config_flags(p)

    p = sub.add_parser("train", help="train embeddings on a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory with counts.json")
    p.add_argument("--out", required=True, help="output directory for checkpoint and history")
    p.add_argument("--pretrained", help="hashtag vector file")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="run the holdout plus cross-validation protocol")
    p.add_argument("--data", required=True, help="dataset directory with counts.json")
    p.add_argument("--annotations", help="hashtag annotation TSV")
    p.add_argument("--bundled", choices=("entry", "exit"), help="bundled annotation set")
    p.add_argument("--out", required=True, help="output directory for the report")
    p.add_argument("--pretrained", help="hashtag vector file")
    _add_config_flags(p)

    p = sub.add_parser("curve", help="annotation-effort accuracy curve")
    p.add_argument("--data", required=True, help="dataset directory with counts.json")
    p.add_argument("--eval-dir", required=True, help="output directory of a prior eval run")
    p.add_argument("--annotations", help="hashtag annotation TSV")
    p.add_argument("--bundled", choices=("entry", "exit"), help="bundled annotation set")
    p.add_argument("--out", required=True, help="output curve CSV path")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic two-camp dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    _add_config_flags(p)

    return parser


def _model_config(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(
        dim=cfg.dim,
        n_layers=cfg.n_layers,
        use_social=cfg.use_social,
        use_pathsim=cfg.use_pathsim,
        use_pretrained=cfg.use_pretrained,
        include_layer0=cfg.include_layer0,
    )


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        lambda_reg=cfg.lambda_reg,
        batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs,
        patience=cfg.patience,
        eval_every=cfg.eval_every,
        refresh_every=cfg.refresh_every,
    )


def _build_social(counts, cfg: RunConfig):
    weights = SocialWeights(
        follow=cfg.social_c_follow,
        mention=cfg.social_c_mention,
        reply=cfg.social_c_reply,
    )
    return build_social_graph(counts, weights)


def _build_pathsim(counts, cfg: RunConfig):
    spec = MetaPathSpec(left=cfg.pathsim_left, right=cfg.pathsim_right)
    top_k = cfg.pathsim_top_k if cfg.pathsim_top_k > 0 else None
    return sparsify(compute_pathsim(counts, spec), cfg.pathsim_min_weight, top_k)


def _load_dataset(data_dir, cfg: RunConfig, pretrained_path=None):
    """Counts plus graphs; serialized graphs are used when present,
    otherwise they are derived from the counts."""
    data = Path(data_dir)
    counts = load_counts(data / "counts.json")
    bipartite_path = data / "bipartite.coo"
    if bipartite_path.exists():
        graph = load_bipartite(bipartite_path)
        if graph.n_users != len(counts.users) or graph.n_hashtags != len(counts.hashtags):
            raise ShapeError("bipartite.coo does not match counts.json")
    else:
        graph = build_interaction_graph(counts)

    social = pathsim = None
    if cfg.use_social:
        path = data / "social.coo"
        social = load_user_graph(path, kind="social") if path.exists() else _build_social(counts, cfg)
    if cfg.use_pathsim:
        path = data / "pathsim.coo"
        pathsim = load_user_graph(path, kind="pathsim") if path.exists() else _build_pathsim(counts, cfg)
    pretrained = None
    if cfg.use_pretrained:
        if pretrained_path is None:
            raise ConfigError("use_pretrained is set but --pretrained was not given")
        pretrained = load_pretrained_vectors(pretrained_path, counts.hashtags, cfg.dim)
    channels = ChannelSet(social=social, pathsim=pathsim, pretrained=pretrained)
    return counts, graph, channels


def _load_annotation_arg(args, counts):
    if getattr(args, "annotations", None) and getattr(args, "bundled", None):
        raise ConfigError("give either --annotations or --bundled, not both")
    if getattr(args, "annotations", None):
        ann = load_annotations(args.annotations)
    elif getattr(args, "bundled", None):
        ann = bundled_annotations(args.bundled)
    else:
        raise ConfigError("an annotation set is required (--annotations or --bundled)")
    if not ann.tags():
        raise ConfigError("annotation set has no hashtags")
    return with_usage(ann, counts)


def cmd_ingest(args, cfg: RunConfig) -> int:
    allow = frozenset(
        s.strip() for s in cfg.location_allowlist.split(",") if s.strip()
    ) or None
    filter_cfg = CorpusFilterConfig(
        max_outlets_followed=cfg.max_outlets_followed,
        max_avg_daily_tweets=cfg.max_avg_daily_tweets,
        location_allowlist=allow,
    )
    with open(args.tweets, "r", encoding="utf-8") as tweets_fh:
        follows_fh = open(args.follows, "r", encoding="utf-8") if args.follows else None
        outlets_fh = open(args.outlets, "r", encoding="utf-8") if args.outlets else None
        try:
            corpus = parse_corpus(
                tweets_fh,
                follows_fh if follows_fh is not None else (),
                outlets_fh if outlets_fh is not None else (),
                strict=cfg.strict_parse,
            )
        finally:
            if follows_fh is not None:
                follows_fh.close()
            if outlets_fh is not None:
                outlets_fh.close()
    corpus = apply_filters(corpus, filter_cfg)
    counts = extract_interactions(corpus)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_counts(counts, args.out)
    print(
        f"ingest: {len(counts.users)} users, {len(counts.hashtags)} hashtags, "
        f"{int(counts.T.sum())} interactions -> {args.out}"
    )
    return 0


def cmd_build(args, cfg: RunConfig) -> int:
    counts = load_counts(args.counts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = build_interaction_graph(counts)
    save_counts(counts, out / "counts.json")
    save_bipartite(graph, out / "bipartite.coo")
    social = _build_social(counts, cfg)
    save_user_graph(social, out / "social.coo")
    pathsim = _build_pathsim(counts, cfg)
    save_user_graph(pathsim, out / "pathsim.coo")
    with open(out / "users.txt", "w", encoding="utf-8") as fh:
        fh.writelines(u + "\n" for u in counts.users)
    with open(out / "hashtags.txt", "w", encoding="utf-8") as fh:
        fh.writelines(h + "\n" for h in counts.hashtags)
    print(
        f"build: bipartite {graph.R.nnz} edges, social {social.W.nnz} edges, "
        f"pathsim {pathsim.W.nnz} edges -> {out}"
    )
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    if not (0 < cfg.val_fraction <= 0.5):
        raise ConfigError("val_fraction must be in (0, 0.5]")
    counts, graph, channels = _load_dataset(args.data, cfg, args.pretrained)
    edges, _ = graph.edges()
    folds = max(2, round(1.0 / cfg.val_fraction))
    train_pairs, val_pairs = kfold_split(edges, folds, stage_rng(cfg.seed, "train"))[0]
    train_graph = graph_without_edges(graph, val_pairs)
    state, history = train(
        train_graph,
        channels,
        _model_config(cfg),
        _train_config(cfg),
        val_pairs,
        seed=stage_seed(cfg.seed, "train"),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.bin", state, counts.users, counts.hashtags)
    save_history(history, out / "history.csv")
    best = max((r.recall for r in history if np.isfinite(r.recall)), default=float("nan"))
    print(
        f"train: {len(history)} epochs, best recall@20 {best:.4f} -> {out}"
    )
    return 0


def _write_hidden(split: HoldoutSplit, users, hashtags, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u in split.holdout_users:
            for j in sorted(split.hidden[u]):
                fh.write(f"{users[u]}\t{hashtags[j]}\t{split.hidden[u][j]:.17g}\n")


def _write_pairs(pairs, users, hashtags, path) -> None:
    rows = sorted((int(u), int(j)) for u, j in pairs)
    with open(path, "w", encoding="utf-8") as fh:
        for u, j in rows:
            fh.write(f"{users[u]}\t{hashtags[j]}\n")


def cmd_eval(args, cfg: RunConfig) -> int:
    counts, graph, channels = _load_dataset(args.data, cfg, args.pretrained)
    annotations = _load_annotation_arg(args, counts)
    result = run_protocol(
        graph,
        channels,
        annotations,
        counts.hashtags,
        _model_config(cfg),
        _train_config(cfg),
        seed=stage_seed(cfg.seed, "eval"),
        holdout_fraction=cfg.holdout_fraction,
        folds=cfg.folds,
        variant=cfg.variant,
        binary_stance=cfg.binary_stance,
        null_interactions=int(counts.T.sum()),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(result.report, out / "report.txt", out / "folds.csv")
    save_checkpoint(out / "checkpoint.bin", result.state, counts.users, counts.hashtags)
    _write_hidden(result.split, counts.users, counts.hashtags, out / "hidden.tsv")
    _write_pairs(result.fold0_val, counts.users, counts.hashtags, out / "val.tsv")
    r = result.report
    print(
        f"eval[{cfg.variant}]: recall@20 {r.recall:.4f} ndcg@20 {r.ndcg:.4f} "
        f"accuracy {r.accuracy:.4f} rmse {r.rmse:.4f} -> {out}"
    )
    return 0


def cmd_curve(args, cfg: RunConfig) -> int:
    counts, graph, channels = _load_dataset(args.data, cfg)
    annotations = _load_annotation_arg(args, counts)
    eval_dir = Path(args.eval_dir)
    state, user_ids, tag_ids = load_checkpoint(eval_dir / "checkpoint.bin")
    if user_ids != counts.users or tag_ids != counts.hashtags:
        raise ShapeError("checkpoint index does not match the dataset")

    uidx = {u: i for i, u in enumerate(counts.users)}
    hidx = {h: j for j, h in enumerate(counts.hashtags)}
    hidden: dict[int, dict[int, float]] = {}
    with open(eval_dir / "hidden.tsv", "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise RecordError("expected 'user<TAB>hashtag<TAB>weight'", line_no)
            if parts[0] not in uidx or parts[1] not in hidx:
                raise RecordError(f"unknown id in hidden edge {parts[:2]}", line_no)
            hidden.setdefault(uidx[parts[0]], {})[hidx[parts[1]]] = float(parts[2])
    val_rows = []
    with open(eval_dir / "val.tsv", "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 or parts[0] not in uidx or parts[1] not in hidx:
                raise RecordError("expected 'user<TAB>hashtag'", line_no)
            val_rows.append((uidx[parts[0]], hidx[parts[1]]))

    drop_pairs = np.array(
        [(u, j) for u, cells in hidden.items() for j in cells], dtype=np.int64
    )
    split_graph = graph_without_edges(graph, drop_pairs)
    split = HoldoutSplit(
        train_graph=split_graph,
        hidden=hidden,
        holdout_users=tuple(sorted(hidden)),
        n_eligible=len(hidden),
    )
    fold_graph = graph_without_edges(split_graph, np.array(val_rows, dtype=np.int64))
    ops = build_operators(fold_graph, channels, _model_config(cfg))
    out_emb = forward(state.stacked(), ops, _model_config(cfg))
    curve = annotation_curve(
        out_emb.final_users,
        out_emb.final_hashtags,
        counts.hashtags,
        split,
        annotations,
        range(1, cfg.x_max + 1),
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("x,accuracy\n")
        for x, acc in curve:
            fh.write(f"{x},{acc:.6f}\n")
    print(f"curve: {len(curve)} points -> {out_path}")
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    synth_cfg = SynthConfig(
        n_users=cfg.n_users,
        n_hashtags=cfg.n_hashtags,
        n_neutral=cfg.n_neutral,
        p_in=cfg.p_in,
        p_out=cfg.p_out,
        interactions_per_user=cfg.interactions_per_user,
        homophily=cfg.homophily,
        social_base_rate=cfg.social_base_rate,
        annotated_per_camp=cfg.annotated_per_camp,
        retweet_rate=cfg.retweet_rate,
    )
    data = synth_generate(synth_cfg, stage_rng(cfg.seed, "synth"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_counts(data.counts, out / "counts.json")
    save_annotations(data.annotations, out / "annotations.tsv")
    save_planted(data.planted, data.counts.users, out / "planted.tsv")
    print(
        f"synth: {len(data.counts.users)} users, {len(data.counts.hashtags)} hashtags, "
        f"{int(data.counts.T.sum())} interactions -> {out}"
    )
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "build": cmd_build,
    "train": cmd_train,
    "eval": cmd_eval,
    "curve": cmd_curve,
    "synth": cmd_synth,
}


def _fail(exc: Exception, code: int) -> int:
    msg = str(exc).replace("\n", " ")
    print(f"error kind={type(exc).__name__} exit={code}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        overrides = {
            key: getattr(args, key)
            for key in _CONFIG_KEYS
            if getattr(args, key, None) is not None
        }
        cfg = resolve(getattr(args, "config", None), overrides)
        for line in config_lines(cfg):
            print(f"[config] {line}")
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, BoundsError) as exc:
        return _fail(exc, 2)
    except RecordError as exc:
        return _fail(exc, 3)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        return _fail(exc, 4)
    except StanceGraphError as exc:
        return _fail(exc, 5)


if __name__ == "__main__":
    sys.exit(main())
