"""Two-level evaluation: edge ranking and user stance classification.

Edge level: hide a fraction of users' annotated-hashtag edges, cross-validate
the remaining edges, and rank candidates by affinity. User level: classify
each held-out user by comparing class-mean affinities against the stance
implied by their hidden usage. Also provides the reduction baselines, a
random-interaction null model, the annotation-effort curve, and a synthetic
two-camp generator with planted stances.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
import scipy.sparse as sp

from .errors import (
    BoundsError,
    ConfigError,
    EmptyEligibleSet,
    EmptyEvaluation,
    RecordError,
    ShapeError,
)
from .graphs import (
    BipartiteGraph,
    MetaPathSpec,
    SocialWeights,
    binarize,
    build_interaction_graph,
    build_social_graph,
    compute_pathsim,
    sparsify,
)
from .ingest import InteractionCounts, normalize_hashtag
from .metrics import ranking_metrics
from .model import ChannelSet, EmbeddingState, ModelConfig, build_operators, forward
from .train import TrainConfig, train

LOGGER = logging.getLogger(__name__)

# Tie-breaks pick the LAST maximal class in this order.
CLASS_ORDER = ("NEG", "NEUTRAL", "POS")
STANCE_NUMERIC = {"NEG": 0.0, "NEUTRAL": 0.5, "POS": 1.0}

EVAL_K = 20


@dataclass
class StanceAnnotation:
    """Hashtags labeled by stance class, with optional usage counts.

    Labels are stored per class: a hashtag listed under two classes is kept
    in both (the parser warns), and each class mean is computed over its
    own list.
    """

    by_class: dict[str, tuple[str, ...]]
    usage: dict[str, float] = field(default_factory=dict)

    def classes(self) -> tuple[str, ...]:
        return tuple(c for c in CLASS_ORDER if self.by_class.get(c))

    def tags(self) -> set[str]:
        return {t for tags in self.by_class.values() for t in tags}

    def class_size(self, cls: str) -> int:
        return len(self.by_class.get(cls, ()))

    def overlapping_tags(self) -> set[str]:
        seen: set[str] = set()
        overlap: set[str] = set()
        for cls in CLASS_ORDER:
            for t in self.by_class.get(cls, ()):
                if t in seen:
                    overlap.add(t)
                seen.add(t)
        return overlap


def parse_annotations(lines) -> StanceAnnotation:
    """Parse 'hashtag<TAB>class' lines; hashtags are normalized."""
    by_class: dict[str, list[str]] = {c: [] for c in CLASS_ORDER}
    for line_no, line in enumerate(lines, 1):
        # no comment syntax here: a leading '#' is hashtag spelling
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise RecordError("expected 'hashtag<TAB>class'", line_no)
        tag, cls = parts[0].strip(), parts[1].strip().upper()
        if cls not in CLASS_ORDER:
            raise RecordError(f"unknown stance class {parts[1]!r}", line_no)
        tag = normalize_hashtag(tag)
        if tag not in by_class[cls]:
            by_class[cls].append(tag)
    ann = StanceAnnotation(by_class={c: tuple(v) for c, v in by_class.items() if v})
    overlap = ann.overlapping_tags()
    if overlap:
        LOGGER.warning(
            "%d hashtags appear in more than one class: %s",
            len(overlap), ", ".join(sorted(overlap)),
        )
    return ann


def load_annotations(path) -> StanceAnnotation:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_annotations(fh)


def bundled_annotations(name: str) -> StanceAnnotation:
    """Annotation sets shipped with the package: 'entry' or 'exit'."""
    if name not in ("entry", "exit"):
        raise ConfigError(f"no bundled annotation set named {name!r}")
    text = resources.files("stancegraph").joinpath(
        "data", f"annotations_{name}.tsv"
    ).read_text("utf-8")
    return parse_annotations(text.splitlines())


def with_usage(annotations: StanceAnnotation, counts: InteractionCounts) -> StanceAnnotation:
    """Attach total usage counts from a corpus to each annotated hashtag."""
    totals = np.asarray(counts.T.sum(axis=0)).ravel()
    usage = {}
    index = {h: j for j, h in enumerate(counts.hashtags)}
    for tag in annotations.tags():
        usage[tag] = float(totals[index[tag]]) if tag in index else 0.0
    return StanceAnnotation(by_class=dict(annotations.by_class), usage=usage)


def classify_stance(affinities: dict[str, float], annotations: StanceAnnotation) -> str:
    """Argmax over class-mean affinities.

    Classes with no hashtag in the affinity map are excluded with a
    warning; ties go to the last maximal class in CLASS_ORDER.
    """
    best_cls = None
    best_mean = -math.inf
    for cls in CLASS_ORDER:
        tags = [t for t in annotations.by_class.get(cls, ()) if t in affinities]
        if not tags:
            if annotations.by_class.get(cls):
                LOGGER.warning("class %s has no scored hashtags; excluded", cls)
            continue
        mean = sum(affinities[t] for t in tags) / len(tags)
        if mean >= best_mean:
            best_cls, best_mean = cls, mean
    if best_cls is None:
        raise EmptyEvaluation("no class has a scored hashtag")
    return best_cls


def ground_truth_stance(hidden_weights: dict[str, float], annotations: StanceAnnotation) -> str:
    """Stance implied by hidden edge weights: argmax of per-class mean
    weight, dividing by the full class size (absent hashtags count 0)."""
    best_cls = None
    best_mean = -math.inf
    for cls in CLASS_ORDER:
        tags = annotations.by_class.get(cls, ())
        if not tags:
            continue
        mean = sum(hidden_weights.get(t, 0.0) for t in tags) / len(tags)
        if mean >= best_mean:
            best_cls, best_mean = cls, mean
    if best_cls is None:
        raise EmptyEvaluation("annotation set has no classes")
    return best_cls


def stance_metrics(predicted: list[str], truth: list[str]) -> tuple[float, float]:
    """Accuracy and RMSE under the NEG=0, NEUTRAL=0.5, POS=1 embedding."""
    if len(predicted) != len(truth):
        raise ShapeError("prediction and truth lengths differ")
    if not predicted:
        raise EmptyEvaluation("no users to evaluate")
    correct = sum(1 for p, t in zip(predicted, truth) if p == t)
    sq = [
        (STANCE_NUMERIC[p] - STANCE_NUMERIC[t]) ** 2
        for p, t in zip(predicted, truth)
    ]
    return correct / len(predicted), float(np.sqrt(np.mean(sq)))


@dataclass
class HoldoutSplit:
    """User-level holdout: selected users lose every annotated edge."""

    train_graph: BipartiteGraph
    hidden: dict[int, dict[int, float]]  # user -> {hashtag column: original weight}
    holdout_users: tuple[int, ...]
    n_eligible: int


def _drop_and_renormalize(R: sp.csr_matrix, drop: set[tuple[int, int]]) -> sp.csr_matrix:
    """Remove the given (row, col) entries and rescale affected rows so
    remaining weights again sum to 1. Rows left empty stay zero."""
    coo = R.tocoo()
    keep = np.array(
        [(int(r), int(c)) not in drop for r, c in zip(coo.row, coo.col)], dtype=bool
    ) if coo.nnz else np.zeros(0, dtype=bool)
    out = sp.csr_matrix(
        (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=R.shape
    )
    touched = sorted({r for r, _ in drop})
    sums = np.asarray(out.sum(axis=1)).ravel()
    scale = np.ones(R.shape[0])
    for r in touched:
        if sums[r] > 0:
            scale[r] = 1.0 / sums[r]
    out = sp.diags(scale) @ out
    out = sp.csr_matrix(out)
    out.sort_indices()
    return out


def holdout_split(
    graph: BipartiteGraph,
    annotations: StanceAnnotation,
    hashtags: list[str],
    fraction: float = 0.05,
    rng: np.random.Generator | None = None,
) -> HoldoutSplit:
    """Hide all annotated-hashtag edges of a random user fraction.

    Eligible users have at least one annotated edge; ceil(fraction * count)
    of them are selected. Hidden weights keep their pre-split values; the
    remaining rows of selected users are renormalized.
    """
    if not (0 < fraction <= 1):
        raise ConfigError("holdout fraction must be in (0, 1]")
    rng = rng or np.random.default_rng(0)
    if len(hashtags) != graph.n_hashtags:
        raise ShapeError("hashtag list does not match graph width")
    annotated_cols = {j for j, h in enumerate(hashtags) if h in annotations.tags()}
    eligible = [
        u for u in range(graph.n_users)
        if any(int(j) in annotated_cols for j in graph.neighbors(u))
    ]
    if not eligible:
        raise EmptyEligibleSet("no user interacts with an annotated hashtag")
    n_hold = int(np.ceil(fraction * len(eligible)))
    chosen = rng.choice(len(eligible), size=n_hold, replace=False)
    holdout_users = tuple(sorted(eligible[k] for k in chosen))

    hidden: dict[int, dict[int, float]] = {}
    drop: set[tuple[int, int]] = set()
    for u in holdout_users:
        row = graph.R[u].tocoo()
        cells = {}
        for j, w in zip(row.col, row.data):
            if int(j) in annotated_cols:
                cells[int(j)] = float(w)
                drop.add((u, int(j)))
        hidden[u] = cells
    train_graph = BipartiteGraph(R=_drop_and_renormalize(graph.R, drop))
    return HoldoutSplit(
        train_graph=train_graph,
        hidden=hidden,
        holdout_users=holdout_users,
        n_eligible=len(eligible),
    )


def kfold_split(
    edges: np.ndarray, folds: int = 5, rng: np.random.Generator | None = None
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Random edge partition into (train, validation) pairs, one per fold."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if folds < 2:
        raise ConfigError("need at least 2 folds")
    if edges.shape[0] < folds:
        raise ConfigError(f"{edges.shape[0]} edges cannot fill {folds} folds")
    rng = rng or np.random.default_rng(0)
    perm = rng.permutation(edges.shape[0])
    parts = np.array_split(perm, folds)
    out = []
    for f in range(folds):
        val_idx = parts[f]
        train_idx = np.concatenate([parts[g] for g in range(folds) if g != f])
        out.append((edges[np.sort(train_idx)], edges[np.sort(val_idx)]))
    return out


def graph_without_edges(graph: BipartiteGraph, removed: np.ndarray) -> BipartiteGraph:
    """Training graph for one fold: validation edges removed, rows rescaled."""
    drop = {(int(u), int(j)) for u, j in np.asarray(removed).reshape(-1, 2)}
    return BipartiteGraph(R=_drop_and_renormalize(graph.R, drop))


def null_model(
    n_users: int, n_hashtags: int, n_interactions: int, rng: np.random.Generator
) -> BipartiteGraph:
    """Uniform random interactions with replacement, row-normalized."""
    if n_interactions < 0:
        raise ConfigError("interaction count cannot be negative")
    flat = rng.integers(0, n_users * n_hashtags, size=n_interactions)
    users = (flat // n_hashtags).astype(np.int64)
    tags = (flat % n_hashtags).astype(np.int64)
    T = sp.csr_matrix(
        (np.ones(n_interactions), (users, tags)), shape=(n_users, n_hashtags)
    )
    T.sum_duplicates()
    rowsum = np.asarray(T.sum(axis=1)).ravel()
    scale = np.divide(1.0, rowsum, out=np.zeros_like(rowsum), where=rowsum > 0)
    return BipartiteGraph(R=sp.diags(scale) @ T)


def mf_baseline(
    graph: BipartiteGraph,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    val_edges: np.ndarray,
    seed: int = 0,
):
    """Plain matrix factorization: zero propagation layers, no channels."""
    cfg = replace(
        model_cfg, n_layers=0, use_social=False, use_pathsim=False, include_layer0=True
    )
    return train(graph, None, cfg, train_cfg, val_edges, seed)


def lightgcn_baseline(
    graph: BipartiteGraph,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    val_edges: np.ndarray,
    seed: int = 0,
):
    """Unweighted variant: binarized interactions, no side channels."""
    cfg = replace(model_cfg, use_social=False, use_pathsim=False)
    return train(binarize(graph), None, cfg, train_cfg, val_edges, seed)


def _stance_predictions(
    state: EmbeddingState,
    graph: BipartiteGraph,
    channels: ChannelSet | None,
    model_cfg: ModelConfig,
    split: HoldoutSplit,
    annotations: StanceAnnotation,
    hashtags: list[str],
    binary: bool = False,
) -> tuple[list[str], list[str], list[bool]]:
    """Predicted and true stances for every holdout user, plus a cold flag
    for users left with no training edges."""
    ann = annotations
    if binary:
        ann = StanceAnnotation(
            by_class={c: v for c, v in annotations.by_class.items() if c != "NEUTRAL"},
            usage=annotations.usage,
        )
    index = {h: j for j, h in enumerate(hashtags)}
    scored_tags = [(t, index[t]) for t in sorted(ann.tags()) if t in index]
    ops = build_operators(graph, channels, model_cfg)
    out = forward(state.stacked(), ops, model_cfg)
    degrees = np.diff(split.train_graph.R.indptr)

    predicted, truth, cold = [], [], []
    for u in split.holdout_users:
        hidden_by_name = {
            hashtags[j]: w for j, w in split.hidden[u].items()
        }
        true_cls = ground_truth_stance(hidden_by_name, ann)
        if binary and not any(
            hidden_by_name.get(t, 0.0) > 0 for c in ann.by_class for t in ann.by_class[c]
        ):
            continue
        scores = out.final_hashtags @ out.final_users[u]
        affinities = {t: float(scores[j]) for t, j in scored_tags}
        predicted.append(classify_stance(affinities, ann))
        truth.append(true_cls)
        cold.append(bool(degrees[u] == 0))
    return predicted, truth, cold


@dataclass
class FoldMetrics:
    fold: int
    recall: float
    ndcg: float
    accuracy: float
    rmse: float


@dataclass
class EvalReport:
    recall: float
    ndcg: float
    accuracy: float
    rmse: float
    accuracy_cold: float
    n_cold: int
    n_holdout_users: int
    n_eligible: int
    folds: list[FoldMetrics] = field(default_factory=list)


def write_report(report: EvalReport, report_path, folds_path) -> None:
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(f"recall@20={report.recall:.6f}\n")
        fh.write(f"ndcg@20={report.ndcg:.6f}\n")
        fh.write(f"accuracy={report.accuracy:.6f}\n")
        fh.write(f"rmse={report.rmse:.6f}\n")
        fh.write(f"accuracy_cold={report.accuracy_cold:.6f}\n")
        fh.write(f"n_cold={report.n_cold}\n")
        fh.write(f"n_holdout_users={report.n_holdout_users}\n")
        fh.write(f"n_eligible={report.n_eligible}\n")
        fh.write(f"n_folds={len(report.folds)}\n")
    with open(folds_path, "w", encoding="utf-8") as fh:
        fh.write("fold,recall@20,ndcg@20,accuracy,rmse\n")
        for row in report.folds:
            fh.write(
                f"{row.fold},{row.recall:.6f},{row.ndcg:.6f},"
                f"{row.accuracy:.6f},{row.rmse:.6f}\n"
            )


VARIANTS = ("wlgcn", "mf", "lightgcn", "null")


@dataclass
class ProtocolResult:
    report: EvalReport
    state: EmbeddingState  # first fold's model
    split: HoldoutSplit
    fold0_val: np.ndarray  # first fold's validation edges
    fold0_history: list = field(default_factory=list)


def run_protocol(
    graph: BipartiteGraph,
    channels: ChannelSet | None,
    annotations: StanceAnnotation,
    hashtags: list[str],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seed: int = 0,
    holdout_fraction: float = 0.05,
    folds: int = 5,
    variant: str = "wlgcn",
    binary_stance: bool = False,
    null_interactions: int | None = None,
) -> ProtocolResult:
    """Full two-level evaluation.

    Per fold: train on the fold graph, rank validation edges against the
    candidates outside the fold's training positives, and classify the
    holdout users. Returns the averaged report plus the first fold's model
    and the split, for downstream artifacts.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown model variant {variant!r}")
    holdout_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    kfold_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))

    split = holdout_split(graph, annotations, hashtags, holdout_fraction, holdout_rng)
    edges, _ = split.train_graph.edges()
    fold_pairs = kfold_split(edges, folds, kfold_rng)

    fold_rows: list[FoldMetrics] = []
    first_state: EmbeddingState | None = None
    first_history: list = []
    all_pred: list[str] = []
    all_truth: list[str] = []
    all_cold: list[bool] = []
    for f, (train_pairs, val_pairs) in enumerate(fold_pairs):
        fold_graph = graph_without_edges(split.train_graph, val_pairs)
        fold_seed = int(
            np.random.SeedSequence(seed, spawn_key=(2, f)).generate_state(1)[0]
        )
        fold_channels = channels
        cfg = model_cfg
        if variant == "wlgcn":
            state, history = train(fold_graph, channels, model_cfg, train_cfg, val_pairs, fold_seed)
            train_graph_used = fold_graph
        elif variant == "mf":
            cfg = replace(
                model_cfg, n_layers=0, use_social=False, use_pathsim=False,
                include_layer0=True,
            )
            fold_channels = None
            state, history = train(fold_graph, None, cfg, train_cfg, val_pairs, fold_seed)
            train_graph_used = fold_graph
        elif variant == "lightgcn":
            cfg = replace(model_cfg, use_social=False, use_pathsim=False)
            fold_channels = None
            train_graph_used = binarize(fold_graph)
            state, history = train(train_graph_used, None, cfg, train_cfg, val_pairs, fold_seed)
        else:  # null
            cfg = replace(model_cfg, use_social=False, use_pathsim=False)
            fold_channels = None
            null_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3, f)))
            n_draws = null_interactions or max(int(fold_graph.R.nnz), 1)
            train_graph_used = null_model(
                graph.n_users, graph.n_hashtags, n_draws, null_rng
            )
            # The null model ranks the same task: scores come from its own
            # random graph, candidates and relevants from the real split.
            state, history = train(train_graph_used, None, cfg, train_cfg, val_pairs, fold_seed)
        if first_state is None:
            first_state = state
            first_history = history

        ops = build_operators(train_graph_used, fold_channels, cfg)
        out = forward(state.stacked(), ops, cfg)
        relevant: dict[int, set[int]] = {}
        for u, j in val_pairs:
            relevant.setdefault(int(u), set()).add(int(j))
        exclude = lambda u: fold_graph.neighbors(u)  # noqa: E731
        recall, ndcg, _ = ranking_metrics(
            out.final_users, out.final_hashtags, exclude, relevant, k=EVAL_K
        )

        pred, truth, cold = _stance_predictions(
            state, train_graph_used, fold_channels, cfg, split, annotations, hashtags,
            binary=binary_stance,
        )
        accuracy, rmse = stance_metrics(pred, truth)
        all_pred.extend(pred)
        all_truth.extend(truth)
        all_cold.extend(cold)
        fold_rows.append(FoldMetrics(f, recall, ndcg, accuracy, rmse))
        LOGGER.info(
            "fold %d: recall %.4f ndcg %.4f accuracy %.4f rmse %.4f",
            f, recall, ndcg, accuracy, rmse,
        )

    accuracy, rmse = stance_metrics(all_pred, all_truth)
    cold_pairs = [(p, t) for p, t, c in zip(all_pred, all_truth, all_cold) if c]
    if cold_pairs:
        acc_cold, _ = stance_metrics([p for p, _ in cold_pairs], [t for _, t in cold_pairs])
    else:
        acc_cold = float("nan")
    report = EvalReport(
        recall=float(np.mean([r.recall for r in fold_rows])),
        ndcg=float(np.mean([r.ndcg for r in fold_rows])),
        accuracy=accuracy,
        rmse=rmse,
        accuracy_cold=acc_cold,
        # Cold flags repeat across folds; report the per-split count.
        n_cold=len(cold_pairs) // max(len(fold_rows), 1),
        n_holdout_users=len(split.holdout_users),
        n_eligible=split.n_eligible,
        folds=fold_rows,
    )
    assert first_state is not None
    return ProtocolResult(
        report=report, state=first_state, split=split, fold0_val=fold_pairs[0][1],
        fold0_history=first_history,
    )


def annotation_curve(
    final_users: np.ndarray,
    final_hashtags: np.ndarray,
    hashtags: list[str],
    split: HoldoutSplit,
    annotations: StanceAnnotation,
    x_values,
) -> list[tuple[int, float]]:
    """Stance accuracy when only the top-x most-used POS and NEG hashtags
    are treated as annotated.

    Ground truth is fixed at the full two-class annotation; users with no
    hidden POS or NEG usage are skipped. NEUTRAL never participates.
    """
    if not annotations.usage:
        raise ConfigError("annotation usage counts are required for the effort curve")
    ranked: dict[str, list[str]] = {}
    for cls in ("POS", "NEG"):
        tags = annotations.by_class.get(cls, ())
        if not tags:
            raise ConfigError(f"annotation set has no {cls} hashtags")
        ranked[cls] = sorted(tags, key=lambda t: (-annotations.usage.get(t, 0.0), t))
    max_x = min(len(ranked["POS"]), len(ranked["NEG"]))

    full = StanceAnnotation(
        by_class={"POS": tuple(ranked["POS"]), "NEG": tuple(ranked["NEG"])}
    )
    index = {h: j for j, h in enumerate(hashtags)}
    users, truths = [], []
    for u in split.holdout_users:
        hidden_by_name = {hashtags[j]: w for j, w in split.hidden[u].items()}
        if not any(hidden_by_name.get(t, 0.0) > 0 for t in full.tags()):
            continue
        users.append(u)
        truths.append(ground_truth_stance(hidden_by_name, full))
    if not users:
        raise EmptyEvaluation("no holdout user has POS or NEG usage")

    curve = []
    for x in x_values:
        x = int(x)
        if x < 1 or x > max_x:
            raise BoundsError(f"x={x} outside [1, {max_x}]")
        restricted = StanceAnnotation(
            by_class={
                "POS": tuple(ranked["POS"][:x]),
                "NEG": tuple(ranked["NEG"][:x]),
            }
        )
        scored = [(t, index[t]) for t in sorted(restricted.tags()) if t in index]
        predicted = []
        for u in users:
            scores = final_hashtags @ final_users[u]
            affinities = {t: float(scores[j]) for t, j in scored}
            predicted.append(classify_stance(affinities, restricted))
        accuracy, _ = stance_metrics(predicted, truths)
        curve.append((x, accuracy))
    return curve


@dataclass(frozen=True)
class SynthConfig:
    """Two-camp synthetic corpus with planted stances."""

    n_users: int = 200
    n_hashtags: int = 100
    n_neutral: int = 10
    p_in: float = 0.8
    p_out: float = 0.1
    interactions_per_user: int = 20
    homophily: float = 5.0
    social_base_rate: float = 0.02
    annotated_per_camp: int = 15
    retweet_rate: float = 0.5

    def __post_init__(self):
        if self.n_users < 2:
            raise ConfigError("need at least two users")
        if not (0 <= self.p_out < self.p_in <= 1):
            raise ConfigError("need 0 <= p_out < p_in <= 1")
        if self.p_in + self.p_out > 1:
            raise ConfigError("p_in + p_out must not exceed 1")
        if self.n_neutral < 0 or self.n_neutral >= self.n_hashtags:
            raise ConfigError("n_neutral must leave at least one camp hashtag")
        if self.n_neutral == 0 and self.p_in + self.p_out != 1:
            raise ConfigError("without neutral hashtags p_in + p_out must equal 1")
        if self.n_hashtags - self.n_neutral < 2:
            raise ConfigError("need at least one hashtag per camp")
        camp = (self.n_hashtags - self.n_neutral + 1) // 2
        if not (1 <= self.annotated_per_camp <= camp):
            raise ConfigError("annotated_per_camp must fit inside each camp")
        if self.interactions_per_user < 1:
            raise ConfigError("interactions_per_user must be positive")
        if not (0 <= self.social_base_rate <= 1) or self.homophily < 0:
            raise ConfigError("bad social edge rates")
        if not (0 <= self.retweet_rate <= 1):
            raise ConfigError("retweet_rate must be a probability")


@dataclass
class SynthData:
    counts: InteractionCounts
    graph: BipartiteGraph
    channels: ChannelSet
    annotations: StanceAnnotation
    planted: list[str]  # per-user true camp, index-aligned with counts.users


def synth_generate(cfg: SynthConfig, rng: np.random.Generator) -> SynthData:
    """Generate a two-camp corpus.

    Users draw own-camp hashtags with probability p_in, other-camp with
    p_out, neutral otherwise; each draw is a retweet with retweet_rate.
    Mutual-follow edges appear with social_base_rate, boosted by the
    homophily factor inside a camp. Only the first annotated_per_camp
    hashtags of each camp are labeled, so holdout users keep unannotated
    own-camp edges.
    """
    n_pos_users = (cfg.n_users + 1) // 2
    camp_tags = cfg.n_hashtags - cfg.n_neutral
    n_pos_tags = (camp_tags + 1) // 2
    users = [f"u{i:05d}" for i in range(cfg.n_users)]
    tags = [f"ht{j:05d}" for j in range(cfg.n_hashtags)]
    planted = ["POS" if i < n_pos_users else "NEG" for i in range(cfg.n_users)]
    pos_tags = list(range(0, n_pos_tags))
    neg_tags = list(range(n_pos_tags, camp_tags))
    neutral_tags = list(range(camp_tags, cfg.n_hashtags))

    by_kind = {"original": {}, "retweet": {}}
    for i in range(cfg.n_users):
        own = pos_tags if planted[i] == "POS" else neg_tags
        other = neg_tags if planted[i] == "POS" else pos_tags
        cats = rng.random(cfg.interactions_per_user)
        kinds = rng.random(cfg.interactions_per_user) < cfg.retweet_rate
        for k in range(cfg.interactions_per_user):
            if cats[k] < cfg.p_in:
                pool = own
            elif cats[k] < cfg.p_in + cfg.p_out:
                pool = other
            else:
                pool = neutral_tags
            j = pool[int(rng.integers(0, len(pool)))]
            bucket = by_kind["retweet" if kinds[k] else "original"]
            key = (i, j)
            bucket[key] = bucket.get(key, 0.0) + 1.0

    mutual: dict[tuple[int, int], float] = {}
    for i in range(cfg.n_users):
        for j in range(i + 1, cfg.n_users):
            same = (i < n_pos_users) == (j < n_pos_users)
            p = cfg.social_base_rate * (cfg.homophily if same else 1.0)
            if rng.random() < min(p, 1.0):
                mutual[(i, j)] = 1.0
                mutual[(j, i)] = 1.0

    def _csr(counter, shape):
        if not counter:
            return sp.csr_matrix(shape, dtype=np.float64)
        keys = sorted(counter)
        return sp.csr_matrix(
            (
                np.array([counter[k] for k in keys]),
                (np.array([k[0] for k in keys]), np.array([k[1] for k in keys])),
            ),
            shape=shape,
        )

    n, m = cfg.n_users, cfg.n_hashtags
    t_tweet = _csr(by_kind["original"], (n, m))
    t_retweet = _csr(by_kind["retweet"], (n, m))
    counts = InteractionCounts(
        users=users,
        hashtags=tags,
        T=(t_tweet + t_retweet).tocsr(),
        T_tweet=t_tweet,
        T_retweet=t_retweet,
        T_reply=sp.csr_matrix((n, m), dtype=np.float64),
        mention=sp.csr_matrix((n, n), dtype=np.float64),
        reply=sp.csr_matrix((n, n), dtype=np.float64),
        mutual_follow=_csr(mutual, (n, n)),
    )
    counts.validate()

    annotations = StanceAnnotation(
        by_class={
            "POS": tuple(tags[j] for j in pos_tags[: cfg.annotated_per_camp]),
            "NEG": tuple(tags[j] for j in neg_tags[: cfg.annotated_per_camp]),
        }
    )
    annotations = with_usage(annotations, counts)

    graph = build_interaction_graph(counts)
    social = build_social_graph(counts, SocialWeights())
    pathsim = sparsify(
        compute_pathsim(counts, MetaPathSpec(left="retweet", right="tweet")),
        min_weight=0.01,
    )
    channels = ChannelSet(social=social, pathsim=pathsim)
    return SynthData(
        counts=counts, graph=graph, channels=channels,
        annotations=annotations, planted=planted,
    )


def save_annotations(annotations: StanceAnnotation, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cls in CLASS_ORDER:
            for tag in annotations.by_class.get(cls, ()):
                fh.write(f"{tag}\t{cls}\n")


def save_planted(planted: list[str], users: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for uid, cls in zip(users, planted):
            fh.write(f"{uid}\t{cls}\n")
