"""Word-similarity evaluation and the desk-scale experiment harnesses.

Covers: benchmark file ingestion (tab-separated, per-benchmark column
presets), Spearman rank correlation, the constrained/unconstrained evaluation
split, the out-of-knowledge (OOK) scalability harness, the loss-ablation
harness, and a synthetic paired-corpus generator that stands in for
retrofitting output at desk scale.

A note on sign: model scores are cosine SIMILARITIES, so higher model score
should track higher human score and a good mapping yields positive rho.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DomainError,
    ParseError,
    UndefinedCorrelationError,
)
from .embeddings import EmbeddingTable, align_pairs, post_specialize
from .losses import LossToggles
from .models import map_in_batches
from .tensor_math import RngState, cosine_similarity, row_l2_normalize
from .trainer import train

# Stream purposes owned by this module (trainer owns 1..63).
PURPOSE_OOK_SAMPLE = 70
PURPOSE_SYNTH_CENTROIDS = 80
PURPOSE_SYNTH_ASSIGN = 81
PURPOSE_SYNTH_NOISE = 82
PURPOSE_SYNTH_ANTONYMS = 83
PURPOSE_SYNTH_GOLD_NOISE = 84
PURPOSE_SYNTH_CONSTRAINTS = 85
PURPOSE_SYNTH_PAIRS = 86

DEFAULT_OOK_FRACTIONS = (0.05, 0.10, 0.25, 0.50, 0.75, 1.00)

# Ablation switch order used by one-by-one (cumulative) mode.
TOGGLE_ORDER = ("one_way_mm", "cycle_mm", "cycle_dis", "id_loss", "cycle_loss")


# ------------------------------------------------------------------ datasets


@dataclass
class SimilarityDataset:
    """Word pairs with human similarity judgments."""

    name: str
    rows: list  # (word1, word2, gold_score)
    dropped_duplicates: int = 0
    dropped_unscored: int = 0

    def __len__(self):
        return len(self.rows)

    def words(self):
        out = set()
        for w1, w2, _ in self.rows:
            out.add(w1)
            out.add(w2)
        return out


@dataclass
class FormatSpec:
    """Column layout of one tab-separated benchmark file."""

    name: str
    word1_col: int = 0
    word2_col: int = 1
    score_col: int = 2
    header_lines: int = 0


FORMATS = {
    "simlex": FormatSpec("simlex", 0, 1, 3, header_lines=1),
    "simverb": FormatSpec("simverb", 0, 1, 3, header_lines=0),
    "card660": FormatSpec("card660", 0, 1, 2, header_lines=0),
    "tsv": FormatSpec("tsv", 0, 1, 2, header_lines=0),
}

_NULL_SCORES = {"", "null", "none", "nan", "na"}


def load_similarity_dataset(path, format_spec, name=None):
    """Read one benchmark file; format_spec is a FormatSpec or a preset name.

    Rows whose score field is empty/unscorable are dropped (counted); duplicate
    unordered pairs keep the first occurrence (counted).
    """
    if isinstance(format_spec, str):
        try:
            format_spec = FORMATS[format_spec]
        except KeyError:
            raise DomainError(f"unknown benchmark format {format_spec!r}") from None
    fs = format_spec
    needed = max(fs.word1_col, fs.word2_col, fs.score_col)
    rows = []
    seen = set()
    dup = unscored = 0
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for lineno, line in enumerate(lines, start=1):
        if lineno <= fs.header_lines or not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) <= needed:
            raise ParseError(
                f"line has {len(parts)} columns, need index {needed}", line_number=lineno
            )
        w1, w2 = parts[fs.word1_col].strip(), parts[fs.word2_col].strip()
        raw = parts[fs.score_col].strip()
        if raw.lower() in _NULL_SCORES:
            unscored += 1
            continue
        try:
            score = float(raw)
        except ValueError:
            raise ParseError(f"bad score {raw!r}", line_number=lineno) from None
        if not np.isfinite(score):
            unscored += 1
            continue
        key = (w1, w2) if w1 <= w2 else (w2, w1)
        if key in seen:
            dup += 1
            continue
        seen.add(key)
        rows.append((w1, w2, score))
    if not rows:
        raise DataError(f"no scorable rows in {path}")
    return SimilarityDataset(
        name=name or fs.name, rows=rows, dropped_duplicates=dup, dropped_unscored=unscored
    )


def load_constraint_vocab(path):
    """The set of all whitespace-separated tokens in a constraint-pair file."""
    vocab = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            vocab.update(line.split())
    return vocab


# ------------------------------------------------------------------- spearman


def _average_ranks(values):
    """1-based ranks with ties averaged."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(xs, ys):
    """Spearman rank correlation (average ranks for ties)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise UndefinedCorrelationError("inputs must be equal-length 1-d lists")
    if len(xs) < 2:
        raise UndefinedCorrelationError("need at least 2 points")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx = np.sqrt(dx @ dx)
    sy = np.sqrt(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("zero rank variance")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


# ----------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    """Spearman result of one table on one benchmark."""

    dataset: str
    mode: str
    rho: float
    evaluated: int
    skipped: int

    def to_line(self):
        return f"{self.dataset}\t{self.mode}\t{self.rho:.6f}\t{self.evaluated}\t{self.skipped}"

    HEADER = "dataset\tmode\trho\tevaluated\tskipped"


def evaluate_similarity(table, dataset, missing_policy="skip", mode="all"):
    """Correlate the table's pairwise cosines with the gold judgments.

    missing_policy "skip" drops pairs with out-of-vocabulary words (counted);
    "zero" scores such pairs 0, the convention for rare-word benchmarks.
    """
    if missing_policy not in ("skip", "zero"):
        raise DomainError(f"unknown missing_policy {missing_policy!r}")
    model_scores, gold_scores = [], []
    skipped = 0
    for w1, w2, gold in dataset.rows:
        if w1 in table and w2 in table:
            model_scores.append(cosine_similarity(table.vector(w1), table.vector(w2)))
            gold_scores.append(gold)
        elif missing_policy == "zero":
            model_scores.append(0.0)
            gold_scores.append(gold)
        else:
            skipped += 1
    if len(model_scores) < 2:
        raise UndefinedCorrelationError(
            f"only {len(model_scores)} scorable pairs on {dataset.name}"
        )
    rho = spearman_rho(model_scores, gold_scores)
    return EvalReport(
        dataset=dataset.name, mode=mode, rho=rho,
        evaluated=len(model_scores), skipped=skipped,
    )


@dataclass
class SplitResult:
    """Constrained/unconstrained partition of a benchmark.

    Iterable as (disjoint, full) for callers that want the bare pair.
    """

    disjoint: SimilarityDataset
    full: SimilarityDataset
    excluded: int

    def __iter__(self):
        return iter((self.disjoint, self.full))


def split_disjoint_full(dataset, constraints):
    """Partition pairs by constraint membership.

    A pair is "full" iff both words appear in the constraint vocabulary and
    "disjoint" iff neither does; mixed pairs are excluded and counted.
    """
    constraints = set(constraints)
    dis, full = [], []
    excluded = 0
    for row in dataset.rows:
        w1, w2, _ = row
        in1, in2 = w1 in constraints, w2 in constraints
        if in1 and in2:
            full.append(row)
        elif not in1 and not in2:
            dis.append(row)
        else:
            excluded += 1
    return SplitResult(
        disjoint=SimilarityDataset(name=dataset.name, rows=dis),
        full=SimilarityDataset(name=dataset.name, rows=full),
        excluded=excluded,
    )


# -------------------------------------------------------------- OOK harness


def ook_word_sample(benchmark_words, fraction, seed):
    """Seeded nested sample: the first round(f*n) of one fixed permutation.

    Samples at smaller fractions are always subsets of samples at larger
    fractions, which keeps scalability curves comparable.
    """
    if not 0.0 < fraction <= 1.0:
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    words = sorted(benchmark_words)
    perm = RngState.for_purpose(seed, PURPOSE_OOK_SAMPLE, 0).permutation(len(words))
    count = max(1, int(round(fraction * len(words))))
    return sorted(words[i] for i in perm[:count])


def ook_harness(x_table, y_table, datasets, fractions, train_fn, seed=0):
    """Scalability grid: how does benchmark rho react to constraint coverage?

    For each fraction f, the constraint vocabulary is a seeded nested sample
    covering f of the union of benchmark words; training pairs are restricted
    to it; ``train_fn(corpus, fraction)`` trains and returns a model; every
    benchmark is then evaluated on the post-specialized table.  Returns
    {fraction: {dataset_name: EvalReport}}.
    """
    bench_words = set()
    for ds in datasets:
        bench_words |= ds.words()
    corpus = align_pairs(x_table, y_table)
    grid = {}
    for fraction in fractions:
        sampled = ook_word_sample(bench_words, fraction, seed)
        sub = corpus.subset(sampled)
        if len(sub) == 0:
            raise DataError(f"fraction {fraction} leaves no training pairs")
        model = train_fn(sub, fraction)
        specialized = post_specialize(x_table, model)
        grid[fraction] = {
            ds.name: evaluate_similarity(specialized, ds, mode="all") for ds in datasets
        }
    return grid


# ---------------------------------------------------------- ablation harness


def ablation_harness(corpus, base_config, mode="toggle", eval_fn=None):
    """Train one baseline plus loss-ablated variants; returns name -> TrainResult.

    mode "toggle": each switch in TOGGLE_ORDER is turned off alone.
    mode "one_by_one": switches are turned off cumulatively in that order.
    All runs share the baseline seed, so comparisons are paired.
    """
    if mode not in ("toggle", "one_by_one"):
        raise DomainError(f"unknown ablation mode {mode!r}")
    variants = {"baseline": {}}
    if mode == "toggle":
        for name in TOGGLE_ORDER:
            variants[f"no_{name}"] = {name: False}
    else:
        off = {}
        for name in TOGGLE_ORDER:
            off = dict(off, **{name: False})
            variants[f"upto_{name}"] = off
    results = {}
    for label, overrides in variants.items():
        toggles = dataclasses.replace(LossToggles(), **overrides)
        config = dataclasses.replace(base_config, toggles=toggles)
        results[label] = train(corpus, config, eval_fn=eval_fn)
    return results


# ------------------------------------------------------------ synthetic data


@dataclass
class SyntheticCorpus:
    """A generated stand-in for distributional/retrofitted table pairs.

    Ground truth (cluster ids, centroids, antonym pairs) is retained so tests
    can check the construction independently of any model.
    """

    x_table: EmbeddingTable
    y_table: EmbeddingTable
    constraint_vocab: set
    dataset: SimilarityDataset
    cluster_of: np.ndarray
    centroids: np.ndarray
    antonym_pairs: list

    def paired(self):
        return align_pairs(self.x_table, self.y_table)

    def training_pairs(self):
        """Pairs restricted to constraint-covered words (what training may see)."""
        sub = self.paired().subset(sorted(self.constraint_vocab))
        if len(sub) == 0:
            raise DataError("constraint vocabulary covers no words")
        return sub

    def held_out_words(self):
        return sorted(set(self.x_table.words) - self.constraint_vocab)


def synthesize_paired_corpus(seed, vocab_size=2000, dim=32, n_clusters=50,
                             collapse_strength=0.8, antonym_fraction=0.1,
                             noise_scale=0.25, constraint_coverage=0.8,
                             benchmark_pairs=None):
    """Generate clustered unit vectors (X) and their pulled-together images (Y).

    X: each word sits near one of ``n_clusters`` random unit centroids with
    isotropic noise.  Y: each vector is pulled toward its centroid by
    ``collapse_strength`` (synonym attraction); a fraction of cross-cluster
    word pairs is additionally pushed apart (antonym repulsion); rows are
    renormalized.  With collapse_strength 0 and antonym_fraction 0, Y equals X
    exactly.  The gold benchmark scores cluster co-membership (same cluster
    high, cross-cluster low, antonyms lowest) with jitter, clipped to [0, 10].
    The constraint vocabulary covers a seeded ``constraint_coverage`` share of
    words; the remainder is the held-out (out-of-knowledge) set.
    """
    if vocab_size < 2 * n_clusters:
        raise DomainError(f"vocab_size must be at least 2*n_clusters, got {vocab_size}")
    if not 0.0 <= collapse_strength <= 1.0:
        raise DomainError("collapse_strength must lie in [0, 1]")
    if not 0.0 <= antonym_fraction <= 1.0:
        raise DomainError("antonym_fraction must lie in [0, 1]")
    if not 0.0 < constraint_coverage <= 1.0:
        raise DomainError("constraint_coverage must lie in (0, 1]")

    words = [f"w{i:05d}" for i in range(vocab_size)]

    cent_rng = RngState.for_purpose(seed, PURPOSE_SYNTH_CENTROIDS, 0)
    centroids = row_l2_normalize(cent_rng.normal(n_clusters, dim))

    assign_rng = RngState.for_purpose(seed, PURPOSE_SYNTH_ASSIGN, 0)
    perm = assign_rng.permutation(vocab_size)
    cluster_of = np.empty(vocab_size, dtype=np.int64)
    cluster_of[perm] = np.arange(vocab_size) % n_clusters

    noise_rng = RngState.for_purpose(seed, PURPOSE_SYNTH_NOISE, 0)
    x = row_l2_normalize(centroids[cluster_of] + noise_scale * noise_rng.normal(vocab_size, dim))

    if collapse_strength == 0.0:
        y = x.copy()
    else:
        y = row_l2_normalize(
            (1.0 - collapse_strength) * x + collapse_strength * centroids[cluster_of]
        )

    ant_rng = RngState.for_purpose(seed, PURPOSE_SYNTH_ANTONYMS, 0)
    n_ant = int(round(antonym_fraction * vocab_size / 2))
    antonym_pairs = []
    used = set()
    attempts = 0
    while len(antonym_pairs) < n_ant and attempts < 50 * max(1, n_ant):
        attempts += 1
        i, j = (int(v) for v in ant_rng.choice(vocab_size, size=2, replace=False))
        if cluster_of[i] == cluster_of[j] or i in used or j in used:
            continue
        used.add(i)
        used.add(j)
        antonym_pairs.append((i, j))
    if antonym_pairs:
        push = max(collapse_strength, 0.5)
        before = y.copy()
        for i, j in antonym_pairs:
            y[i] = y[i] - push * before[j]
            y[j] = y[j] - push * before[i]
        y = row_l2_normalize(y)

    gold_rng = RngState.for_purpose(seed, PURPOSE_SYNTH_GOLD_NOISE, 0)
    pair_rng = RngState.for_purpose(seed, PURPOSE_SYNTH_PAIRS, 0)
    n_pairs = benchmark_pairs if benchmark_pairs is not None else 2 * vocab_size
    antonym_set = {(min(i, j), max(i, j)) for i, j in antonym_pairs}
    members = [np.nonzero(cluster_of == c)[0] for c in range(n_clusters)]

    rows = []
    seen_pairs = set()

    def add_pair(i, j, base):
        key = (min(i, j), max(i, j))
        if i == j or key in seen_pairs:
            return
        seen_pairs.add(key)
        score = float(np.clip(base + gold_rng.uniform(-0.75, 0.75), 0.0, 10.0))
        rows.append((words[i], words[j], score))

    for i, j in antonym_pairs[: max(1, n_pairs // 10)]:
        add_pair(i, j, 0.0)
    n_same = int(0.4 * n_pairs)
    guard = 0
    while len(rows) < min(n_same, n_pairs) and guard < 50 * n_pairs:
        guard += 1
        c = int(pair_rng.choice(n_clusters, size=1)[0])
        if len(members[c]) < 2:
            continue
        i, j = (int(v) for v in pair_rng.choice(len(members[c]), size=2, replace=False))
        add_pair(int(members[c][i]), int(members[c][j]), 8.0)
    guard = 0
    while len(rows) < n_pairs and guard < 50 * n_pairs:
        guard += 1
        i, j = (int(v) for v in pair_rng.choice(vocab_size, size=2, replace=False))
        if cluster_of[i] == cluster_of[j]:
            continue
        key = (min(i, j), max(i, j))
        base = 0.0 if key in antonym_set else 2.0
        add_pair(i, j, base)

    cons_rng = RngState.for_purpose(seed, PURPOSE_SYNTH_CONSTRAINTS, 0)
    cons_perm = cons_rng.permutation(vocab_size)
    n_cons = max(1, int(round(constraint_coverage * vocab_size)))
    constraint_vocab = {words[i] for i in cons_perm[:n_cons]}

    return SyntheticCorpus(
        x_table=EmbeddingTable(list(words), x, normalized=True),
        y_table=EmbeddingTable(list(words), y, normalized=True),
        constraint_vocab=constraint_vocab,
        dataset=SimilarityDataset(name="synthetic", rows=rows),
        cluster_of=cluster_of,
        centroids=centroids,
        antonym_pairs=antonym_pairs,
    )


# --------------------------------------------------- held-out recovery metric


def heldout_cosine_recovery(corpus, model, words=None):
    """Mean cosine of (mapped x, gold y) and of (raw x, gold y) on given words.

    Returns (mapped_mean, baseline_mean); ``words`` defaults to the corpus's
    held-out vocabulary.  The margin between the two is the desk-scale measure
    of generalization to out-of-knowledge words.
    """
    words = corpus.held_out_words() if words is None else list(words)
    if not words:
        raise DataError("no held-out words to evaluate")
    x = np.vstack([corpus.x_table.vector(w) for w in words])
    y = np.vstack([corpus.y_table.vector(w) for w in words])
    mapped = map_in_batches(model.gen_xy, x)

    def _mean_cos(a, b):
        na = np.sqrt((a * a).sum(axis=1))
        nb = np.sqrt((b * b).sum(axis=1))
        return float(((a * b).sum(axis=1) / (na * nb)).mean())

    return _mean_cos(mapped, y), _mean_cos(x, y)
