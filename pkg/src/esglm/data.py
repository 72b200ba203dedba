"""Filing/score ingestion, label derivation, dataset assembly, and EDA.

Two binary tasks come out of the quarterly score series: task "a"
(change vs no_change, |delta| > change_epsilon) and task "b" (positive vs
negative, on changed quarters only).  Missing quarters break the delta
chain; no label spans a gap.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DuplicateError,
    EmptyDataset,
    InsufficientHistory,
    InvalidConfig,
    ParseError,
    StratificationError,
)
from .tokenizer import Vocab, encode, prepare_input
from .extract import segment_sentences

TASK_A_CLASSES = ("no_change", "change")
TASK_B_CLASSES = ("negative", "positive")

SCORES_HEADER = ["ticker", "year", "quarter", "env_score"]


@dataclass(frozen=True)
class FilingDoc:
    ticker: str
    year: int
    quarter: int
    text: str

    def __post_init__(self):
        if not 1 <= self.quarter <= 4:
            raise DataError(f"quarter {self.quarter} not in 1..4")
        if not self.text:
            raise DataError(f"empty filing body for {self.ticker}")

    @property
    def doc_id(self) -> str:
        return f"{self.ticker}-{self.year}Q{self.quarter}"


@dataclass(frozen=True)
class ScoreSeries:
    ticker: str
    points: tuple[tuple[int, int, float], ...]  # (year, quarter, env_score)

    def __post_init__(self):
        keys = [(y, q) for y, q, _ in self.points]
        if keys != sorted(keys) or len(set(keys)) != len(keys):
            raise DataError(f"score series for {self.ticker} not strictly increasing")
        for _, _, s in self.points:
            if not np.isfinite(s):
                raise DataError(f"non-finite score for {self.ticker}")


@dataclass(frozen=True)
class LabelRow:
    ticker: str
    year: int
    quarter: int
    delta: float
    task_a_label: str
    task_b_label: str | None


@dataclass
class LabeledExample:
    doc_id: str
    ticker: str
    year: int
    quarter: int
    delta: float
    task_a_label: str
    task_b_label: str | None
    text: str
    input_ids: np.ndarray
    real_len: int

    def label(self, task: str) -> str:
        if task == "a":
            return self.task_a_label
        if self.task_b_label is None:
            raise DataError(f"{self.doc_id} has no task-b label")
        return self.task_b_label

    def label_index(self, task: str) -> int:
        classes = TASK_A_CLASSES if task == "a" else TASK_B_CLASSES
        return classes.index(self.label(task))


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0
    stratify_by: str = "a"  # task whose label stratifies the split
    mode: str = "stratified"  # or "temporal"
    group_by_ticker: bool = False


@dataclass
class JoinReport:
    matched: int = 0
    unmatched_filings: int = 0
    unmatched_labels: int = 0


def load_scores(path) -> dict[str, ScoreSeries]:
    """Parse the scores CSV into per-ticker chronological series.

    Header must be exactly ticker,year,quarter,env_score.  Rows may arrive
    out of order; duplicates of (ticker, year, quarter) are an error.
    """
    rows: dict[str, list[tuple[int, int, float]]] = {}
    seen: set[tuple[str, int, int]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty scores file") from None
        if header != SCORES_HEADER:
            raise ParseError(f"{path}: line 1: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}: line {lineno}: expected 4 fields")
            ticker = row[0].strip()
            try:
                year = int(row[1])
                quarter = int(row[2])
                score = float(row[3])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if not ticker:
                raise ParseError(f"{path}: line {lineno}: empty ticker")
            if not 1 <= quarter <= 4:
                raise ParseError(f"{path}: line {lineno}: quarter {quarter}")
            if not np.isfinite(score):
                raise ParseError(f"{path}: line {lineno}: non-finite score")
            key = (ticker, year, quarter)
            if key in seen:
                raise DuplicateError(f"{path}: line {lineno}: duplicate {key}")
            seen.add(key)
            rows.setdefault(ticker, []).append((year, quarter, score))
    return {
        t: ScoreSeries(ticker=t, points=tuple(sorted(pts)))
        for t, pts in rows.items()
    }


def load_manifest(path) -> list[FilingDoc]:
    """Read the filings manifest (JSON Lines) and the bodies it points to.

    Each line: {"ticker":..., "year":..., "quarter":..., "path":...};
    paths resolve relative to the manifest's directory.
    """
    base = Path(path).parent
    docs: list[FilingDoc] = []
    seen: set[tuple[str, int, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            try:
                ticker = str(rec["ticker"])
                year = int(rec["year"])
                quarter = int(rec["quarter"])
                body_path = base / rec["path"]
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc!r}") from None
            key = (ticker, year, quarter)
            if key in seen:
                raise DuplicateError(f"{path}: line {lineno}: duplicate {key}")
            seen.add(key)
            try:
                text = body_path.read_text(encoding="utf-8")
            except OSError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            docs.append(FilingDoc(ticker=ticker, year=year, quarter=quarter, text=text))
    return docs


def _next_quarter(year: int, quarter: int) -> tuple[int, int]:
    return (year, quarter + 1) if quarter < 4 else (year + 1, 1)


def derive_labels(series: ScoreSeries, change_epsilon: float = 0.0) -> list[LabelRow]:
    """Quarter-over-quarter deltas and labels for consecutive quarters only.

    The label attaches to the later quarter of each pair.  A gap in the
    series produces no label across it.
    """
    if len(series.points) < 2:
        raise InsufficientHistory(
            f"{series.ticker}: {len(series.points)} point(s), need 2"
        )
    labels: list[LabelRow] = []
    for (y0, q0, s0), (y1, q1, s1) in zip(series.points, series.points[1:]):
        if (y1, q1) != _next_quarter(y0, q0):
            continue
        delta = s1 - s0
        changed = abs(delta) > change_epsilon
        labels.append(LabelRow(
            ticker=series.ticker, year=y1, quarter=q1, delta=delta,
            task_a_label="change" if changed else "no_change",
            task_b_label=("positive" if delta > 0 else "negative") if changed else None,
        ))
    return labels


def derive_all_labels(
    series_map: dict[str, ScoreSeries], change_epsilon: float = 0.0
) -> list[LabelRow]:
    """derive_labels over every ticker; single-point series are skipped."""
    out: list[LabelRow] = []
    for ticker in sorted(series_map):
        if len(series_map[ticker].points) < 2:
            continue
        out.extend(derive_labels(series_map[ticker], change_epsilon))
    return out


def build_dataset(
    filings: list[FilingDoc],
    labels: list[LabelRow],
    extractor,
    task: str,
    max_seq_len: int = 512,
) -> tuple[list[LabeledExample], JoinReport]:
    """Inner-join filings to labels and run extraction on the matches.

    extractor maps a FilingDoc to an ExtractedInput (see extract_top_k);
    task "b" keeps changed quarters only.  Unmatched rows on either side
    are reported, not fatal.
    """
    if task not in ("a", "b"):
        raise InvalidConfig(f"task must be 'a' or 'b', got {task!r}")
    wanted = [
        row for row in labels if task == "a" or row.task_a_label == "change"
    ]
    by_key = {(row.ticker, row.year, row.quarter): row for row in wanted}
    report = JoinReport()
    examples: list[LabeledExample] = []
    for doc in sorted(filings, key=lambda d: d.doc_id):
        row = by_key.pop((doc.ticker, doc.year, doc.quarter), None)
        if row is None:
            report.unmatched_filings += 1
            continue
        report.matched += 1
        ext = extractor(doc)
        enc = prepare_input(ext.token_ids, max_seq_len)
        examples.append(LabeledExample(
            doc_id=doc.doc_id, ticker=doc.ticker, year=doc.year,
            quarter=doc.quarter, delta=row.delta,
            task_a_label=row.task_a_label, task_b_label=row.task_b_label,
            text=" ".join(s.text for s in ext.sentences),
            input_ids=enc.ids, real_len=enc.real_len,
        ))
    report.unmatched_labels = len(by_key)
    if not examples:
        raise EmptyDataset("no filings matched any label")
    return examples, report


def _largest_remainder(n: int, fractions: list[float]) -> list[int]:
    quotas = [f * n for f in fractions]
    counts = [int(q) for q in quotas]
    # leftover units go to the largest fractional parts, earlier split first
    order = sorted(
        range(len(quotas)),
        key=lambda i: (-(quotas[i] - counts[i]), i),
    )
    for i in range(n - sum(counts)):
        counts[order[i]] += 1
    return counts


def split_dataset(
    dataset: list[LabeledExample], spec: SplitSpec
) -> tuple[list[LabeledExample], list[LabeledExample], list[LabeledExample]]:
    """Stratified (or temporal) partition into train/val/test.

    Stratified mode shuffles within each class with the seeded rng and
    allocates by largest-remainder rounding, so splits are disjoint,
    exhaustive, and reproducible.
    """
    fractions = [spec.train_frac, spec.val_frac, spec.test_frac]
    if any(f <= 0 for f in fractions):
        raise StratificationError(f"all split fractions must be > 0: {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise StratificationError(f"split fractions sum to {sum(fractions)}")
    task = spec.stratify_by
    if task not in ("a", "b"):
        raise InvalidConfig(f"stratify_by must be 'a' or 'b', got {task!r}")

    if spec.mode == "temporal":
        ordered = sorted(dataset, key=lambda e: (e.year, e.quarter, e.doc_id))
        counts = _largest_remainder(len(ordered), fractions)
        a, b = counts[0], counts[0] + counts[1]
        return ordered[:a], ordered[a:b], ordered[b:]
    if spec.mode != "stratified":
        raise InvalidConfig(f"unknown split mode {spec.mode!r}")

    rng = np.random.default_rng(spec.seed)
    splits: tuple[list[LabeledExample], ...] = ([], [], [])
    if spec.group_by_ticker:
        # whole tickers go to one split; stratification is best-effort only
        _split_groups(dataset, fractions, rng, splits)
        return splits

    by_class: dict[str, list[LabeledExample]] = {}
    for ex in dataset:
        by_class.setdefault(ex.label(task), []).append(ex)
    if len(by_class) < 2:
        raise StratificationError(
            f"need both classes present, got {sorted(by_class)}"
        )
    for cls in sorted(by_class):
        members = by_class[cls]
        if len(members) < len(fractions):
            raise StratificationError(
                f"class {cls!r} has {len(members)} example(s), "
                f"fewer than {len(fractions)} splits"
            )
        order = rng.permutation(len(members))
        counts = _largest_remainder(len(members), fractions)
        pos = 0
        for split, count in zip(splits, counts):
            split.extend(members[i] for i in order[pos : pos + count])
            pos += count
    return splits


def _split_groups(members, fractions, rng, splits) -> None:
    """Assign whole tickers to splits, approximating fractions by count."""
    tickers = sorted({e.ticker for e in members})
    if len(tickers) < len(fractions):
        raise StratificationError(
            f"{len(tickers)} ticker group(s), fewer than {len(fractions)} splits"
        )
    order = rng.permutation(len(tickers))
    targets = [f * len(members) for f in fractions]
    filled = [0.0, 0.0, 0.0]
    by_ticker = {t: [e for e in members if e.ticker == t] for t in tickers}
    for i in order:
        group = by_ticker[tickers[i]]
        deficit = [(filled[j] - targets[j], j) for j in range(3)]
        j = min(deficit)[1]
        splits[j].extend(group)
        filled[j] += len(group)


@dataclass
class EdaStats:
    """The statistics behind the score-delta and sentence-length figures."""

    n_labels: int
    zero_delta_fraction: float
    delta_hist: list[tuple[float, float, int]]
    n_sentences: int
    sentlen_hist: list[tuple[int, int, int]]


def eda_stats(
    labels: list[LabelRow],
    sentence_token_lengths: list[int],
    delta_bins: int = 20,
    sentlen_bin_width: int = 10,
) -> EdaStats:
    """Zero-delta fraction plus the two histograms, from raw counts."""
    if not labels:
        raise EmptyDataset("no labels for EDA")
    deltas = np.array([l.delta for l in labels], dtype=np.float64)
    zero_fraction = float(np.mean(deltas == 0.0))

    lo, hi = float(deltas.min()), float(deltas.max())
    if lo == hi:
        delta_hist = [(lo, hi, len(deltas))]
    else:
        counts, edges = np.histogram(deltas, bins=delta_bins, range=(lo, hi))
        delta_hist = [
            (float(edges[i]), float(edges[i + 1]), int(counts[i]))
            for i in range(len(counts))
        ]

    sentlen_hist: list[tuple[int, int, int]] = []
    if sentence_token_lengths:
        w = sentlen_bin_width
        top = max(sentence_token_lengths)
        bins = Counter(length // w for length in sentence_token_lengths)
        sentlen_hist = [
            (b * w, (b + 1) * w, bins.get(b, 0)) for b in range(top // w + 1)
        ]
    return EdaStats(
        n_labels=len(labels),
        zero_delta_fraction=zero_fraction,
        delta_hist=delta_hist,
        n_sentences=len(sentence_token_lengths),
        sentlen_hist=sentlen_hist,
    )


def sentence_lengths_in_tokens(
    filings: list[FilingDoc], vocab: Vocab
) -> list[int]:
    """Token length of every sentence across all filing bodies."""
    lengths: list[int] = []
    for doc in filings:
        for sent in segment_sentences(doc.text):
            lengths.append(len(encode(sent.text, vocab)))
    return lengths


def eda_from_filings(
    labels: list[LabelRow],
    filings: list[FilingDoc],
    vocab: Vocab,
    delta_bins: int = 20,
    sentlen_bin_width: int = 10,
) -> EdaStats:
    return eda_stats(
        labels, sentence_lengths_in_tokens(filings, vocab),
        delta_bins=delta_bins, sentlen_bin_width=sentlen_bin_width,
    )


def write_eda(stats: EdaStats, out_dir) -> None:
    """Emit eda.json plus the two bin_start,bin_end,count CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "n_labels": stats.n_labels,
        "zero_delta_fraction": stats.zero_delta_fraction,
        "delta_hist": stats.delta_hist,
        "n_sentences": stats.n_sentences,
        "sentlen_hist": stats.sentlen_hist,
    }
    (out / "eda.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for name, hist in (
        ("delta_hist.csv", stats.delta_hist),
        ("sentlen_hist.csv", stats.sentlen_hist),
    ):
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_start", "bin_end", "count"])
            writer.writerows(hist)


def save_dataset_splits(
    splits: tuple[list[LabeledExample], ...],
    meta: dict,
    out_dir,
) -> None:
    """Write train/val/test JSONL plus meta.json into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, examples in zip(("train", "val", "test"), splits):
        with open(out / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            for ex in examples:
                fh.write(json.dumps({
                    "doc_id": ex.doc_id,
                    "ticker": ex.ticker,
                    "year": ex.year,
                    "quarter": ex.quarter,
                    "delta": ex.delta,
                    "task_a_label": ex.task_a_label,
                    "task_b_label": ex.task_b_label,
                    "text": ex.text,
                    "input_ids": ex.input_ids.tolist(),
                    "real_len": ex.real_len,
                }, sort_keys=True) + "\n")
    (out / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_dataset_splits(data_dir) -> tuple[dict, dict[str, list[LabeledExample]]]:
    """Read meta.json and the three split files back."""
    data = Path(data_dir)
    meta_path = data / "meta.json"
    if not meta_path.exists():
        raise DataError(f"{data_dir} has no meta.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    splits: dict[str, list[LabeledExample]] = {}
    for name in ("train", "val", "test"):
        examples: list[LabeledExample] = []
        with open(data / f"{name}.jsonl", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                examples.append(LabeledExample(
                    doc_id=rec["doc_id"], ticker=rec["ticker"],
                    year=rec["year"], quarter=rec["quarter"],
                    delta=rec["delta"], task_a_label=rec["task_a_label"],
                    task_b_label=rec["task_b_label"], text=rec["text"],
                    input_ids=np.asarray(rec["input_ids"], dtype=np.int64),
                    real_len=rec["real_len"],
                ))
        splits[name] = examples
    return meta, splits
