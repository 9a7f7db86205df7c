"""Word-error-rate computation and the per-model, per-emotion aggregate report.

Text is normalized to lowercase tokens before alignment: every character
outside [a-z0-9'] becomes a space, so contractions like "it's" survive as one
token and align against ASR outputs such as "but's". WER is the standard
(S + D + I) / reference-length under a minimum-cost token alignment, and the
report micro-averages within each emotion class (total edits over total
reference tokens).
"""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Corpus

logger = logging.getLogger(__name__)

# Emotion classes of the aggregate report: the 4 target labels, a catch-all
# for every other label, and the all-classes roll-up.
TARGET_EMOTIONS = ("neutral", "sad", "happy", "angry")
REPORT_CLASSES = TARGET_EMOTIONS + ("other", "overall")

_CLEAN_RE = re.compile(r"[^a-z0-9']+")


class EmptyReference(ValueError):
    """Reference text normalized to zero tokens; WER is undefined."""


@dataclass(frozen=True)
class NormalizedTokens:
    """Lowercase tokens plus the string they came from."""

    tokens: tuple[str, ...]
    source: str

    def __len__(self) -> int:
        return len(self.tokens)


def normalize(text: str) -> NormalizedTokens:
    """Lowercase, strip everything outside [a-z0-9'] to spaces, split."""
    tokens = _CLEAN_RE.sub(" ", text.lower()).split()
    return NormalizedTokens(tokens=tuple(tokens), source=text)


@dataclass(frozen=True)
class EditOps:
    """Substitution/deletion/insertion decomposition of one optimal alignment."""

    substitutions: int
    deletions: int
    insertions: int

    @property
    def total(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def _tokens(value: NormalizedTokens | Sequence[str]) -> Sequence[str]:
    return value.tokens if isinstance(value, NormalizedTokens) else value


def edit_distance(ref: NormalizedTokens | Sequence[str], hyp: NormalizedTokens | Sequence[str]) -> EditOps:
    """Minimum-cost alignment with unit costs, decomposed into S/D/I.

    Ties during backtrace prefer substitution over deletion over insertion,
    so the decomposition is deterministic.
    """
    a = _tokens(ref)
    b = _tokens(hyp)
    n, m = len(a), len(b)

    rows = [list(range(m + 1))]
    prev = rows[0]
    for i in range(1, n + 1):
        ai = a[i - 1]
        cur = [i]
        append = cur.append
        left = i
        for j in range(1, m + 1):
            diag = prev[j - 1] + (ai != b[j - 1])
            up = prev[j] + 1
            best = diag if diag <= up else up
            if left + 1 < best:
                best = left + 1
            append(best)
            left = best
        rows.append(cur)
        prev = cur

    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and rows[i][j] == rows[i - 1][j - 1] + (a[i - 1] != b[j - 1]):
            if a[i - 1] != b[j - 1]:
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and rows[i][j] == rows[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditOps(substitutions=subs, deletions=dels, insertions=ins)


def wer(ref: NormalizedTokens | Sequence[str], hyp: NormalizedTokens | Sequence[str]) -> float:
    """(S + D + I) / |ref|. Raises EmptyReference when ref has no tokens."""
    ref_tokens = _tokens(ref)
    if not ref_tokens:
        raise EmptyReference("reference has no tokens after normalization")
    return edit_distance(ref_tokens, _tokens(hyp)).total / len(ref_tokens)


@dataclass(frozen=True)
class WerCell:
    """Micro-averaged WER of one (model, class) pair."""

    wer: float
    utterances: int


@dataclass
class WerReport:
    """Per-model, per-class WER aggregate over a corpus."""

    cells: dict[tuple[str, str], WerCell]
    class_counts: dict[str, int]
    models: list[str]
    skipped: dict[str, int] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["model", *REPORT_CLASSES])
        for model in self.models:
            row: list[str] = [model]
            for cls in REPORT_CLASSES:
                cell = self.cells.get((model, cls))
                row.append(f"{cell.wer:.4f}" if cell else "")
            writer.writerow(row)
        writer.writerow(["utterances", *[self.class_counts.get(c, 0) for c in REPORT_CLASSES]])
        return buf.getvalue()

    def format_table(self) -> str:
        width = max([len("utterances")] + [len(m) for m in self.models]) + 2
        lines = [" " * width + "".join(f"{c:>10}" for c in REPORT_CLASSES)]
        for model in self.models:
            cells = []
            for cls in REPORT_CLASSES:
                cell = self.cells.get((model, cls))
                cells.append(f"{cell.wer:>10.2f}" if cell else f"{'-':>10}")
            lines.append(f"{model:<{width}}" + "".join(cells))
        counts = "".join(f"{self.class_counts.get(c, 0):>10}" for c in REPORT_CLASSES)
        lines.append(f"{'utterances':<{width}}" + counts)
        return "\n".join(lines)


def emotion_class(label: str | None) -> str | None:
    """Map an emotion label to a report class; None when no label."""
    if label is None:
        return None
    lowered = label.strip().lower()
    return lowered if lowered in TARGET_EMOTIONS else "other"


def wer_report(corpus: Corpus) -> WerReport:
    """Micro-averaged WER per ASR model and emotion class.

    Records missing ground truth or an emotion label are skipped and counted,
    as are records whose reference normalizes to zero tokens.
    """
    edits: dict[tuple[str, str], int] = {}
    ref_lens: dict[tuple[str, str], int] = {}
    counts: dict[tuple[str, str], int] = {}
    class_counts: dict[str, int] = {}
    skipped: dict[str, int] = {}
    models: list[str] = []
    seen_models: set[str] = set()

    for rec in corpus.records:
        cls = emotion_class(rec.emotion)
        if rec.ground_truth is None:
            skipped["no_ground_truth"] = skipped.get("no_ground_truth", 0) + 1
            continue
        if cls is None:
            skipped["no_emotion"] = skipped.get("no_emotion", 0) + 1
            continue
        ref = normalize(rec.ground_truth)
        if not ref.tokens:
            skipped["empty_reference"] = skipped.get("empty_reference", 0) + 1
            logger.warning("record %d: empty reference after normalization, excluded", rec.file_position)
            continue

        class_counts[cls] = class_counts.get(cls, 0) + 1
        class_counts["overall"] = class_counts.get("overall", 0) + 1
        for model, hyp_text in rec.transcriptions.items():
            if model not in seen_models:
                seen_models.add(model)
                models.append(model)
            ops = edit_distance(ref.tokens, normalize(hyp_text).tokens)
            for bucket in (cls, "overall"):
                key = (model, bucket)
                edits[key] = edits.get(key, 0) + ops.total
                ref_lens[key] = ref_lens.get(key, 0) + len(ref.tokens)
                counts[key] = counts.get(key, 0) + 1

    cells = {
        key: WerCell(wer=edits[key] / ref_lens[key], utterances=counts[key])
        for key in edits
    }
    return WerReport(cells=cells, class_counts=class_counts, models=models, skipped=skipped)
