"""Corpus loading, utterance-ID parsing, and script/session indexing.

The corpus is a JSON array (or newline-delimited JSON) of utterance objects.
Each object carries an utterance id, speaker, optional emotion label, an
optional reference transcription, and one transcription per ASR model::

    {
      "need_prediction": "yes",
      "emotion": "sad",
      "id": "Ses01F_script01_3_M023",
      "speaker": "Ses01_M",
      "Ground truth": "Yeah. I suppose I have been. But it's going from me.",
      "hubertlarge": "ya i suppose i have been bht's going from me",
      ...
    }

Utterance ids follow the grammar ``Ses<DD><L>_<MIDDLE>_<S><III>`` where the
middle segment is ``scriptNN`` (optionally followed by a ``_<d>`` subset),
``improNN``, or a bare ``NN``. All subsets of a script share one script key,
which is the unit used for context windowing.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

# The ASR systems whose outputs appear in the curated corpus.
KNOWN_ASR_MODELS = frozenset(
    {
        "hubertlarge",
        "w2v2100",
        "w2v2960",
        "w2v2960large",
        "w2v2960largeself",
        "wavlmplus",
        "whisperbase",
        "whisperlarge",
        "whispermedium",
        "whispersmall",
        "whispertiny",
    }
)

# Object keys that are metadata rather than ASR transcriptions.
_RESERVED_KEYS = frozenset({"id", "speaker", "emotion", "need_prediction"})
_GROUND_TRUTH_KEYS = ("Ground truth", "ground_truth", "groundtruth")
_ENSEMBLE_KEY = "ensemble"

KIND_SCRIPT = "script"
KIND_IMPRO = "impro"
KIND_BARE = "bare"

_HEAD_RE = re.compile(r"^Ses(\d{2})([A-Z])$")
_TAIL_RE = re.compile(r"^([FM])(\d{3})$")
_SCRIPT_RE = re.compile(r"^script(\d{2})$")
_IMPRO_RE = re.compile(r"^impro(\d{2})$")
_BARE_RE = re.compile(r"^(\d{2})$")


class MalformedId(ValueError):
    """An utterance id string that does not match the id grammar."""

    def __init__(self, raw: str, reason: str):
        super().__init__(f"malformed id {raw!r}: {reason}")
        self.raw = raw
        self.reason = reason


class SchemaError(ValueError):
    """A corpus object that violates the expected schema."""

    def __init__(self, position: int, key: str | None, reason: str):
        where = f"record {position}" + (f", key {key!r}" if key else "")
        super().__init__(f"{where}: {reason}")
        self.position = position
        self.key = key
        self.reason = reason


@dataclass(frozen=True)
class UtteranceId:
    """Parsed structure of an utterance id string."""

    session: int
    recording: str
    dialogue_kind: str  # "script", "impro", or "bare"
    dialogue_index: int
    subset: int | None
    speaker_sex: str  # "F" or "M"
    utterance_index: int
    raw: str

    def serialize(self) -> str:
        """Reconstruct the original id string byte-for-byte."""
        return (
            f"Ses{self.session:02d}{self.recording}"
            f"_{self._middle()}_{self.speaker_sex}{self.utterance_index:03d}"
        )

    def _middle(self) -> str:
        if self.dialogue_kind == KIND_SCRIPT:
            mid = f"script{self.dialogue_index:02d}"
            if self.subset is not None:
                mid += f"_{self.subset}"
            return mid
        if self.dialogue_kind == KIND_IMPRO:
            return f"impro{self.dialogue_index:02d}"
        return f"{self.dialogue_index:02d}"

    @cached_property
    def session_key(self) -> str:
        """Conversation identity: session number plus recording letter."""
        return f"Ses{self.session:02d}{self.recording}"

    @cached_property
    def script_key(self) -> str:
        """Grouping key shared by all subsets and utterances of one script."""
        if self.dialogue_kind == KIND_SCRIPT:
            mid = f"script{self.dialogue_index:02d}"
        elif self.dialogue_kind == KIND_IMPRO:
            mid = f"impro{self.dialogue_index:02d}"
        else:
            mid = f"{self.dialogue_index:02d}"
        return f"{self.session_key}/{mid}"


def parse_id(raw: str) -> UtteranceId:
    """Parse an utterance id string.

    Raises MalformedId with a reason naming the failing segment.
    """
    if not raw:
        raise MalformedId(raw, "id is empty")
    if not raw.isascii():
        raise MalformedId(raw, "id contains non-ASCII characters")

    parts = raw.split("_")
    if len(parts) < 3:
        raise MalformedId(raw, "expected at least 3 underscore-separated segments")
    if len(parts) > 4:
        raise MalformedId(raw, "too many underscore-separated segments")

    head = _HEAD_RE.match(parts[0])
    if not head:
        raise MalformedId(
            raw,
            f"first segment {parts[0]!r} must be 'Ses' + 2-digit session + recording letter",
        )
    session = int(head.group(1))
    if not 1 <= session <= 5:
        raise MalformedId(raw, f"session {head.group(1)} outside 01..05")
    recording = head.group(2)

    tail = _TAIL_RE.match(parts[-1])
    if not tail:
        raise MalformedId(
            raw,
            f"last segment {parts[-1]!r} must be F or M followed by a 3-digit index",
        )
    speaker_sex = tail.group(1)
    utterance_index = int(tail.group(2))

    middle = parts[1:-1]
    subset: int | None = None
    if len(middle) == 2:
        script = _SCRIPT_RE.match(middle[0])
        if not script:
            raise MalformedId(
                raw, f"subset segment is only allowed after a 'scriptNN' segment, got {middle[0]!r}"
            )
        if not middle[1].isdigit() or len(middle[1]) != 1:
            raise MalformedId(raw, f"subset segment {middle[1]!r} must be a single digit")
        kind = KIND_SCRIPT
        dialogue_index = int(script.group(1))
        subset = int(middle[1])
    else:
        seg = middle[0]
        if m := _SCRIPT_RE.match(seg):
            kind, dialogue_index = KIND_SCRIPT, int(m.group(1))
        elif m := _IMPRO_RE.match(seg):
            kind, dialogue_index = KIND_IMPRO, int(m.group(1))
        elif m := _BARE_RE.match(seg):
            kind, dialogue_index = KIND_BARE, int(m.group(1))
        else:
            raise MalformedId(
                raw, f"middle segment {seg!r} must be 'scriptNN', 'improNN', or 'NN'"
            )

    return UtteranceId(
        session=session,
        recording=recording,
        dialogue_kind=kind,
        dialogue_index=dialogue_index,
        subset=subset,
        speaker_sex=speaker_sex,
        utterance_index=utterance_index,
        raw=raw,
    )


def script_key(uid: UtteranceId) -> str:
    """Grouping key for an id; subsets of the same script share one key."""
    return uid.script_key


@dataclass
class UtteranceRecord:
    """One corpus entry."""

    id: UtteranceId
    speaker: str
    need_prediction: bool
    emotion: str | None
    ground_truth: str | None
    transcriptions: dict[str, str]
    ensemble: str | None
    file_position: int


@dataclass
class Corpus:
    """Ordered utterance records plus a script-key index over them."""

    records: list[UtteranceRecord]
    index: dict[str, list[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[UtteranceRecord]:
        return iter(self.records)

    def model_names(self) -> set[str]:
        """Union of ASR model names appearing anywhere in the corpus."""
        names: set[str] = set()
        for rec in self.records:
            names.update(rec.transcriptions)
        return names


def record_from_object(obj: Mapping, position: int, strict: bool = False) -> UtteranceRecord:
    """Build one record from a decoded JSON object.

    Keys other than id/speaker/emotion/need_prediction, the ground-truth key,
    and "ensemble" are treated as ASR-model transcriptions. In strict mode a
    transcription key outside the known model set is a SchemaError; otherwise
    it is accepted with a warning.
    """
    if not isinstance(obj, Mapping):
        raise SchemaError(position, None, "expected a JSON object")
    if "id" not in obj:
        raise SchemaError(position, "id", "required key is missing")
    raw_id = obj["id"]
    if not isinstance(raw_id, str):
        raise SchemaError(position, "id", "expected a string")
    try:
        uid = parse_id(raw_id)
    except MalformedId as exc:
        raise SchemaError(position, "id", str(exc)) from exc

    need_prediction = _parse_need_prediction(obj.get("need_prediction"), position)

    emotion = obj.get("emotion")
    if emotion is not None and not isinstance(emotion, str):
        raise SchemaError(position, "emotion", "expected a string or null")

    ground_truth: str | None = None
    seen_gt_key: str | None = None
    for key in _GROUND_TRUTH_KEYS:
        if key in obj:
            if seen_gt_key is not None:
                raise SchemaError(position, key, f"duplicate ground-truth key (also {seen_gt_key!r})")
            value = obj[key]
            if not isinstance(value, str):
                raise SchemaError(position, key, "expected a string")
            ground_truth = value
            seen_gt_key = key

    ensemble = obj.get(_ENSEMBLE_KEY)
    if ensemble is not None and not isinstance(ensemble, str):
        raise SchemaError(position, _ENSEMBLE_KEY, "expected a string")

    transcriptions: dict[str, str] = {}
    for key, value in obj.items():
        if key in _RESERVED_KEYS or key in _GROUND_TRUTH_KEYS or key == _ENSEMBLE_KEY:
            continue
        if not isinstance(value, str):
            raise SchemaError(position, key, "transcription values must be strings")
        if key not in KNOWN_ASR_MODELS:
            if strict:
                raise SchemaError(position, key, "unknown ASR model name (strict mode)")
            logger.warning("record %d: unknown ASR model %r kept as transcription", position, key)
        transcriptions[key] = value
    if not transcriptions:
        raise SchemaError(position, None, "record has no ASR transcriptions")

    speaker = obj.get("speaker")
    if speaker is None:
        speaker = f"Ses{uid.session:02d}_{uid.speaker_sex}"
    elif not isinstance(speaker, str):
        raise SchemaError(position, "speaker", "expected a string")

    return UtteranceRecord(
        id=uid,
        speaker=speaker,
        need_prediction=need_prediction,
        emotion=emotion,
        ground_truth=ground_truth,
        transcriptions=transcriptions,
        ensemble=ensemble,
        file_position=position,
    )


def _parse_need_prediction(value: object, position: int) -> bool:
    # Curated files use "yes"/"no" strings; plain booleans are accepted too.
    # A missing flag means the record is context-only.
    if value is None:
        return False
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("yes", "no"):
        return value.lower() == "yes"
    raise SchemaError(position, "need_prediction", f"expected 'yes'/'no' or boolean, got {value!r}")


def build_corpus(objects: Iterable[Mapping], strict: bool = False) -> Corpus:
    """Assemble a Corpus from decoded JSON objects, indexing by script key."""
    records = [record_from_object(obj, pos, strict=strict) for pos, obj in enumerate(objects)]
    index: dict[str, list[int]] = {}
    for rec in records:
        index.setdefault(rec.id.script_key, []).append(rec.file_position)
    for key, positions in index.items():
        if positions[-1] - positions[0] + 1 != len(positions):
            logger.warning("script %s: records are non-contiguous in file order", key)
    return Corpus(records=records, index=index)


def read_objects(path: str | Path) -> list[dict]:
    """Read a JSON-array or JSON-lines corpus file (auto-detected)."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if not stripped:
        raise SchemaError(0, None, "file is empty")
    if stripped.startswith("["):
        data = json.loads(stripped)
        if not isinstance(data, list):
            raise SchemaError(0, None, "top-level JSON value is not an array")
        return data
    try:
        single = json.loads(stripped)
    except json.JSONDecodeError:
        single = None
    if isinstance(single, dict):
        return [single]
    objects = []
    for lineno, line in enumerate(stripped.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            objects.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SchemaError(len(objects), None, f"line {lineno} is not valid JSON: {exc}") from exc
    return objects


def load_corpus(path: str | Path, strict: bool = False) -> Corpus:
    """Load and index a corpus file.

    Raises OSError for I/O failures and SchemaError for malformed content.
    """
    return build_corpus(read_objects(path), strict=strict)
