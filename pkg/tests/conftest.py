from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from textemo.corpus import build_corpus, record_from_object

_ACCEPTANCE_OUTCOMES: dict[str, str] = {}
_ACCEPTANCE_RE = re.compile(r"test_acceptance\.py::(test_c\d+\w*)")


def pytest_runtest_logreport(report):
    match = _ACCEPTANCE_RE.search(report.nodeid)
    if not match:
        return
    name = match.group(1)
    if report.when == "call" or (report.when == "setup" and report.skipped):
        outcome = report.outcome.upper()
        if name not in _ACCEPTANCE_OUTCOMES or outcome == "FAILED":
            _ACCEPTANCE_OUTCOMES[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_OUTCOMES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_OUTCOMES):
        outcome = _ACCEPTANCE_OUTCOMES[name]
        terminalreporter.write_line(f"{outcome:<8} {name}")

# The canonical sample entry used throughout the tests: one training-set
# utterance with a reference transcription and all eleven ASR outputs.
SAMPLE_ENTRY = {
    "need_prediction": "yes",
    "emotion": "sad",
    "id": "Ses01F_script01_3_M023",
    "speaker": "Ses01_M",
    "Ground truth": "Yeah. I suppose I have been. But it's going from me.",
    "hubertlarge": "ya i suppose i have been bht's going from me",
    "w2v2100": "a i suppose i have been but's going from me",
    "w2v2960": "oh i suppose i have been let's going from me",
    "w2v2960large": "now i suppose i have been bat's going from me",
    "w2v2960largeself": "ar i suppose i have been but's going from me",
    "wavlmplus": "a i spose a habben was going for m",
    "whisperbase": "Yeah",
    "whisperlarge": "Yeah",
    "whispermedium": "Yeah",
    "whispersmall": "Yeah",
    "whispertiny": "Yeah",
}


@pytest.fixture
def sample_entry() -> dict:
    return dict(SAMPLE_ENTRY)


@pytest.fixture
def sample_record(sample_entry):
    return record_from_object(sample_entry, 0)


@pytest.fixture
def sample_corpus_file(tmp_path, sample_entry) -> Path:
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps([sample_entry]), encoding="utf-8")
    return path


def make_entry(
    id: str,
    text: str = "well i think so",
    emotion: str | None = "neutral",
    need_prediction: str = "no",
    ground_truth: str | None = None,
    models: dict[str, str] | None = None,
) -> dict:
    """Minimal corpus object for hand-built test corpora."""
    obj: dict = {"need_prediction": need_prediction, "id": id}
    if emotion is not None:
        obj["emotion"] = emotion
    if ground_truth is not None:
        obj["Ground truth"] = ground_truth
    obj.update(models or {"whispertiny": text, "hubertlarge": text + " yes"})
    return obj


@pytest.fixture
def worked_example_corpus():
    """Two consecutive scripts of one conversation: script 04 with 20
    utterances, then script 05 with 3; the third utterance of script 05 is
    the prediction target from the context-window walkthrough."""
    objects = []
    for i in range(20):
        sex = "FM"[i % 2]
        objects.append(make_entry(f"Ses01Z_04_{sex}{i:03d}", text=f"utterance four {i}"))
    for i in range(3):
        sex = "FM"[i % 2]
        objects.append(make_entry(f"Ses01Z_05_{sex}{i:03d}", text=f"utterance five {i}"))
    return build_corpus(objects)
