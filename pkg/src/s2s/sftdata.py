"""Training data for the interruption judge, and its scoring harness.

Time-aligned dialogue transcripts go in; labeled examples come out:

    pause >= tau  at an utterance boundary   -> Respond
    0 <= pause < tau                         -> Continue
    the other speaker started early (< 0)    -> Interrupt

Plus synthetic negatives: utterances truncated at a random token position
and labeled Continue, teaching a judge not to fire mid-sentence.  The
evaluate() half reduces three-way labels to binary with Interrupt as the
positive class and reports accuracy / precision / recall.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence, Union


class Label(Enum):
    RESPOND = "respond"
    INTERRUPT = "interrupt"
    CONTINUE = "continue"


POSITIVE_CLASS = Label.INTERRUPT


class AnnotateError(Exception):
    pass


class BuildError(Exception):
    pass


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    t_start_ms: int
    t_end_ms: int

    def __post_init__(self):
        if self.t_end_ms < self.t_start_ms:
            raise AnnotateError(
                f"utterance ends before it starts: {self.t_start_ms}..{self.t_end_ms}")

    def as_dict(self) -> dict:
        return {
            "speaker": self.speaker,
            "text": self.text,
            "t_start_ms": self.t_start_ms,
            "t_end_ms": self.t_end_ms,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Utterance":
        return cls(
            speaker=doc["speaker"],
            text=doc["text"],
            t_start_ms=int(doc["t_start_ms"]),
            t_end_ms=int(doc["t_end_ms"]),
        )


@dataclass(frozen=True)
class SourceDialogue:
    id: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        starts = [u.t_start_ms for u in self.utterances]
        if starts != sorted(starts):
            raise AnnotateError(f"dialogue {self.id}: utterances out of time order")


@dataclass(frozen=True)
class Boundary:
    """Gap after utterance ``index``: next.t_start - this.t_end."""

    index: int
    pause_ms: int
    label: Label


@dataclass(frozen=True)
class SftExample:
    dialogue_id: str
    prefix: tuple[Utterance, ...]     # ends in the (possibly truncated) utterance
    label: Label
    is_negative: bool
    pause_ms: Optional[int] = None    # absent for truncation negatives
    cut_position: Optional[int] = None  # token index the truncation kept up to

    def __post_init__(self):
        if self.is_negative and self.label is not Label.CONTINUE:
            raise ValueError("negative examples are always Continue")
        if self.is_negative and self.pause_ms is not None:
            raise ValueError("truncation negatives carry no pause")
        if not self.is_negative and self.pause_ms is None:
            raise ValueError("boundary examples require a pause")

    def as_dict(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "prefix": [u.as_dict() for u in self.prefix],
            "label": self.label.value,
            "is_negative": self.is_negative,
            "pause_ms": self.pause_ms,
            "cut_position": self.cut_position,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SftExample":
        return cls(
            dialogue_id=doc["dialogue_id"],
            prefix=tuple(Utterance.from_dict(u) for u in doc["prefix"]),
            label=Label(doc["label"]),
            is_negative=bool(doc["is_negative"]),
            pause_ms=doc.get("pause_ms"),
            cut_position=doc.get("cut_position"),
        )


DEFAULT_TAU_MS = 700

Tokenizer = Callable[[str], list[str]]


def whitespace_tokens(text: str) -> list[str]:
    return text.split()


def annotate_pauses(dialogue: SourceDialogue, tau_ms: int = DEFAULT_TAU_MS) -> list[Boundary]:
    """Label every utterance boundary by its pause duration."""
    out = []
    utts = dialogue.utterances
    for i in range(len(utts) - 1):
        cur, nxt = utts[i], utts[i + 1]
        pause = nxt.t_start_ms - cur.t_end_ms
        if pause < 0:
            if nxt.speaker == cur.speaker:
                raise AnnotateError(
                    f"dialogue {dialogue.id}: speaker {cur.speaker!r} overlaps itself "
                    f"at utterance {i}")
            label = Label.INTERRUPT
        elif pause >= tau_ms:
            label = Label.RESPOND
        else:
            label = Label.CONTINUE
        out.append(Boundary(index=i, pause_ms=pause, label=label))
    return out


def boundary_examples(
    dialogue: SourceDialogue, tau_ms: int = DEFAULT_TAU_MS
) -> list[SftExample]:
    return [
        SftExample(
            dialogue_id=dialogue.id,
            prefix=dialogue.utterances[: b.index + 1],
            label=b.label,
            is_negative=False,
            pause_ms=b.pause_ms,
        )
        for b in annotate_pauses(dialogue, tau_ms)
    ]


def truncate_utterance(utt: Utterance, cut: int, tokenizer: Tokenizer = whitespace_tokens) -> Utterance:
    """Keep the first ``cut`` tokens; cut must leave a strict prefix."""
    tokens = tokenizer(utt.text)
    if not 1 <= cut <= len(tokens) - 1:
        raise ValueError(f"cut {cut} outside [1, {len(tokens) - 1}]")
    kept = " ".join(tokens[:cut])
    # proportional end time keeps prefixes plausible for context building
    duration = utt.t_end_ms - utt.t_start_ms
    t_end = utt.t_start_ms + duration * cut // len(tokens)
    return replace(utt, text=kept, t_end_ms=t_end)


def make_negative(
    dialogue: SourceDialogue, utt_index: int, cut: int,
    tokenizer: Tokenizer = whitespace_tokens,
) -> SftExample:
    truncated = truncate_utterance(dialogue.utterances[utt_index], cut, tokenizer)
    prefix = dialogue.utterances[:utt_index] + (truncated,)
    return SftExample(
        dialogue_id=dialogue.id,
        prefix=prefix,
        label=Label.CONTINUE,
        is_negative=True,
        cut_position=cut,
    )


def eligible_indices(dialogue: SourceDialogue, tokenizer: Tokenizer = whitespace_tokens) -> list[int]:
    """Utterances long enough to truncate (two or more tokens)."""
    return [i for i, u in enumerate(dialogue.utterances) if len(tokenizer(u.text)) >= 2]


def make_negatives(
    dialogue: SourceDialogue,
    k: int,
    *,
    seed: Optional[int] = None,
    cuts: Optional[Sequence[tuple[int, int]]] = None,
    tokenizer: Tokenizer = whitespace_tokens,
) -> tuple[list[SftExample], int]:
    """Truncation negatives for one dialogue.

    ``cuts`` gives explicit (utterance index, token cut) pairs; otherwise
    k utterances are sampled without replacement under the seed, so no
    two negatives share an (utterance, cut) pair.  Returns (examples,
    skipped) where skipped counts utterances too short to cut.

    k > eligible utterances degrades to one negative per eligible one.
    """
    if cuts is not None:
        return [make_negative(dialogue, i, c, tokenizer) for i, c in cuts], 0
    if k < 1:
        raise ValueError("k must be >= 1")
    eligible = eligible_indices(dialogue, tokenizer)
    skipped = len(dialogue.utterances) - len(eligible)
    rng = random.Random(seed)
    chosen = sorted(rng.sample(eligible, min(k, len(eligible))))
    out = []
    for i in chosen:
        n_tokens = len(tokenizer(dialogue.utterances[i].text))
        cut = rng.randint(1, n_tokens - 1)
        out.append(make_negative(dialogue, i, cut, tokenizer))
    return out, skipped


@dataclass(frozen=True)
class BuildConfig:
    tau_ms: int = DEFAULT_TAU_MS
    neg_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.neg_ratio < 0:
            raise ValueError("neg_ratio must be >= 0")


def build_dataset(
    dialogues: Sequence[SourceDialogue],
    config: BuildConfig = BuildConfig(),
    tokenizer: Tokenizer = whitespace_tokens,
) -> tuple[list[SftExample], dict]:
    """All boundary positives plus seeded truncation negatives at
    neg_ratio, shuffled; the manifest records every count."""
    if not dialogues:
        raise BuildError("empty corpus")
    rng = random.Random(config.seed)

    positives: list[SftExample] = []
    for d in dialogues:
        positives.extend(boundary_examples(d, config.tau_ms))

    # one global pool so the ratio holds corpus-wide, not per dialogue
    pool: list[tuple[int, int]] = []
    skipped = 0
    for di, d in enumerate(dialogues):
        idx = eligible_indices(d, tokenizer)
        skipped += len(d.utterances) - len(idx)
        pool.extend((di, ui) for ui in idx)

    target = min(round(config.neg_ratio * len(positives)), len(pool))
    negatives: list[SftExample] = []
    for di, ui in sorted(rng.sample(pool, target)):
        n_tokens = len(tokenizer(dialogues[di].utterances[ui].text))
        cut = rng.randint(1, n_tokens - 1)
        negatives.append(make_negative(dialogues[di], ui, cut, tokenizer))

    examples = positives + negatives
    rng.shuffle(examples)

    by_label: dict[str, int] = {}
    by_dialogue: dict[str, int] = {}
    for ex in examples:
        by_label[ex.label.value] = by_label.get(ex.label.value, 0) + 1
        by_dialogue[ex.dialogue_id] = by_dialogue.get(ex.dialogue_id, 0) + 1
    manifest = {
        "total": len(examples),
        "positives": len(positives),
        "negatives": len(negatives),
        "skipped_short": skipped,
        "by_label": by_label,
        "by_dialogue": by_dialogue,
        "tau_ms": config.tau_ms,
        "neg_ratio": config.neg_ratio,
        "seed": config.seed,
    }
    return examples, manifest


# ---------------------------------------------------------------------------
# Corpus and record files

def load_dialogue(path: Union[str, Path]) -> SourceDialogue:
    """One dialogue per file: newline-delimited JSON utterance records."""
    p = Path(path)
    utts = []
    for line in p.read_text(encoding="utf-8").splitlines():
        if line.strip():
            utts.append(Utterance.from_dict(json.loads(line)))
    return SourceDialogue(id=p.stem, utterances=tuple(utts))


def load_corpus(directory: Union[str, Path]) -> list[SourceDialogue]:
    paths = sorted(Path(directory).glob("*.ndjson")) + sorted(Path(directory).glob("*.jsonl"))
    return [load_dialogue(p) for p in paths]


def export_records(examples: Sequence[SftExample], path: Union[str, Path]) -> dict:
    lines = [json.dumps(ex.as_dict(), separators=(",", ":"), ensure_ascii=False)
             for ex in examples]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    counts: dict[str, int] = {}
    for ex in examples:
        counts[ex.label.value] = counts.get(ex.label.value, 0) + 1
    return {"total": len(examples), "by_label": counts}


def import_records(path: Union[str, Path]) -> list[SftExample]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(SftExample.from_dict(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Scoring

@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: Optional[float]   # None when tp+fp == 0
    recall: Optional[float]      # None when tp+fn == 0
    tp: int
    fp: int
    fn: int
    tn: int

    positive_class = POSITIVE_CLASS


def evaluate(predictions: Sequence[Label], gold: Sequence[Label]) -> EvalMetrics:
    """Binary reduction with Interrupt as the positive class."""
    if len(predictions) != len(gold):
        raise EvalError(f"length mismatch: {len(predictions)} predictions, {len(gold)} gold")
    if not gold:
        raise EvalError("empty evaluation set")
    tp = fp = fn = tn = 0
    for p, g in zip(predictions, gold):
        pos_p = p is POSITIVE_CLASS
        pos_g = g is POSITIVE_CLASS
        if pos_p and pos_g:
            tp += 1
        elif pos_p:
            fp += 1
        elif pos_g:
            fn += 1
        else:
            tn += 1
    total = tp + fp + fn + tn
    return EvalMetrics(
        accuracy=(tp + tn) / total,
        precision=tp / (tp + fp) if tp + fp else None,
        recall=tp / (tp + fn) if tp + fn else None,
        tp=tp, fp=fp, fn=fn, tn=tn,
    )


def render_report_row(metrics: EvalMetrics) -> str:
    """Three two-decimal columns: accuracy, precision, recall."""
    def col(v: Optional[float]) -> str:
        return f"{v:.2f}" if v is not None else "-"
    return f"{col(metrics.accuracy)} {col(metrics.precision)} {col(metrics.recall)}"


def load_labels(path: Union[str, Path]) -> list[Label]:
    """One label per line; blank lines ignored."""
    out = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        token = line.strip()
        if not token:
            continue
        try:
            out.append(Label(token.lower()))
        except ValueError:
            raise EvalError(f"{path}:{ln}: unknown label {token!r}") from None
    return out
