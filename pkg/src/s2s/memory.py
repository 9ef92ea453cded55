"""Conversation memory: the data hub between transcripts and decisions.

Ingests turns, keeps keyed factual anchors extracted by pattern rules,
scores stored material against the live input by lexical overlap, and
assembles a size-bounded structured context for the judgement and LLM
stages.  Everything here is deterministic: same store, same input, same
clock reading, same context.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

MIN_BUDGET_CHARS = 200


class Speaker(Enum):
    USER = "user"
    AGENT = "agent"


class IngestError(Exception):
    """A turn arrived out of temporal order."""


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str
    t_start_ms: int
    t_end_ms: int
    strategy: Optional[str] = None  # agent turns record the strategy that produced them

    def __post_init__(self):
        if self.t_end_ms < self.t_start_ms:
            raise ValueError("turn ends before it starts")

    def as_dict(self) -> dict:
        d = {
            "speaker": self.speaker.value,
            "text": self.text,
            "t_start_ms": self.t_start_ms,
            "t_end_ms": self.t_end_ms,
        }
        if self.strategy is not None:
            d["strategy"] = self.strategy
        return d


@dataclass(frozen=True)
class Fact:
    key: str
    value: str
    source_turn: int


@dataclass
class UserProfile:
    user_id: str = "anonymous"
    locale: str = "en"
    block_history: list = field(default_factory=list)  # {at_ms, duration} records

    def digest(self) -> str:
        blocked = f", blocks={len(self.block_history)}" if self.block_history else ""
        return f"user={self.user_id}, locale={self.locale}{blocked}"


# Default factual-anchor rules: key -> regex with one capture group.
# Matched case-insensitively against the whole turn text.
DEFAULT_FACT_RULES: tuple[tuple[str, str], ...] = (
    ("name", r"\bmy name is ([A-Za-z][\w'-]*)"),
    ("name", r"\bcall me ([A-Za-z][\w'-]*)"),
    ("location", r"\bi live in ([A-Za-z][\w' -]*?)(?:[.,!?]|$)"),
    ("job", r"\bi work as an? ([A-Za-z][\w' -]*?)(?:[.,!?]|$)"),
    ("likes", r"\bmy favorite \w+ is ([A-Za-z][\w' -]*?)(?:[.,!?]|$)"),
)


class MemoryStore:
    """Append-only turn log plus factual anchors and the user profile."""

    def __init__(self, profile: Optional[UserProfile] = None,
                 fact_rules: Optional[tuple[tuple[str, str], ...]] = None):
        self.turns: list[Turn] = []
        self.facts: dict[str, Fact] = {}
        self.profile = profile or UserProfile()
        rules = fact_rules if fact_rules is not None else DEFAULT_FACT_RULES
        self._rules = [(key, re.compile(pattern, re.IGNORECASE)) for key, pattern in rules]

    def ingest_turn(self, turn: Turn) -> None:
        """Append a turn and update factual anchors from it.

        Turns must arrive in t_start order; a regression is an IngestError
        because it would corrupt every downstream temporal signal.
        """
        if self.turns and turn.t_start_ms < self.turns[-1].t_start_ms:
            raise IngestError(
                f"turn at {turn.t_start_ms} ms starts before previous turn "
                f"at {self.turns[-1].t_start_ms} ms"
            )
        index = len(self.turns)
        self.turns.append(turn)
        if turn.speaker is Speaker.USER:
            for key, rx in self._rules:
                m = rx.search(turn.text)
                if m:
                    self.facts[key] = Fact(key=key, value=m.group(1).strip(), source_turn=index)

    @property
    def last_turn(self) -> Optional[Turn]:
        return self.turns[-1] if self.turns else None

    def user_turn_count(self) -> int:
        return sum(1 for t in self.turns if t.speaker is Speaker.USER)

    def agent_turn_count(self) -> int:
        return sum(1 for t in self.turns if t.speaker is Speaker.AGENT)

    def save(self, path: str | Path) -> None:
        """Persist as newline-delimited turn records plus one facts object."""
        p = Path(path)
        with p.open("w", encoding="utf-8") as fh:
            for turn in self.turns:
                fh.write(json.dumps({"turn": turn.as_dict()}, ensure_ascii=False) + "\n")
            facts = {k: {"value": f.value, "source_turn": f.source_turn} for k, f in self.facts.items()}
            fh.write(json.dumps({"facts": facts, "profile": {
                "user_id": self.profile.user_id,
                "locale": self.profile.locale,
                "block_history": self.profile.block_history,
            }}, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MemoryStore":
        store = cls(fact_rules=())
        store._rules = [(k, re.compile(p, re.IGNORECASE)) for k, p in DEFAULT_FACT_RULES]
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                if "turn" in doc:
                    t = doc["turn"]
                    store.turns.append(Turn(
                        speaker=Speaker(t["speaker"]),
                        text=t["text"],
                        t_start_ms=t["t_start_ms"],
                        t_end_ms=t["t_end_ms"],
                        strategy=t.get("strategy"),
                    ))
                elif "facts" in doc:
                    for key, f in doc["facts"].items():
                        store.facts[key] = Fact(key=key, value=f["value"], source_turn=f["source_turn"])
                    prof = doc.get("profile", {})
                    store.profile = UserProfile(
                        user_id=prof.get("user_id", "anonymous"),
                        locale=prof.get("locale", "en"),
                        block_history=prof.get("block_history", []),
                    )
        return store


@dataclass(frozen=True)
class SalientItem:
    text: str
    score: float
    source: str  # "turn:<index>" or "fact:<key>"


@dataclass(frozen=True)
class TemporalSignals:
    pause_since_last_turn_ms: int  # -1 when the session has no turns yet
    session_elapsed_ms: int
    user_turn_count: int
    agent_turn_count: int


@dataclass
class ConversationContext:
    recent_turns: list[Turn]
    salient_items: list[SalientItem]
    temporal: TemporalSignals
    persona: str
    budget_chars: int

    def last_user_text(self) -> str:
        for turn in reversed(self.recent_turns):
            if turn.speaker is Speaker.USER:
                return turn.text
        return ""

    def serialized(self) -> str:
        """Compact JSON rendering; its length is what budget_chars bounds.

        Turn and salient rows are arrays rather than objects so that a
        small budget still fits the skeleton plus the latest turn.
        """
        def turn_row(t: Turn) -> list:
            row: list = [t.speaker.value, t.text, t.t_start_ms, t.t_end_ms]
            if t.strategy is not None:
                row.append(t.strategy)
            return row

        doc = {
            "recent_turns": [turn_row(t) for t in self.recent_turns],
            "salient": [[s.text, round(s.score, 4), s.source] for s in self.salient_items],
            "temporal": {
                "pause_ms": self.temporal.pause_since_last_turn_ms,
                "elapsed_ms": self.temporal.session_elapsed_ms,
                "user_turns": self.temporal.user_turn_count,
                "agent_turns": self.temporal.agent_turn_count,
            },
            "persona": self.persona,
        }
        return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


_TOKEN_RX = re.compile(r"[\w']+")


def tokenize(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RX.findall(text)]


def extract_salient(store: MemoryStore, input_text: str, top_k: int = 5) -> list[SalientItem]:
    """Score stored turns and facts against the input by token overlap.

    score = |shared tokens| / |tokens(input)|, clipped to [0, 1].
    Ties break toward more recent material.
    """
    input_tokens = set(tokenize(input_text))
    if not input_tokens:
        return []
    candidates: list[tuple[float, int, str, str]] = []  # (score, recency, text, source)
    for idx, turn in enumerate(store.turns):
        overlap = len(input_tokens & set(tokenize(turn.text)))
        score = min(1.0, overlap / len(input_tokens))
        if score > 0.0:
            candidates.append((score, idx, turn.text, f"turn:{idx}"))
    for key, fact in store.facts.items():
        text = f"{key}: {fact.value}"
        overlap = len(input_tokens & set(tokenize(text)))
        score = min(1.0, overlap / len(input_tokens))
        if score > 0.0:
            candidates.append((score, fact.source_turn, text, f"fact:{key}"))
    candidates.sort(key=lambda c: (-c[0], -c[1], c[3]))
    return [SalientItem(text=text, score=score, source=source)
            for score, _, text, source in candidates[:top_k]]


def build_context(
    store: MemoryStore,
    input_text: str,
    now_ms: int,
    recent_turns: int = 6,
    salient_top_k: int = 5,
    budget_chars: int = 2000,
) -> ConversationContext:
    """Assemble the structured context handed to judgement and the LLM.

    Truncation order when over budget: lowest-score salient items first,
    then oldest recent turns, and finally the latest turn's own text is
    clipped.  The most recent turn always survives in some form.
    """
    if budget_chars < MIN_BUDGET_CHARS:
        raise ValueError(f"budget_chars must be >= {MIN_BUDGET_CHARS}")
    last = store.last_turn
    first = store.turns[0] if store.turns else None
    temporal = TemporalSignals(
        pause_since_last_turn_ms=(now_ms - last.t_end_ms) if last else -1,
        session_elapsed_ms=(now_ms - first.t_start_ms) if first else 0,
        user_turn_count=store.user_turn_count(),
        agent_turn_count=store.agent_turn_count(),
    )
    ctx = ConversationContext(
        recent_turns=list(store.turns[-recent_turns:]),
        salient_items=extract_salient(store, input_text, top_k=salient_top_k),
        temporal=temporal,
        persona=store.profile.digest(),
        budget_chars=budget_chars,
    )
    while True:
        size = len(ctx.serialized())
        if size <= budget_chars:
            break
        overshoot = size - budget_chars
        if ctx.salient_items:
            ctx.salient_items.pop()  # lowest score sits last
        elif len(ctx.recent_turns) > 1:
            ctx.recent_turns.pop(0)
        elif ctx.recent_turns and ctx.recent_turns[0].text:
            turn = ctx.recent_turns[0]
            keep = max(0, len(turn.text) - overshoot)
            ctx.recent_turns[0] = Turn(
                speaker=turn.speaker,
                text=turn.text[:keep],
                t_start_ms=turn.t_start_ms,
                t_end_ms=turn.t_end_ms,
                strategy=turn.strategy,
            )
        elif ctx.persona:
            # Last flexible field; the latest turn itself is never dropped.
            ctx.persona = ctx.persona[: max(0, len(ctx.persona) - overshoot)]
        else:
            break
    return ctx
