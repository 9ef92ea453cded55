"""Action judgement: choose one of five response strategies and route it.

Strategies and their execution pathways:

    refuse / deflect / standard  -> model-dependent (LLM writes the reply)
    no_response                  -> model-free (no reply; may apply a block)
    interrupt                    -> special case (instant preset template,
                                    then an LLM continuation)

A deterministic keyword rule baseline covers five demo scenarios (boring
topic, unreasonable demand, affront, same opinion, conflicting opinion);
any real judge plugs in behind the same classify() surface and its raw
output is parsed against a strict grammar so that malformed output can
never trigger an interruption or a block by accident.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Awaitable, Callable, Optional, Protocol, Union

from .memory import ConversationContext


class ResponseStrategy(Enum):
    INTERRUPT = "interrupt"
    REFUSE = "refuse"
    DEFLECT = "deflect"
    NO_RESPONSE = "no_response"
    STANDARD = "standard"


class Pathway(Enum):
    MODEL_DEPENDENT = "model_dependent"
    MODEL_FREE = "model_free"
    SPECIAL_CASE = "special_case"


class JudgeMode(Enum):
    PARTIAL = "partial"
    COMPLETE = "complete"


@dataclass(frozen=True)
class JudgementDecision:
    strategy: ResponseStrategy
    confidence: float
    guidance: str
    pathway: Pathway

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be within [0, 1]")
        if self.pathway is not route_strategy(self.strategy):
            raise ValueError(f"{self.strategy} does not route to {self.pathway}")


_ROUTES = {
    ResponseStrategy.REFUSE: Pathway.MODEL_DEPENDENT,
    ResponseStrategy.DEFLECT: Pathway.MODEL_DEPENDENT,
    ResponseStrategy.STANDARD: Pathway.MODEL_DEPENDENT,
    ResponseStrategy.NO_RESPONSE: Pathway.MODEL_FREE,
    ResponseStrategy.INTERRUPT: Pathway.SPECIAL_CASE,
}


def route_strategy(strategy: ResponseStrategy) -> Pathway:
    """Total mapping from the five strategies onto the three pathways."""
    return _ROUTES[strategy]


def route(decision: JudgementDecision) -> Pathway:
    return route_strategy(decision.strategy)


def make_decision(strategy: ResponseStrategy, confidence: float, guidance: str) -> JudgementDecision:
    return JudgementDecision(
        strategy=strategy,
        confidence=confidence,
        guidance=guidance,
        pathway=route_strategy(strategy),
    )


FALLBACK_DECISION = make_decision(ResponseStrategy.STANDARD, 0.0, "")

# Guidance string that tells the session a no_response decision should
# escalate to access control.
APPLY_BLOCK_GUIDANCE = "apply_block"


class ParseError(Exception):
    """Judge output did not match the constrained grammar."""


_GRAMMAR_RX = re.compile(
    r"^STRATEGY=(?P<strategy>[a-z_]+);\s*CONF=(?P<conf>[0-9]*\.?[0-9]+);\s*GUIDE=(?P<guide>.*)$",
    re.DOTALL,
)


def llm_judge_parse(raw: str) -> JudgementDecision:
    """Parse ``STRATEGY=<name>; CONF=<0..1>; GUIDE=<text>``.

    Anything outside the grammar is a ParseError; callers fall back to a
    standard response so a misbehaving judge can never interrupt or
    silence a user.
    """
    m = _GRAMMAR_RX.match(raw.strip())
    if not m:
        raise ParseError(f"unparseable judge output: {raw[:80]!r}")
    name = m.group("strategy")
    try:
        strategy = ResponseStrategy(name)
    except ValueError:
        raise ParseError(f"unknown strategy {name!r}") from None
    conf = float(m.group("conf"))
    if not 0.0 <= conf <= 1.0:
        raise ParseError(f"confidence {conf} outside [0, 1]")
    return make_decision(strategy, conf, m.group("guide").strip())


class JudgeBackend(Protocol):
    """Anything that maps (context, input, mode) to a decision."""

    async def classify(
        self, context: ConversationContext, input_text: str, mode: JudgeMode
    ) -> JudgementDecision: ...


@dataclass(frozen=True)
class ScenarioRule:
    name: str
    strategy: ResponseStrategy
    markers: tuple[str, ...]
    guidance: str
    confidence: float = 0.9


DEFAULT_LEXICON: tuple[ScenarioRule, ...] = (
    ScenarioRule(
        name="boring_topic",
        strategy=ResponseStrategy.INTERRUPT,
        markers=(
            "as i said before",
            "let me tell you once more",
            "the same story again",
            "blah blah",
            "for the tenth time",
        ),
        guidance="steer the conversation toward a fresh topic",
    ),
    ScenarioRule(
        name="unreasonable_demand",
        strategy=ResponseStrategy.REFUSE,
        markers=(
            "give me your password",
            "do it right now or else",
            "write my exam for me",
            "wire me the money",
            "you must obey",
        ),
        guidance="decline the request briefly and state why",
    ),
    ScenarioRule(
        name="affront",
        strategy=ResponseStrategy.NO_RESPONSE,
        markers=(
            "you are stupid",
            "you're stupid",
            "shut up",
            "useless piece of junk",
            "you idiot",
        ),
        guidance="",
    ),
    ScenarioRule(
        name="same_opinion",
        strategy=ResponseStrategy.STANDARD,
        markers=(
            "i agree with you",
            "exactly what i think",
            "couldn't agree more",
            "me too",
            "you are right about that",
        ),
        guidance="agree warmly and add one supporting point",
    ),
    ScenarioRule(
        name="conflicting_opinion",
        strategy=ResponseStrategy.DEFLECT,
        markers=(
            "you are completely wrong",
            "i disagree with everything",
            "that is nonsense",
            "not true at all",
        ),
        guidance="acknowledge the disagreement lightly and move on",
    ),
)


def load_lexicon(path: str | Path) -> tuple[ScenarioRule, ...]:
    """Load scenario rules from a JSON file: a list of objects with
    name/strategy/markers/guidance and optional confidence."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rules = []
    for entry in doc:
        rules.append(ScenarioRule(
            name=entry["name"],
            strategy=ResponseStrategy(entry["strategy"]),
            markers=tuple(m.lower() for m in entry["markers"]),
            guidance=entry.get("guidance", ""),
            confidence=float(entry.get("confidence", 0.9)),
        ))
    return tuple(rules)


class RuleJudge:
    """Deterministic keyword classifier over the scenario lexicon.

    First rule whose marker appears in the lowercased input wins, in
    lexicon order.  Repeated affront-style inputs (no_response strategy)
    from the same user inside ``repeat_window_ms`` escalate to a block via
    the apply_block guidance.
    """

    def __init__(
        self,
        lexicon: tuple[ScenarioRule, ...] = DEFAULT_LEXICON,
        repeat_window_ms: int = 120_000,
        clock_ms: Optional[Callable[[], int]] = None,
    ):
        self.lexicon = lexicon
        self.repeat_window_ms = repeat_window_ms
        self._clock = clock_ms or (lambda: int(time.time() * 1000))
        self._no_response_hits: dict[str, list[int]] = {}

    def classify_sync(
        self, context: ConversationContext, input_text: str, mode: JudgeMode
    ) -> JudgementDecision:
        text = input_text.lower()
        for rule in self.lexicon:
            if any(marker in text for marker in rule.markers):
                decision = make_decision(rule.strategy, rule.confidence, rule.guidance)
                if rule.strategy is ResponseStrategy.NO_RESPONSE:
                    decision = self._maybe_escalate(context, decision)
                return decision
        return make_decision(ResponseStrategy.STANDARD, 0.5, "")

    async def classify(
        self, context: ConversationContext, input_text: str, mode: JudgeMode
    ) -> JudgementDecision:
        return self.classify_sync(context, input_text, mode)

    def _maybe_escalate(
        self, context: ConversationContext, decision: JudgementDecision
    ) -> JudgementDecision:
        now = self._clock()
        user = _user_of(context)
        hits = [t for t in self._no_response_hits.get(user, []) if now - t <= self.repeat_window_ms]
        hits.append(now)
        self._no_response_hits[user] = hits
        if len(hits) >= 2:
            return replace(decision, guidance=APPLY_BLOCK_GUIDANCE)
        return decision


def _user_of(context: ConversationContext) -> str:
    # Persona digest leads with "user=<id>".
    m = re.match(r"user=([^,]+)", context.persona or "")
    return m.group(1) if m else "anonymous"


class LlmJudge:
    """Judge backed by a text-completion model.

    ``complete`` is any async callable (context, input_text, mode) -> raw
    string; the raw string must match the constrained grammar.  Parse
    failures fall back to a standard response with zero confidence, so a
    free-associating model can never interrupt or block anyone.
    """

    def __init__(self, complete: Callable[..., Awaitable[str]]):
        self._complete = complete
        self.parse_failures = 0

    async def classify(
        self, context: ConversationContext, input_text: str, mode: JudgeMode
    ) -> JudgementDecision:
        raw = await self._complete(context, input_text, mode)
        try:
            return llm_judge_parse(raw)
        except ParseError:
            self.parse_failures += 1
            return FALLBACK_DECISION


class ScriptedJudge:
    """Test judge that replays a fixed sequence of decisions."""

    def __init__(self, decisions: list[JudgementDecision], repeat_last: bool = True):
        self._decisions = list(decisions)
        self._repeat_last = repeat_last
        self.calls = 0

    async def classify(self, context, input_text, mode) -> JudgementDecision:
        idx = self.calls
        self.calls += 1
        if idx < len(self._decisions):
            return self._decisions[idx]
        if self._repeat_last and self._decisions:
            return self._decisions[-1]
        return FALLBACK_DECISION


# ---------------------------------------------------------------------------
# Preset templates

DEFAULT_TEMPLATES: dict[str, str] = {
    "default": "Sorry to cut in. Let me pick this up from here.",
    "en": "Sorry to cut in. Let me pick this up from here.",
    "zh": "抱歉打断一下,这个话题我来接着说。",
}


def preset_template(
    strategy: ResponseStrategy,
    locale: str,
    templates: Optional[dict[str, str]] = None,
) -> str:
    """Fixed interruption opener, locale-keyed, available with zero model
    calls.  Unknown locales fall back to the default entry."""
    if strategy is not ResponseStrategy.INTERRUPT:
        raise ValueError("preset templates exist only for the interrupt strategy")
    table = templates if templates is not None else DEFAULT_TEMPLATES
    if locale in table:
        return table[locale]
    return table["default"]


# ---------------------------------------------------------------------------
# Access control

PERMANENT = "permanent"
BlockDuration = Union[int, str]  # ms, or the PERMANENT sentinel


class AccessControlList:
    """user_id -> permanent or absolute-expiry block entries.

    Reads are concurrent-safe, writes serialized; expired entries behave
    exactly as absent.  Persisted as one JSON object.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, Union[int, str]] = {}

    def apply_block(self, user_id: str, duration: BlockDuration, now_ms: int) -> Union[int, str]:
        """Record a block; returns the resulting expiry (ms or "permanent").

        Re-blocking extends: the later expiry wins, and permanent beats
        any expiry.
        """
        with self._lock:
            current = self._entries.get(user_id)
            if duration == PERMANENT or current == PERMANENT:
                entry: Union[int, str] = PERMANENT
            else:
                if not isinstance(duration, int) or duration <= 0:
                    raise ValueError(f"block duration must be positive ms or {PERMANENT!r}")
                until = now_ms + duration
                if isinstance(current, int) and current > until:
                    until = current
                entry = until
            self._entries[user_id] = entry
            return entry

    def is_blocked(self, user_id: str, now_ms: int) -> bool:
        with self._lock:
            entry = self._entries.get(user_id)
            if entry is None:
                return False
            if entry == PERMANENT:
                return True
            if now_ms >= entry:
                del self._entries[user_id]
                return False
            return True

    def expiry(self, user_id: str) -> Optional[Union[int, str]]:
        with self._lock:
            return self._entries.get(user_id)

    def save(self, path: str | Path) -> None:
        with self._lock:
            Path(path).write_text(json.dumps(self._entries, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AccessControlList":
        acl = cls()
        p = Path(path)
        if p.exists():
            acl._entries = {str(k): v for k, v in json.loads(p.read_text(encoding="utf-8")).items()}
        return acl


# ---------------------------------------------------------------------------
# Streaming-partial monitor

@dataclass
class MonitorConfig:
    confidence_threshold: float = 0.8
    min_partial_chars: int = 12
    cadence_ms: int = 500
    cadence_chars: int = 24
    deadline_ms: int = 400


class PartialMonitor:
    """Watches partial transcripts of an in-progress user utterance and
    decides, at a bounded cadence, whether the agent should interrupt.

    At most one interruption fires per utterance no matter what the judge
    returns; reset() starts the next utterance.
    """

    def __init__(self, judge: JudgeBackend, config: Optional[MonitorConfig] = None):
        self.judge = judge
        self.config = config or MonitorConfig()
        self.reset()

    def reset(self) -> None:
        self._last_eval_chars = 0
        self._last_eval_ms: Optional[int] = None
        self._fired = False
        self.deadline_skips = 0

    @property
    def fired(self) -> bool:
        return self._fired

    def due(self, partial_text: str, now_ms: int) -> bool:
        """True when a new evaluation is owed: enough new characters or
        enough elapsed time since the last one, and no interrupt yet."""
        if self._fired:
            return False
        if len(partial_text) < self.config.min_partial_chars:
            return False
        if self._last_eval_ms is None:
            return True
        grown = len(partial_text) - self._last_eval_chars >= self.config.cadence_chars
        waited = now_ms - self._last_eval_ms >= self.config.cadence_ms
        return grown or waited

    def note_eval(self, partial_text: str, now_ms: int) -> None:
        """Record that a tick started.  Callers do this synchronously,
        before awaiting the judge, so overlapping partials cannot both
        claim the same cadence slot."""
        self._last_eval_chars = len(partial_text)
        self._last_eval_ms = now_ms

    async def run_classify(
        self,
        context: ConversationContext,
        partial_text: str,
        run_with_deadline: Optional[
            Callable[[Awaitable[JudgementDecision]], Awaitable[JudgementDecision]]
        ] = None,
    ) -> Optional[JudgementDecision]:
        """Ask the judge about the partial; returns an interrupt-strategy
        decision when the agent should take the floor, else None.

        A judge that misses the deadline or raises only skips this tick.
        """
        call = self.judge.classify(context, partial_text, JudgeMode.PARTIAL)
        try:
            decision = await (run_with_deadline(call) if run_with_deadline else call)
        except Exception:
            self.deadline_skips += 1
            return None
        if (
            decision.strategy is ResponseStrategy.INTERRUPT
            and decision.confidence >= self.config.confidence_threshold
            and len(partial_text) >= self.config.min_partial_chars
            and not self._fired
        ):
            self._fired = True
            return decision
        return None

    async def evaluate(
        self,
        context: ConversationContext,
        partial_text: str,
        now_ms: int,
        run_with_deadline: Optional[
            Callable[[Awaitable[JudgementDecision]], Awaitable[JudgementDecision]]
        ] = None,
    ) -> Optional[JudgementDecision]:
        """One whole cadence tick: due-check, bookkeeping, classify."""
        if not self.due(partial_text, now_ms):
            return None
        self.note_eval(partial_text, now_ms)
        return await self.run_classify(context, partial_text, run_with_deadline)
