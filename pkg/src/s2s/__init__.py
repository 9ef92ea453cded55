"""Full-duplex speech-to-speech conversation toolkit.

A websocket service that listens and talks at the same time: streaming
ASR -> LLM -> TTS with preemptive barge-in, a judgement layer choosing
among five response strategies (interrupt, refuse, deflect, no response,
standard), conversation memory, access control, and tooling to build and
score the judge's training data.
"""

from .audio import AudioChunk, PurgeableQueue, VadConfig, VadEvent, VadState, vad_step
from .backends import BackendError, BackendSet, StubAsr, StubLlm, StubTts, stub_backends
from .cancellation import CancelToken, OperationCancelled
from .config import AppConfig, ConfigError, load_config, parse_config
from .judgement import (
    AccessControlList,
    JudgementDecision,
    PartialMonitor,
    Pathway,
    ResponseStrategy,
    RuleJudge,
    llm_judge_parse,
    preset_template,
    route,
)
from .memory import ConversationContext, MemoryStore, Turn, build_context
from .pipeline import (
    EventKind,
    InterruptReport,
    ManualClock,
    PipelineEvent,
    PipelineState,
    Session,
    SessionTrace,
    TaskQueue,
    transition,
    verify_replay,
)
from .protocol import (
    AudioChannel,
    AudioFrame,
    ControlMessage,
    DecodeError,
    EncodeError,
    HandshakeError,
    decode_audio,
    decode_control,
    encode_audio,
    encode_control,
    validate_handshake,
)
from .sftdata import (
    EvalMetrics,
    Label,
    SftExample,
    SourceDialogue,
    Utterance,
    annotate_pauses,
    build_dataset,
    evaluate,
    make_negatives,
    render_report_row,
)

__version__ = "0.1.0"
