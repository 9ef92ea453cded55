export {
  AudioFrame,
  CHANNEL_CLIENT_MIC,
  CHANNEL_SERVER_TTS,
  ControlMessage,
  DecodeError,
  EncodeError,
  INTERRUPT_SOURCES,
  MAX_FRAME_SEQ,
  Phase,
  ProtocolError,
  STATES,
  STRATEGIES,
  decodeAudioFrame,
  decodeControl,
  encodeAudioFrame,
  encodeControl,
} from './protocol.js';
export {
  FRAME_SAMPLES,
  FrameChunker,
  LinearResampler,
  WIRE_RATE,
  toPcm16,
} from './resample.js';
export { AudioSink, PlaybackQueue } from './playback.js';
export { ActionNotice, ConversationView, TranscriptEntry } from './view.js';
export {
  ClientOptions,
  S2sClient,
  SocketFactory,
  WireSocket,
} from './client.js';
export { MicCapture, WebAudioSink } from './webaudio.js';
