// Wire protocol: JSON control frames and binary audio frames.
// This mirrors the server's closed schemas; anything unknown, missing,
// or extra is rejected on both encode and decode.

export const STATES = ['listening', 'processing', 'speaking', 'blocked'] as const;
export const STRATEGIES = ['interrupt', 'refuse', 'deflect', 'no_response', 'standard'] as const;
export const INTERRUPT_SOURCES = ['voice', 'text', 'agent'] as const;

export type Phase = (typeof STATES)[number];

export interface ControlMessage {
  type: string;
  seq: number;
  ts_ms: number;
  payload: Record<string, unknown>;
}

export class ProtocolError extends Error {}

export class DecodeError extends ProtocolError {
  constructor(public reason: string, detail = '') {
    super(detail ? `${reason}: ${detail}` : reason);
  }
}

export class EncodeError extends ProtocolError {
  constructor(public fieldPath: string, detail: string) {
    super(`${fieldPath}: ${detail}`);
  }
}

type FieldCheck = (v: unknown) => boolean;

const isInt = (v: unknown): v is number =>
  typeof v === 'number' && Number.isInteger(v);
const isStr = (v: unknown): v is string => typeof v === 'string';
const oneOf = (values: readonly string[]): FieldCheck =>
  (v) => typeof v === 'string' && values.includes(v);
const isUntil: FieldCheck = (v) =>
  v === 'permanent' || (isInt(v) && v >= 0);

const SCHEMAS: Record<string, Record<string, FieldCheck>> = {
  'session.start': {
    sample_rate: isInt, encoding: isStr, user_id: isStr, locale: isStr,
  },
  'text.input': { text: isStr },
  'interrupt.manual': {},
  'session.end': {},
  state: { state: oneOf(STATES) },
  'asr.partial': { text: isStr },
  'asr.final': { text: isStr },
  'llm.delta': { text: isStr },
  action: { strategy: oneOf(STRATEGIES), guidance: isStr },
  'interrupt.ack': { source: oneOf(INTERRUPT_SOURCES) },
  blocked: { until_ms: isUntil },
  error: { code: isStr, detail: isStr },
};

function checkPayload(type: string, payload: Record<string, unknown>,
                      fail: (field: string, detail: string) => never): void {
  const schema = SCHEMAS[type];
  for (const key of Object.keys(payload)) {
    if (!(key in schema)) fail(`payload.${key}`, 'unknown field');
  }
  for (const [key, check] of Object.entries(schema)) {
    if (!(key in payload)) fail(`payload.${key}`, 'missing field');
    if (!check(payload[key])) fail(`payload.${key}`, 'invalid value');
  }
}

export function encodeControl(msg: ControlMessage): string {
  const fail = (field: string, detail: string): never => {
    throw new EncodeError(field, detail);
  };
  if (!(msg.type in SCHEMAS)) fail('type', `unknown control type ${msg.type}`);
  if (!isInt(msg.seq) || msg.seq < 0) fail('seq', 'must be a non-negative integer');
  if (!isInt(msg.ts_ms) || msg.ts_ms < 0) fail('ts_ms', 'must be a non-negative integer');
  checkPayload(msg.type, msg.payload, fail);
  return JSON.stringify({
    type: msg.type, seq: msg.seq, ts_ms: msg.ts_ms, payload: msg.payload,
  });
}

export function decodeControl(text: string): ControlMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    throw new DecodeError('bad_json');
  }
  if (typeof doc !== 'object' || doc === null || Array.isArray(doc)) {
    throw new DecodeError('not_object');
  }
  const obj = doc as Record<string, unknown>;
  const keys = Object.keys(obj).sort().join(',');
  if (keys !== 'payload,seq,ts_ms,type') {
    throw new DecodeError('bad_envelope', `fields: ${keys}`);
  }
  const { type, seq, ts_ms, payload } = obj;
  if (!isStr(type) || !(type in SCHEMAS)) throw new DecodeError('unknown_type');
  if (!isInt(seq) || seq < 0) throw new DecodeError('bad_seq');
  if (!isInt(ts_ms) || ts_ms < 0) throw new DecodeError('bad_ts');
  if (typeof payload !== 'object' || payload === null || Array.isArray(payload)) {
    throw new DecodeError('bad_payload');
  }
  const fail = (field: string, detail: string): never => {
    throw new DecodeError('bad_payload', `${field}: ${detail}`);
  };
  checkPayload(type, payload as Record<string, unknown>, fail);
  return { type, seq, ts_ms, payload: payload as Record<string, unknown> };
}

// Binary audio framing: 1 channel byte, 4-byte big-endian sequence
// number, then little-endian PCM16 samples.

export const CHANNEL_CLIENT_MIC = 0x01;
export const CHANNEL_SERVER_TTS = 0x02;
export const MAX_FRAME_SEQ = 0xffffffff;

export interface AudioFrame {
  channel: number;
  seq: number;
  samples: Int16Array;
}

export function encodeAudioFrame(frame: AudioFrame): ArrayBuffer {
  if (frame.channel !== CHANNEL_CLIENT_MIC && frame.channel !== CHANNEL_SERVER_TTS) {
    throw new EncodeError('channel', `bad channel ${frame.channel}`);
  }
  if (!isInt(frame.seq) || frame.seq < 0 || frame.seq > MAX_FRAME_SEQ) {
    throw new EncodeError('seq', 'must fit in 32 bits');
  }
  if (frame.samples.length === 0) throw new EncodeError('samples', 'empty frame');
  const buf = new ArrayBuffer(5 + frame.samples.length * 2);
  const view = new DataView(buf);
  view.setUint8(0, frame.channel);
  view.setUint32(1, frame.seq, false);
  for (let i = 0; i < frame.samples.length; i++) {
    view.setInt16(5 + i * 2, frame.samples[i], true);
  }
  return buf;
}

export function decodeAudioFrame(data: ArrayBuffer | Uint8Array): AudioFrame {
  const bytes = data instanceof Uint8Array
    ? data
    : new Uint8Array(data);
  if (bytes.length < 7) throw new DecodeError('short_frame');
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const channel = view.getUint8(0);
  if (channel !== CHANNEL_CLIENT_MIC && channel !== CHANNEL_SERVER_TTS) {
    throw new DecodeError('bad_channel', `0x${channel.toString(16)}`);
  }
  const seq = view.getUint32(1, false);
  const body = bytes.length - 5;
  if (body % 2 !== 0) throw new DecodeError('odd_pcm_length');
  const samples = new Int16Array(body / 2);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = view.getInt16(5 + i * 2, true);
  }
  return { channel, seq, samples };
}
