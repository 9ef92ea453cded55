// Browser-side session driver. The socket is injected so the same class
// runs against the native WebSocket in a page and against the `ws`
// package in tests; audio output goes through an AudioSink for the same
// reason.

import {
  AudioFrame,
  CHANNEL_CLIENT_MIC,
  CHANNEL_SERVER_TTS,
  ControlMessage,
  decodeAudioFrame,
  decodeControl,
  encodeAudioFrame,
  encodeControl,
} from './protocol.js';
import { AudioSink, PlaybackQueue } from './playback.js';
import { FrameChunker, LinearResampler, toPcm16, WIRE_RATE } from './resample.js';
import { ConversationView } from './view.js';

/** The subset of the WebSocket API the client touches. */
export interface WireSocket {
  binaryType: string;
  send(data: string | ArrayBuffer): void;
  close(code?: number, reason?: string): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => WireSocket;

export interface ClientOptions {
  url: string;
  socketFactory: SocketFactory;
  sink: AudioSink;
  userId?: string;
  locale?: string;
  /** Capture rate of the mic; converted to 16 kHz before sending. */
  sourceRate?: number;
  onControl?: (msg: ControlMessage) => void;
}

export class S2sClient {
  readonly view = new ConversationView();
  readonly playback: PlaybackQueue;
  /** Every decoded control message, oldest first. */
  readonly received: ControlMessage[] = [];

  private socket: WireSocket | null = null;
  private ctrlSeq = 0;
  private micSeq = 0;
  private resampler: LinearResampler;
  private chunker = new FrameChunker();
  private waiters: Array<{
    pred: (msg: ControlMessage) => boolean;
    resolve: (msg: ControlMessage) => void;
  }> = [];

  constructor(private readonly opts: ClientOptions) {
    this.playback = new PlaybackQueue(opts.sink);
    this.resampler = new LinearResampler(opts.sourceRate ?? WIRE_RATE);
  }

  /** Open the socket and send the handshake; resolves once open. */
  connect(): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.opts.socketFactory(this.opts.url);
      socket.binaryType = 'arraybuffer';
      socket.onopen = () => {
        this.sendControl('session.start', {
          sample_rate: WIRE_RATE,
          encoding: 'pcm16le',
          user_id: this.opts.userId ?? 'webclient',
          locale: this.opts.locale ?? 'en',
        });
        resolve();
      };
      socket.onerror = () => reject(new Error('connect failed'));
      socket.onclose = () => reject(new Error('closed before open'));
      socket.onmessage = (ev) => this.handleMessage(ev.data);
      this.socket = socket;
    });
  }

  sendText(text: string): void {
    this.sendControl('text.input', { text });
  }

  /** Manual barge-in; the ack coming back flushes local playback. */
  interrupt(): void {
    this.sendControl('interrupt.manual', {});
  }

  end(): void {
    this.sendControl('session.end', {});
  }

  close(): void {
    this.socket?.close(1000, 'bye');
    this.socket = null;
  }

  /** Feed raw mic floats at sourceRate; emits wire frames as they fill. */
  sendMicFloat(chunk: Float32Array): void {
    const at16k = this.resampler.push(chunk);
    for (const frame of this.chunker.push(toPcm16(at16k))) {
      this.sendMicFrame(frame);
    }
  }

  /** Send one pre-chunked 16 kHz PCM16 frame. */
  sendMicFrame(samples: Int16Array): void {
    this.mustSocket().send(encodeAudioFrame({
      channel: CHANNEL_CLIENT_MIC,
      seq: this.micSeq++,
      samples,
    }));
  }

  /**
   * Resolves with the first control message matching pred, looking at
   * already-received messages first.
   */
  waitForControl(
    pred: (msg: ControlMessage) => boolean,
    timeoutMs = 5000,
  ): Promise<ControlMessage> {
    const seen = this.received.find(pred);
    if (seen) return Promise.resolve(seen);
    return new Promise((resolve, reject) => {
      const waiter = { pred, resolve };
      this.waiters.push(waiter);
      setTimeout(() => {
        const i = this.waiters.indexOf(waiter);
        if (i >= 0) {
          this.waiters.splice(i, 1);
          reject(new Error('timed out waiting for control message'));
        }
      }, timeoutMs);
    });
  }

  private handleMessage(data: unknown): void {
    if (typeof data === 'string') {
      const msg = decodeControl(data);
      if (msg.type === 'interrupt.ack') this.playback.flush();
      this.view.apply(msg);
      this.received.push(msg);
      this.opts.onControl?.(msg);
      for (let i = this.waiters.length - 1; i >= 0; i--) {
        if (this.waiters[i].pred(msg)) {
          const [w] = this.waiters.splice(i, 1);
          w.resolve(msg);
        }
      }
      return;
    }
    const frame = this.decodeBinary(data);
    if (frame.channel === CHANNEL_SERVER_TTS) {
      this.playback.enqueue(frame.samples);
    }
  }

  private decodeBinary(data: unknown): AudioFrame {
    if (data instanceof ArrayBuffer) return decodeAudioFrame(data);
    if (data instanceof Uint8Array) return decodeAudioFrame(data);
    throw new Error(`unexpected message payload ${Object.prototype.toString.call(data)}`);
  }

  private sendControl(type: string, payload: Record<string, unknown>): void {
    this.mustSocket().send(encodeControl({
      type,
      seq: this.ctrlSeq++,
      ts_ms: Date.now(),
      payload,
    }));
  }

  private mustSocket(): WireSocket {
    const socket = this.socket;
    if (!socket) throw new Error('not connected');
    return socket;
  }
}
