// Browser adapters: an AudioSink backed by the Web Audio API and a mic
// capture helper that hands Float32 chunks to the client. Nothing here
// runs under Node; tests substitute fakes behind the same interfaces.

import { AudioSink } from './playback.js';
import { WIRE_RATE } from './resample.js';

export class WebAudioSink implements AudioSink {
  private current: AudioBufferSourceNode | null = null;

  constructor(
    private readonly ctx: AudioContext,
    private readonly sampleRate: number = WIRE_RATE,
  ) {}

  play(samples: Int16Array): Promise<void> {
    const buffer = this.ctx.createBuffer(1, samples.length, this.sampleRate);
    const floats = buffer.getChannelData(0);
    for (let i = 0; i < samples.length; i++) floats[i] = samples[i] / 32768;
    const source = this.ctx.createBufferSource();
    source.buffer = buffer;
    source.connect(this.ctx.destination);
    this.current = source;
    return new Promise((resolve) => {
      source.onended = () => {
        if (this.current === source) this.current = null;
        resolve();
      };
      source.start();
    });
  }

  stop(): void {
    // onended still fires, settling the in-flight play()
    this.current?.stop();
    this.current = null;
  }
}

const CAPTURE_WORKLET = `
class MicTapProcessor extends AudioWorkletProcessor {
  process(inputs) {
    const ch0 = inputs[0] && inputs[0][0];
    if (ch0 && ch0.length) {
      const copy = new Float32Array(ch0.length);
      copy.set(ch0);
      this.port.postMessage(copy, [copy.buffer]);
    }
    return true;
  }
}
registerProcessor('mic-tap', MicTapProcessor);
`;

export class MicCapture {
  private ctx: AudioContext | null = null;
  private stream: MediaStream | null = null;

  /** Capture rate actually in effect; read after start(). */
  sampleRate = 0;

  async start(onChunk: (chunk: Float32Array) => void): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({ audio: true });
    this.ctx = new AudioContext();
    this.sampleRate = this.ctx.sampleRate;
    const url = URL.createObjectURL(
      new Blob([CAPTURE_WORKLET], { type: 'application/javascript' }),
    );
    try {
      await this.ctx.audioWorklet.addModule(url);
    } finally {
      URL.revokeObjectURL(url);
    }
    const source = this.ctx.createMediaStreamSource(this.stream);
    const tap = new AudioWorkletNode(this.ctx, 'mic-tap');
    tap.port.onmessage = (ev: MessageEvent<Float32Array>) => onChunk(ev.data);
    source.connect(tap);
  }

  stop(): void {
    this.stream?.getTracks().forEach((t) => t.stop());
    void this.ctx?.close();
    this.stream = null;
    this.ctx = null;
  }
}
