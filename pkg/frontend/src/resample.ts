// Microphone audio arrives as Float32 at whatever rate the device runs
// (44100/48000 are typical); the wire wants 16 kHz PCM16 in 20 ms frames.

export const WIRE_RATE = 16000;
export const FRAME_SAMPLES = 320; // 20 ms at 16 kHz

/** Clamp [-1, 1] floats into int16. */
export function toPcm16(input: Float32Array): Int16Array {
  const out = new Int16Array(input.length);
  for (let i = 0; i < input.length; i++) {
    const s = Math.max(-1, Math.min(1, input[i]));
    out[i] = s < 0 ? Math.round(s * 32768) : Math.round(s * 32767);
  }
  return out;
}

/**
 * Streaming linear-interpolation resampler. Keeps one sample of history
 * so chunk boundaries are seamless: feeding one big buffer or the same
 * data split across pushes produces identical output.
 */
export class LinearResampler {
  private readonly ratio: number;
  private pos = 0;           // fractional read position into the stream
  private consumed = 0;      // whole input samples already discarded
  private last = 0;          // stream[consumed - 1]

  constructor(sourceRate: number, targetRate: number = WIRE_RATE) {
    if (sourceRate <= 0 || targetRate <= 0) throw new Error('bad sample rate');
    this.ratio = sourceRate / targetRate;
  }

  push(chunk: Float32Array): Float32Array {
    if (chunk.length === 0) return new Float32Array(0);
    const at = (idx: number): number => {
      // idx is an absolute stream index at or after consumed - 1
      if (idx < this.consumed) return this.last;
      return chunk[idx - this.consumed];
    };
    const lastIndex = this.consumed + chunk.length - 1;
    const out: number[] = [];
    while (true) {
      const i = Math.floor(this.pos);
      if (i >= lastIndex) break; // need the next chunk to interpolate
      const frac = this.pos - i;
      const a = at(i);
      const b = at(i + 1);
      out.push(a + (b - a) * frac);
      this.pos += this.ratio;
    }
    this.last = chunk[chunk.length - 1];
    this.consumed += chunk.length;
    return Float32Array.from(out);
  }
}

/** Accumulates int16 samples and hands out fixed-size wire frames. */
export class FrameChunker {
  private pending: number[] = [];

  constructor(private readonly frameSamples: number = FRAME_SAMPLES) {}

  push(samples: Int16Array): Int16Array[] {
    for (let i = 0; i < samples.length; i++) this.pending.push(samples[i]);
    const frames: Int16Array[] = [];
    while (this.pending.length >= this.frameSamples) {
      frames.push(Int16Array.from(this.pending.splice(0, this.frameSamples)));
    }
    return frames;
  }

  /** Zero-pad and emit whatever is left; used when capture stops. */
  flush(): Int16Array | null {
    if (this.pending.length === 0) return null;
    const frame = new Int16Array(this.frameSamples);
    frame.set(Int16Array.from(this.pending));
    this.pending = [];
    return frame;
  }

  get buffered(): number {
    return this.pending.length;
  }
}
