// Server TTS frames arrive faster than real time; they queue here and
// drain through an AudioSink one frame at a time. A barge-in ack must be
// able to silence everything instantly, so flush() both clears the queue
// and cuts off the frame currently sounding.

export interface AudioSink {
  /**
   * Start sounding one frame; resolve when it has finished.
   * A stop() call must make an in-flight play() settle promptly.
   */
  play(samples: Int16Array): Promise<void>;
  /** Cut off the currently sounding frame, if any. */
  stop(): void;
}

export class PlaybackQueue {
  private queue: Int16Array[] = [];
  private draining = false;

  constructor(private readonly sink: AudioSink) {}

  enqueue(samples: Int16Array): void {
    this.queue.push(samples);
    if (!this.draining) void this.drain();
  }

  /** Discard queued audio and silence the current frame. */
  flush(): void {
    this.queue.length = 0;
    this.sink.stop();
  }

  get pending(): number {
    return this.queue.length;
  }

  get playing(): boolean {
    return this.draining;
  }

  /** Resolves once the queue has fully drained. */
  async idle(): Promise<void> {
    while (this.draining || this.queue.length > 0) {
      await new Promise((r) => setTimeout(r, 5));
    }
  }

  private async drain(): Promise<void> {
    this.draining = true;
    try {
      // flush() empties the queue, so anything still here after an await
      // arrived after the flush and should sound.
      while (this.queue.length > 0) {
        const frame = this.queue.shift()!;
        await this.sink.play(frame);
      }
    } finally {
      this.draining = false;
    }
  }
}
