// End-to-end against the real server: spawn it as a subprocess on an
// ephemeral port, connect over a real websocket, and drive one voice
// turn plus a manual barge-in.

import { spawn, ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import WebSocket from 'ws';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { S2sClient, WireSocket } from '../src/client.js';
import { AudioSink } from '../src/playback.js';
import { FRAME_SAMPLES } from '../src/resample.js';

const CONFIG = `
[server]
host = "127.0.0.1"
port = 0

# long fixed replies so playback is still sounding when we barge in
[backends.tts]
fixed_chunks = 200
`;

/** Pretends each frame takes 20 ms to sound, like a real output device. */
class TimedSink implements AudioSink {
  played = 0;
  private release: (() => void) | null = null;

  play(_samples: Int16Array): Promise<void> {
    this.played++;
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        this.release = null;
        resolve();
      }, 20);
      this.release = () => {
        clearTimeout(timer);
        this.release = null;
        resolve();
      };
    });
  }

  stop(): void {
    this.release?.();
  }
}

const sleep = (ms: number): Promise<void> => new Promise((r) => setTimeout(r, ms));

async function poll(cond: () => boolean, what: string, timeoutMs = 5000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await sleep(10);
  }
}

function toneFrame(frameIndex: number): Int16Array {
  const out = new Int16Array(FRAME_SAMPLES);
  for (let i = 0; i < out.length; i++) {
    const t = frameIndex * FRAME_SAMPLES + i;
    out[i] = Math.round(3000 * Math.sin((2 * Math.PI * 440 * t) / 16000));
  }
  return out;
}

let proc: ChildProcess;
let dir: string;
let url = '';
let closed: Promise<void>;

beforeAll(async () => {
  dir = mkdtempSync(join(tmpdir(), 's2s-loopback-'));
  const cfgPath = join(dir, 'config.toml');
  writeFileSync(cfgPath, CONFIG);

  proc = spawn('python3', ['-m', 's2s.cli', 'serve', '--config', cfgPath], {
    env: { ...process.env, S2S_LOG: 'info' },
  });
  url = await new Promise<string>((resolve, reject) => {
    let err = '';
    const timer = setTimeout(
      () => reject(new Error(`server never announced a port:\n${err}`)), 10000);
    proc.stderr!.on('data', (chunk: Buffer) => {
      err += chunk.toString();
      const m = err.match(/listening on (ws:\/\/127\.0\.0\.1:\d+\/session)/);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]);
      }
    });
    proc.on('exit', (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (${code}):\n${err}`));
    });
  });
}, 20000);

afterAll(async () => {
  proc.kill('SIGTERM');
  await new Promise((r) => proc.on('exit', r));
  rmSync(dir, { recursive: true, force: true });
});

describe('loopback against the real server', () => {
  it('handshakes, speaks a turn, and a manual interrupt silences playback', async () => {
    const sink = new TimedSink();
    let resolveClosed!: () => void;
    closed = new Promise((r) => { resolveClosed = r; });

    const client = new S2sClient({
      url,
      sink,
      socketFactory: (u) => {
        const raw = new WebSocket(u);
        raw.on('close', () => resolveClosed());
        return raw as unknown as WireSocket;
      },
    });
    await client.connect();

    // a valid 16 kHz pcm16le handshake gets the listening greeting
    await client.waitForControl((m) => m.type === 'state');
    expect(client.view.phase).toBe('listening');

    // stream 800 ms of tone, then enough silence to close the utterance
    for (let i = 0; i < 40; i++) client.sendMicFrame(toneFrame(i));
    const silence = new Int16Array(FRAME_SAMPLES);
    for (let i = 0; i < 30; i++) client.sendMicFrame(silence);

    const partial = await client.waitForControl((m) => m.type === 'asr.partial');
    expect(partial.payload.text).not.toBe('');
    const final = await client.waitForControl((m) => m.type === 'asr.final');
    expect(final.payload.text).not.toBe('');

    // the reply starts sounding
    await client.waitForControl(
      (m) => m.type === 'state' && m.payload.state === 'speaking');
    await poll(() => sink.played >= 3, 'three frames of playback');
    expect(client.view.phaseHistory).toEqual(['listening', 'processing', 'speaking']);

    // barge in mid-reply
    const acksBefore = client.received.filter((m) => m.type === 'interrupt.ack').length;
    client.interrupt();
    const ack = await client.waitForControl((m) => m.type === 'interrupt.ack');
    expect(ack.payload.source).toBe('text');
    expect(acksBefore).toBe(0);

    // the ack flushed local playback; nothing new may start sounding
    expect(client.playback.pending).toBe(0);
    const playedAtAck = sink.played;
    await sleep(500);
    expect(sink.played).toBe(playedAtAck);
    expect(client.playback.pending).toBe(0);
    expect(client.playback.playing).toBe(false);
    expect(playedAtAck).toBeLessThan(200); // most of the reply never sounded

    // server returns to listening and no errors surfaced anywhere
    const ackIndex = client.received.indexOf(ack);
    await poll(
      () => client.received.some(
        (m, i) => i > ackIndex && m.type === 'state' && m.payload.state === 'listening'),
      'post-ack listening state');
    expect(client.view.errors).toEqual([]);

    client.end();
    await closed;
  }, 30000);
});
