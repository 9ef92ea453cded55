// What the UI renders. The server owns the conversation state machine,
// so the phase indicator follows `state` messages and nothing else: the
// view never guesses a phase from sending input or hearing audio.

import { ControlMessage, Phase } from './protocol.js';

export interface TranscriptEntry {
  role: 'user' | 'agent';
  text: string;
}

export interface ActionNotice {
  strategy: string;
  guidance: string;
}

export class ConversationView {
  /** Every phase the server has announced, in order. */
  readonly phaseHistory: Phase[] = [];
  readonly transcript: TranscriptEntry[] = [];
  readonly errors: string[] = [];

  /** Latest unfinalised recognition text, empty between utterances. */
  partialAsr = '';
  /** Agent reply accumulating from llm.delta frames. */
  pendingReply = '';
  lastAction: ActionNotice | null = null;
  /** Absolute expiry in ms, 'permanent', or null when not blocked. */
  blockedUntil: number | 'permanent' | null = null;
  interruptCount = 0;
  ended = false;

  get phase(): Phase | null {
    return this.phaseHistory.length > 0
      ? this.phaseHistory[this.phaseHistory.length - 1]
      : null;
  }

  apply(msg: ControlMessage): void {
    switch (msg.type) {
      case 'state':
        this.phaseHistory.push(msg.payload.state as Phase);
        if (msg.payload.state !== 'speaking') this.finalizeReply();
        if (msg.payload.state !== 'blocked') this.blockedUntil = null;
        break;
      case 'asr.partial':
        this.partialAsr = msg.payload.text as string;
        break;
      case 'asr.final':
        this.partialAsr = '';
        this.transcript.push({ role: 'user', text: msg.payload.text as string });
        break;
      case 'llm.delta':
        this.pendingReply += msg.payload.text as string;
        break;
      case 'action':
        this.lastAction = {
          strategy: msg.payload.strategy as string,
          guidance: msg.payload.guidance as string,
        };
        break;
      case 'interrupt.ack':
        this.interruptCount++;
        break;
      case 'blocked':
        this.blockedUntil = msg.payload.until_ms as number | 'permanent';
        break;
      case 'error':
        this.errors.push(`${msg.payload.code}: ${msg.payload.detail}`);
        break;
      case 'session.end':
        this.finalizeReply();
        this.ended = true;
        break;
      default:
        // client->server types carry nothing to render
        break;
    }
  }

  private finalizeReply(): void {
    if (this.pendingReply !== '') {
      this.transcript.push({ role: 'agent', text: this.pendingReply });
      this.pendingReply = '';
    }
  }
}
