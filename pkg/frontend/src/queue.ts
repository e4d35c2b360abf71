// Offline-tolerant entry queue. Interpretations are held locally and sent in
// entry order when connectivity allows; the server's record is authoritative,
// so a duplicate rejection drops the local copy and surfaces the conflict.

import { ApiError } from "./api.js";
import type { InterpretationEntry } from "./types.js";

export interface QueueConflict<E> {
  entry: E;
  message: string;
}

export interface FlushResult<E> {
  submitted: number;
  conflicts: QueueConflict<E>[];
  remaining: number; // still queued (offline or server unreachable)
}

export class OfflineQueue<E = InterpretationEntry> {
  private items: E[] = [];

  constructor(private readonly send: (entry: E) => Promise<void>) {}

  enqueue(entry: E): void {
    this.items.push(entry);
  }

  get length(): number {
    return this.items.length;
  }

  pending(): readonly E[] {
    return this.items;
  }

  // Submit in order. Stops at the first transport failure (we may be offline);
  // 4xx conflicts are final and never retried.
  async flush(): Promise<FlushResult<E>> {
    const conflicts: QueueConflict<E>[] = [];
    let submitted = 0;
    while (this.items.length > 0) {
      const entry = this.items[0]!;
      try {
        await this.send(entry);
        submitted += 1;
        this.items.shift();
      } catch (err) {
        if (err instanceof ApiError && err.status >= 400 && err.status < 500) {
          conflicts.push({ entry, message: err.message });
          this.items.shift();
          continue;
        }
        break; // transport problem: keep the queue intact and try later
      }
    }
    return { submitted, conflicts, remaining: this.items.length };
  }
}
