/** Event-stream cursor and polling loop.
 *
 * The service numbers events 1..N per session.  The cursor only ever moves
 * forward: batches may overlap after a re-sync or arrive with duplicates, and
 * anything at or below the last seen seq is dropped rather than re-rendered.
 */

import type { ApiClient } from "./api.js";
import type { EventDto } from "./types.js";

export class EventCursor {
  private seq = 0;

  get lastSeq(): number {
    return this.seq;
  }

  /** Filter a batch down to genuinely new events and advance past them. */
  accept(batch: EventDto[]): EventDto[] {
    const fresh: EventDto[] = [];
    const ordered = [...batch].sort((a, b) => a.seq - b.seq);
    for (const event of ordered) {
      if (event.seq <= this.seq) continue;
      fresh.push(event);
      this.seq = event.seq;
    }
    return fresh;
  }
}

export interface EventWatch {
  stop(): void;
  done: Promise<void>;
}

/** Long-poll the event endpoint, feeding new events through the cursor.
 *
 * A failed poll waits out the retry delay and re-asks from the last seq, so
 * a dropped response or service restart costs at most one duplicate batch.
 */
export function watchEvents(
  client: ApiClient,
  sessionId: string,
  cursor: EventCursor,
  onEvents: (events: EventDto[]) => void,
  opts: { waitSeconds?: number; retryMs?: number } = {},
): EventWatch {
  const wait = opts.waitSeconds ?? 10;
  const retryMs = opts.retryMs ?? 1000;
  let stopped = false;

  const done = (async () => {
    while (!stopped) {
      try {
        const batch = await client.events(sessionId, cursor.lastSeq, wait);
        if (stopped) return;
        const fresh = cursor.accept(batch.events);
        if (fresh.length > 0) onEvents(fresh);
      } catch {
        await new Promise((resolve) => setTimeout(resolve, retryMs));
      }
    }
  })();

  return {
    stop() {
      stopped = true;
    },
    done,
  };
}
