import { describe, expect, test } from "vitest";
import { EventCursor } from "../src/events.js";
import type { EventDto } from "../src/types.js";

function event(seq: number, kind = "TaskSubmitted"): EventDto {
  return { seq, ts: "1970-01-01T00:00:00+00:00", kind, payload: {} };
}

describe("EventCursor", () => {
  test("advances past a clean batch", () => {
    const cursor = new EventCursor();
    const fresh = cursor.accept([event(1), event(2), event(3)]);
    expect(fresh.map((e) => e.seq)).toEqual([1, 2, 3]);
    expect(cursor.lastSeq).toBe(3);
  });

  test("drops duplicates inside one batch", () => {
    const cursor = new EventCursor();
    const fresh = cursor.accept([event(1), event(1), event(2), event(2)]);
    expect(fresh.map((e) => e.seq)).toEqual([1, 2]);
  });

  test("drops a fully repeated batch", () => {
    const cursor = new EventCursor();
    cursor.accept([event(1), event(2)]);
    expect(cursor.accept([event(1), event(2)])).toEqual([]);
    expect(cursor.lastSeq).toBe(2);
  });

  test("overlapping re-sync yields only the unseen suffix", () => {
    const cursor = new EventCursor();
    cursor.accept([event(1), event(2), event(3)]);
    const fresh = cursor.accept([event(2), event(3), event(4), event(5)]);
    expect(fresh.map((e) => e.seq)).toEqual([4, 5]);
  });

  test("orders a shuffled batch before accepting", () => {
    const cursor = new EventCursor();
    const fresh = cursor.accept([event(3), event(1), event(2)]);
    expect(fresh.map((e) => e.seq)).toEqual([1, 2, 3]);
    expect(cursor.lastSeq).toBe(3);
  });

  test("seq never decreases no matter the batch", () => {
    const cursor = new EventCursor();
    let last = 0;
    const batches = [
      [event(2), event(1)],
      [event(1)],
      [event(5), event(4), event(4)],
      [],
      [event(3)],
      [event(6), event(5)],
    ];
    for (const batch of batches) {
      for (const e of cursor.accept(batch)) {
        expect(e.seq).toBeGreaterThan(last);
        last = e.seq;
      }
      expect(cursor.lastSeq).toBeGreaterThanOrEqual(last);
    }
    expect(cursor.lastSeq).toBe(6);
  });
});
