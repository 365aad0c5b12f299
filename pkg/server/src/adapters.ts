import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

import { RawDetection } from "./schema.js";

/**
 * A model adapter maps decoded image bytes and the requested category
 * vocabulary to raw candidate detections. Adapters must not filter by
 * confidence; the server enforces the rest of the wire contract (score
 * clamping, truncation to n_max).
 *
 * To wrap a real grounding-style model, implement this interface in a module
 * exporting `createAdapter(options)` and load it with `module:<path>`.
 */
export interface Adapter {
  detect(imageBytes: Buffer, categories: string[]): Promise<AdapterResult>;
}

export interface AdapterResult {
  detections: RawDetection[];
  scoresAvailable: boolean;
}

interface FixtureEntry {
  detections: RawDetection[];
  scores_available?: boolean;
}

interface FixtureFile {
  default_scores_available?: boolean;
  entries: Record<string, FixtureEntry>;
}

/**
 * Replays canned detections keyed by the SHA-256 of the decoded image bytes.
 * Unknown images produce an empty detection list, and fixture scores are
 * re-keyed to the requested vocabulary (unknown categories score 0).
 */
export class MockReplayAdapter implements Adapter {
  private readonly entries: Record<string, FixtureEntry>;
  private readonly defaultScoresAvailable: boolean;

  constructor(fixtures: FixtureFile, scoresAvailable = true) {
    this.entries = fixtures.entries ?? {};
    this.defaultScoresAvailable = fixtures.default_scores_available ?? scoresAvailable;
  }

  static fromFile(path: string, scoresAvailable = true): MockReplayAdapter {
    const raw = JSON.parse(readFileSync(path, "utf-8")) as FixtureFile;
    return new MockReplayAdapter(raw, scoresAvailable);
  }

  async detect(imageBytes: Buffer, categories: string[]): Promise<AdapterResult> {
    const digest = createHash("sha256").update(imageBytes).digest("hex");
    const entry = this.entries[digest];
    if (!entry) {
      return { detections: [], scoresAvailable: this.defaultScoresAvailable };
    }
    const detections = entry.detections.map((det) => {
      const scores: Record<string, number> = {};
      for (const category of categories) {
        scores[category] = det.scores[category] ?? 0;
      }
      return { box: det.box, scores };
    });
    return {
      detections,
      scoresAvailable: entry.scores_available ?? this.defaultScoresAvailable,
    };
  }
}

export async function loadAdapter(name: string, fixturesPath?: string,
                                  scoresAvailable = true): Promise<Adapter> {
  if (name === "mock-replay") {
    if (fixturesPath) {
      return MockReplayAdapter.fromFile(fixturesPath, scoresAvailable);
    }
    return new MockReplayAdapter({ entries: {} }, scoresAvailable);
  }
  if (name.startsWith("module:")) {
    const mod = await import(name.slice("module:".length));
    if (typeof mod.createAdapter !== "function") {
      throw new Error(`adapter module ${name} does not export createAdapter()`);
    }
    return mod.createAdapter({ fixturesPath, scoresAvailable });
  }
  throw new Error(`unknown adapter ${name} (expected mock-replay or module:<path>)`);
}
