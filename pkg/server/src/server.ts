import express, { Express } from "express";

import { Adapter } from "./adapters.js";
import {
  DetectRequestSchema,
  DetectResponse,
  DetectResponseSchema,
  RawDetection,
} from "./schema.js";

export interface ServerConfig {
  adapter: Adapter;
  nMax: number;
}

/** Clamp adapter scores into [0, 1] and truncate to n_max by best score.
 *  Never filters by confidence: low-score candidates stay in. */
export function enforceContract(raw: RawDetection[], nMax: number): RawDetection[] {
  const clamped = raw.map((det) => {
    const scores: Record<string, number> = {};
    for (const [category, value] of Object.entries(det.scores)) {
      scores[category] = Math.min(1, Math.max(0, value));
    }
    return { box: det.box, scores };
  });
  const best = (det: RawDetection) => Math.max(0, ...Object.values(det.scores));
  return clamped
    .map((det, index) => ({ det, index }))
    .sort((a, b) => best(b.det) - best(a.det) || a.index - b.index)
    .slice(0, nMax)
    .map(({ det }) => det);
}

export function createApp(config: ServerConfig): Express {
  const app = express();
  app.use(express.json({ limit: "64mb" }));

  app.get("/healthz", (_req, res) => {
    res.json({ ok: true });
  });

  app.post("/detect", async (req, res) => {
    const parsed = DetectRequestSchema.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({
        error: "malformed detect request",
        issues: parsed.error.issues.map((issue) => ({
          path: issue.path.join("."),
          message: issue.message,
        })),
      });
      return;
    }
    const { image_png_base64, categories, n_max } = parsed.data;
    let imageBytes: Buffer;
    try {
      imageBytes = Buffer.from(image_png_base64, "base64");
    } catch {
      res.status(400).json({ error: "image_png_base64 is not valid base64" });
      return;
    }
    const effectiveNMax = Math.min(n_max, config.nMax);
    try {
      const result = await config.adapter.detect(imageBytes, categories);
      const response: DetectResponse = DetectResponseSchema.parse({
        detections: enforceContract(result.detections, effectiveNMax),
        scores_available: result.scoresAvailable,
      });
      res.json(response);
    } catch (err) {
      res.status(500).json({ error: `adapter failure: ${String(err)}` });
    }
  });

  return app;
}
