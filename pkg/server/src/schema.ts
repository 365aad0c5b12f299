import { z } from "zod";

// Wire protocol, request side. Unknown fields are ignored.
export const DetectRequestSchema = z.looseObject({
  image_png_base64: z.string().min(1),
  categories: z.array(z.string()).min(1),
  n_max: z.number().int().min(1),
});

export type DetectRequest = z.infer<typeof DetectRequestSchema>;

export const WireDetectionSchema = z.object({
  box: z.tuple([z.number(), z.number(), z.number(), z.number()]),
  scores: z.record(z.string(), z.number().min(0).max(1)),
});

export const DetectResponseSchema = z.object({
  detections: z.array(WireDetectionSchema),
  scores_available: z.boolean(),
});

export type WireDetection = z.infer<typeof WireDetectionSchema>;
export type DetectResponse = z.infer<typeof DetectResponseSchema>;

// What adapters hand back before the server enforces the contract: scores may
// be out of range (they get clamped) and the list may exceed n_max.
export interface RawDetection {
  box: [number, number, number, number];
  scores: Record<string, number>;
}
