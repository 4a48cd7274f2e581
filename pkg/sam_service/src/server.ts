/**
 * HTTP surface of the segmentation service.
 *
 * POST /segment takes one prompt per request and answers with a base64
 * float32 score map of the requested dimensions; GET /healthz reports model
 * readiness.  400 = malformed request, 422 = prompt or dimensions violate
 * the image, 503 = model not loaded yet.
 */

import express, { Express } from "express";
import { z } from "zod";

import { PromptModel, PromptInput } from "./model";

const promptSchema = z.union([
  z.object({
    type: z.literal("box"),
    xyxy: z.tuple([z.number(), z.number(), z.number(), z.number()]),
  }),
  z.object({
    type: z.literal("point"),
    xy: z.tuple([z.number(), z.number()]),
    label: z.union([z.literal(0), z.literal(1)]),
  }),
]);

const segmentSchema = z.object({
  image_id: z.string().min(1),
  width: z.number().int().positive(),
  height: z.number().int().positive(),
  image_png_b64: z.string().optional(),
  prompt: promptSchema,
});

interface CachedImage {
  width: number;
  height: number;
}

export interface ServiceState {
  model: PromptModel | null;
  modelName: string;
  imageCacheSize: number;
  images: Map<string, CachedImage>;
}

export function newState(imageCacheSize = 64): ServiceState {
  return { model: null, modelName: "unloaded", imageCacheSize, images: new Map() };
}

/** PNG pixel dimensions from the IHDR chunk (big-endian at bytes 16..23). */
export function pngDimensions(png: Buffer): { width: number; height: number } | null {
  const signature = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
  if (png.length < 24 || !png.subarray(0, 8).equals(signature)) {
    return null;
  }
  return { width: png.readUInt32BE(16), height: png.readUInt32BE(20) };
}

function promptInBounds(prompt: PromptInput, width: number, height: number): boolean {
  if (prompt.type === "box") {
    const [x0, y0, x1, y1] = prompt.xyxy;
    return x0 <= x1 && y0 <= y1 && x0 >= 0 && y0 >= 0 && x1 < width && y1 < height;
  }
  const [x, y] = prompt.xy;
  return x >= 0 && y >= 0 && x < width && y < height;
}

function rememberImage(state: ServiceState, id: string, image: CachedImage) {
  if (state.images.has(id)) {
    state.images.delete(id); // refresh LRU position
  } else if (state.images.size >= state.imageCacheSize) {
    const oldest = state.images.keys().next().value;
    if (oldest !== undefined) {
      state.images.delete(oldest);
    }
  }
  state.images.set(id, image);
}

export function buildApp(state: ServiceState): Express {
  const app = express();
  app.use(express.json({ limit: "64mb" }));

  app.get("/healthz", (_req, res) => {
    res.json({ ready: state.model !== null, model: state.modelName });
  });

  app.post("/segment", (req, res) => {
    if (state.model === null) {
      res.status(503).json({ error: "model not loaded" });
      return;
    }
    const parsed = segmentSchema.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: "malformed request", detail: parsed.error.issues });
      return;
    }
    const body = parsed.data;

    if (body.image_png_b64 !== undefined) {
      const dims = pngDimensions(Buffer.from(body.image_png_b64, "base64"));
      if (dims === null) {
        res.status(400).json({ error: "image_png_b64 is not a PNG" });
        return;
      }
      if (dims.width !== body.width || dims.height !== body.height) {
        res.status(422).json({
          error: `image is ${dims.width}x${dims.height}, request says ` +
            `${body.width}x${body.height}`,
        });
        return;
      }
      rememberImage(state, body.image_id, dims);
    } else {
      const cached = state.images.get(body.image_id);
      if (cached && (cached.width !== body.width || cached.height !== body.height)) {
        res.status(422).json({
          error: `image ${body.image_id} was uploaded as ` +
            `${cached.width}x${cached.height}`,
        });
        return;
      }
    }

    if (!promptInBounds(body.prompt, body.width, body.height)) {
      res.status(422).json({ error: "prompt outside image bounds" });
      return;
    }

    const scores = state.model.scores(body.width, body.height, body.prompt);
    // Float32Array buffers are little-endian on every supported platform.
    const payload = Buffer.from(scores.buffer, 0, scores.byteLength);
    res.json({
      width: body.width,
      height: body.height,
      scores_f32_b64: payload.toString("base64"),
    });
  });

  return app;
}
