/**
 * Prompt-conditioned score model.
 *
 * The service maps (image, prompt) to a dense float32 score map.  The model
 * here is a deterministic geometric responder: a checkpoint JSON supplies its
 * parameters, logits fall off with distance from the prompt, and scores are
 * the logistic transform of those logits, so every value lands in (0, 1).
 * A heavyweight segmentation model can replace it behind the same interface.
 */

import { readFileSync } from "fs";

export interface BoxPromptInput {
  type: "box";
  xyxy: [number, number, number, number];
}

export interface PointPromptInput {
  type: "point";
  xy: [number, number];
  label: 0 | 1;
}

export type PromptInput = BoxPromptInput | PointPromptInput;

export interface CheckpointParams {
  name: string;
  sharpness: number;
  pointRadiusPx: number;
}

export class PromptModel {
  constructor(readonly params: CheckpointParams) {}

  get name(): string {
    return this.params.name;
  }

  /** Row-major logits for the prompt at every pixel. */
  private logits(width: number, height: number, prompt: PromptInput): Float64Array {
    const out = new Float64Array(width * height);
    const s = this.params.sharpness;
    if (prompt.type === "box") {
      const [x0, y0, x1, y1] = prompt.xyxy;
      const cx = (x0 + x1) / 2;
      const cy = (y0 + y1) / 2;
      const hx = Math.max((x1 - x0) / 2, 0.5);
      const hy = Math.max((y1 - y0) / 2, 0.5);
      for (let y = 0; y < height; y++) {
        for (let x = 0; x < width; x++) {
          const d = Math.max(Math.abs(x - cx) / hx, Math.abs(y - cy) / hy);
          out[y * width + x] = s * (1 - d);
        }
      }
    } else {
      const [px, py] = prompt.xy;
      const r = this.params.pointRadiusPx;
      for (let y = 0; y < height; y++) {
        for (let x = 0; x < width; x++) {
          const d = Math.hypot(x - px, y - py) / r;
          out[y * width + x] = s * (1 - d);
        }
      }
    }
    return out;
  }

  /** Scores in [0, 1]: the logistic transform of the logits. */
  scores(width: number, height: number, prompt: PromptInput): Float32Array {
    const logits = this.logits(width, height, prompt);
    const out = new Float32Array(logits.length);
    for (let i = 0; i < logits.length; i++) {
      out[i] = 1 / (1 + Math.exp(-logits[i]));
    }
    return out;
  }
}

export function loadCheckpoint(path: string): PromptModel {
  const raw = JSON.parse(readFileSync(path, "utf-8"));
  if (typeof raw.name !== "string") {
    throw new Error(`checkpoint ${path} has no model name`);
  }
  return new PromptModel({
    name: raw.name,
    sharpness: typeof raw.sharpness === "number" ? raw.sharpness : 6.0,
    pointRadiusPx: typeof raw.pointRadiusPx === "number" ? raw.pointRadiusPx : 24,
  });
}
