/**
 * Model backends. Each adapter can talk to a live inference endpoint over
 * HTTP or replay recorded model outputs from fixture files; the rest of the
 * pipeline cannot tell the difference. Model versions are pinned here and
 * echoed into every output header.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

import type { RleMask } from "./maskToBox.js";

export const MODEL_MANIFEST: Record<string, string> = {
  owlv2: "owlv2-base-patch16-ensemble",
  "grounding-dino": "grounding-dino-base",
  sam2: "sam2.1-hiera-large",
  clip: "clip-vit-base-patch32",
};

export class BackendError extends Error {}

export interface RawBox {
  x: number;
  y: number;
  w: number;
  h: number;
  score: number;
  label?: string;
}

export interface LocalizerBackend {
  readonly describe: string;
  localize(imagePath: string, query: string): Promise<RawBox[]>;
}

export interface FrameMask {
  frame_index: number;
  instance_id: number;
  mask: RleMask;
}

export interface TrackerBackend {
  readonly describe: string;
  track(videoPath: string, queries: QuerySeed[]): Promise<FrameMask[]>;
}

export interface QuerySeed {
  video_id: string;
  instance_id: number;
  x: number;
  y: number;
  w: number;
  h: number;
  label: number;
  score: number;
}

export interface EmbeddingBackend {
  readonly describe: string;
  embed(texts: string[]): Promise<number[][]>;
}

async function readJson(file: string): Promise<any> {
  let text: string;
  try {
    text = await fs.readFile(file, "utf-8");
  } catch (error: any) {
    throw new BackendError(`cannot read fixture ${file}: ${error.message}`);
  }
  try {
    return JSON.parse(text);
  } catch {
    throw new BackendError(`fixture ${file} is not valid JSON`);
  }
}

/** Replays recorded localizer output: `<dir>/<image stem>.json` holds RawBox[]. */
export class FixtureLocalizer implements LocalizerBackend {
  constructor(private readonly fixtureDir: string) {}

  get describe(): string {
    return `fixture:${this.fixtureDir}`;
  }

  async localize(imagePath: string, _query: string): Promise<RawBox[]> {
    const stem = path.basename(imagePath, path.extname(imagePath));
    const boxes = await readJson(path.join(this.fixtureDir, `${stem}.json`));
    if (!Array.isArray(boxes)) {
      throw new BackendError(`fixture for ${stem} must be an array of boxes`);
    }
    return boxes as RawBox[];
  }
}

/** POSTs {image_base64, query, model} and expects {boxes: RawBox[]}. */
export class HttpLocalizer implements LocalizerBackend {
  constructor(
    private readonly endpoint: string,
    private readonly model: string,
  ) {}

  get describe(): string {
    return `http:${this.endpoint}`;
  }

  async localize(imagePath: string, query: string): Promise<RawBox[]> {
    const image = await fs.readFile(imagePath);
    const response = await fetch(this.endpoint, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        image_base64: image.toString("base64"),
        query,
        model: MODEL_MANIFEST[this.model] ?? this.model,
      }),
    });
    if (!response.ok) {
      throw new BackendError(`localizer endpoint returned ${response.status}`);
    }
    const payload: any = await response.json();
    if (!Array.isArray(payload?.boxes)) {
      throw new BackendError("localizer endpoint response lacks a boxes array");
    }
    return payload.boxes as RawBox[];
  }
}

/** Replays recorded tracker output: `<dir>/<video stem>.json` holds FrameMask[]. */
export class FixtureTracker implements TrackerBackend {
  constructor(private readonly fixtureDir: string) {}

  get describe(): string {
    return `fixture:${this.fixtureDir}`;
  }

  async track(videoPath: string, _queries: QuerySeed[]): Promise<FrameMask[]> {
    const stem = path.basename(videoPath, path.extname(videoPath));
    const masks = await readJson(path.join(this.fixtureDir, `${stem}.json`));
    if (!Array.isArray(masks)) {
      throw new BackendError(`fixture for ${stem} must be an array of frame masks`);
    }
    return masks as FrameMask[];
  }
}

/** POSTs {video_path, queries} and expects {masks: FrameMask[]}. */
export class HttpTracker implements TrackerBackend {
  constructor(private readonly endpoint: string) {}

  get describe(): string {
    return `http:${this.endpoint}`;
  }

  async track(videoPath: string, queries: QuerySeed[]): Promise<FrameMask[]> {
    const response = await fetch(this.endpoint, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ video_path: videoPath, queries, model: MODEL_MANIFEST.sam2 }),
    });
    if (!response.ok) {
      throw new BackendError(`tracker endpoint returned ${response.status}`);
    }
    const payload: any = await response.json();
    if (!Array.isArray(payload?.masks)) {
      throw new BackendError("tracker endpoint response lacks a masks array");
    }
    return payload.masks as FrameMask[];
  }
}

/** Replays recorded embeddings: a JSON object mapping text to vector. */
export class FixtureEmbedder implements EmbeddingBackend {
  constructor(private readonly file: string) {}

  get describe(): string {
    return `fixture:${this.file}`;
  }

  async embed(texts: string[]): Promise<number[][]> {
    const table = await readJson(this.file);
    return texts.map((text) => {
      const vector = table[text];
      if (!Array.isArray(vector)) {
        throw new BackendError(`no recorded embedding for ${JSON.stringify(text)}`);
      }
      return vector as number[];
    });
  }
}

/** POSTs {texts, model} and expects {vectors: number[][]}. */
export class HttpEmbedder implements EmbeddingBackend {
  constructor(private readonly endpoint: string) {}

  get describe(): string {
    return `http:${this.endpoint}`;
  }

  async embed(texts: string[]): Promise<number[][]> {
    const response = await fetch(this.endpoint, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ texts, model: MODEL_MANIFEST.clip }),
    });
    if (!response.ok) {
      throw new BackendError(`embedding endpoint returned ${response.status}`);
    }
    const payload: any = await response.json();
    if (!Array.isArray(payload?.vectors) || payload.vectors.length !== texts.length) {
      throw new BackendError("embedding endpoint response lacks aligned vectors");
    }
    return payload.vectors as number[][];
  }
}

export function parseBackendSpec(spec: string): { kind: "fixture" | "http"; target: string } {
  if (spec.startsWith("fixture:")) {
    return { kind: "fixture", target: spec.slice("fixture:".length) };
  }
  if (spec.startsWith("http://") || spec.startsWith("https://")) {
    return { kind: "http", target: spec };
  }
  throw new BackendError(
    `backend must be 'fixture:<path>' or an http(s) URL, got ${JSON.stringify(spec)}`,
  );
}
