/**
 * Open-vocabulary localization adapter: run a generic text query over a
 * directory of images and emit one raw detection per predicted box. No
 * filtering happens here; the core pipeline owns post-processing.
 */

import { promises as fs } from "node:fs";
import path from "node:path";

import { BackendError, LocalizerBackend, MODEL_MANIFEST } from "./backends.js";
import { DetectionLine, configHeader, detectionLinesToText } from "./formats.js";

const IMAGE_EXTENSIONS = new Set([".jpg", ".jpeg", ".png", ".bmp", ".webp"]);

export async function listImages(imageDir: string): Promise<string[]> {
  let entries: string[];
  try {
    entries = await fs.readdir(imageDir);
  } catch (error: any) {
    throw new BackendError(`cannot list image directory ${imageDir}: ${error.message}`);
  }
  return entries
    .filter((name) => IMAGE_EXTENSIONS.has(path.extname(name).toLowerCase()))
    .sort()
    .map((name) => path.join(imageDir, name));
}

export interface LocalizeOptions {
  imageDir: string;
  query: string;
  model: string;
  backend: LocalizerBackend;
}

export async function runLocalizer(options: LocalizeOptions): Promise<string> {
  const { imageDir, query, model, backend } = options;
  const images = await listImages(imageDir);
  const records: DetectionLine[] = [];
  for (const imagePath of images) {
    try {
      await fs.access(imagePath, fs.constants.R_OK);
    } catch {
      throw new BackendError(`image ${imagePath} is not readable`);
    }
    const boxes = await backend.localize(imagePath, query);
    const imageId = path.basename(imagePath, path.extname(imagePath));
    for (const box of boxes) {
      records.push({
        image_id: imageId,
        x: box.x,
        y: box.y,
        w: box.w,
        h: box.h,
        score: box.score,
        ...(box.label !== undefined ? { label: box.label } : {}),
        source: model,
      });
    }
  }
  const header = configHeader("weakbox-adapters localize", {
    backend: backend.describe,
    images: images.length,
    model: MODEL_MANIFEST[model] ?? model,
    query,
  });
  return detectionLinesToText(records, header);
}
