/**
 * Text-embedding adapter: embed a list of names and emit an embedding-set
 * stream. Duplicate names are embedded once and share the same vector.
 */

import { promises as fs } from "node:fs";

import { EmbeddingBackend, MODEL_MANIFEST } from "./backends.js";
import { EmbeddingLine, configHeader, embeddingLinesToText } from "./formats.js";

export async function readNames(namesFile: string): Promise<string[]> {
  const text = await fs.readFile(namesFile, "utf-8");
  return text
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0 && !line.startsWith("#"));
}

export interface EmbedOptions {
  namesFile: string;
  backend: EmbeddingBackend;
}

export async function embedTexts(options: EmbedOptions): Promise<string> {
  const names = await readNames(options.namesFile);
  const unique = [...new Set(names)];
  const vectors = await options.backend.embed(unique);
  const byName = new Map(unique.map((name, i) => [name, vectors[i]]));
  const records: EmbeddingLine[] = names.map((name) => ({
    name,
    vector: byName.get(name)!,
  }));
  const header = configHeader("weakbox-adapters embed", {
    backend: options.backend.describe,
    model: MODEL_MANIFEST.clip,
    names: names.length,
    unique: unique.length,
  });
  return embeddingLinesToText(records, header);
}

/**
 * Mean over entries of the mean cosine similarity to each entry's k most
 * similar other entries (mirrors the core metric; used for quick adapter-side
 * sanity checks).
 */
export function topkAvgCosine(vectors: number[][], k: number): number {
  const n = vectors.length;
  if (k < 1 || k >= n) {
    throw new RangeError(`k must lie in [1, ${n - 1}], got ${k}`);
  }
  const unit = vectors.map((v) => {
    const norm = Math.hypot(...v);
    if (norm === 0) throw new RangeError("zero vector");
    return v.map((x) => x / norm);
  });
  let total = 0;
  for (let i = 0; i < n; i++) {
    const sims: number[] = [];
    for (let j = 0; j < n; j++) {
      if (j === i) continue;
      sims.push(unit[i].reduce((acc, x, d) => acc + x * unit[j][d], 0));
    }
    sims.sort((a, b) => b - a);
    total += sims.slice(0, k).reduce((a, b) => a + b, 0) / k;
  }
  return total / n;
}
