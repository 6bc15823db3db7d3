/**
 * Writers for the core interchange streams (JSON Lines with `#` headers).
 *
 * Records are validated before serialization so that every emitted file
 * passes the core schema validator with zero warnings; a bad record fails
 * fast here, naming the offender, instead of surfacing downstream.
 */

export interface DetectionLine {
  image_id: string;
  x: number;
  y: number;
  w: number;
  h: number;
  score: number;
  label?: number | string;
  source?: string;
}

export interface TrackLine {
  video_id: string;
  frame_index: number;
  instance_id: number;
  x: number;
  y: number;
  w: number;
  h: number;
  label: number;
  score: number;
}

export interface EmbeddingLine {
  name: string;
  vector: number[];
}

export class FormatError extends Error {}

function checkBox(record: { x: number; y: number; w: number; h: number }, context: string): void {
  for (const [key, value] of Object.entries({ x: record.x, y: record.y, w: record.w, h: record.h })) {
    if (typeof value !== "number" || !Number.isFinite(value)) {
      throw new FormatError(`${context}: box field ${key} must be a finite number, got ${value}`);
    }
  }
  if (record.w <= 0 || record.h <= 0) {
    throw new FormatError(`${context}: box must have positive extent, got w=${record.w} h=${record.h}`);
  }
}

function checkScore(score: number, context: string): void {
  if (typeof score !== "number" || !Number.isFinite(score) || score < 0 || score > 1) {
    throw new FormatError(`${context}: score must lie in [0, 1], got ${score}`);
  }
}

export function configHeader(tool: string, config: Record<string, unknown>): string {
  const sorted = Object.fromEntries(Object.entries(config).sort(([a], [b]) => (a < b ? -1 : 1)));
  return `# ${tool} config: ${JSON.stringify(sorted)}`;
}

export function detectionLinesToText(records: DetectionLine[], header?: string): string {
  const lines: string[] = header ? [header] : [];
  records.forEach((record, index) => {
    const context = `detection record ${index} (image ${record.image_id})`;
    if (!record.image_id) throw new FormatError(`${context}: image_id must be non-empty`);
    checkBox(record, context);
    checkScore(record.score, context);
    lines.push(JSON.stringify(record));
  });
  return lines.map((line) => line + "\n").join("");
}

export function trackLinesToText(records: TrackLine[], header?: string): string {
  const lines: string[] = header ? [header] : [];
  records.forEach((record, index) => {
    const context = `track record ${index} (video ${record.video_id}, frame ${record.frame_index})`;
    if (!record.video_id) throw new FormatError(`${context}: video_id must be non-empty`);
    if (!Number.isInteger(record.frame_index) || record.frame_index < 0) {
      throw new FormatError(`${context}: frame_index must be a non-negative integer`);
    }
    if (!Number.isInteger(record.instance_id)) {
      throw new FormatError(`${context}: instance_id must be an integer`);
    }
    if (!Number.isInteger(record.label)) {
      throw new FormatError(`${context}: label must be an integer category id`);
    }
    checkBox(record, context);
    checkScore(record.score, context);
    lines.push(JSON.stringify(record));
  });
  return lines.map((line) => line + "\n").join("");
}

export function embeddingLinesToText(records: EmbeddingLine[], header?: string): string {
  const lines: string[] = header ? [header] : [];
  records.forEach((record, index) => {
    const context = `embedding record ${index} (${record.name})`;
    if (!record.name) throw new FormatError(`${context}: name must be non-empty`);
    if (!Array.isArray(record.vector) || record.vector.length === 0) {
      throw new FormatError(`${context}: vector must be a non-empty array`);
    }
    if (!record.vector.every((v) => typeof v === "number" && Number.isFinite(v))) {
      throw new FormatError(`${context}: vector entries must be finite numbers`);
    }
    if (record.vector.every((v) => v === 0)) {
      throw new FormatError(`${context}: vector must not be all zeros`);
    }
    lines.push(JSON.stringify(record));
  });
  return lines.map((line) => line + "\n").join("");
}

/** Parse a JSONL file's data lines, skipping `#` headers and blanks. */
export function parseJsonLines(text: string, source: string): { lineno: number; record: any }[] {
  const out: { lineno: number; record: any }[] = [];
  text.split("\n").forEach((line, i) => {
    const stripped = line.trim();
    if (!stripped || stripped.startsWith("#")) return;
    try {
      out.push({ lineno: i + 1, record: JSON.parse(stripped) });
    } catch {
      throw new FormatError(`${source}:${i + 1}: not valid JSON`);
    }
  });
  return out;
}
