/**
 * Tracking adapter: feed first-frame box queries to a video mask tracker and
 * reduce each per-frame mask to its tight bounding box. Instance ids, class
 * labels and scores are all taken from the queries; the tracker only
 * contributes geometry (labels are frozen at query time).
 */

import { promises as fs } from "node:fs";

import { BackendError, MODEL_MANIFEST, QuerySeed, TrackerBackend } from "./backends.js";
import { FormatError, TrackLine, configHeader, parseJsonLines, trackLinesToText } from "./formats.js";
import { maskToTightBox } from "./maskToBox.js";

export async function readQueries(queriesFile: string): Promise<QuerySeed[]> {
  const text = await fs.readFile(queriesFile, "utf-8");
  const rows = parseJsonLines(text, queriesFile);
  return rows.map(({ lineno, record }) => {
    const context = `${queriesFile}:${lineno}`;
    for (const key of ["video_id", "instance_id", "x", "y", "w", "h", "label", "score"]) {
      if (record[key] === undefined || record[key] === null) {
        throw new FormatError(
          `${context}: query is missing ${key}; the tracker needs identity-stable, labeled queries`,
        );
      }
    }
    return {
      video_id: record.video_id,
      instance_id: record.instance_id,
      x: record.x,
      y: record.y,
      w: record.w,
      h: record.h,
      label: record.label,
      score: record.score,
    };
  });
}

export interface TrackOptions {
  videoPath: string;
  videoId: string;
  queries: QuerySeed[];
  backend: TrackerBackend;
}

export async function runTracker(options: TrackOptions): Promise<string> {
  const { videoPath, videoId, queries, backend } = options;
  const mine = queries.filter((q) => q.video_id === videoId);
  const byInstance = new Map(mine.map((q) => [q.instance_id, q]));
  if (byInstance.size !== mine.length) {
    throw new FormatError(`duplicate instance ids among queries for video ${videoId}`);
  }
  const records: TrackLine[] = [];
  if (mine.length > 0) {
    const masks = await backend.track(videoPath, mine);
    for (const frameMask of masks) {
      const query = byInstance.get(frameMask.instance_id);
      if (query === undefined) {
        throw new BackendError(
          `tracker produced instance ${frameMask.instance_id}, which matches no query`,
        );
      }
      const box = maskToTightBox(frameMask.mask);
      if (box === null) {
        continue; // empty mask: the instance is not visible in this frame
      }
      records.push({
        video_id: videoId,
        frame_index: frameMask.frame_index,
        instance_id: frameMask.instance_id,
        ...box,
        label: query.label,
        score: query.score,
      });
    }
  }
  records.sort((a, b) => a.frame_index - b.frame_index || a.instance_id - b.instance_id);
  const header = configHeader("weakbox-adapters track", {
    backend: backend.describe,
    model: MODEL_MANIFEST.sam2,
    queries: mine.length,
    video_id: videoId,
  });
  return trackLinesToText(records, header);
}
