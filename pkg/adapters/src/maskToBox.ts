/**
 * Reduce a segmentation mask to the minimal axis-aligned box containing all
 * of its foreground pixels.
 *
 * Masks arrive as uncompressed row-major run-length encodings: `counts`
 * alternates runs of background and foreground pixels, starting with
 * background (a leading foreground run is expressed with a first count of
 * 0). A pixel at row r, column c occupies the unit square [c, c+1) x
 * [r, r+1), so the tight box of a single pixel has width and height 1.
 */

export interface RleMask {
  width: number;
  height: number;
  counts: number[];
}

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export class MaskError extends Error {}

export function maskToTightBox(mask: RleMask): Box | null {
  const { width, height, counts } = mask;
  if (!Number.isInteger(width) || width < 1 || !Number.isInteger(height) || height < 1) {
    throw new MaskError(`mask dimensions must be positive integers, got ${width}x${height}`);
  }
  const total = counts.reduce((a, b) => a + b, 0);
  if (total !== width * height) {
    throw new MaskError(`mask runs cover ${total} pixels, expected ${width * height}`);
  }
  if (counts.some((c) => !Number.isInteger(c) || c < 0)) {
    throw new MaskError("mask runs must be non-negative integers");
  }

  let minRow = Infinity;
  let maxRow = -Infinity;
  let minCol = Infinity;
  let maxCol = -Infinity;
  let position = 0;
  for (let i = 0; i < counts.length; i++) {
    const run = counts[i];
    if (i % 2 === 1 && run > 0) {
      const first = position;
      const last = position + run - 1;
      const firstRow = Math.floor(first / width);
      const lastRow = Math.floor(last / width);
      minRow = Math.min(minRow, firstRow);
      maxRow = Math.max(maxRow, lastRow);
      if (firstRow === lastRow) {
        minCol = Math.min(minCol, first % width);
        maxCol = Math.max(maxCol, last % width);
      } else {
        // the run wraps a row boundary: its first row reaches the right
        // edge and its last row starts at the left edge
        minCol = 0;
        maxCol = width - 1;
      }
    }
    position += run;
  }
  if (minRow === Infinity) {
    return null; // empty mask: the object left the frame
  }
  return { x: minCol, y: minRow, w: maxCol - minCol + 1, h: maxRow - minRow + 1 };
}

/** Build the RLE for a set of foreground pixel indices (test/fixture helper). */
export function rleFromPixels(width: number, height: number, pixels: Iterable<number>): RleMask {
  const sorted = [...new Set(pixels)].sort((a, b) => a - b);
  const counts: number[] = [];
  let position = 0;
  let index = 0;
  while (index < sorted.length) {
    let runStart = sorted[index];
    let runEnd = runStart;
    while (index + 1 < sorted.length && sorted[index + 1] === runEnd + 1) {
      index += 1;
      runEnd = sorted[index];
    }
    counts.push(runStart - position);
    counts.push(runEnd - runStart + 1);
    position = runEnd + 1;
    index += 1;
  }
  counts.push(width * height - position);
  return { width, height, counts };
}
