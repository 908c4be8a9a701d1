/** Binary mask editing: brush strokes and the disk-kernel dilation preview.
 *
 * The dilation rule is identical to the server's (offsets with
 * dy^2 + dx^2 <= r^2), so the client-side preview matches what the pipeline
 * will actually use. */

export interface MaskRaster {
  width: number;
  height: number;
  /** row-major, 0 or 1 per pixel */
  bits: Uint8Array;
}

export function emptyMask(width: number, height: number): MaskRaster {
  return { width, height, bits: new Uint8Array(width * height) };
}

export function cloneMask(mask: MaskRaster): MaskRaster {
  return { width: mask.width, height: mask.height, bits: new Uint8Array(mask.bits) };
}

export function maskCount(mask: MaskRaster): number {
  let n = 0;
  for (const v of mask.bits) n += v;
  return n;
}

export function masksEqual(a: MaskRaster, b: MaskRaster): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.bits.length; i++) if (a.bits[i] !== b.bits[i]) return false;
  return true;
}

/** Disk offsets for a radius: dy^2 + dx^2 <= r^2. */
export function diskOffsets(radius: number): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  const r2 = radius * radius;
  for (let dy = -radius; dy <= radius; dy++) {
    for (let dx = -radius; dx <= radius; dx++) {
      if (dy * dy + dx * dx <= r2) out.push([dy, dx]);
    }
  }
  return out;
}

function stamp(mask: MaskRaster, x: number, y: number, offsets: Array<[number, number]>, value: 0 | 1): void {
  for (const [dy, dx] of offsets) {
    const yy = y + dy;
    const xx = x + dx;
    if (yy >= 0 && yy < mask.height && xx >= 0 && xx < mask.width) {
      mask.bits[yy * mask.width + xx] = value;
    }
  }
}

export interface StrokePoint {
  x: number;
  y: number;
}

/** Apply a brush stroke (disk stamps along the polyline). Returns a new
 * raster; the input is untouched. */
export function applyBrushStroke(
  mask: MaskRaster,
  points: StrokePoint[],
  brushRadius: number,
  erase = false,
): MaskRaster {
  const out = cloneMask(mask);
  if (points.length === 0) return out;
  const offsets = diskOffsets(brushRadius);
  const value: 0 | 1 = erase ? 0 : 1;
  let prev = points[0];
  stamp(out, Math.round(prev.x), Math.round(prev.y), offsets, value);
  for (const p of points.slice(1)) {
    const steps = Math.max(1, Math.ceil(Math.hypot(p.x - prev.x, p.y - prev.y)));
    for (let s = 1; s <= steps; s++) {
      const x = Math.round(prev.x + ((p.x - prev.x) * s) / steps);
      const y = Math.round(prev.y + ((p.y - prev.y) * s) / steps);
      stamp(out, x, y, offsets, value);
    }
    prev = p;
  }
  return out;
}

/** Morphological dilation with the disk element; radius 0 is the identity. */
export function dilate(mask: MaskRaster, radius: number): MaskRaster {
  if (radius < 0) throw new Error(`dilation radius must be >= 0, got ${radius}`);
  if (radius === 0) return cloneMask(mask);
  const out = emptyMask(mask.width, mask.height);
  const offsets = diskOffsets(radius);
  for (let y = 0; y < mask.height; y++) {
    for (let x = 0; x < mask.width; x++) {
      if (mask.bits[y * mask.width + x]) stamp(out, x, y, offsets, 1);
    }
  }
  return out;
}

/** Parse the shared fixture representation (rows of '0'/'1' characters). */
export function maskFromRows(rows: string[]): MaskRaster {
  const height = rows.length;
  const width = rows[0]?.length ?? 0;
  const mask = emptyMask(width, height);
  rows.forEach((row, y) => {
    for (let x = 0; x < width; x++) mask.bits[y * width + x] = row[x] === "1" ? 1 : 0;
  });
  return mask;
}

/** Pack into the grayscale byte layout used for PNG upload (nonzero = set). */
export function toGrayBytes(mask: MaskRaster): Uint8Array {
  const out = new Uint8Array(mask.bits.length);
  for (let i = 0; i < mask.bits.length; i++) out[i] = mask.bits[i] ? 255 : 0;
  return out;
}
