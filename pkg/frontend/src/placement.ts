/** Placement math for the drag/scale canvas. Mirrors the server's rounding
 * rules exactly so the preview footprint matches the composed result. */

export interface Placement {
  offsetX: number;
  offsetY: number;
  scale: number;
}

export interface Size {
  width: number;
  height: number;
}

/** Scaled foreground footprint: floor(dim * scale + 0.5), at least 1px. */
export function scaledSize(fg: Size, scale: number): Size {
  return {
    width: Math.max(1, Math.floor(fg.width * scale + 0.5)),
    height: Math.max(1, Math.floor(fg.height * scale + 0.5)),
  };
}

export function placementValid(p: Placement, bg: Size, fg: Size): boolean {
  if (!(Number.isFinite(p.scale) && p.scale > 0)) return false;
  const fp = scaledSize(fg, p.scale);
  return (
    p.offsetX >= 0 &&
    p.offsetY >= 0 &&
    p.offsetX + fp.width <= bg.width &&
    p.offsetY + fp.height <= bg.height
  );
}

export interface ClampResult {
  placement: Placement;
  clamped: boolean;
}

/** Keep a dragged placement inside the frame; reports whether it had to move
 * so the UI can show the warning badge. */
export function clampPlacement(p: Placement, bg: Size, fg: Size): ClampResult {
  const fp = scaledSize(fg, p.scale);
  const maxX = Math.max(0, bg.width - fp.width);
  const maxY = Math.max(0, bg.height - fp.height);
  const offsetX = Math.min(maxX, Math.max(0, Math.round(p.offsetX)));
  const offsetY = Math.min(maxY, Math.max(0, Math.round(p.offsetY)));
  return {
    placement: { offsetX, offsetY, scale: p.scale },
    clamped: offsetX !== Math.round(p.offsetX) || offsetY !== Math.round(p.offsetY),
  };
}

/** Drop at the background center for the current scale. */
export function centeredPlacement(bg: Size, fg: Size, scale: number): Placement {
  const fp = scaledSize(fg, scale);
  return {
    offsetX: Math.max(0, Math.floor((bg.width - fp.width) / 2)),
    offsetY: Math.max(0, Math.floor((bg.height - fp.height) / 2)),
    scale,
  };
}
