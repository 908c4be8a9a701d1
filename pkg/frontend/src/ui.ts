/** Browser glue for the studio page: canvas overlays, the mask brush, the
 * parameter panel, and the history strip. Pure logic lives in the sibling
 * modules; this file only wires DOM events to it. */

import { ComposeClient, type JobRecord } from "./api.js";
import { applyBrushStroke, dilate, emptyMask, type MaskRaster } from "./mask.js";
import { centeredPlacement, scaledSize } from "./placement.js";
import { StudioSession } from "./session.js";
import { clampToBounds, DEFAULT_CONFIG, PARAM_BOUNDS } from "./types.js";

const PREVIEW_MAX = 512; // client previews stay small; full resolution is server-side

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function blobToImage(blob: Blob): Promise<HTMLImageElement> {
  const url = URL.createObjectURL(blob);
  try {
    const img = new Image();
    await new Promise<void>((resolve, reject) => {
      img.onload = () => resolve();
      img.onerror = () => reject(new Error("cannot decode image"));
      img.src = url;
    });
    return img;
  } finally {
    URL.revokeObjectURL(url);
  }
}

function maskToCanvas(mask: MaskRaster): HTMLCanvasElement {
  const canvas = document.createElement("canvas");
  canvas.width = mask.width;
  canvas.height = mask.height;
  const ctx = canvas.getContext("2d")!;
  const data = ctx.createImageData(mask.width, mask.height);
  for (let i = 0; i < mask.bits.length; i++) {
    const v = mask.bits[i] ? 255 : 0;
    data.data[4 * i] = v;
    data.data[4 * i + 1] = v;
    data.data[4 * i + 2] = v;
    data.data[4 * i + 3] = mask.bits[i] ? 140 : 0;
  }
  ctx.putImageData(data, 0, 0);
  return canvas;
}

function maskToPngBlob(mask: MaskRaster): Promise<Blob> {
  const canvas = maskToCanvas(mask);
  const ctx = canvas.getContext("2d")!;
  const data = ctx.getImageData(0, 0, mask.width, mask.height);
  for (let i = 0; i < mask.bits.length; i++) {
    const v = mask.bits[i] ? 255 : 0;
    data.data[4 * i] = v;
    data.data[4 * i + 1] = v;
    data.data[4 * i + 2] = v;
    data.data[4 * i + 3] = 255;
  }
  ctx.putImageData(data, 0, 0);
  return new Promise((resolve, reject) =>
    canvas.toBlob((b) => (b ? resolve(b) : reject(new Error("png encode failed"))), "image/png"),
  );
}

export async function startStudio(serviceUrl: string): Promise<void> {
  const client = new ComposeClient(serviceUrl);
  const session = new StudioSession();
  const canvas = el<HTMLCanvasElement>("composeCanvas");
  const ctx = canvas.getContext("2d")!;
  const status = el<HTMLDivElement>("status");
  const historyStrip = el<HTMLDivElement>("history");

  let bgImg: HTMLImageElement | undefined;
  let fgImg: HTMLImageElement | undefined;
  let baseMask: MaskRaster | undefined;
  let brushing = false;
  let stroke: Array<{ x: number; y: number }> = [];

  const health = await client.healthz();
  status.textContent = `connected: ${health.backbone} backbone`;

  function redraw(): void {
    if (!bgImg) return;
    canvas.width = Math.min(PREVIEW_MAX, bgImg.naturalWidth);
    canvas.height = Math.round((canvas.width / bgImg.naturalWidth) * bgImg.naturalHeight);
    ctx.drawImage(bgImg, 0, 0, canvas.width, canvas.height);
    if (fgImg && session.fg && session.bg) {
      const view = canvas.width / session.bg.size.width;
      const fp = scaledSize(session.fg.size, session.placement.scale);
      ctx.globalAlpha = 0.9;
      ctx.drawImage(
        fgImg,
        session.placement.offsetX * view,
        session.placement.offsetY * view,
        fp.width * view,
        fp.height * view,
      );
      ctx.globalAlpha = 1.0;
      if (baseMask) {
        const radius = session.params.dilation_radius_px;
        const preview = dilate(baseMask, radius);
        const overlay = maskToCanvas(preview);
        ctx.drawImage(
          overlay,
          session.placement.offsetX * view,
          session.placement.offsetY * view,
          fp.width * view,
          fp.height * view,
        );
      }
    }
  }

  async function loadInput(id: string): Promise<{ blob: Blob; img: HTMLImageElement } | undefined> {
    const input = el<HTMLInputElement>(id);
    const file = input.files?.[0];
    if (!file) return undefined;
    return { blob: file, img: await blobToImage(file) };
  }

  el<HTMLButtonElement>("loadBtn").onclick = async () => {
    const bg = await loadInput("bgFile");
    const fg = await loadInput("fgFile");
    const mask = await loadInput("maskFile");
    if (!bg || !fg) {
      status.textContent = "pick background and foreground files first";
      return;
    }
    bgImg = bg.img;
    fgImg = fg.img;
    session.loadImages(
      { blob: bg.blob, size: { width: bg.img.naturalWidth, height: bg.img.naturalHeight } },
      { blob: fg.blob, size: { width: fg.img.naturalWidth, height: fg.img.naturalHeight } },
    );
    if (mask) {
      session.fgMaskBlob = mask.blob; // passthrough when untouched by the brush
      baseMask = undefined;
    } else {
      baseMask = emptyMask(fg.img.naturalWidth, fg.img.naturalHeight);
    }
    session.placement = centeredPlacement(session.bg!.size, session.fg!.size, 1.0);
    redraw();
  };

  canvas.addEventListener("pointerdown", (ev) => {
    if (!session.bg || !session.fg) return;
    if (ev.shiftKey && baseMask) {
      brushing = true;
      stroke = [];
      return;
    }
    const view = canvas.width / session.bg.size.width;
    const clamped = session.place({
      offsetX: ev.offsetX / view - (scaledSize(session.fg.size, session.placement.scale).width / 2),
      offsetY: ev.offsetY / view - (scaledSize(session.fg.size, session.placement.scale).height / 2),
      scale: session.placement.scale,
    });
    el<HTMLSpanElement>("clampBadge").hidden = !clamped;
    redraw();
  });

  canvas.addEventListener("pointermove", (ev) => {
    if (!brushing || !baseMask || !session.bg || !session.fg) return;
    const view = canvas.width / session.bg.size.width;
    const fp = scaledSize(session.fg.size, session.placement.scale);
    const x = ((ev.offsetX / view - session.placement.offsetX) / fp.width) * session.fg.size.width;
    const y = ((ev.offsetY / view - session.placement.offsetY) / fp.height) * session.fg.size.height;
    stroke.push({ x, y });
  });

  canvas.addEventListener("pointerup", async () => {
    if (!brushing || !baseMask) return;
    brushing = false;
    const brushRadius = Number(el<HTMLInputElement>("brushRadius").value);
    baseMask = applyBrushStroke(baseMask, stroke, brushRadius);
    session.editedMask = baseMask;
    session.fgMaskBlob = await maskToPngBlob(baseMask);
    redraw();
  });

  for (const [key, bounds] of Object.entries(PARAM_BOUNDS)) {
    const input = document.getElementById(`param_${key}`) as HTMLInputElement | null;
    if (!input) continue;
    input.min = String(bounds.min);
    input.max = String(bounds.max);
    input.step = String(bounds.step);
    input.value = String(DEFAULT_CONFIG[key as keyof typeof DEFAULT_CONFIG]);
    input.oninput = () => {
      (session.params as unknown as Record<string, unknown>)[key] = Number(input.value);
      session.params = clampToBounds(session.params);
      redraw();
    };
  }
  for (const key of ["use_image_clip", "use_init_blend", "use_inversion", "full_diffusion"]) {
    const box = document.getElementById(`param_${key}`) as HTMLInputElement | null;
    if (!box) continue;
    box.checked = DEFAULT_CONFIG[key as keyof typeof DEFAULT_CONFIG] as boolean;
    box.onchange = () => {
      (session.params as unknown as Record<string, unknown>)[key] = box.checked;
    };
  }
  el<HTMLInputElement>("prompt").oninput = (ev) => {
    session.prompt = (ev.target as HTMLInputElement).value;
  };
  el<HTMLInputElement>("scaleSlider").oninput = (ev) => {
    session.place({ ...session.placement, scale: Number((ev.target as HTMLInputElement).value) });
    redraw();
  };

  function appendHistoryCard(entryIndex: number): void {
    const entry = session.history[entryIndex];
    const card = document.createElement("div");
    card.className = `history-card ${entry.state}`;
    card.title = `config ${entry.configHash.slice(0, 12)}`;
    if (entry.resultUrl) {
      const img = document.createElement("img");
      img.src = entry.resultUrl;
      img.onclick = () => {
        el<HTMLImageElement>("resultView").src = entry.resultUrl!;
      };
      card.appendChild(img);
    } else {
      card.textContent = entry.state;
    }
    historyStrip.appendChild(card);
  }

  el<HTMLButtonElement>("runBtn").onclick = async () => {
    try {
      status.textContent = "submitting...";
      const entry = await session.runAndCompare(client, (record: JobRecord) => {
        status.textContent = `${record.state}: ${record.progress.stage} (step ${record.progress.step})`;
      });
      status.textContent = `run ${entry.state} (config ${entry.configHash.slice(0, 12)})`;
      appendHistoryCard(session.history.length - 1);
      if (entry.resultUrl) el<HTMLImageElement>("resultView").src = entry.resultUrl;
    } catch (err) {
      status.textContent = `error: ${(err as Error).message} (retry when ready)`;
    }
  };
}
