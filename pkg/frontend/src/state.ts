import type { ViewTransform } from "./transform";

export type LayerToggles = {
  points: boolean;
  gt: boolean;
  current: boolean;
  paths: boolean;
};

export type ViewState = {
  sceneId: string | null;
  frame: number;
  nFrames: number;
  revision: number | null; // null = latest
  view: ViewTransform;
  layers: LayerToggles;
  selected: number[]; // fragment ids, oldest first, length <= 2
};

export function initialState(): ViewState {
  return {
    sceneId: null,
    frame: 0,
    nFrames: 1,
    revision: null,
    view: { cx: 0, cy: 0, scale: 8 },
    layers: { points: true, gt: true, current: true, paths: true },
    selected: [],
  };
}

export function clampFrame(st: ViewState, frame: number): number {
  return Math.max(0, Math.min(st.nFrames - 1, Math.round(frame)));
}

/** Toggle a fragment selection; a third pick evicts the oldest. */
export function toggleSelect(selected: number[], id: number): number[] {
  if (selected.includes(id)) return selected.filter((s) => s !== id);
  const next = [...selected, id];
  return next.length > 2 ? next.slice(next.length - 2) : next;
}

// Deep-link state is scene/frame/revision; transform and layers are session-local.
export function encodeHash(st: ViewState): string {
  if (st.sceneId === null) return "";
  const parts = [`scene=${encodeURIComponent(st.sceneId)}`, `frame=${st.frame}`];
  if (st.revision !== null) parts.push(`rev=${st.revision}`);
  return "#" + parts.join("&");
}

export function decodeHash(hash: string): {
  sceneId: string | null;
  frame: number;
  revision: number | null;
} {
  const out: { sceneId: string | null; frame: number; revision: number | null } = {
    sceneId: null,
    frame: 0,
    revision: null,
  };
  const trimmed = hash.startsWith("#") ? hash.slice(1) : hash;
  if (!trimmed) return out;
  for (const part of trimmed.split("&")) {
    const eq = part.indexOf("=");
    if (eq < 0) continue;
    const key = part.slice(0, eq);
    const val = decodeURIComponent(part.slice(eq + 1));
    if (key === "scene") out.sceneId = val;
    else if (key === "frame") {
      const f = Number(val);
      if (Number.isFinite(f) && f >= 0) out.frame = Math.floor(f);
    } else if (key === "rev") {
      const r = Number(val);
      if (Number.isInteger(r) && r >= 0) out.revision = r;
    }
  }
  return out;
}
