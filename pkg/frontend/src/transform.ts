// World frame is meters, y up; canvas y grows down, so sy flips.

export type ViewTransform = {
  cx: number; // world point at the canvas center
  cy: number;
  scale: number; // px per meter
};

export function worldToScreen(
  v: ViewTransform,
  x: number,
  y: number,
  width: number,
  height: number,
): [number, number] {
  return [(x - v.cx) * v.scale + width / 2, height / 2 - (y - v.cy) * v.scale];
}

export function screenToWorld(
  v: ViewTransform,
  sx: number,
  sy: number,
  width: number,
  height: number,
): [number, number] {
  return [(sx - width / 2) / v.scale + v.cx, (height / 2 - sy) / v.scale + v.cy];
}

export function pan(v: ViewTransform, dxPx: number, dyPx: number): ViewTransform {
  return { cx: v.cx - dxPx / v.scale, cy: v.cy + dyPx / v.scale, scale: v.scale };
}

export function zoomAt(
  v: ViewTransform,
  sx: number,
  sy: number,
  factor: number,
  width: number,
  height: number,
): ViewTransform {
  const scale = Math.min(200, Math.max(0.5, v.scale * factor));
  if (scale === v.scale) return v;
  // keep the world point under the cursor fixed on screen
  const [wx, wy] = screenToWorld(v, sx, sy, width, height);
  const cx = wx - (sx - width / 2) / scale;
  const cy = wy - (height / 2 - sy) / scale;
  return { cx, cy, scale };
}

export function boxCorners(
  x: number,
  y: number,
  theta: number,
  w: number,
  l: number,
): [number, number][] {
  const c = Math.cos(theta);
  const s = Math.sin(theta);
  const hw = w / 2;
  const hl = l / 2;
  // l runs along the heading, w across it
  const local: [number, number][] = [
    [hl, hw],
    [hl, -hw],
    [-hl, -hw],
    [-hl, hw],
  ];
  return local.map(([u, t]) => [x + u * c - t * s, y + u * s + t * c]);
}

export function pointInBox(
  px: number,
  py: number,
  x: number,
  y: number,
  theta: number,
  w: number,
  l: number,
): boolean {
  const c = Math.cos(theta);
  const s = Math.sin(theta);
  const dx = px - x;
  const dy = py - y;
  const u = dx * c + dy * s;
  const t = -dx * s + dy * c;
  return Math.abs(u) <= l / 2 && Math.abs(t) <= w / 2;
}
