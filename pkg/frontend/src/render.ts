import type { BoxObj, FramePayload, TrajectoryObj } from "./api";
import type { LayerToggles } from "./state";
import { ViewTransform, boxCorners, worldToScreen } from "./transform";

// Minimal slice of CanvasRenderingContext2D so tests can record calls.
export type Ctx2D = {
  canvas: { width: number; height: number };
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
};

export const COLORS = {
  background: "#111418",
  grid: "#252a31",
  gridMajor: "#343c46",
  points: "#8a9099",
  gt: "#3fb950",
  current: "#e3a02b",
  selected: "#58a6ff",
  path: "#b07fd9",
  ego: "#d94f4f",
};

const GRID_STEP_M = 10;

export function drawGrid(ctx: Ctx2D, view: ViewTransform): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, width, height);
  const halfW = width / 2 / view.scale;
  const halfH = height / 2 / view.scale;
  const x0 = Math.floor((view.cx - halfW) / GRID_STEP_M) * GRID_STEP_M;
  const x1 = view.cx + halfW;
  const y0 = Math.floor((view.cy - halfH) / GRID_STEP_M) * GRID_STEP_M;
  const y1 = view.cy + halfH;
  ctx.lineWidth = 1;
  for (let x = x0; x <= x1; x += GRID_STEP_M) {
    ctx.strokeStyle = x === 0 ? COLORS.gridMajor : COLORS.grid;
    const [sx] = worldToScreen(view, x, 0, width, height);
    ctx.beginPath();
    ctx.moveTo(sx, 0);
    ctx.lineTo(sx, height);
    ctx.stroke();
  }
  for (let y = y0; y <= y1; y += GRID_STEP_M) {
    ctx.strokeStyle = y === 0 ? COLORS.gridMajor : COLORS.grid;
    const [, sy] = worldToScreen(view, 0, y, width, height);
    ctx.beginPath();
    ctx.moveTo(0, sy);
    ctx.lineTo(width, sy);
    ctx.stroke();
  }
}

export function drawPoints(ctx: Ctx2D, view: ViewTransform, points: [number, number, number][]): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = COLORS.points;
  for (const p of points) {
    const [sx, sy] = worldToScreen(view, p[0], p[1], width, height);
    if (sx < -2 || sy < -2 || sx > width + 2 || sy > height + 2) continue;
    ctx.fillRect(sx - 1, sy - 1, 2, 2);
  }
}

export function drawBox(
  ctx: Ctx2D,
  view: ViewTransform,
  box: BoxObj,
  color: string,
  lineWidth = 1.5,
): void {
  const { width, height } = ctx.canvas;
  const corners = boxCorners(box.x, box.y, box.theta, box.w, box.l);
  ctx.strokeStyle = color;
  ctx.lineWidth = lineWidth;
  ctx.beginPath();
  corners.forEach(([wx, wy], i) => {
    const [sx, sy] = worldToScreen(view, wx, wy, width, height);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.closePath();
  ctx.stroke();
  // heading tick from center to the front face midpoint
  const fx = box.x + (Math.cos(box.theta) * box.l) / 2;
  const fy = box.y + (Math.sin(box.theta) * box.l) / 2;
  const [cx, cy] = worldToScreen(view, box.x, box.y, width, height);
  const [tx, ty] = worldToScreen(view, fx, fy, width, height);
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(tx, ty);
  ctx.stroke();
}

export function drawPaths(
  ctx: Ctx2D,
  view: ViewTransform,
  trajectories: TrajectoryObj[],
  selected: number[],
): void {
  const { width, height } = ctx.canvas;
  for (const tr of trajectories) {
    if (tr.detections.length < 2) continue;
    ctx.strokeStyle = selected.includes(tr.id) ? COLORS.selected : COLORS.path;
    ctx.lineWidth = selected.includes(tr.id) ? 2 : 1;
    ctx.beginPath();
    tr.detections.forEach((d, i) => {
      const [sx, sy] = worldToScreen(view, d.x, d.y, width, height);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
    ctx.stroke();
  }
}

export type FrameRenderInput = {
  frame: FramePayload | null;
  trajectories: TrajectoryObj[];
  view: ViewTransform;
  layers: LayerToggles;
  selected: number[];
  hover: { boxId: number; iou: number | null; sx: number; sy: number } | null;
};

export function renderFrame(ctx: Ctx2D, input: FrameRenderInput): void {
  drawGrid(ctx, input.view);
  const fr = input.frame;
  if (fr === null) return;
  if (input.layers.points) drawPoints(ctx, input.view, fr.points);
  if (input.layers.paths) drawPaths(ctx, input.view, input.trajectories, input.selected);
  if (input.layers.gt) {
    for (const b of fr.boxes.gt) drawBox(ctx, input.view, b, COLORS.gt, 1);
  }
  if (input.layers.current) {
    for (const b of fr.boxes.current) {
      const color = input.selected.includes(b.traj_id) ? COLORS.selected : COLORS.current;
      drawBox(ctx, input.view, b, color, 1.5);
    }
  }
  // ego marker
  const { width, height } = ctx.canvas;
  const [ex, ey] = worldToScreen(input.view, fr.ego.x, fr.ego.y, width, height);
  ctx.fillStyle = COLORS.ego;
  ctx.fillRect(ex - 3, ey - 3, 6, 6);
  if (input.hover !== null) {
    const text =
      input.hover.iou === null
        ? `#${input.hover.boxId} iou n/a`
        : `#${input.hover.boxId} iou ${input.hover.iou.toFixed(3)}`;
    ctx.font = "12px monospace";
    ctx.fillStyle = "#e6e8ea";
    ctx.fillText(text, input.hover.sx + 10, input.hover.sy - 6);
  }
}
