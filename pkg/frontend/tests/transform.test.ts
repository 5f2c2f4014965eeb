import { describe, expect, it } from "vitest";
import {
  ViewTransform,
  boxCorners,
  pan,
  pointInBox,
  screenToWorld,
  worldToScreen,
  zoomAt,
} from "../src/transform";

const W = 800;
const H = 600;

// deterministic xorshift so the loop cases are reproducible
function makeRng(seed: number) {
  let s = seed >>> 0 || 1;
  return () => {
    s ^= s << 13;
    s ^= s >>> 17;
    s ^= s << 5;
    s >>>= 0;
    return s / 4294967296;
  };
}

describe("view transform", () => {
  it("round-trips world -> screen -> world", () => {
    const rng = makeRng(42);
    for (let i = 0; i < 50; i++) {
      const v: ViewTransform = {
        cx: rng() * 100 - 50,
        cy: rng() * 100 - 50,
        scale: 1 + rng() * 30,
      };
      const x = rng() * 200 - 100;
      const y = rng() * 200 - 100;
      const [sx, sy] = worldToScreen(v, x, y, W, H);
      const [bx, by] = screenToWorld(v, sx, sy, W, H);
      expect(bx).toBeCloseTo(x, 9);
      expect(by).toBeCloseTo(y, 9);
    }
  });

  it("centers the view on (cx, cy)", () => {
    const v: ViewTransform = { cx: 12, cy: -7, scale: 10 };
    expect(worldToScreen(v, 12, -7, W, H)).toEqual([W / 2, H / 2]);
  });

  it("pan then inverse pan restores the identical transform", () => {
    const v: ViewTransform = { cx: 3, cy: 4, scale: 12 };
    const back = pan(pan(v, 35, -18), -35, 18);
    expect(back.cx).toBeCloseTo(v.cx, 12);
    expect(back.cy).toBeCloseTo(v.cy, 12);
    expect(back.scale).toBe(v.scale);
  });

  it("zoomAt keeps the world point under the cursor fixed", () => {
    const v: ViewTransform = { cx: 0, cy: 0, scale: 8 };
    const [sx, sy] = [200, 450];
    const [wx, wy] = screenToWorld(v, sx, sy, W, H);
    const zoomed = zoomAt(v, sx, sy, 1.7, W, H);
    const [sx2, sy2] = worldToScreen(zoomed, wx, wy, W, H);
    expect(sx2).toBeCloseTo(sx, 9);
    expect(sy2).toBeCloseTo(sy, 9);
  });

  it("zoom in then out restores the transform", () => {
    const v: ViewTransform = { cx: -5, cy: 9, scale: 6 };
    const once = zoomAt(v, 100, 100, 2, W, H);
    const back = zoomAt(once, 100, 100, 0.5, W, H);
    expect(back.cx).toBeCloseTo(v.cx, 9);
    expect(back.cy).toBeCloseTo(v.cy, 9);
    expect(back.scale).toBeCloseTo(v.scale, 9);
  });

  it("clamps scale instead of inverting", () => {
    const v: ViewTransform = { cx: 0, cy: 0, scale: 1 };
    const out = zoomAt(v, 0, 0, 1e-9, W, H);
    expect(out.scale).toBeGreaterThanOrEqual(0.5);
  });
});

describe("box helpers", () => {
  it("axis-aligned corners sit at half extents", () => {
    const corners = boxCorners(10, 5, 0, 2, 4);
    expect(corners).toEqual([
      [12, 6],
      [12, 4],
      [8, 4],
      [8, 6],
    ]);
  });

  it("rotation by pi/2 swaps the roles of w and l", () => {
    const corners = boxCorners(0, 0, Math.PI / 2, 2, 4);
    for (const [x, y] of corners) {
      expect(Math.abs(x)).toBeCloseTo(1, 9);
      expect(Math.abs(y)).toBeCloseTo(2, 9);
    }
  });

  it("pointInBox agrees with the corner construction", () => {
    const rng = makeRng(7);
    for (let i = 0; i < 40; i++) {
      const x = rng() * 20 - 10;
      const y = rng() * 20 - 10;
      const th = rng() * Math.PI * 2;
      expect(pointInBox(x, y, x, y, th, 1.8, 4.2)).toBe(true);
      // a point 3 diagonals away can never be inside
      expect(pointInBox(x + 15, y + 15, x, y, th, 1.8, 4.2)).toBe(false);
    }
  });

  it("boundary points count as inside", () => {
    expect(pointInBox(2, 0, 0, 0, 0, 2, 4)).toBe(true);
    expect(pointInBox(2.001, 0, 0, 0, 0, 2, 4)).toBe(false);
  });
});
