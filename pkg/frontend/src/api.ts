export type Pose = { x: number; y: number; theta: number };

export type BoxObj = {
  traj_id: number;
  frame: number;
  t: number;
  x: number;
  y: number;
  theta: number;
  w: number;
  l: number;
  score: number;
};

export type FramePayload = {
  frame: number;
  t: number;
  ego: Pose;
  n_points_total: number;
  decimation: number;
  points: [number, number, number][];
  boxes: { gt: BoxObj[]; current: BoxObj[] };
};

export type SceneSummary = {
  scene_id: string;
  seed: number;
  n_frames: number;
  counts: { gt: number; current: number; links: number; revision: number };
  metrics: Record<string, number>;
};

export type DetObj = {
  frame: number;
  t: number;
  x: number;
  y: number;
  theta: number;
  w: number;
  l: number;
  score: number;
  iou: number | null;
};

export type TrajectoryObj = {
  id: number;
  static: boolean | null;
  gt_id: number | null;
  n_frames: number;
  detections: DetObj[];
};

export type TrajectoriesPayload = {
  revision: number;
  trajectories: TrajectoryObj[];
};

export type EvalObj = {
  label: string;
  n_total: number;
  n_matched: number;
  fractions: Record<string, number>;
  passed: Record<string, number>;
};

export type DeltaObj = {
  before: EvalObj;
  after: EvalObj;
  delta: Record<string, number>;
};

export type JobPayload = {
  job_id: string;
  scene_id: string;
  status: "queued" | "running" | "done" | "error";
  revision: number | null;
  delta: DeltaObj | null;
  error?: string;
};

export class ApiError extends Error {
  status: number;
  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function check(res: Response): Promise<Response> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      // non-json error body, keep statusText
    }
    throw new ApiError(res.status, detail);
  }
  return res;
}

export class ApiClient {
  base: string;

  constructor(base: string) {
    this.base = base.replace(/\/$/, "");
  }

  private async get<T>(path: string): Promise<T> {
    const res = await check(await fetch(`${this.base}${path}`));
    return (await res.json()) as T;
  }

  getScenes(): Promise<SceneSummary[]> {
    return this.get("/scenes");
  }

  getScene(id: string): Promise<SceneSummary> {
    return this.get(`/scenes/${id}`);
  }

  getFrame(id: string, k: number, n = 4): Promise<FramePayload> {
    return this.get(`/scenes/${id}/frames/${k}?n=${n}`);
  }

  getTrajectories(id: string): Promise<TrajectoriesPayload> {
    return this.get(`/scenes/${id}/trajectories`);
  }

  async postLink(
    id: string,
    a: number,
    b: number,
    tag = "ui",
  ): Promise<{ merged_id: number; n_trajectories: number }> {
    const res = await check(
      await fetch(`${this.base}/scenes/${id}/links`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ a, b, tag }),
      }),
    );
    return await res.json();
  }

  async postRefine(id: string): Promise<{ job_id: string; status: string }> {
    const res = await check(
      await fetch(`${this.base}/scenes/${id}/refine`, { method: "POST" }),
    );
    return await res.json();
  }

  getJob(jobId: string): Promise<JobPayload> {
    return this.get(`/jobs/${jobId}`);
  }
}
