import type { ApiClient, FramePayload, JobPayload } from "./api";

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/**
 * Poll one job until it settles. One request in flight at a time by
 * construction (sequential awaits); onUpdate fires for every snapshot.
 */
export async function pollJob(
  api: ApiClient,
  jobId: string,
  opts: { intervalMs?: number; timeoutMs?: number; onUpdate?: (j: JobPayload) => void } = {},
): Promise<JobPayload> {
  const interval = opts.intervalMs ?? 500;
  const deadline = Date.now() + (opts.timeoutMs ?? 120_000);
  for (;;) {
    const job = await api.getJob(jobId);
    opts.onUpdate?.(job);
    if (job.status === "done" || job.status === "error") return job;
    if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
    await sleep(interval);
  }
}

/**
 * Frame fetch coalescing for the time scrubber: at most one request in
 * flight; rapid scrubs overwrite the pending target so only the latest
 * frame is fetched next.
 */
export class FrameFetcher {
  private api: ApiClient;
  private decimation: number;
  private busy = false;
  private pending: { sceneId: string; frame: number } | null = null;
  inFlight = 0; // peak-checked by tests
  onFrame: (frame: FramePayload) => void;
  onError: (err: unknown) => void;

  constructor(
    api: ApiClient,
    onFrame: (frame: FramePayload) => void,
    onError: (err: unknown) => void = () => {},
    decimation = 4,
  ) {
    this.api = api;
    this.onFrame = onFrame;
    this.onError = onError;
    this.decimation = decimation;
  }

  request(sceneId: string, frame: number): void {
    this.pending = { sceneId, frame };
    if (!this.busy) void this.drain();
  }

  private async drain(): Promise<void> {
    this.busy = true;
    while (this.pending !== null) {
      const target = this.pending;
      this.pending = null;
      this.inFlight += 1;
      try {
        const fr = await this.api.getFrame(target.sceneId, target.frame, this.decimation);
        // discard if a newer target arrived for a different frame
        if (this.pending === null) this.onFrame(fr);
      } catch (err) {
        this.onError(err);
      } finally {
        this.inFlight -= 1;
      }
    }
    this.busy = false;
  }
}
