import { ApiClient, ApiError, FramePayload, JobPayload, SceneSummary, TrajectoryObj } from "./api";
import { readDeltaPanel, renderDeltaPanel } from "./delta";
import { FrameFetcher, pollJob } from "./poll";
import { Ctx2D, renderFrame } from "./render";
import {
  ViewState,
  clampFrame,
  decodeHash,
  encodeHash,
  initialState,
  toggleSelect,
} from "./state";
import { pan, pointInBox, screenToWorld, zoomAt } from "./transform";

const DRAG_THRESHOLD_PX = 4;

export class AnnotatorApp {
  api: ApiClient;
  root: HTMLElement;
  doc: Document;
  st: ViewState;
  scenes: SceneSummary[] = [];
  trajectories: TrajectoryObj[] = [];
  frameData: FramePayload | null = null;
  lastJob: JobPayload | null = null;
  fetcher: FrameFetcher;
  polling = false;
  hover: { boxId: number; iou: number | null; sx: number; sy: number } | null = null;
  private drag: { sx: number; sy: number; moved: boolean } | null = null;

  els!: {
    sceneList: HTMLElement;
    canvas: HTMLCanvasElement;
    banner: HTMLElement;
    scrubber: HTMLInputElement;
    frameLabel: HTMLElement;
    trajList: HTMLElement;
    linkBtn: HTMLButtonElement;
    refineBtn: HTMLButtonElement;
    revSelect: HTMLSelectElement;
    deltaPanel: HTMLElement;
    toast: HTMLElement;
  };

  constructor(root: HTMLElement, api: ApiClient) {
    this.root = root;
    this.api = api;
    this.doc = root.ownerDocument;
    this.st = initialState();
    this.fetcher = new FrameFetcher(
      api,
      (fr) => {
        this.frameData = fr;
        this.hideBanner();
        this.draw();
      },
      (err) => this.showBanner(`frame load failed: ${String(err)}`),
    );
    this.buildDom();
    this.bindEvents();
  }

  private buildDom(): void {
    const d = this.doc;
    this.root.innerHTML = "";
    const layout = d.createElement("div");
    layout.className = "layout";

    const scenes = d.createElement("aside");
    scenes.className = "scenes";
    const sceneHead = d.createElement("h3");
    sceneHead.textContent = "scenes";
    const sceneList = d.createElement("ul");
    sceneList.id = "scene-list";
    scenes.append(sceneHead, sceneList);

    const main = d.createElement("main");
    const toolbar = d.createElement("div");
    toolbar.className = "toolbar";
    for (const layer of ["points", "gt", "current", "paths"] as const) {
      const label = d.createElement("label");
      const cb = d.createElement("input");
      cb.type = "checkbox";
      cb.checked = true;
      cb.dataset.layer = layer;
      cb.addEventListener("change", () => {
        this.st.layers[layer] = cb.checked;
        this.draw();
      });
      label.append(cb, d.createTextNode(layer));
      toolbar.appendChild(label);
    }
    const scrubber = d.createElement("input");
    scrubber.type = "range";
    scrubber.id = "scrubber";
    scrubber.min = "0";
    scrubber.value = "0";
    const frameLabel = d.createElement("span");
    frameLabel.id = "frame-label";
    frameLabel.textContent = "frame 0";
    toolbar.append(scrubber, frameLabel);

    const canvas = d.createElement("canvas");
    canvas.id = "bev";
    canvas.width = 900;
    canvas.height = 620;
    const banner = d.createElement("div");
    banner.id = "banner";
    banner.className = "banner hidden";
    main.append(toolbar, canvas, banner);

    const panel = d.createElement("aside");
    panel.className = "panel";
    const trajHead = d.createElement("h3");
    trajHead.textContent = "trajectories";
    const trajList = d.createElement("ul");
    trajList.id = "traj-list";
    const linkBtn = d.createElement("button");
    linkBtn.id = "link-btn";
    linkBtn.textContent = "link selected";
    linkBtn.disabled = true;
    const refineBtn = d.createElement("button");
    refineBtn.id = "refine-btn";
    refineBtn.textContent = "refine";
    const revSelect = d.createElement("select");
    revSelect.id = "rev-select";
    const deltaPanel = d.createElement("div");
    deltaPanel.id = "delta-panel";
    const toast = d.createElement("div");
    toast.id = "toast";
    toast.className = "toast hidden";
    panel.append(trajHead, trajList, linkBtn, refineBtn, revSelect, deltaPanel, toast);

    layout.append(scenes, main, panel);
    this.root.appendChild(layout);

    this.els = {
      sceneList,
      canvas,
      banner,
      scrubber,
      frameLabel,
      trajList,
      linkBtn,
      refineBtn,
      revSelect,
      deltaPanel,
      toast,
    };
    renderDeltaPanel(deltaPanel, null);
  }

  private bindEvents(): void {
    const { canvas, scrubber, linkBtn, refineBtn } = this.els;
    canvas.addEventListener("mousedown", (ev) => {
      this.drag = { sx: ev.offsetX, sy: ev.offsetY, moved: false };
    });
    canvas.addEventListener("mousemove", (ev) => {
      if (this.drag) {
        const dx = ev.offsetX - this.drag.sx;
        const dy = ev.offsetY - this.drag.sy;
        if (this.drag.moved || Math.hypot(dx, dy) > DRAG_THRESHOLD_PX) {
          this.drag.moved = true;
          this.st.view = pan(this.st.view, dx, dy);
          this.drag.sx = ev.offsetX;
          this.drag.sy = ev.offsetY;
          this.draw();
        }
        return;
      }
      this.updateHover(ev.offsetX, ev.offsetY);
    });
    canvas.addEventListener("mouseup", (ev) => {
      const wasDrag = this.drag?.moved ?? false;
      this.drag = null;
      if (!wasDrag) this.handleCanvasClick(ev.offsetX, ev.offsetY);
    });
    canvas.addEventListener("mouseleave", () => {
      this.drag = null;
      if (this.hover) {
        this.hover = null;
        this.draw();
      }
    });
    canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const factor = ev.deltaY < 0 ? 1.15 : 1 / 1.15;
      this.st.view = zoomAt(
        this.st.view,
        ev.offsetX,
        ev.offsetY,
        factor,
        canvas.width,
        canvas.height,
      );
      this.draw();
    });
    scrubber.addEventListener("input", () => {
      this.setFrame(Number(scrubber.value));
    });
    linkBtn.addEventListener("click", () => void this.linkSelected());
    refineBtn.addEventListener("click", () => void this.refine());
    const win = this.doc.defaultView;
    win?.addEventListener("hashchange", () => {
      const decoded = decodeHash(win.location.hash);
      if (decoded.sceneId !== null && decoded.sceneId !== this.st.sceneId) {
        void this.selectScene(decoded.sceneId, decoded.frame);
      } else if (decoded.frame !== this.st.frame) {
        this.setFrame(decoded.frame);
      }
    });
  }

  async start(): Promise<void> {
    this.scenes = await this.api.getScenes();
    this.renderSceneList();
    const hash = this.doc.defaultView?.location.hash ?? "";
    const decoded = decodeHash(hash);
    const target =
      decoded.sceneId !== null && this.scenes.some((s) => s.scene_id === decoded.sceneId)
        ? decoded.sceneId
        : this.scenes.length > 0
          ? this.scenes[0].scene_id
          : null;
    if (target !== null) await this.selectScene(target, decoded.frame);
  }

  private renderSceneList(): void {
    const d = this.doc;
    this.els.sceneList.innerHTML = "";
    for (const sc of this.scenes) {
      const li = d.createElement("li");
      li.className = "scene-item" + (sc.scene_id === this.st.sceneId ? " active" : "");
      li.dataset.sceneId = sc.scene_id;
      li.textContent = `${sc.scene_id} (${sc.counts.current} tracks, rev ${sc.counts.revision})`;
      li.addEventListener("click", () => void this.selectScene(sc.scene_id));
      this.els.sceneList.appendChild(li);
    }
  }

  async selectScene(sceneId: string, frame = 0): Promise<void> {
    const summary = this.scenes.find((s) => s.scene_id === sceneId);
    this.st.sceneId = sceneId;
    this.st.nFrames = summary?.n_frames ?? 1;
    this.st.frame = clampFrame(this.st, frame);
    this.st.selected = [];
    this.lastJob = null;
    this.els.scrubber.max = String(this.st.nFrames - 1);
    this.els.scrubber.value = String(this.st.frame);
    renderDeltaPanel(this.els.deltaPanel, null);
    this.renderSceneList();
    await this.refreshTrajectories();
    this.fetcher.request(sceneId, this.st.frame);
    this.syncHash();
  }

  setFrame(frame: number): void {
    if (this.st.sceneId === null) return;
    this.st.frame = clampFrame(this.st, frame);
    this.els.scrubber.value = String(this.st.frame);
    this.els.frameLabel.textContent = `frame ${this.st.frame}`;
    this.fetcher.request(this.st.sceneId, this.st.frame);
    this.syncHash();
  }

  async refreshTrajectories(): Promise<void> {
    if (this.st.sceneId === null) return;
    const payload = await this.api.getTrajectories(this.st.sceneId);
    this.trajectories = payload.trajectories;
    this.st.revision = payload.revision;
    this.renderTrajList();
    this.renderRevisions(payload.revision);
    this.draw();
  }

  private renderTrajList(): void {
    const d = this.doc;
    this.els.trajList.innerHTML = "";
    for (const tr of this.trajectories) {
      const li = d.createElement("li");
      li.className = "traj-item" + (this.st.selected.includes(tr.id) ? " selected" : "");
      li.dataset.trajId = String(tr.id);
      const flag = tr.static === null ? "?" : tr.static ? "S" : "M";
      li.textContent = `#${tr.id} [${flag}] ${tr.n_frames} frames`;
      li.addEventListener("click", () => this.toggleFragment(tr.id));
      this.els.trajList.appendChild(li);
    }
    this.els.linkBtn.disabled = this.st.selected.length !== 2;
  }

  private renderRevisions(current: number): void {
    const d = this.doc;
    this.els.revSelect.innerHTML = "";
    for (let r = 0; r <= current; r++) {
      const opt = d.createElement("option");
      opt.value = String(r);
      opt.textContent = r === 0 ? "rev 0 (init)" : `rev ${r}`;
      if (r === current) opt.selected = true;
      this.els.revSelect.appendChild(opt);
    }
  }

  toggleFragment(id: number): void {
    this.st.selected = toggleSelect(this.st.selected, id);
    this.renderTrajList();
    this.draw();
  }

  private handleCanvasClick(sx: number, sy: number): void {
    if (this.frameData === null) return;
    const { canvas } = this.els;
    const [wx, wy] = screenToWorld(this.st.view, sx, sy, canvas.width, canvas.height);
    for (const b of this.frameData.boxes.current) {
      if (pointInBox(wx, wy, b.x, b.y, b.theta, b.w, b.l)) {
        this.toggleFragment(b.traj_id);
        return;
      }
    }
  }

  private updateHover(sx: number, sy: number): void {
    if (this.frameData === null) return;
    const { canvas } = this.els;
    const [wx, wy] = screenToWorld(this.st.view, sx, sy, canvas.width, canvas.height);
    let hover: typeof this.hover = null;
    for (const b of this.frameData.boxes.current) {
      if (pointInBox(wx, wy, b.x, b.y, b.theta, b.w, b.l)) {
        const tr = this.trajectories.find((t) => t.id === b.traj_id);
        const det = tr?.detections.find((dd) => dd.frame === b.frame);
        hover = { boxId: b.traj_id, iou: det?.iou ?? null, sx, sy };
        break;
      }
    }
    const changed =
      (hover === null) !== (this.hover === null) || hover?.boxId !== this.hover?.boxId;
    this.hover = hover;
    if (changed) this.draw();
  }

  /** Optimistic link: drop the merged-away fragment, roll back on 4xx. */
  async linkSelected(): Promise<void> {
    if (this.st.selected.length !== 2 || this.st.sceneId === null) return;
    const [a, b] = this.st.selected;
    const snapshot = this.trajectories;
    const keepId = Math.min(a, b);
    const dropId = Math.max(a, b);
    this.trajectories = this.trajectories.filter((t) => t.id !== dropId);
    this.st.selected = [];
    this.renderTrajList();
    this.draw();
    try {
      await this.api.postLink(this.st.sceneId, a, b);
      await this.refreshTrajectories();
      this.showToast(`linked #${a} + #${b} -> #${keepId}`);
    } catch (err) {
      this.trajectories = snapshot;
      this.st.selected = [a, b];
      this.renderTrajList();
      this.draw();
      const msg = err instanceof ApiError ? `link rejected (${err.status}): ${err.message}` : String(err);
      this.showToast(msg);
    }
  }

  async refine(): Promise<void> {
    if (this.st.sceneId === null || this.polling) return;
    const btn = this.els.refineBtn;
    try {
      const { job_id } = await this.api.postRefine(this.st.sceneId);
      this.polling = true;
      btn.disabled = true;
      btn.textContent = "refining...";
      const job = await pollJob(this.api, job_id, {
        intervalMs: 400,
        onUpdate: (j) => {
          this.lastJob = j;
          btn.textContent = `refine: ${j.status}`;
          renderDeltaPanel(this.els.deltaPanel, j);
        },
      });
      this.lastJob = job;
      renderDeltaPanel(this.els.deltaPanel, job);
      if (job.status === "done") {
        await this.refreshTrajectories();
        if (this.st.sceneId !== null) this.fetcher.request(this.st.sceneId, this.st.frame);
        this.showToast(`revision ${job.revision} ready`);
      } else {
        this.showToast(`refine failed: ${job.error ?? "unknown"}`);
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.showToast("a refine job is already running");
      } else {
        this.showToast(`refine failed: ${String(err)}`);
      }
    } finally {
      this.polling = false;
      btn.disabled = false;
      btn.textContent = "refine";
    }
  }

  readDelta() {
    return readDeltaPanel(this.els.deltaPanel);
  }

  private syncHash(): void {
    const win = this.doc.defaultView;
    if (!win) return;
    const hash = encodeHash(this.st);
    if (win.location.hash !== hash) win.location.hash = hash;
  }

  private showBanner(msg: string): void {
    this.els.banner.textContent = msg;
    this.els.banner.className = "banner";
  }

  private hideBanner(): void {
    this.els.banner.className = "banner hidden";
  }

  private showToast(msg: string): void {
    this.els.toast.textContent = msg;
    this.els.toast.className = "toast";
  }

  draw(): void {
    const ctx = this.els.canvas.getContext("2d") as Ctx2D | null;
    if (!ctx) return;
    renderFrame(ctx, {
      frame: this.frameData,
      trajectories: this.trajectories,
      view: this.st.view,
      layers: this.st.layers,
      selected: this.st.selected,
      hover: this.hover,
    });
  }
}
