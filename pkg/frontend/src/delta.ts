import type { JobPayload } from "./api";

export const THRESHOLDS = ["0.5", "0.6", "0.7", "0.8", "0.9"];

/**
 * Fill the metric panel from a finished refine job.
 *
 * Every cell keeps the raw payload value in data-raw (stringified with
 * JSON.stringify, no rounding) so the displayed table can be checked
 * against the job payload field for field; the visible text is rounded.
 */
export function renderDeltaPanel(panel: HTMLElement, job: JobPayload | null): void {
  panel.textContent = "";
  const doc = panel.ownerDocument;
  if (job === null || job.delta === null) {
    const empty = doc.createElement("div");
    empty.className = "delta-empty";
    empty.textContent =
      job === null ? "no refinement yet" : `job ${job.status}`;
    panel.appendChild(empty);
    return;
  }
  const head = doc.createElement("div");
  head.className = "delta-head";
  head.dataset.jobId = job.job_id;
  head.dataset.revision = String(job.revision);
  head.textContent = `revision ${job.revision}`;
  panel.appendChild(head);

  const table = doc.createElement("table");
  table.className = "delta-table";
  const hr = doc.createElement("tr");
  for (const title of ["iou", "before", "after", "delta"]) {
    const th = doc.createElement("th");
    th.textContent = title;
    hr.appendChild(th);
  }
  table.appendChild(hr);
  for (const thr of THRESHOLDS) {
    const row = doc.createElement("tr");
    row.className = "delta-row";
    row.dataset.threshold = thr;
    const cells: [string, number][] = [
      ["before", job.delta.before.fractions[thr]],
      ["after", job.delta.after.fractions[thr]],
      ["delta", job.delta.delta[thr]],
    ];
    const label = doc.createElement("td");
    label.textContent = `≥ ${thr}`;
    row.appendChild(label);
    for (const [field, value] of cells) {
      const td = doc.createElement("td");
      td.className = `delta-${field}`;
      td.dataset.raw = JSON.stringify(value);
      td.textContent =
        field === "delta"
          ? `${value >= 0 ? "+" : ""}${(value * 100).toFixed(1)}%`
          : (value * 100).toFixed(1) + "%";
      row.appendChild(td);
    }
    table.appendChild(row);
  }
  panel.appendChild(table);

  const counts = doc.createElement("div");
  counts.className = "delta-counts";
  counts.dataset.nTotal = String(job.delta.after.n_total);
  counts.dataset.nMatched = String(job.delta.after.n_matched);
  counts.textContent = `${job.delta.after.n_matched}/${job.delta.after.n_total} boxes matched`;
  panel.appendChild(counts);
}

/** Read the raw values back out of a rendered panel. */
export function readDeltaPanel(panel: HTMLElement): {
  before: Record<string, number>;
  after: Record<string, number>;
  delta: Record<string, number>;
} | null {
  const rows = panel.querySelectorAll<HTMLElement>(".delta-row");
  if (rows.length === 0) return null;
  const out = {
    before: {} as Record<string, number>,
    after: {} as Record<string, number>,
    delta: {} as Record<string, number>,
  };
  rows.forEach((row) => {
    const thr = row.dataset.threshold as string;
    for (const field of ["before", "after", "delta"] as const) {
      const cell = row.querySelector<HTMLElement>(`.delta-${field}`);
      if (cell && cell.dataset.raw !== undefined) {
        out[field][thr] = JSON.parse(cell.dataset.raw);
      }
    }
  });
  return out;
}
