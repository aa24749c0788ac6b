// Wires the review screen together: run picker, debounced threshold slider,
// flagged-count readout, overlay gallery, frame inspector, verdicts.

import { ApiError, Client } from "./api.js";
import type { FramePage, FrameRow, RunSummary, Verdict } from "./api.js";
import { actionForKey } from "./keyboard.js";
import { drawOverlays } from "./overlay.js";
import {
  Debouncer,
  assertMonotone,
  clampPage,
  clampThreshold,
  initialState,
  neighbourFrame,
  pageCount,
  visibleFrames,
} from "./state.js";
import type { Filter, SweepPoint, ViewState } from "./state.js";

const DEV_MODE = new URLSearchParams(location.search).has("dev");

const api = new Client("");
const state: ViewState = initialState();
let currentPage: FramePage | null = null;
let runs: RunSummary[] = [];
const sweepHistory: SweepPoint[] = [];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const runSelect = el<HTMLSelectElement>("run-select");
const slider = el<HTMLInputElement>("threshold-slider");
const thresholdBox = el<HTMLInputElement>("threshold-value");
const flaggedCount = el<HTMLElement>("flagged-count");
const filterSelect = el<HTMLSelectElement>("filter-select");
const gallery = el<HTMLElement>("gallery");
const pager = el<HTMLElement>("pager");
const banner = el<HTMLElement>("banner");
const inspector = el<HTMLElement>("inspector");
const exportJson = el<HTMLAnchorElement>("export-json");
const exportCsv = el<HTMLAnchorElement>("export-csv");

function showBanner(message: string): void {
  banner.textContent = message;
  banner.hidden = false;
  document.body.classList.add("stale");
}

function clearBanner(): void {
  banner.hidden = true;
  document.body.classList.remove("stale");
}

async function refresh(): Promise<void> {
  if (!state.runId) return;
  try {
    const page = await api.frames(state.runId, {
      threshold: state.threshold,
      page: state.page,
      size: state.size,
    });
    currentPage = page;
    clearBanner();
    flaggedCount.textContent = `${page.flagged} / ${page.total} flagged`;
    sweepHistory.push({ threshold: page.threshold, flagged: page.flagged });
    if (DEV_MODE) assertMonotone(sweepHistory);
    renderGallery();
    renderPager();
    renderInspector();
  } catch (err) {
    showBanner(`service unreachable or errored: ${(err as Error).message}; data shown is stale`);
  }
}

function renderRunOptions(): void {
  runSelect.innerHTML = "";
  for (const run of runs) {
    const option = document.createElement("option");
    option.value = run.run_id;
    option.textContent = `${run.run_id} (${run.total} frames)`;
    runSelect.appendChild(option);
  }
}

async function selectRun(runId: string): Promise<void> {
  const run = runs.find((r) => r.run_id === runId);
  if (!run) return;
  state.runId = run.run_id;
  state.maxArea = run.max_area;
  state.threshold = clampThreshold(run.threshold, run.max_area);
  state.page = 1;
  state.selected = null;
  sweepHistory.length = 0;
  slider.max = String(Math.ceil(run.max_area));
  slider.value = String(state.threshold);
  thresholdBox.value = String(state.threshold);
  exportJson.href = api.exportUrl(run.run_id, "json");
  exportCsv.href = api.exportUrl(run.run_id, "csv");
  await refresh();
}

const sliderDebounce = new Debouncer<number>(150, (value) => {
  state.threshold = clampThreshold(value, state.maxArea);
  state.page = 1;
  void refresh();
});

function onSliderInput(): void {
  thresholdBox.value = slider.value;
  sliderDebounce.push(Number(slider.value));
}

function verdictBadge(row: FrameRow): string {
  if (row.verdict === "unreviewed") return "";
  return `<span class="badge badge-${row.verdict}">${row.verdict}</span>`;
}

function renderGallery(): void {
  if (!currentPage || !state.runId) return;
  const rows = visibleFrames(currentPage.frames, state.filter);
  gallery.innerHTML = "";
  for (const row of rows) {
    const card = document.createElement("figure");
    card.className = "card" + (row.flagged ? " flagged" : "") +
      (row.frame_id === state.selected ? " selected" : "");
    card.innerHTML = `
      <img loading="lazy" src="${api.imageUrl(state.runId, row.frame_id)}" alt="${row.frame_id}">
      <figcaption>
        <span class="frame-id">${row.frame_id}</span>
        <span class="area">${Math.round(row.area).toLocaleString()} px²</span>
        ${verdictBadge(row)}
      </figcaption>`;
    card.addEventListener("click", () => {
      state.selected = row.frame_id;
      renderGallery();
      renderInspector();
    });
    gallery.appendChild(card);
  }
  if (rows.length === 0) {
    gallery.innerHTML = '<p class="empty">no frames match the current filter</p>';
  }
}

function renderPager(): void {
  if (!currentPage) return;
  const pages = pageCount(currentPage.total, state.size);
  pager.textContent = `page ${state.page} of ${pages}`;
  el<HTMLButtonElement>("page-prev").disabled = state.page <= 1;
  el<HTMLButtonElement>("page-next").disabled = state.page >= pages;
}

function selectedRow(): FrameRow | null {
  if (!currentPage || !state.selected) return null;
  return currentPage.frames.find((r) => r.frame_id === state.selected) ?? null;
}

function renderInspector(): void {
  const row = selectedRow();
  if (!row || !state.runId) {
    inspector.innerHTML = '<p class="empty">select a frame to inspect it</p>';
    return;
  }
  inspector.innerHTML = `
    <div class="stage">
      <img id="inspect-image" src="${api.imageUrl(state.runId, row.frame_id)}" alt="${row.frame_id}">
      <canvas id="inspect-canvas"></canvas>
    </div>
    <dl class="facts">
      <dt>frame</dt><dd>${row.frame_id}</dd>
      <dt>largest hand</dt><dd>${Math.round(row.area).toLocaleString()} px²</dd>
      <dt>detections</dt><dd>${row.detections.length}</dd>
      <dt>status</dt><dd>${row.flagged ? "flagged" : "below threshold"} ${verdictBadge(row)}</dd>
    </dl>
    <div class="verdict-controls">
      <button id="mark-relevant" class="relevant">relevant (r)</button>
      <button id="mark-irrelevant" class="irrelevant">irrelevant (i)</button>
      <button id="mark-clear">clear (u)</button>
      <input id="note" placeholder="note" value="${row.note.replace(/"/g, "&quot;")}">
    </div>`;
  const image = el<HTMLImageElement>("inspect-image");
  const canvas = el<HTMLCanvasElement>("inspect-canvas");
  const paint = () => {
    const display = { width: image.clientWidth, height: image.clientHeight };
    const natural = { width: image.naturalWidth || 1, height: image.naturalHeight || 1 };
    canvas.width = display.width;
    canvas.height = display.height;
    const ctx = canvas.getContext("2d");
    if (ctx) drawOverlays(ctx, row.detections, natural, display);
  };
  if (image.complete) paint();
  image.addEventListener("load", paint);
  window.addEventListener("resize", paint, { once: true });
  el<HTMLButtonElement>("mark-relevant").onclick = () => void mark("relevant");
  el<HTMLButtonElement>("mark-irrelevant").onclick = () => void mark("irrelevant");
  el<HTMLButtonElement>("mark-clear").onclick = () => void mark("unreviewed");
}

async function mark(verdict: Verdict): Promise<void> {
  const row = selectedRow();
  if (!row || !state.runId) return;
  const note = (document.getElementById("note") as HTMLInputElement | null)?.value ?? row.note;
  const before = { verdict: row.verdict, note: row.note, revision: row.revision };
  row.verdict = verdict;
  row.note = note;
  renderGallery();
  try {
    const result = await api.postVerdict(state.runId, row.frame_id, verdict, note, before.revision);
    row.revision = result.revision;
    renderInspector();
  } catch (err) {
    row.verdict = before.verdict;
    row.note = before.note;
    if (err instanceof ApiError && err.status === 409) {
      showBanner("verdict conflict: another session updated this frame; reloading");
      await refresh();
    } else {
      showBanner(`verdict not saved: ${(err as Error).message}`);
      renderGallery();
      renderInspector();
    }
  }
}

function onKey(event: KeyboardEvent): void {
  const inText = event.target instanceof HTMLInputElement ||
    event.target instanceof HTMLTextAreaElement;
  const action = actionForKey(event.key, inText);
  if (!action || !currentPage) return;
  event.preventDefault();
  const rows = visibleFrames(currentPage.frames, state.filter);
  switch (action) {
    case "next":
    case "prev":
      state.selected = neighbourFrame(rows, state.selected, action === "next" ? 1 : -1);
      renderGallery();
      renderInspector();
      break;
    case "relevant":
      void mark("relevant");
      break;
    case "irrelevant":
      void mark("irrelevant");
      break;
    case "clear":
      void mark("unreviewed");
      break;
  }
}

function movePage(delta: number): void {
  if (!currentPage) return;
  state.page = clampPage(state.page + delta, currentPage.total, state.size);
  void refresh();
}

async function start(): Promise<void> {
  slider.addEventListener("input", onSliderInput);
  slider.addEventListener("change", () => sliderDebounce.flush());
  thresholdBox.addEventListener("change", () => {
    slider.value = thresholdBox.value;
    sliderDebounce.push(Number(thresholdBox.value));
    sliderDebounce.flush();
  });
  filterSelect.addEventListener("change", () => {
    state.filter = filterSelect.value as Filter;
    renderGallery();
  });
  runSelect.addEventListener("change", () => void selectRun(runSelect.value));
  el<HTMLButtonElement>("page-prev").addEventListener("click", () => movePage(-1));
  el<HTMLButtonElement>("page-next").addEventListener("click", () => movePage(1));
  document.addEventListener("keydown", onKey);

  try {
    runs = await api.listRuns();
    clearBanner();
  } catch (err) {
    showBanner(`cannot reach the review service: ${(err as Error).message}`);
    return;
  }
  renderRunOptions();
  if (runs.length > 0) {
    runSelect.value = runs[0].run_id;
    await selectRun(runs[0].run_id);
  } else {
    gallery.innerHTML =
      '<p class="empty">no runs yet; create one with the CLI or POST /api/runs</p>';
  }
}

void start();
