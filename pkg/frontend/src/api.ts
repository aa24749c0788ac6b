// Typed client for the review service. Every number the UI shows comes out
// of these responses; nothing in the browser recomputes areas or counts.

export type Verdict = "unreviewed" | "relevant" | "irrelevant";

export type RunSummary = {
  run_id: string;
  created_at: string;
  frames_dir: string;
  detections_path: string;
  threshold: number;
  total: number;
  flagged: number;
  max_area: number;
};

export type FrameDetection = {
  detection_id: number;
  x: number;
  y: number;
  w: number;
  h: number;
  confidence: number;
};

export type FrameRow = {
  frame_id: string;
  area: number;
  flagged: boolean;
  verdict: Verdict;
  note: string;
  revision: number;
  detections: FrameDetection[];
};

export type FramePage = {
  run_id: string;
  threshold: number;
  page: number;
  size: number;
  total: number;
  flagged: number;
  frames: FrameRow[];
};

export type Summary = { flagged: number; total: number; threshold: number };

export type VerdictResult = {
  frame_id: string;
  verdict: Verdict;
  note: string;
  revision: number;
};

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly currentRevision?: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

// Frame ids may contain "/" (nested capture directories); those slashes are
// real path separators in the API routes, so encode per segment.
export function encodeFrameId(frameId: string): string {
  return frameId
    .split("/")
    .map((part) => encodeURIComponent(part))
    .join("/");
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    let current: number | undefined;
    try {
      const body = await response.json();
      if (typeof body.detail === "string") detail = body.detail;
      if (typeof body.current_revision === "number") current = body.current_revision;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail, current);
  }
  return (await response.json()) as T;
}

export class Client {
  constructor(private readonly base: string = "") {}

  private url(path: string, query?: Record<string, string | number | undefined>): string {
    let full = this.base + path;
    if (query) {
      const params = new URLSearchParams();
      for (const [key, value] of Object.entries(query)) {
        if (value !== undefined) params.set(key, String(value));
      }
      const text = params.toString();
      if (text) full += "?" + text;
    }
    return full;
  }

  listRuns(): Promise<RunSummary[]> {
    return fetch(this.url("/api/runs")).then((r) => asJson<RunSummary[]>(r));
  }

  createRun(framesDir: string, detectionsPath: string, threshold: number): Promise<{ run_id: string }> {
    return fetch(this.url("/api/runs"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        frames_dir: framesDir,
        detections_path: detectionsPath,
        threshold,
      }),
    }).then((r) => asJson<{ run_id: string }>(r));
  }

  summary(runId: string, threshold?: number): Promise<Summary> {
    return fetch(this.url(`/api/runs/${encodeURIComponent(runId)}/summary`, { threshold })).then(
      (r) => asJson<Summary>(r),
    );
  }

  frames(
    runId: string,
    opts: { threshold?: number; page?: number; size?: number } = {},
  ): Promise<FramePage> {
    return fetch(
      this.url(`/api/runs/${encodeURIComponent(runId)}/frames`, {
        threshold: opts.threshold,
        page: opts.page,
        size: opts.size,
      }),
    ).then((r) => asJson<FramePage>(r));
  }

  postVerdict(
    runId: string,
    frameId: string,
    verdict: Verdict,
    note: string,
    revision: number,
  ): Promise<VerdictResult> {
    return fetch(
      this.url(`/api/runs/${encodeURIComponent(runId)}/frames/${encodeFrameId(frameId)}/verdict`),
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ verdict, note, revision }),
      },
    ).then((r) => asJson<VerdictResult>(r));
  }

  imageUrl(runId: string, frameId: string): string {
    return this.url(`/api/frames/${encodeURIComponent(runId)}/${encodeFrameId(frameId)}/image`);
  }

  exportUrl(runId: string, format: "json" | "csv"): string {
    return this.url(`/api/runs/${encodeURIComponent(runId)}/export`, { format });
  }

  async exportCsv(runId: string): Promise<string> {
    const response = await fetch(this.exportUrl(runId, "csv"));
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.text();
  }
}
