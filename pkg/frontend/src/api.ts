/**
 * Typed client for the local analysis API.
 *
 * Every number the console displays comes out of these responses; the
 * client never computes counts, lengths or densities itself.
 */

export interface DendriteSummary {
  id: number;
  name: string;
  length_um: number;
}

export interface SessionSummary {
  id: string;
  width: number;
  height: number;
  dendrites: DendriteSummary[];
}

export interface SessionConfig {
  scale: number;
  thickness: number;
  threshold_red?: number;
  threshold_green?: number;
  min_area?: number;
  connectivity?: number;
  mode?: AnalysisMode;
}

export type AnalysisMode = "global" | "per-dendrite";

export interface ResultRow {
  dendrite_id: number | string;
  length_px: number;
  length_um: number;
  synapse_count: number;
  density_per_100um: number | null;
}

export interface AnalyzeRequest {
  threshold_red: number;
  threshold_green: number;
  mode: AnalysisMode;
  min_area?: number;
}

export interface AnalyzeResponse {
  per_dendrite: ResultRow[];
  global: ResultRow;
  warnings: string[];
  centroids: [number, number][];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // not JSON; fall through
  }
  return `request failed with status ${response.status}`;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  async createSession(parts: {
    red: Blob;
    green: Blob;
    traces: Blob;
    config: SessionConfig;
  }): Promise<SessionSummary> {
    const form = new FormData();
    form.append("red", parts.red, "red.tif");
    form.append("green", parts.green, "green.tif");
    form.append("traces", parts.traces, "traces.ndf");
    form.append("config", new Blob([JSON.stringify(parts.config)]), "config.json");
    const response = await this.fetchFn(`${this.baseUrl}/session`, {
      method: "POST",
      body: form,
    });
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return (await response.json()) as SessionSummary;
  }

  previewUrl(sessionId: string, tr: number, tg: number): string {
    return `${this.baseUrl}/session/${sessionId}/preview?tr=${tr}&tg=${tg}`;
  }

  marksUrl(sessionId: string, tr: number, tg: number): string {
    return `${this.baseUrl}/session/${sessionId}/marks?tr=${tr}&tg=${tg}`;
  }

  async fetchPreview(sessionId: string, tr: number, tg: number): Promise<Blob> {
    const response = await this.fetchFn(this.previewUrl(sessionId, tr, tg));
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return await response.blob();
  }

  async analyze(sessionId: string, body: AnalyzeRequest): Promise<AnalyzeResponse> {
    const response = await this.fetchFn(`${this.baseUrl}/session/${sessionId}/analyze`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return (await response.json()) as AnalyzeResponse;
  }
}
