import type {
  AddLandmarkResponse,
  ApiErrorBody,
  SessionSummary,
  SliceFrame,
  SliceMeta,
} from "./types.js";

/** Error carrying the server's structured {code, message, detail} body. */
export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly detail: Record<string, unknown>;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = status;
    this.detail = body.detail ?? {};
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let body: ApiErrorBody;
    try {
      body = (await response.json()) as ApiErrorBody;
    } catch {
      body = { code: "http_error", message: response.statusText, detail: {} };
    }
    throw new ApiError(response.status, body);
  }
  return (await response.json()) as T;
}

/** Decode the base64 little-endian float32 payload of a slice response. */
export function decodeFrame(b64: string): Float32Array {
  const raw = atob(b64);
  const bytes = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
  return new Float32Array(bytes.buffer);
}

export class SessionClient {
  constructor(
    readonly baseUrl: string,
    readonly sessionId: string,
  ) {}

  static async create(
    baseUrl: string,
    landmarks: unknown,
    config?: unknown,
  ): Promise<{ client: SessionClient; summary: SessionSummary }> {
    const body: Record<string, unknown> = { landmarks };
    if (config !== undefined) body.config = config;
    const response = await fetch(`${baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const created = await asJson<{ id: string; summary: SessionSummary }>(response);
    return { client: new SessionClient(baseUrl, created.id), summary: created.summary };
  }

  private url(path: string): string {
    return `${this.baseUrl}/sessions/${this.sessionId}${path}`;
  }

  async state(): Promise<SessionSummary> {
    return asJson<SessionSummary>(await fetch(this.url("/state")));
  }

  async getSlice(kind: string, axis: string, index: number): Promise<SliceFrame> {
    const params = new URLSearchParams({ kind, axis, index: String(index) });
    const response = await fetch(this.url(`/slices?${params}`));
    const body = await asJson<{ meta: SliceMeta; frame_base64: string }>(response);
    return { meta: body.meta, values: decodeFrame(body.frame_base64) };
  }

  async addLandmark(pre: number[], post: number[]): Promise<AddLandmarkResponse> {
    const response = await fetch(this.url("/landmarks"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ pre, post }),
    });
    return asJson<AddLandmarkResponse>(response);
  }

  async removeLandmark(id: number): Promise<{ revision: number; summary: SessionSummary }> {
    const response = await fetch(this.url(`/landmarks/${id}`), { method: "DELETE" });
    return asJson(response);
  }
}
