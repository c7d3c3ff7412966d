/** Typed client for the segmentation session service. */

export interface SessionInfo {
  session_id: string;
  width: number;
  height: number;
}

export interface MaskResponse {
  mask: string; // base64 PNG at original image resolution
  click_count: number;
  iou?: number;
  soft_mask?: string;
}

export interface ClickPayload {
  x: number;
  y: number;
  positive: boolean;
}

export interface SessionState {
  session_id: string;
  width: number;
  height: number;
  click_count: number;
  clicks: ClickPayload[];
  history_depth: number;
  has_gt: boolean;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    }).then((r) => asJson<T>(r));
  }

  createSession(imageB64: string, gtB64?: string): Promise<SessionInfo> {
    const payload: Record<string, string> = { image: imageB64 };
    if (gtB64) payload.gt = gtB64;
    return this.post<SessionInfo>("/sessions", payload);
  }

  postClick(sessionId: string, click: ClickPayload): Promise<MaskResponse> {
    return this.post<MaskResponse>(`/sessions/${sessionId}/clicks`, click);
  }

  undo(sessionId: string): Promise<MaskResponse> {
    return this.post<MaskResponse>(`/sessions/${sessionId}/undo`);
  }

  reset(sessionId: string): Promise<{ session_id: string; click_count: number }> {
    return this.post(`/sessions/${sessionId}/reset`);
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`).then((r) =>
      asJson<SessionState>(r),
    );
  }

  healthz(): Promise<{ status: string; checkpoint_hash: string | null }> {
    return this.fetchImpl(`${this.baseUrl}/healthz`).then((r) => asJson(r));
  }
}
