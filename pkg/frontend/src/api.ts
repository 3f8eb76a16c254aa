// Typed client for the perceptual study HTTP API.

export type Judgment = 'real' | 'synthetic';

export interface Composition {
  n_real: number;
  n_synthetic: number;
}

export interface SessionCreated {
  session_id: string;
  total: number;
}

export interface Progress {
  session_id: string;
  rated: number;
  total: number;
  completed: boolean;
}

export interface BlindedItem {
  item_id: string;
  domain: string;
  index: number;
  total: number;
  image_png: string; // base64 PNG bytes, rendered verbatim
}

export interface RatingAck {
  item_id: string;
  rated: number;
  completed: boolean;
}

export interface Report {
  rated: number;
  confusion: Record<string, Record<string, Record<string, number>>>;
  fooling_rate_by_domain: Record<string, number | null>;
  fooling_rate_by_model: Record<string, number | null>;
  fooling_rate_overall: number | null;
  accuracy: number;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export class StudyApi {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`backend unreachable: ${String(err)}`, 0);
    }
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  createSession(seed?: number, composition?: Composition): Promise<SessionCreated> {
    return this.request('/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ seed, composition }),
    });
  }

  progress(sessionId: string): Promise<Progress> {
    return this.request(`/sessions/${sessionId}`);
  }

  nextItem(sessionId: string): Promise<BlindedItem> {
    return this.request(`/sessions/${sessionId}/next`);
  }

  submitRating(
    sessionId: string,
    itemId: string,
    judgment: Judgment,
    latencyMs: number,
  ): Promise<RatingAck> {
    return this.request(`/sessions/${sessionId}/ratings`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ item_id: itemId, judgment, latency_ms: latencyMs }),
    });
  }

  report(sessionId: string, partial = false): Promise<Report> {
    const query = partial ? '?partial=true' : '';
    return this.request(`/sessions/${sessionId}/report${query}`);
  }
}
