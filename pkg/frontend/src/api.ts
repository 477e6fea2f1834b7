import type { JobInfo, MixParams, RenderResult, StyleInfo } from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

// Thin typed wrapper over the studio service; the fetch implementation is
// injectable so tests can run without a server.
export class StudioClient {
  constructor(
    private baseUrl = '',
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = (await res.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  private post<T>(path: string, payload: unknown, signal?: AbortSignal): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(payload),
      signal,
    });
  }

  listStyles(): Promise<StyleInfo[]> {
    return this.request<StyleInfo[]>('/api/styles');
  }

  stylize(style_id: string, image_png_b64: string, psi?: number): Promise<RenderResult> {
    return this.post<RenderResult>('/api/stylize', { style_id, image_png_b64, psi });
  }

  mix(params: MixParams, signal?: AbortSignal): Promise<RenderResult> {
    return this.post<RenderResult>('/api/mix', params, signal);
  }

  uploadReference(style_id: string, image_png_b64: string): Promise<{ job_id: string }> {
    return this.post<{ job_id: string }>('/api/reference', { style_id, image_png_b64 });
  }

  getJob(jobId: string): Promise<JobInfo> {
    return this.request<JobInfo>(`/api/jobs/${jobId}`);
  }
}
