/** Thin typed client over the service endpoints. */

import type { DatasetSummary, JobPayload, Prediction, SamplePayload, Scenario } from './types';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const message = (body as { error?: string }).error ?? `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return body as T;
  }

  health(): Promise<{ status: string }> {
    return this.request('/health');
  }

  summary(): Promise<DatasetSummary> {
    return this.request('/dataset/summary');
  }

  sample(id: string): Promise<SamplePayload> {
    return this.request(`/samples/${encodeURIComponent(id)}`);
  }

  predict(counts: number[], signal?: AbortSignal): Promise<Prediction> {
    return this.request('/predict', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ counts }),
      signal,
    });
  }

  optimize(scenario: Scenario): Promise<{ job_id: string }> {
    return this.request('/optimize', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(scenario),
    });
  }

  job(id: string): Promise<JobPayload> {
    return this.request(`/jobs/${encodeURIComponent(id)}`);
  }
}
