// Payload shapes of the studio service API, mirrored by hand: the backend is
// the contract, these types just keep the client honest.

export interface StyleInfo {
  style_id: string;
  truncation_psi: number;
  layer_count: number;
  default_mix_indices: number[];
}

export type TailMode = 'noise' | 'reference';

// Everything /api/mix needs; also the unit of history and of deduplication.
export interface MixParams {
  style_id: string;
  image_png_b64: string;
  mode: TailMode;
  k: number;
  psi: number;
  seed?: number;
  reference_id?: string;
}

export interface RenderResult {
  image_png_b64: string;
  style_id: string;
}

export type JobStatus = 'queued' | 'running' | 'done' | 'failed';

export interface JobInfo {
  id: string;
  kind: string;
  status: JobStatus;
  progress: number;
  result_id: string | null;
  error: string | null;
  meta: Record<string, unknown>;
}
