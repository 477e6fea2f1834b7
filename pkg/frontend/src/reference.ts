import type { StudioClient } from './api.js';
import type { JobInfo } from './types.js';

export interface ReferenceUploadOptions {
  pollMs?: number;
  onProgress?: (job: JobInfo) => void;
}

// Upload a style exemplar and follow its embedding job to completion.
// Resolves with the reference id the mix endpoint accepts; rejects when the
// job fails. Identical uploads dedupe server-side, so re-sending is cheap.
export async function uploadReference(
  client: StudioClient,
  styleId: string,
  imagePngB64: string,
  opts: ReferenceUploadOptions = {},
): Promise<string> {
  const pollMs = opts.pollMs ?? 500;
  const { job_id } = await client.uploadReference(styleId, imagePngB64);
  for (;;) {
    const job = await client.getJob(job_id);
    opts.onProgress?.(job);
    if (job.status === 'done') {
      if (!job.result_id) throw new Error(`job ${job_id} finished without a result id`);
      return job.result_id;
    }
    if (job.status === 'failed') {
      throw new Error(job.error ?? `job ${job_id} failed`);
    }
    await sleep(pollMs);
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
