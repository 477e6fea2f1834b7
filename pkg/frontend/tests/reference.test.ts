import { describe, expect, it } from 'vitest';

import type { StudioClient } from '../src/api.js';
import { uploadReference } from '../src/reference.js';
import type { JobInfo } from '../src/types.js';

function job(status: JobInfo['status'], extra: Partial<JobInfo> = {}): JobInfo {
  return {
    id: 'job-1',
    kind: 'reference',
    status,
    progress: status === 'done' ? 1 : 0.5,
    result_id: null,
    error: null,
    meta: {},
    ...extra,
  };
}

// Just the two methods uploadReference touches.
function clientWith(states: JobInfo[]): { client: StudioClient; polls: number[] } {
  const polls: number[] = [];
  let i = 0;
  const client = {
    uploadReference: () => Promise.resolve({ job_id: 'job-1' }),
    getJob: () => {
      polls.push(i);
      const state = states[Math.min(i, states.length - 1)]!;
      i += 1;
      return Promise.resolve(state);
    },
  } as unknown as StudioClient;
  return { client, polls };
}

describe('uploadReference', () => {
  it('polls until done and returns the result id', async () => {
    const { client, polls } = clientWith([
      job('pending'),
      job('running'),
      job('done', { result_id: 'ref-9' }),
    ]);
    const seen: string[] = [];
    const id = await uploadReference(client, 'cartoon', 'AAAA', {
      pollMs: 1,
      onProgress: (j) => seen.push(j.status),
    });
    expect(id).toBe('ref-9');
    expect(polls.length).toBe(3);
    expect(seen).toEqual(['pending', 'running', 'done']);
  });

  it('throws the job error on failure', async () => {
    const { client } = clientWith([job('running'), job('failed', { error: 'no such style' })]);
    await expect(uploadReference(client, 'cartoon', 'AAAA', { pollMs: 1 })).rejects.toThrow(
      'no such style',
    );
  });

  it('treats done-without-result as an error', async () => {
    const { client } = clientWith([job('done')]);
    await expect(uploadReference(client, 'cartoon', 'AAAA', { pollMs: 1 })).rejects.toThrow(
      /without a result id/,
    );
  });
});
