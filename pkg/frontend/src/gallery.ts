import type { StudioClient } from './api.js';
import type { MixParams, RenderResult } from './types.js';

export interface GalleryItem {
  seed: number;
  params: MixParams;
  result: RenderResult;
}

// Multimodal exploration: the same portrait under n consecutive noise seeds,
// starting at base.seed. Requests run one at a time; the backend renders on
// a single worker, so firing them concurrently would only queue them anyway.
export async function seedGallery(
  client: StudioClient,
  base: MixParams,
  n: number,
): Promise<GalleryItem[]> {
  if (base.mode !== 'noise') throw new Error('seed gallery needs noise mode');
  if (base.seed === undefined) throw new Error('seed gallery needs a base seed');
  if (!Number.isInteger(n) || n < 1) throw new Error(`need a positive count, got ${n}`);
  const items: GalleryItem[] = [];
  for (let i = 0; i < n; i++) {
    const params: MixParams = { ...base, seed: base.seed + i };
    const result = await client.mix(params);
    items.push({ seed: params.seed!, params, result });
  }
  return items;
}
