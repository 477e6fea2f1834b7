import type { HistoryEntry } from './session.js';
import type { MixParams } from './types.js';

export interface ParamDiff {
  field: keyof MixParams;
  a: unknown;
  b: unknown;
}

const COMPARED: (keyof MixParams)[] = ['style_id', 'mode', 'k', 'psi', 'seed', 'reference_id'];

// Side-by-side support: which knobs differ between two history entries.
// The portrait itself is compared by identity, reported as 'image_png_b64'.
export function compareEntries(a: HistoryEntry, b: HistoryEntry): ParamDiff[] {
  const diffs: ParamDiff[] = [];
  for (const field of COMPARED) {
    const av = a.params[field];
    const bv = b.params[field];
    if (av !== bv) diffs.push({ field, a: av, b: bv });
  }
  if (a.params.image_png_b64 !== b.params.image_png_b64) {
    diffs.push({ field: 'image_png_b64', a: '<portrait A>', b: '<portrait B>' });
  }
  return diffs;
}
