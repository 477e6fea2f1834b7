import type { MixParams, StyleInfo, TailMode } from './types.js';

export interface HistoryEntry {
  params: MixParams;
  image_png_b64: string;
  at: number;
}

// Everything the control surface knows. Mutations go through the methods so
// the invariants (k within the active style's layer bounds, reference mode
// only with an embedding in hand) cannot be sidestepped by the UI layer.
export class SessionState {
  portrait: string | null = null;
  style: StyleInfo | null = null;
  k = 0;
  psi = 0.9;
  mode: TailMode = 'noise';
  seed = 0;
  referenceId: string | null = null;
  history: HistoryEntry[] = [];

  setPortrait(pngB64: string): void {
    this.portrait = pngB64;
  }

  // Switching styles rebounds k and drops the reference: embeddings are
  // per-style and the backend rejects cross-style reference ids anyway.
  setStyle(style: StyleInfo): void {
    if (this.style && style.style_id !== this.style.style_id) {
      this.referenceId = null;
      if (this.mode === 'reference') this.mode = 'noise';
    }
    this.style = style;
    this.psi = style.truncation_psi;
    const preferred = style.default_mix_indices[1] ?? style.layer_count;
    this.k = clamp(this.k || preferred, 0, style.layer_count);
  }

  setK(k: number): void {
    const max = this.style ? this.style.layer_count : 0;
    this.k = clamp(Math.round(k), 0, max);
  }

  setPsi(psi: number): void {
    this.psi = clamp(psi, 0, 1);
  }

  setSeed(seed: number): void {
    this.seed = Math.round(seed);
  }

  setMode(mode: TailMode): void {
    if (mode === 'reference' && !this.referenceId) {
      throw new Error('reference mode needs a finished reference upload');
    }
    this.mode = mode;
  }

  enableReference(referenceId: string): void {
    this.referenceId = referenceId;
    this.mode = 'reference';
  }

  // The exact request the current controls describe, or null while the
  // session is missing a portrait or style.
  currentParams(): MixParams | null {
    if (!this.portrait || !this.style) return null;
    const params: MixParams = {
      style_id: this.style.style_id,
      image_png_b64: this.portrait,
      mode: this.mode,
      k: this.k,
      psi: this.psi,
    };
    if (this.mode === 'noise') params.seed = this.seed;
    else params.reference_id = this.referenceId ?? undefined;
    return params;
  }

  pushHistory(params: MixParams, image_png_b64: string): HistoryEntry {
    const entry: HistoryEntry = { params, image_png_b64, at: Date.now() };
    this.history.push(entry);
    return entry;
  }

  // Exact-parameter repeats reuse the stored thumbnail instead of re-asking
  // the single-worker backend.
  findInHistory(params: MixParams): HistoryEntry | undefined {
    const key = paramsKey(params);
    for (let i = this.history.length - 1; i >= 0; i--) {
      const entry = this.history[i];
      if (entry && paramsKey(entry.params) === key) return entry;
    }
    return undefined;
  }
}

export function paramsKey(p: MixParams): string {
  return JSON.stringify([
    p.style_id,
    p.mode,
    p.k,
    p.psi,
    p.seed ?? null,
    p.reference_id ?? null,
    p.image_png_b64,
  ]);
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}
