import { ApiError, StudioClient } from './api.js';
import { compareEntries } from './compare.js';
import { seedGallery } from './gallery.js';
import { uploadReference } from './reference.js';
import { MixScheduler } from './scheduler.js';
import { SessionState, type HistoryEntry } from './session.js';
import type { MixParams, StyleInfo } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function b64FromFile(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onerror = () => reject(reader.error);
    reader.onload = () => {
      const url = reader.result as string; // data:image/png;base64,....
      resolve(url.slice(url.indexOf(',') + 1));
    };
    reader.readAsDataURL(file);
  });
}

function show(img: HTMLImageElement, pngB64: string): void {
  img.src = `data:image/png;base64,${pngB64}`;
}

export class StudioApp {
  private session = new SessionState();
  private scheduler: MixScheduler;
  private styles: StyleInfo[] = [];
  private selected: HistoryEntry[] = [];

  private styleSelect = el<HTMLSelectElement>('style');
  private kSlider = el<HTMLInputElement>('k');
  private kValue = el<HTMLSpanElement>('k-value');
  private psiSlider = el<HTMLInputElement>('psi');
  private psiValue = el<HTMLSpanElement>('psi-value');
  private seedInput = el<HTMLInputElement>('seed');
  private modeNoise = el<HTMLInputElement>('mode-noise');
  private modeReference = el<HTMLInputElement>('mode-reference');
  private portraitInput = el<HTMLInputElement>('portrait');
  private referenceInput = el<HTMLInputElement>('reference');
  private referenceStatus = el<HTMLSpanElement>('reference-status');
  private sourceImg = el<HTMLImageElement>('source');
  private resultImg = el<HTMLImageElement>('result');
  private statusLine = el<HTMLParagraphElement>('status');
  private historyStrip = el<HTMLDivElement>('history');
  private galleryGrid = el<HTMLDivElement>('gallery');
  private compareBox = el<HTMLDivElement>('compare');

  constructor(private client: StudioClient) {
    this.scheduler = new MixScheduler((params, signal) => this.client.mix(params, signal));
  }

  async start(): Promise<void> {
    this.styles = await this.client.listStyles();
    for (const s of this.styles) {
      const opt = document.createElement('option');
      opt.value = s.style_id;
      opt.textContent = `${s.style_id} (ψ=${s.truncation_psi})`;
      this.styleSelect.appendChild(opt);
    }
    const first = this.styles[0];
    if (first) this.applyStyle(first);

    this.styleSelect.onchange = () => {
      const style = this.styles.find((s) => s.style_id === this.styleSelect.value);
      if (style) {
        this.applyStyle(style);
        this.render();
      }
    };
    this.kSlider.oninput = () => {
      this.session.setK(Number(this.kSlider.value));
      this.kValue.textContent = String(this.session.k);
      this.render();
    };
    this.psiSlider.oninput = () => {
      this.session.setPsi(Number(this.psiSlider.value));
      this.psiValue.textContent = this.session.psi.toFixed(2);
      this.render();
    };
    this.seedInput.onchange = () => {
      this.session.setSeed(Number(this.seedInput.value));
      this.render();
    };
    this.modeNoise.onchange = () => {
      this.session.setMode('noise');
      this.render();
    };
    this.modeReference.onchange = () => {
      try {
        this.session.setMode('reference');
      } catch (err) {
        this.status(String(err));
        this.modeNoise.checked = true;
        return;
      }
      this.render();
    };
    this.portraitInput.onchange = async () => {
      const file = this.portraitInput.files?.[0];
      if (!file) return;
      const b64 = await b64FromFile(file);
      this.session.setPortrait(b64);
      show(this.sourceImg, b64);
      this.render();
    };
    this.referenceInput.onchange = () => void this.handleReferenceUpload();
    el<HTMLButtonElement>('gallery-btn').onclick = () => void this.showGallery(4);
  }

  private applyStyle(style: StyleInfo): void {
    this.session.setStyle(style);
    this.kSlider.max = String(style.layer_count);
    this.kSlider.value = String(this.session.k);
    this.kValue.textContent = String(this.session.k);
    this.psiSlider.value = String(this.session.psi);
    this.psiValue.textContent = this.session.psi.toFixed(2);
    this.modeReference.disabled = !this.session.referenceId;
    if (this.session.mode === 'noise') this.modeNoise.checked = true;
  }

  // Debounced: rapid slider movement collapses to one request, and a stale
  // in-flight render is abandoned for the newer parameters.
  private render(): void {
    const params = this.session.currentParams();
    if (!params) return;

    const cached = this.session.findInHistory(params);
    if (cached) {
      show(this.resultImg, cached.image_png_b64);
      this.status('from history');
      return;
    }

    this.status('rendering…');
    void this.scheduler.schedule(params).then((outcome) => {
      if (outcome.superseded) return;
      if (outcome.error) {
        const msg =
          outcome.error instanceof ApiError ? outcome.error.detail : outcome.error.message;
        this.status(msg);
        return;
      }
      if (outcome.result) {
        show(this.resultImg, outcome.result.image_png_b64);
        this.addHistory(params, outcome.result.image_png_b64);
        this.status('');
      }
    });
  }

  private async handleReferenceUpload(): Promise<void> {
    const file = this.referenceInput.files?.[0];
    const style = this.session.style;
    if (!file || !style) return;
    const b64 = await b64FromFile(file);
    this.referenceStatus.textContent = 'uploading…';
    try {
      const referenceId = await uploadReference(this.client, style.style_id, b64, {
        onProgress: (job) => {
          this.referenceStatus.textContent = `${job.status} ${(job.progress * 100).toFixed(0)}%`;
        },
      });
      this.session.enableReference(referenceId);
      this.modeReference.disabled = false;
      this.modeReference.checked = true;
      this.referenceStatus.textContent = `ready: ${referenceId}`;
      this.render();
    } catch (err) {
      this.referenceStatus.textContent = String(err);
    }
  }

  private async showGallery(n: number): Promise<void> {
    const params = this.session.currentParams();
    if (!params || params.mode !== 'noise') {
      this.status('gallery needs noise mode and a portrait');
      return;
    }
    this.galleryGrid.replaceChildren();
    const items = await seedGallery(this.client, params, n);
    for (const item of items) {
      const img = document.createElement('img');
      img.title = `seed ${item.seed}`;
      show(img, item.result.image_png_b64);
      img.onclick = () => {
        this.session.setSeed(item.seed);
        this.seedInput.value = String(item.seed);
        this.render();
      };
      this.galleryGrid.appendChild(img);
    }
  }

  private addHistory(params: MixParams, pngB64: string): void {
    const entry = this.session.pushHistory(params, pngB64);
    const img = document.createElement('img');
    img.title = describe(params);
    show(img, pngB64);
    img.onclick = () => this.toggleCompare(entry, img);
    this.historyStrip.appendChild(img);
  }

  // Click two history thumbnails to see them side by side with their diff.
  private toggleCompare(entry: HistoryEntry, img: HTMLImageElement): void {
    const idx = this.selected.indexOf(entry);
    if (idx >= 0) {
      this.selected.splice(idx, 1);
      img.classList.remove('selected');
    } else {
      this.selected.push(entry);
      img.classList.add('selected');
      while (this.selected.length > 2) {
        this.selected.shift();
        this.historyStrip.querySelector('.selected')?.classList.remove('selected');
      }
    }
    if (this.selected.length === 2) {
      const [a, b] = this.selected as [HistoryEntry, HistoryEntry];
      const diffs = compareEntries(a, b)
        .map((d) => `${d.field}: ${String(d.a)} vs ${String(d.b)}`)
        .join(', ');
      this.compareBox.replaceChildren();
      for (const e of [a, b]) {
        const img2 = document.createElement('img');
        show(img2, e.image_png_b64);
        img2.title = describe(e.params);
        this.compareBox.appendChild(img2);
      }
      const label = document.createElement('p');
      label.textContent = diffs || 'identical parameters';
      this.compareBox.appendChild(label);
    }
  }

  private status(text: string): void {
    this.statusLine.textContent = text;
  }
}

function describe(p: MixParams): string {
  const tail = p.mode === 'noise' ? `seed=${p.seed}` : `ref=${p.reference_id}`;
  return `${p.style_id} k=${p.k} ψ=${p.psi.toFixed(2)} ${tail}`;
}

if (typeof document !== 'undefined' && document.getElementById('style')) {
  void new StudioApp(new StudioClient()).start();
}
