// End-to-end round trip against a real served workspace. Builds a tiny
// 16x16 model with the CLI, starts `facestyle serve`, and drives it through
// the same client/scheduler stack the page uses. Slow; `npm run test:unit`
// skips this file.
import { type ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, readFileSync, readdirSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { StudioClient } from '../src/api.js';
import { MixScheduler } from '../src/scheduler.js';
import { uploadReference } from '../src/reference.js';
import type { MixParams, StyleInfo } from '../src/types.js';

const OVERRIDES = {
  generator: { resolution: 16, latent_dim: 64, channel_base: 32, mapping_layers: 2 },
  pretrain: { iterations: 20, batch_size: 8 },
  encoders: { steps: 30, batch_size: 4 },
  finetune: { iterations: 10, batch_size: 2 },
  service: { reference_iterations: 8, reference_k: 8 },
};

const PORT = 8700 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;

let root: string;
let wsDir: string;
let cfgPath: string;
let server: ChildProcess | null = null;
let portraitB64: string;
let styleExemplarB64: string;
const client = new StudioClient(BASE);

function cli(...argv: string[]): void {
  execFileSync('facestyle', [...argv, '--workspace', wsDir, '--config', cfgPath], {
    stdio: 'pipe',
  });
}

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const res = await fetch(`${BASE}/api/styles`);
      if (res.ok) return;
    } catch {
      // not listening yet
    }
    if (Date.now() > deadline) throw new Error(`server not up after ${timeoutMs}ms`);
    await new Promise((r) => setTimeout(r, 300));
  }
}

beforeAll(async () => {
  root = mkdtempSync(join(tmpdir(), 'studio-e2e-'));
  wsDir = join(root, 'ws');
  cfgPath = join(root, 'overrides.json');
  writeFileSync(cfgPath, JSON.stringify(OVERRIDES));

  cli('make-toy-data', '--content-count', '16', '--style-count', '6', '--styles', 'cartoon');
  cli('pretrain');
  cli('train-encoders');
  // lambdas 0 = plain adversarial fine-tune; no pair dataset needed for serving
  cli('finetune', '--style', 'cartoon', '--lambda-semantic', '0', '--lambda-paired', '0');

  const contentDir = join(wsDir, 'data', 'content');
  const first = readdirSync(contentDir).filter((f) => f.endsWith('.png')).sort()[0]!;
  portraitB64 = readFileSync(join(contentDir, first)).toString('base64');
  // the CLI mix comparison needs the same portrait as a file
  writeFileSync(join(root, 'portrait.png'), Buffer.from(portraitB64, 'base64'));
  const styleDir = join(wsDir, 'data', 'styles', 'cartoon');
  const exemplar = readdirSync(styleDir).filter((f) => f.endsWith('.png')).sort()[0]!;
  styleExemplarB64 = readFileSync(join(styleDir, exemplar)).toString('base64');

  server = spawn(
    'facestyle',
    ['serve', '--workspace', wsDir, '--config', cfgPath, '--host', '127.0.0.1',
     '--port', String(PORT)],
    { stdio: ['ignore', 'pipe', 'pipe'] },
  );
  await waitForServer(120_000);
}, 600_000);

afterAll(() => {
  server?.kill();
  if (root) rmSync(root, { recursive: true, force: true });
});

describe('studio round trip', () => {
  let style: StyleInfo;

  it('lists the served style with its policy', async () => {
    const styles = await client.listStyles();
    expect(styles.map((s) => s.style_id)).toEqual(['cartoon']);
    style = styles[0]!;
    expect(style.layer_count).toBeGreaterThan(0);
    expect(style.default_mix_indices.length).toBe(3);
  });

  it(
    'debounced slider drag sends one mix request whose bytes match the CLI',
    async () => {
      let sent = 0;
      const sched = new MixScheduler((p, signal) => {
        sent += 1;
        return client.mix(p, signal);
      }, 250);

      const k = style.default_mix_indices[1]!;
      const drag = (kk: number): MixParams => ({
        style_id: 'cartoon',
        image_png_b64: portraitB64,
        mode: 'noise',
        k: kk,
        psi: 0.7,
        seed: 11,
      });
      // a drag across k values; only the final position may reach the wire
      const outcomes = [0, 1, 2, k].map((kk) => sched.schedule(drag(kk)));
      const settled = await Promise.all(outcomes);
      expect(sent).toBe(1);
      expect(settled.slice(0, -1).every((o) => o.superseded)).toBe(true);
      const final = settled[settled.length - 1]!;
      expect(final.error).toBeUndefined();
      const apiBytes = Buffer.from(final.result!.image_png_b64, 'base64');

      const outPath = join(root, 'cli_mix.png');
      cli(
        'mix', '--style', 'cartoon', '--input', join(root, 'portrait.png'),
        '--output', outPath, '--k', String(k), '--psi', '0.7', '--seed', '11',
      );
      const cliBytes = readFileSync(outPath);
      expect(apiBytes.equals(cliBytes)).toBe(true);
    },
    300_000,
  );

  it(
    'reference upload reaches done through job polling and mixes',
    async () => {
      const statuses: string[] = [];
      const refId = await uploadReference(client, 'cartoon', styleExemplarB64, {
        pollMs: 200,
        onProgress: (j) => statuses.push(j.status),
      });
      expect(refId).toBeTruthy();
      expect(statuses[statuses.length - 1]).toBe('done');

      const result = await client.mix({
        style_id: 'cartoon',
        image_png_b64: portraitB64,
        mode: 'reference',
        k: style.default_mix_indices[1]!,
        psi: 0.7,
        reference_id: refId,
      });
      expect(result.image_png_b64.length).toBeGreaterThan(0);
    },
    300_000,
  );
});
