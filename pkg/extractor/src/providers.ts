/**
 * Model providers.  The bundled "offline" implementations are fully
 * deterministic stand-ins for the usual pretrained stack: captions are
 * derived from the image bytes, entities from the caption text, and
 * embeddings from the entity text, so the same inputs always produce
 * byte-identical annotation files and the tests need no model downloads.
 */

export interface CaptionModel {
  caption(imageBytes: Uint8Array, modality: "ir" | "vi"): string;
}

export interface EntityModel {
  entities(caption: string): string[];
}

export interface TextEncoder {
  encode(text: string): number[];
}

import { EMBED_DIM } from "./config.js";

// FNV-1a, the seed everything deterministic grows from
export function hashBytes(bytes: Uint8Array, seed = 0x811c9dc5): number {
  let h = seed >>> 0;
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i];
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export function hashText(text: string, seed?: number): number {
  return hashBytes(Buffer.from(text, "utf8"), seed);
}

function splitmix32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x9e3779b9) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad);
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97);
    z ^= z >>> 15;
    return (z >>> 0) / 4294967296;
  };
}

const SCENE_NOUNS = [
  "person",
  "car",
  "bus",
  "truck",
  "motorcycle",
  "bicycle",
  "lamp",
  "building",
  "tree",
  "road",
  "fence",
  "sign",
  "street lamp",
  "traffic light",
  "bridge",
  "wall",
];

const IR_TEMPLATES = [
  "a thermal image showing NOUNS at night",
  "an infrared view of NOUNS",
  "a heat signature scene with NOUNS",
];

const VI_TEMPLATES = [
  "a photo of NOUNS on a street",
  "a daylight scene containing NOUNS",
  "an outdoor picture with NOUNS",
];

function pickNouns(rand: () => number, count: number): string[] {
  const pool = [...SCENE_NOUNS];
  const picked: string[] = [];
  for (let i = 0; i < count && pool.length > 0; i++) {
    const idx = Math.floor(rand() * pool.length);
    picked.push(pool.splice(idx, 1)[0]);
  }
  return picked;
}

export class OfflineCaptionModel implements CaptionModel {
  caption(imageBytes: Uint8Array, modality: "ir" | "vi"): string {
    const seed = hashBytes(imageBytes, modality === "ir" ? 0x811c9dc5 : 0x01000193);
    const rand = splitmix32(seed);
    const templates = modality === "ir" ? IR_TEMPLATES : VI_TEMPLATES;
    const template = templates[Math.floor(rand() * templates.length)];
    const nouns = pickNouns(rand, 2 + Math.floor(rand() * 3));
    const listed =
      nouns.length === 1
        ? `a ${nouns[0]}`
        : `a ${nouns.slice(0, -1).join(", a ")} and a ${nouns[nouns.length - 1]}`;
    return template.replace("NOUNS", listed);
  }
}

export class OfflineEntityModel implements EntityModel {
  // longest phrases first so "street lamp" is not shadowed by "lamp"
  private readonly lexicon = [...SCENE_NOUNS].sort((a, b) => b.length - a.length);

  entities(caption: string): string[] {
    const found: { index: number; text: string }[] = [];
    const lower = caption.toLowerCase();
    const claimed = new Array<boolean>(lower.length).fill(false);
    for (const phrase of this.lexicon) {
      let from = 0;
      for (;;) {
        const at = lower.indexOf(phrase, from);
        if (at < 0) break;
        from = at + 1;
        const before = at === 0 ? " " : lower[at - 1];
        const after = at + phrase.length >= lower.length ? " " : lower[at + phrase.length];
        if (/[a-z]/.test(before) || /[a-z]/.test(after)) continue;
        if (claimed.slice(at, at + phrase.length).some(Boolean)) continue;
        claimed.fill(true, at, at + phrase.length);
        found.push({ index: at, text: caption.slice(at, at + phrase.length) });
      }
    }
    return found.sort((a, b) => a.index - b.index).map((f) => f.text);
  }
}

export class OfflineTextEncoder implements TextEncoder {
  encode(text: string): number[] {
    const rand = splitmix32(hashText(text.trim().toLowerCase()));
    const vec: number[] = new Array(EMBED_DIM);
    let normSq = 0;
    for (let i = 0; i < EMBED_DIM; i++) {
      // Box-Muller; two uniforms per normal draw keeps the stream simple
      const u = Math.max(rand(), 1e-12);
      const v = rand();
      const n = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
      vec[i] = n;
      normSq += n * n;
    }
    const scale = 3 / Math.sqrt(normSq);
    return vec.map((x) => Number((x * scale).toFixed(6)));
  }
}

export type Providers = {
  caption: CaptionModel;
  entity: EntityModel;
  encoder: TextEncoder;
};

export function loadProviders(config: {
  captionModel: string;
  entityModel: string;
  textEncoder: string;
}): Providers {
  for (const [kind, id] of [
    ["caption model", config.captionModel],
    ["entity model", config.entityModel],
    ["text encoder", config.textEncoder],
  ] as const) {
    if (id !== "offline") {
      throw new Error(`cannot load ${kind} "${id}": only "offline" is bundled`);
    }
  }
  return {
    caption: new OfflineCaptionModel(),
    entity: new OfflineEntityModel(),
    encoder: new OfflineTextEncoder(),
  };
}
