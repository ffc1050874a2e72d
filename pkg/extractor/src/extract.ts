/**
 * The extraction pipeline: caption both modalities independently, pull
 * entity phrases out of each caption, merge and dedupe, then encode the
 * survivors.  One annotation JSON file per image pair.
 */

import { mkdir, readFile, writeFile } from "node:fs/promises";
import { join } from "node:path";

import { AnnotatedEntity, AnnotationDoc, EntitySource, serializeDoc } from "./annotation.js";
import { ExtractorConfig, MAX_ENTITIES, validateConfig } from "./config.js";
import { dedupeEntities } from "./dedupe.js";
import { loadProviders, Providers } from "./providers.js";

export type PairInput = {
  /** Identifier for the pair; becomes the annotation image_id and file name. */
  id: string;
  irPath: string;
  viPath: string;
};

export type ExtractResult = {
  doc: AnnotationDoc;
  irCaption: string;
  viCaption: string;
};

export async function extractPair(pair: PairInput, providers: Providers): Promise<ExtractResult> {
  const [irBytes, viBytes] = await Promise.all([readFile(pair.irPath), readFile(pair.viPath)]);
  const irCaption = providers.caption.caption(irBytes, "ir");
  const viCaption = providers.caption.caption(viBytes, "vi");

  // ir first so a phrase seen in both captions is credited to ir
  const merged: { text: string; source: EntitySource }[] = [];
  for (const [caption, source] of [
    [irCaption, "ir"],
    [viCaption, "vi"],
  ] as const) {
    for (const text of providers.entity.entities(caption)) {
      const trimmed = text.trim();
      if (trimmed !== "") merged.push({ text: trimmed, source });
    }
  }

  let kept = dedupeEntities(merged).slice(0, MAX_ENTITIES);
  if (kept.length === 0) {
    console.warn(`${pair.id}: no entities survived dedupe, falling back to "scene"`);
    kept = [{ text: "scene", source: "vi" }];
  }

  const entities: AnnotatedEntity[] = kept.map((e) => ({
    text: e.text,
    source: e.source,
    embedding: providers.encoder.encode(e.text),
  }));
  return { doc: { imageId: pair.id, entities }, irCaption, viCaption };
}

/** Run the pipeline over all pairs and write one JSON file per pair. */
export async function extractAll(
  pairs: PairInput[],
  config: ExtractorConfig,
  providers?: Providers
): Promise<string[]> {
  validateConfig(config);
  const loaded = providers ?? loadProviders(config);
  await mkdir(config.outputDir, { recursive: true });

  const written: string[] = [];
  for (let start = 0; start < pairs.length; start += config.batchSize) {
    const batch = pairs.slice(start, start + config.batchSize);
    const results = await Promise.all(batch.map((pair) => extractPair(pair, loaded)));
    for (let i = 0; i < batch.length; i++) {
      const path = join(config.outputDir, `${batch[i].id}.json`);
      await writeFile(path, serializeDoc(results[i].doc), "utf-8");
      written.push(path);
    }
  }
  return written;
}
