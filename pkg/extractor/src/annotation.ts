/**
 * Annotation documents, the only interface between this extractor and the
 * fusion pipeline.  A document is JSON:
 *
 *   {"image_id": "pair0",
 *    "entities": [{"text": "car", "source": "ir", "embedding": [768 floats]}]}
 *
 * Embeddings are always written inline.  Keys are emitted in sorted order
 * with two-space indent and a trailing newline so repeated runs produce
 * byte-identical files.
 */

import { EMBED_DIM } from "./config.js";

export type EntitySource = "ir" | "vi";

export type AnnotatedEntity = {
  text: string;
  source: EntitySource;
  embedding: number[];
};

export type AnnotationDoc = {
  imageId: string;
  entities: AnnotatedEntity[];
};

export function validateDoc(doc: AnnotationDoc): void {
  if (doc.imageId.trim() === "") {
    throw new Error("annotation needs a non-empty image id");
  }
  doc.entities.forEach((e, i) => {
    if (e.text.trim() === "") {
      throw new Error(`entities[${i}]: empty text`);
    }
    if (e.source !== "ir" && e.source !== "vi") {
      throw new Error(`entities[${i}]: source must be "ir" or "vi"`);
    }
    if (e.embedding.length !== EMBED_DIM) {
      throw new Error(
        `entities[${i}]: embedding has ${e.embedding.length} values, expected ${EMBED_DIM}`
      );
    }
    if (!e.embedding.every(Number.isFinite)) {
      throw new Error(`entities[${i}]: embedding has non-finite values`);
    }
  });
}

export function serializeDoc(doc: AnnotationDoc): string {
  validateDoc(doc);
  // insertion order is emission order, so build keys alphabetically
  const out = {
    entities: doc.entities.map((e) => ({
      embedding: e.embedding,
      source: e.source,
      text: e.text,
    })),
    image_id: doc.imageId,
  };
  return JSON.stringify(out, null, 2) + "\n";
}
