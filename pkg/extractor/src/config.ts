export type ExtractorConfig = {
  /** Caption model id; "offline" is the only bundled implementation. */
  captionModel: string;
  /** Entity extraction model id. */
  entityModel: string;
  /** Text encoder id; must produce 768-dimensional vectors. */
  textEncoder: string;
  /** Execution device hint; the offline models ignore it. */
  device: string;
  /** Pairs processed per batch. */
  batchSize: number;
  /** Directory annotation files are written into. */
  outputDir: string;
};

export const EMBED_DIM = 768;

/** Most entities a single annotation may carry. */
export const MAX_ENTITIES = 8;

export function defaultConfig(outputDir: string): ExtractorConfig {
  return {
    captionModel: "offline",
    entityModel: "offline",
    textEncoder: "offline",
    device: "cpu",
    batchSize: 4,
    outputDir,
  };
}

export function validateConfig(config: ExtractorConfig): void {
  if (!config.outputDir) {
    throw new Error("outputDir must be set");
  }
  if (!Number.isInteger(config.batchSize) || config.batchSize < 1) {
    throw new Error(`batchSize must be a positive integer, got ${config.batchSize}`);
  }
}
