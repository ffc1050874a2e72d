export { AnnotatedEntity, AnnotationDoc, EntitySource, serializeDoc, validateDoc } from "./annotation.js";
export { defaultConfig, EMBED_DIM, ExtractorConfig, MAX_ENTITIES, validateConfig } from "./config.js";
export { dedupeEntities, dedupeKey, dedupeTexts } from "./dedupe.js";
export { extractAll, extractPair, ExtractResult, PairInput } from "./extract.js";
export {
  CaptionModel,
  EntityModel,
  loadProviders,
  OfflineCaptionModel,
  OfflineEntityModel,
  OfflineTextEncoder,
  Providers,
  TextEncoder,
} from "./providers.js";
