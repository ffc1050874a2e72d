#!/usr/bin/env node
/**
 * Command line entry point.
 *
 * Exit codes: 0 success, 1 usage error, 2 data error (unreadable inputs,
 * unknown model ids, bad manifest).
 */

import { readFile } from "node:fs/promises";
import { basename, dirname, extname, join, resolve } from "node:path";
import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { defaultConfig, ExtractorConfig } from "./config.js";
import { extractAll, PairInput } from "./extract.js";

const USAGE = `usage: entity-extractor --out DIR (--manifest FILE | --ir FILE --vi FILE [--id NAME])
                        [--caption-model ID] [--entity-model ID] [--text-encoder ID]
                        [--device NAME] [--batch N]

Captions each image pair, extracts and dedupes entity phrases, encodes
them, and writes one annotation JSON file per pair under --out.`;

class UsageError extends Error {}
class DataError extends Error {}

export function pairId(irPath: string): string {
  const stem = basename(irPath, extname(irPath));
  return stem.endsWith("_ir") ? stem.slice(0, -3) : stem;
}

/** Read an image-pair manifest; entry paths are relative to the manifest. */
export async function pairsFromManifest(manifestPath: string): Promise<PairInput[]> {
  let doc: unknown;
  try {
    doc = JSON.parse(await readFile(manifestPath, "utf-8"));
  } catch (err) {
    throw new DataError(`cannot read manifest ${manifestPath}: ${(err as Error).message}`);
  }
  const entries = (doc as { entries?: unknown }).entries;
  if (!Array.isArray(entries)) {
    throw new DataError(`${manifestPath}: manifest needs an "entries" list`);
  }
  const base = dirname(resolve(manifestPath));
  return entries.map((entry, i) => {
    const e = entry as { ir_path?: unknown; vi_path?: unknown };
    if (typeof e.ir_path !== "string" || typeof e.vi_path !== "string") {
      throw new DataError(`${manifestPath}: entries[${i}] needs ir_path and vi_path strings`);
    }
    const irPath = join(base, e.ir_path);
    return { id: pairId(irPath), irPath, viPath: join(base, e.vi_path) };
  });
}

function parse(argv: string[]) {
  try {
    return parseArgs({
      args: argv,
      allowPositionals: false,
      options: {
        manifest: { type: "string" },
        ir: { type: "string" },
        vi: { type: "string" },
        id: { type: "string" },
        out: { type: "string" },
        "caption-model": { type: "string" },
        "entity-model": { type: "string" },
        "text-encoder": { type: "string" },
        device: { type: "string" },
        batch: { type: "string" },
        help: { type: "boolean", short: "h" },
      },
    }).values;
  } catch (err) {
    throw new UsageError((err as Error).message);
  }
}

export async function main(argv: string[]): Promise<number> {
  let values: ReturnType<typeof parse>;
  try {
    values = parse(argv);
  } catch (err) {
    console.error(String((err as Error).message));
    console.error(USAGE);
    return 1;
  }
  if (values.help) {
    console.log(USAGE);
    return 0;
  }

  try {
    if (!values.out) throw new UsageError("--out is required");
    const singleMode = values.ir !== undefined || values.vi !== undefined;
    if (singleMode === (values.manifest !== undefined)) {
      throw new UsageError("give either --manifest or an --ir/--vi pair");
    }
    if (singleMode && (!values.ir || !values.vi)) {
      throw new UsageError("--ir and --vi must be given together");
    }

    const config: ExtractorConfig = {
      ...defaultConfig(values.out),
      ...(values["caption-model"] !== undefined && { captionModel: values["caption-model"] }),
      ...(values["entity-model"] !== undefined && { entityModel: values["entity-model"] }),
      ...(values["text-encoder"] !== undefined && { textEncoder: values["text-encoder"] }),
      ...(values.device !== undefined && { device: values.device }),
    };
    if (values.batch !== undefined) {
      const n = Number(values.batch);
      if (!Number.isInteger(n) || n < 1) throw new UsageError("--batch must be a positive integer");
      config.batchSize = n;
    }

    const pairs = values.manifest
      ? await pairsFromManifest(values.manifest)
      : [{ id: values.id ?? pairId(values.ir!), irPath: values.ir!, viPath: values.vi! }];

    const written = await extractAll(pairs, config);
    console.log(`wrote ${written.length} annotation file(s) to ${config.outputDir}`);
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(String(err.message));
      console.error(USAGE);
      return 1;
    }
    console.error(String((err as Error).message));
    return 2;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(resolve(process.argv[1])).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
