/**
 * Entity deduplication, shared contract with the fusion package: the key
 * is the trimmed, lowercased text (simple Unicode lowercasing, not
 * casefolding, so "Straße" and "STRASSE" stay distinct), the first
 * occurrence wins, and input order is preserved.  The conformance
 * vectors under tests/fixtures pin both implementations to the same
 * behavior.
 */

export function dedupeKey(text: string): string {
  return text.trim().toLowerCase();
}

export function dedupeTexts(texts: string[]): string[] {
  const seen = new Set<string>();
  const out: string[] = [];
  for (const text of texts) {
    const key = dedupeKey(text);
    if (!seen.has(key)) {
      seen.add(key);
      out.push(text.trim());
    }
  }
  return out;
}

export type DedupableEntity = { text: string; source: string };

export function dedupeEntities<T extends DedupableEntity>(entities: T[]): T[] {
  const seen = new Set<string>();
  const out: T[] = [];
  for (const entity of entities) {
    const key = dedupeKey(entity.text);
    if (!seen.has(key)) {
      seen.add(key);
      out.push(entity);
    }
  }
  return out;
}
