/**
 * Token vocabulary and sequence-label validation.
 *
 * Raw label tokens are the structure encoding [L, 0, i_1, i_2, ...]: depth,
 * a zero separator, then strictly increasing 1-based positions of set bits in
 * the flattened mask vector. The model vocabulary shifts raw tokens by 3 to
 * make room for PAD/BOS/EOS.
 */

export const PAD = 0;
export const BOS = 1;
export const EOS = 2;
export const SHIFT = 3;

export const RAW_PAD = -1; // padding token in corpus files and text form

export function toModelIds(rawTokens: number[]): number[] {
  return rawTokens.filter((t) => t !== RAW_PAD).map((t) => t + SHIFT);
}

export function fromModelIds(ids: number[]): number[] {
  const out: number[] = [];
  for (const id of ids) {
    if (id === EOS) break;
    if (id === PAD || id === BOS) continue;
    out.push(id - SHIFT);
  }
  return out;
}

/** Layer widths for the canonical replicated layout. */
export function layerWidths(L: number, m: number, d0: number): number[] {
  const widths = [d0];
  for (let l = 1; l < L; l++) widths.push(5 * m);
  widths.push(1);
  return widths;
}

/** Length of the flattened mask vector for (L, m, d0). */
export function maskBitCount(L: number, m: number, d0: number): number {
  const w = layerWidths(L, m, d0);
  let bits = 0;
  for (let l = 0; l < L; l++) bits += w[l + 1] * w[l];
  for (let l = 0; l < L; l++) bits += w[l + 1];
  return bits;
}

/**
 * Check the label invariants for a decoded-raw token sequence; returns null
 * when valid, otherwise the violated rule.
 */
export function validateLabel(raw: number[], m: number, d0: number, lMax: number): string | null {
  if (raw.length < 2) return "label needs at least [L, 0]";
  const L = raw[0];
  if (L < 1) return `depth token must be >= 1, got ${L}`;
  if (L > lMax) return `depth ${L} exceeds lMax ${lMax}`;
  if (raw[1] !== 0) return `second token must be the separator 0, got ${raw[1]}`;
  const nbits = maskBitCount(L, m, d0);
  let prev = 0;
  for (const t of raw.slice(2)) {
    if (t <= prev) return `offsets must be strictly increasing, got ${t} after ${prev}`;
    if (t > nbits) return `offset ${t} exceeds flattened mask length ${nbits}`;
    prev = t;
  }
  return null;
}
