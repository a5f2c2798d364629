/** Client-side mirror of the optimizer's feasibility predicate.
 *
 * Used to re-check suggested counts from completed jobs and to explain
 * infeasible scenarios before submitting them.
 */

import { N_CATEGORIES } from './types';

export interface Constraints {
  baseCounts: number[];
  fixedTotal: boolean;
  fixedIndices: number[];
  deltaBound: number;
}

export interface Verdict {
  ok: boolean;
  violation?: string;
}

export function checkCounts(counts: number[], c: Constraints): Verdict {
  if (counts.length !== N_CATEGORIES) {
    return { ok: false, violation: `expected ${N_CATEGORIES} counts, got ${counts.length}` };
  }
  const fixed = new Set(c.fixedIndices);
  for (let i = 0; i < N_CATEGORIES; i++) {
    const v = counts[i];
    if (!Number.isInteger(v) || v < 0) {
      return { ok: false, violation: `category ${i} is ${v}, not a non-negative integer` };
    }
    if (fixed.has(i)) {
      if (v !== c.baseCounts[i]) {
        return { ok: false, violation: `fixed category ${i} changed from ${c.baseCounts[i]} to ${v}` };
      }
      continue;
    }
    const lo = Math.max(0, c.baseCounts[i] - c.deltaBound);
    const hi = c.baseCounts[i] + c.deltaBound;
    if (v < lo || v > hi) {
      return { ok: false, violation: `category ${i} = ${v} outside [${lo}, ${hi}]` };
    }
  }
  if (c.fixedTotal) {
    const base = c.baseCounts.reduce((a, b) => a + b, 0);
    const total = counts.reduce((a, b) => a + b, 0);
    if (total !== base) {
      return { ok: false, violation: `total ${total} differs from base total ${base}` };
    }
  }
  return { ok: true };
}

/** Edit-form validity: counts must be non-negative integers, not all zero. */
export function editableCounts(counts: number[]): Verdict {
  if (counts.length !== N_CATEGORIES) {
    return { ok: false, violation: 'wrong length' };
  }
  if (counts.some((v) => !Number.isInteger(v) || v < 0)) {
    return { ok: false, violation: 'counts must be non-negative integers' };
  }
  if (counts.every((v) => v === 0)) {
    return { ok: false, violation: 'at least one category must be non-zero' };
  }
  return { ok: true };
}
