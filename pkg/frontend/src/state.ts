/** Scenario state: the selected baseline, the edited counts, and predictions. */

import type { Prediction } from './types';
import { N_CATEGORIES } from './types';
import { editableCounts } from './constraints';

export interface ScenarioState {
  sampleId: string | null;
  baseline: number[];
  edited: number[];
  basePrediction: Prediction | null;
  editedPrediction: Prediction | null;
  jobId: string | null;
}

export function initialState(): ScenarioState {
  return {
    sampleId: null,
    baseline: new Array(N_CATEGORIES).fill(0),
    edited: new Array(N_CATEGORIES).fill(0),
    basePrediction: null,
    editedPrediction: null,
    jobId: null,
  };
}

export function selectBaseline(state: ScenarioState, sampleId: string | null,
                               counts: number[]): ScenarioState {
  return {
    ...state,
    sampleId,
    baseline: [...counts],
    edited: [...counts],
    basePrediction: null,
    editedPrediction: null,
  };
}

export function editCount(state: ScenarioState, index: number, value: number): ScenarioState {
  const edited = [...state.edited];
  edited[index] = value;
  return { ...state, edited };
}

export function clearEdits(state: ScenarioState): ScenarioState {
  return { ...state, edited: [...state.baseline], editedPrediction: state.basePrediction };
}

/** All categories equal, preserving the baseline total (remainder from index 0). */
export function equalize(state: ScenarioState): ScenarioState {
  const total = state.baseline.reduce((a, b) => a + b, 0);
  const q = Math.floor(total / N_CATEGORIES);
  const r = total - q * N_CATEGORIES;
  const edited = new Array(N_CATEGORIES).fill(q).map((v: number, i: number) =>
    i < r ? v + 1 : v);
  return { ...state, edited };
}

export function hasEdits(state: ScenarioState): boolean {
  return state.edited.some((v, i) => v !== state.baseline[i]);
}

export function canSubmit(state: ScenarioState): boolean {
  return editableCounts(state.edited).ok;
}
