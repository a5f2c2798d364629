/** Wire types of the demand service HTTP API. */

export const N_CATEGORIES = 16;
export const N_HOURS = 24;

export const CATEGORY_NAMES = [
  'automobile & motorcycle',
  'food & beverages',
  'shopping',
  'daily life service',
  'sports & recreation',
  'medical & health care',
  'accommodation',
  'tourist attraction',
  'residential area',
  'enterprise',
  'government & social groups',
  'science & education',
  'traffic hinge',
  'transit network',
  'finance & insurance',
  'public facility',
] as const;

export interface Prediction {
  total_vht: number;
  hourly_vht: number[];
  proportions: number[];
}

export interface SamplePayload {
  sample_id: string;
  lon: number;
  lat: number;
  counts: number[];
  density_norm: number;
  proportions: number[];
  total_norm: number;
  hourly: number[];
  total_vht: number;
}

export interface Preset {
  id: string;
  name: string;
  lon: number;
  lat: number;
}

export interface DatasetSummary {
  sample_count: number;
  bbox: { min: { lon: number; lat: number }; max: { lon: number; lat: number } };
  norm_info: { density_max: number; vht_max: number; days: number };
  per_category_totals: number[];
  presets: Preset[];
  sample_ids: string[];
}

export interface Scenario {
  base_counts: number[];
  fixed_total?: boolean;
  fixed_indices?: number[];
  delta_bound?: number;
  objective?: { kind: string; weights?: number[] };
  ga?: {
    population?: number;
    generations?: number;
    tournament_k?: number;
    crossover_rate?: number;
    mutation_rate?: number;
    elitism?: number;
    seed?: number;
  };
  grouped?: boolean | { mapping: number[][] };
}

export interface OptimizeResult {
  best_counts: number[];
  base_counts: number[];
  base_fitness: number;
  best_fitness: number;
  history: number[];
  base_prediction: Prediction;
  best_prediction: Prediction;
}

export type JobStatus = 'queued' | 'running' | 'done' | 'failed';

export interface JobPayload {
  id: string;
  status: JobStatus;
  result: OptimizeResult | null;
  error: string | null;
}
