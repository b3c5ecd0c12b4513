// Wire types mirroring the gateway's JSON exactly.

export type Phase =
  | 'definition'
  | 'generation'
  | 'assessment'
  | 'divergence'
  | 'refinement'
  | 'conceptualization'
  | 'done';

export const PHASE_ORDER: Phase[] = [
  'definition',
  'generation',
  'assessment',
  'divergence',
  'refinement',
  'conceptualization',
  'done',
];

export type IdeaStatus = 'raw' | 'shortlisted' | 'globally_novel' | 'curated' | 'removed';

export type Provenance = 'human' | 'ai_formulator' | 'ai_explorer' | 'navigator_synthesized';

export interface SessionSummary {
  id: string;
  phase: Phase;
  round: number;
  phase_failed: boolean;
  gate_waiting: boolean;
  funnel: Record<string, number>;
  events: number;
}

export interface StatusRecord {
  phase: string;
  status: string;
  reason: string;
  actor: string;
  event_index: number;
}

export interface Idea {
  id: string;
  title: string;
  action: string;
  object: string;
  context: string;
  provenance: Provenance;
  origin_phase: string;
  status: IdeaStatus;
  status_history: StatusRecord[];
}

export interface SessionDoc {
  id: string;
  phase: Phase;
  round: number;
  vaults: { idea_vault: Idea[]; concept_vault?: Concept[] };
}

export interface Concept {
  id: string;
  idea_id: string;
  principle: string;
  features: string[];
  implementation: string[];
  characteristics: string[];
  rendering_ref: string | null;
  archived?: boolean;
}

export interface Report {
  schema_version: number;
  session_id: string;
  phase: Phase;
  round: number;
  funnel: Record<string, number>;
  diversity: {
    idea_sparsity: number;
    cluster_sparsity: number;
    noise_fraction: number;
  } | null;
  curated: Array<{
    id: string;
    title: string;
    action: string;
    object: string;
    context: string;
    provenance: Provenance;
  }>;
  concepts: Concept[];
  events: number;
}

export interface PlotPoint {
  id: string;
  x: number;
  y: number;
  label: number; // -1 = noise
  provenance: Provenance;
  title: string;
  action: string;
  object: string;
  context: string;
}

export interface PlotData {
  points: PlotPoint[];
  eps: number;
  min_pts: number;
  n_clusters: number;
  report: { idea_sparsity: number; cluster_sparsity: number; noise_fraction: number } | null;
}

export interface SessionEvent {
  index: number;
  kind: string;
  actor: string;
  payload: Record<string, unknown>;
}

export interface OverrideRequest {
  kind: 'add_idea' | 'remove_idea' | 'restore_idea';
  idea_id?: string;
  title?: string;
  action?: string;
  object?: string;
  context?: string;
  reason?: string;
}
