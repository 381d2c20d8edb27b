export type StepName =
  | 'Created'
  | 'ArtifactsUploaded'
  | 'Configured'
  | 'Answering'
  | 'Summarized';

export type VerdictKind =
  | 'AllPassed'
  | 'WrongAnswer'
  | 'TimeLimitExceeded'
  | 'RuntimeError'
  | 'CompileError';

export const FAILURE_VERDICTS: VerdictKind[] = [
  'WrongAnswer',
  'TimeLimitExceeded',
  'RuntimeError',
  'CompileError',
];

export interface QuestionView {
  id: string;
  statement: string;
}

export interface EvaluationView {
  question_id: string;
  score: number;
  hint: string;
}

/** Student-view session payload: statements, scores, and hints only. */
export interface QuestionsPayload {
  session_id: string;
  step: StepName;
  scenario: string;
  questions: QuestionView[];
  answered: Record<string, EvaluationView>;
  drafts: Record<string, string>;
}

export interface SummaryRow {
  question_title: string;
  score: number;
  feedback: string;
}

export interface SummaryPayload {
  rows: SummaryRow[];
  html: string;
  session_id: string;
}

export interface SessionStatePayload {
  session_id: string;
  step: StepName;
  answered_count: number;
  questions?: QuestionsPayload;
  has_summary?: boolean;
}

/** Server-enforced bound, mirrored client-side for the live counter. */
export const ANSWER_MAX_CHARS = 8192;
