import type { StepName } from './types';

export type View = 'landing' | 'upload' | 'verdict' | 'answering' | 'summary';

/** The one view that matches each persisted workflow step. */
export const VIEW_FOR_STEP: Record<StepName, View> = {
  Created: 'upload',
  ArtifactsUploaded: 'verdict',
  Configured: 'verdict', // package generation failed; re-declare to retry
  Answering: 'answering',
  Summarized: 'summary',
};

export type GuardResult = { allowed: true } | { redirect: View };

/**
 * Deep links never outrun (or lag) the server: any view other than the
 * one matching the persisted step redirects to the correct view.
 */
export function flowGuard(step: StepName, requested: View): GuardResult {
  const target = VIEW_FOR_STEP[step];
  return requested === target ? { allowed: true } : { redirect: target };
}
