/**
 * Pure view-state for the probe page.
 *
 * The state machine enforces the probe protocol client-side: at most one
 * masked token at a time, predictions only after a mask, verdicts only
 * with predictions on screen, and no double submits. Every transition is
 * a pure function so the protocol is unit-testable without a DOM or a
 * server, and all values shown to the person (especially the tally) come
 * verbatim from service responses.
 */

import type {
  ClaimDetail,
  MaskResult,
  Prediction,
  SessionTally,
  VerdictResult,
} from "./api.js";

/** Human-baseline accuracy shown as a reference line next to the tally. */
export const REFERENCE_ACCURACY = 0.55;

export const EMPTY_TALLY: SessionTally = {
  verdict_count: 0,
  gold_labeled_count: 0,
  correct_count: 0,
  accuracy: 0,
};

export interface ProbeViewState {
  sessionId: string | null;
  claim: ClaimDetail | null;
  /** Index into claim.tokens of the single selected mask, or null. */
  selectedTokenIndex: number | null;
  maskedPreview: string | null;
  /** null = nothing fetched yet; [] = backend had no predictions. */
  predictions: Prediction[] | null;
  submitting: boolean;
  tally: SessionTally;
  lastVerdict: VerdictResult | null;
  error: string | null;
}

export function initialState(): ProbeViewState {
  return {
    sessionId: null,
    claim: null,
    selectedTokenIndex: null,
    maskedPreview: null,
    predictions: null,
    submitting: false,
    tally: EMPTY_TALLY,
    lastVerdict: null,
    error: null,
  };
}

export function sessionStarted(
  state: ProbeViewState,
  sessionId: string,
): ProbeViewState {
  return { ...state, sessionId };
}

/** Loading a claim resets all per-claim probe state; the tally persists. */
export function claimLoaded(
  state: ProbeViewState,
  claim: ClaimDetail,
): ProbeViewState {
  return {
    ...state,
    claim,
    selectedTokenIndex: null,
    maskedPreview: null,
    predictions: null,
    submitting: false,
    error: null,
  };
}

export function canSelectMask(state: ProbeViewState): boolean {
  return state.claim !== null && !state.submitting;
}

/**
 * A confirmed mask from the service. Re-masking moves the selection (the
 * single-mask invariant) and clears any predictions for the old mask.
 */
export function maskApplied(
  state: ProbeViewState,
  tokenIndex: number,
  result: MaskResult,
): ProbeViewState {
  if (state.claim === null || result.claim_id !== state.claim.id) {
    return state;
  }
  return {
    ...state,
    selectedTokenIndex: tokenIndex,
    maskedPreview: result.masked_text,
    predictions: null,
    error: null,
  };
}

export function canFetchPredictions(state: ProbeViewState): boolean {
  return state.maskedPreview !== null && !state.submitting;
}

export function predictionsReceived(
  state: ProbeViewState,
  predictions: Prediction[],
): ProbeViewState {
  return { ...state, predictions, error: null };
}

export function canSubmitVerdict(state: ProbeViewState): boolean {
  return (
    state.sessionId !== null &&
    state.claim !== null &&
    state.predictions !== null &&
    !state.submitting
  );
}

/** Marks a verdict in flight; blocks re-submission until a response lands. */
export function verdictPending(state: ProbeViewState): ProbeViewState {
  return { ...state, submitting: true };
}

/**
 * A server-confirmed verdict. The tally is copied from the response, never
 * computed locally, so it cannot diverge from the service's ProbeSession.
 */
export function verdictAccepted(
  state: ProbeViewState,
  result: VerdictResult,
): ProbeViewState {
  return {
    ...state,
    submitting: false,
    lastVerdict: result,
    tally: {
      verdict_count: result.verdict_count,
      gold_labeled_count: result.gold_labeled_count,
      correct_count: result.correct_count,
      accuracy: result.accuracy,
    },
  };
}

export function errorOccurred(
  state: ProbeViewState,
  message: string,
): ProbeViewState {
  return { ...state, submitting: false, error: message };
}

export function errorCleared(state: ProbeViewState): ProbeViewState {
  return { ...state, error: null };
}

/** True when the token at this index is the current mask selection. */
export function isSelected(state: ProbeViewState, tokenIndex: number): boolean {
  return state.selectedTokenIndex === tokenIndex;
}

export function selectedCount(state: ProbeViewState): number {
  return state.selectedTokenIndex === null ? 0 : 1;
}

/** Formats the tally against the reference line for display. */
export function tallyLine(state: ProbeViewState): string {
  const t = state.tally;
  if (t.gold_labeled_count === 0) {
    return `no scored verdicts yet (reference ${REFERENCE_ACCURACY.toFixed(2)})`;
  }
  return (
    `${t.correct_count}/${t.gold_labeled_count} correct = ` +
    `${t.accuracy.toFixed(2)} (reference ${REFERENCE_ACCURACY.toFixed(2)})`
  );
}
