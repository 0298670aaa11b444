/**
 * DOM wiring for the probe page. All probe state lives in a single
 * ProbeViewState re-rendered after every server-confirmed change; there
 * are no optimistic updates and no verification logic here.
 */

import { ApiError, ProbeApi } from "./api.js";
import type { ClaimSummary, VerdictLabel } from "./api.js";
import {
  REFERENCE_ACCURACY,
  canFetchPredictions,
  canSelectMask,
  canSubmitVerdict,
  claimLoaded,
  errorOccurred,
  initialState,
  isSelected,
  maskApplied,
  predictionsReceived,
  sessionStarted,
  tallyLine,
  verdictAccepted,
  verdictPending,
  type ProbeViewState,
} from "./state.js";

const VERDICT_LABELS: VerdictLabel[] = [
  "SUPPORTS",
  "REFUTES",
  "NOT ENOUGH INFO",
];

let state: ProbeViewState = initialState();
let api: ProbeApi | null = null;
let claimPage: ClaimSummary[] = [];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function setState(next: ProbeViewState): void {
  state = next;
  render();
}

function surface(err: unknown): void {
  const message =
    err instanceof ApiError
      ? `${err.code}: ${err.message}`
      : err instanceof Error
        ? err.message
        : String(err);
  setState(errorOccurred(state, message));
}

async function connect(): Promise<void> {
  const baseUrl = el<HTMLInputElement>("service-url").value.replace(/\/$/, "");
  api = new ProbeApi(baseUrl);
  try {
    const sessionId = await api.createSession();
    setState(sessionStarted(initialState(), sessionId));
    const page = await api.listClaims(0, 100);
    claimPage = page.claims;
    renderClaimList();
  } catch (err) {
    surface(err);
  }
}

async function loadClaim(id: number): Promise<void> {
  if (api === null) {
    return;
  }
  try {
    setState(claimLoaded(state, await api.getClaim(id)));
  } catch (err) {
    surface(err);
  }
}

async function clickToken(index: number): Promise<void> {
  if (api === null || state.claim === null || !canSelectMask(state)) {
    return;
  }
  try {
    const result = await api.maskClaim(
      state.claim.id,
      "manual",
      index,
      state.sessionId ?? undefined,
    );
    setState(maskApplied(state, index, result));
  } catch (err) {
    surface(err);
  }
}

async function fetchPredictions(): Promise<void> {
  if (api === null || state.maskedPreview === null || !canFetchPredictions(state)) {
    return;
  }
  const k = Number(el<HTMLSelectElement>("predict-k").value);
  try {
    const predictions = await api.predict(
      state.maskedPreview,
      k,
      state.claim?.id,
      state.sessionId ?? undefined,
    );
    setState(predictionsReceived(state, predictions));
  } catch (err) {
    surface(err);
  }
}

async function submitVerdict(label: VerdictLabel): Promise<void> {
  if (api === null || !canSubmitVerdict(state)) {
    return;
  }
  const sessionId = state.sessionId as string;
  const claimId = (state.claim as { id: number }).id;
  setState(verdictPending(state));
  try {
    const result = await api.submitVerdict(sessionId, claimId, label);
    setState(verdictAccepted(state, result));
    const next = claimPage.find((c) => c.id > claimId);
    if (next !== undefined) {
      await loadClaim(next.id);
    }
  } catch (err) {
    surface(err);
  }
}

function renderClaimList(): void {
  const list = el<HTMLUListElement>("claim-list");
  list.replaceChildren();
  for (const claim of claimPage) {
    const item = document.createElement("li");
    const link = document.createElement("a");
    link.href = "#";
    link.textContent = `#${claim.id} ${claim.text}`;
    link.addEventListener("click", (event) => {
      event.preventDefault();
      void loadClaim(claim.id);
    });
    item.appendChild(link);
    list.appendChild(item);
  }
}

function renderTokens(): void {
  const box = el<HTMLDivElement>("claim-tokens");
  box.replaceChildren();
  if (state.claim === null) {
    box.textContent = "select a claim from the list";
    return;
  }
  state.claim.tokens.forEach((token, index) => {
    const chip = document.createElement("button");
    chip.type = "button";
    chip.className = isSelected(state, index) ? "token selected" : "token";
    chip.textContent = token.text;
    chip.disabled = !canSelectMask(state);
    chip.addEventListener("click", () => void clickToken(index));
    box.appendChild(chip);
  });
}

function renderPredictions(): void {
  const list = el<HTMLOListElement>("prediction-list");
  list.replaceChildren();
  if (state.predictions === null) {
    list.textContent = "";
    return;
  }
  if (state.predictions.length === 0) {
    const item = document.createElement("li");
    item.className = "empty";
    item.textContent = "backend returned no predictions for this mask";
    list.appendChild(item);
    return;
  }
  state.predictions.forEach((p, index) => {
    const item = document.createElement("li");
    item.className = index === 0 ? "prediction top" : "prediction";
    item.textContent = `${p.token} (${p.score.toFixed(3)})`;
    list.appendChild(item);
  });
}

function renderVerdict(): void {
  const box = el<HTMLDivElement>("verdict-buttons");
  box.replaceChildren();
  for (const label of VERDICT_LABELS) {
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = label;
    button.disabled = !canSubmitVerdict(state);
    button.addEventListener("click", () => void submitVerdict(label));
    box.appendChild(button);
  }
  const last = el<HTMLParagraphElement>("last-verdict");
  if (state.lastVerdict === null) {
    last.textContent = "";
  } else if (state.lastVerdict.gold === null) {
    last.textContent =
      `claim #${state.lastVerdict.claim_id}: recorded ` +
      `${state.lastVerdict.verdict} (claim has no gold label; not scored)`;
  } else {
    last.textContent =
      `claim #${state.lastVerdict.claim_id}: you said ` +
      `${state.lastVerdict.verdict}, gold was ${state.lastVerdict.gold} ` +
      `(${state.lastVerdict.correct ? "correct" : "wrong"})`;
  }
}

function renderTally(): void {
  el<HTMLParagraphElement>("tally").textContent = tallyLine(state);
  const bar = el<HTMLDivElement>("tally-bar");
  bar.style.width = `${Math.round(state.tally.accuracy * 100)}%`;
  const reference = el<HTMLDivElement>("reference-line");
  reference.style.left = `${Math.round(REFERENCE_ACCURACY * 100)}%`;
}

function render(): void {
  el<HTMLParagraphElement>("session-label").textContent =
    state.sessionId === null ? "no session" : `session ${state.sessionId}`;
  el<HTMLParagraphElement>("masked-preview").textContent =
    state.maskedPreview ?? "";
  el<HTMLButtonElement>("predict-button").disabled =
    !canFetchPredictions(state);
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = state.error ?? "";
  banner.hidden = state.error === null;
  renderTokens();
  renderPredictions();
  renderVerdict();
  renderTally();
}

document.addEventListener("DOMContentLoaded", () => {
  el<HTMLButtonElement>("connect-button").addEventListener("click", () =>
    void connect(),
  );
  el<HTMLButtonElement>("predict-button").addEventListener("click", () =>
    void fetchPredictions(),
  );
  render();
});
