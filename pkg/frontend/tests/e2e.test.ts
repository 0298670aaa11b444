/**
 * End-to-end round trip against the live probe service.
 *
 * Spawns the Python service over the five-claim fixture, then scripts a
 * participant through the full protocol for every claim: pick the mask,
 * fetch the top-1 prediction, record SUPPORTS when the prediction matches
 * the held-out token and REFUTES otherwise. Two of the five predictions
 * match, so the session tally must land on exactly 2/5 = 0.40.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ProbeApi, type VerdictResult } from "../src/api.js";
import {
  claimLoaded,
  initialState,
  maskApplied,
  predictionsReceived,
  sessionStarted,
  verdictAccepted,
  verdictPending,
  type ProbeViewState,
} from "../src/state.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const FIXTURES = path.resolve(HERE, "..", "..", "tests", "fixtures");
const PORT = 20000 + Math.floor(Math.random() * 20000);
const BASE_URL = `http://127.0.0.1:${PORT}`;
const PUNCTUATION = new Set([".", ",", "!", "?", ";", ":"]);

let service: ChildProcessWithoutNullStreams;
let serviceOutput = "";
const api = new ProbeApi(BASE_URL);

async function waitForService(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    if (service.exitCode !== null) {
      throw new Error(
        `service exited with ${service.exitCode}\n${serviceOutput}`,
      );
    }
    try {
      await api.listClaims(0, 1);
      return;
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error(`service never came up: ${lastError}\n${serviceOutput}`);
}

beforeAll(async () => {
  const sessionDir = mkdtempSync(path.join(tmpdir(), "probe-sessions-"));
  service = spawn("python3", [
    "-m",
    "clozecheck.cli",
    "serve",
    "--dataset",
    path.join(FIXTURES, "probe_claims.jsonl"),
    "--backend",
    path.join(FIXTURES, "probe_table.jsonl"),
    "--ner",
    "rule",
    "--host",
    "127.0.0.1",
    "--port",
    String(PORT),
    "--session-dir",
    sessionDir,
  ]);
  service.stdout.on("data", (chunk: Buffer) => {
    serviceOutput += chunk.toString();
  });
  service.stderr.on("data", (chunk: Buffer) => {
    serviceOutput += chunk.toString();
  });
  await waitForService(20000);
}, 30000);

afterAll(() => {
  service.kill();
});

describe("probe round trip", () => {
  it(
    "drives five claims to a session tally of exactly 0.40",
    async () => {
      const page = await api.listClaims();
      expect(page.total).toBe(5);
      // blind protocol: listings say whether gold exists, never what it is
      for (const claim of page.claims) {
        expect(claim.has_gold).toBe(true);
        expect(Object.keys(claim).sort()).toEqual(["has_gold", "id", "text"]);
      }

      const sessionId = await api.createSession();
      let view: ProbeViewState = sessionStarted(initialState(), sessionId);
      const results: VerdictResult[] = [];

      for (const summary of page.claims) {
        const claim = await api.getClaim(summary.id);
        view = claimLoaded(view, claim);

        // the participant masks the last content word of the claim
        let tokenIndex = claim.tokens.length - 1;
        while (tokenIndex > 0 && PUNCTUATION.has(claim.tokens[tokenIndex]!.text)) {
          tokenIndex -= 1;
        }
        const mask = await api.maskClaim(
          claim.id,
          "manual",
          tokenIndex,
          sessionId,
        );
        expect(mask.masked_text).toContain("[MASK]");
        view = maskApplied(view, tokenIndex, mask);

        const predictions = await api.predict(
          mask.masked_text,
          1,
          claim.id,
          sessionId,
        );
        expect(predictions).toHaveLength(1);
        expect(predictions[0]!.rank).toBe(1);
        view = predictionsReceived(view, predictions);

        // the participant's judgment: does the filler restore the claim?
        const matches =
          predictions[0]!.token.toLowerCase() === mask.gold_token.toLowerCase();
        view = verdictPending(view);
        const result = await api.submitVerdict(
          sessionId,
          claim.id,
          matches ? "SUPPORTS" : "REFUTES",
        );
        view = verdictAccepted(view, result);
        results.push(result);

        // gold is revealed only now, in the verdict response
        expect(result.gold).toBe("SUPPORTS");
      }

      const byId = new Map(results.map((r) => [r.claim_id, r]));
      expect(byId.get(1)!.correct).toBe(true);
      expect(byId.get(2)!.correct).toBe(true);
      expect(byId.get(3)!.correct).toBe(false);
      expect(byId.get(4)!.correct).toBe(false);
      expect(byId.get(5)!.correct).toBe(false);

      const final = results[results.length - 1]!;
      expect(final.verdict_count).toBe(5);
      expect(final.gold_labeled_count).toBe(5);
      expect(final.correct_count).toBe(2);
      expect(final.accuracy).toBe(0.4);

      // the view tally mirrors the service's session state exactly
      const session = await api.getSession(sessionId);
      expect(view.tally).toEqual({
        verdict_count: session.verdict_count,
        gold_labeled_count: session.gold_labeled_count,
        correct_count: session.correct_count,
        accuracy: session.accuracy,
      });
      expect(session.accuracy).toBe(0.4);

      // every probe step was logged: created + 5 masks + 5 predicts + 5 verdicts
      const kinds = session.records.map((r) => r["type"]);
      expect(kinds.filter((k) => k === "probe_mask")).toHaveLength(5);
      expect(kinds.filter((k) => k === "probe_predict")).toHaveLength(5);
      expect(kinds.filter((k) => k === "verdict")).toHaveLength(5);
      expect(session.records).toHaveLength(16);
    },
    30000,
  );

  it("surfaces service errors through the typed client", async () => {
    const err = await api.getClaim(999).catch((e: unknown) => e);
    expect(err).toMatchObject({ status: 404, code: "claim_not_found" });
  });
});
