/**
 * Typed client for the probe service's /v1 HTTP API.
 *
 * Every state change in the UI flows through this client; the UI itself
 * holds no verification logic. Errors arrive as the service's envelope
 * {"error": {"code", "message"}} and are rethrown as ApiError.
 */

export interface ClaimSummary {
  id: number;
  text: string;
  has_gold: boolean;
}

export interface TokenSpan {
  text: string;
  start: number;
  end: number;
}

export interface ClaimDetail extends ClaimSummary {
  tokens: TokenSpan[];
}

export interface ClaimPage {
  split: string;
  total: number;
  offset: number;
  limit: number;
  claims: ClaimSummary[];
}

export type MaskStrategy = "last_token" | "last_entity" | "manual";

export interface MaskResult {
  claim_id: number;
  masked_text: string;
  gold_token: string;
  mask_char_span: number[];
  strategy: MaskStrategy;
  fallback_used: boolean;
}

export interface Prediction {
  token: string;
  score: number;
  rank: number;
}

export type VerdictLabel = "SUPPORTS" | "REFUTES" | "NOT ENOUGH INFO";

export interface SessionTally {
  verdict_count: number;
  gold_labeled_count: number;
  correct_count: number;
  accuracy: number;
}

export interface VerdictResult extends SessionTally {
  session_id: string;
  claim_id: number;
  verdict: VerdictLabel;
  gold: VerdictLabel | null;
  correct: boolean | null;
}

export interface SessionState extends SessionTally {
  session_id: string;
  records: Array<Record<string, unknown>>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function unwrap<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let code = "http_error";
  let message = `${response.status}`;
  try {
    const payload = (await response.json()) as {
      error?: { code?: string; message?: string };
    };
    if (payload.error) {
      code = payload.error.code ?? code;
      message = payload.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, code, message);
}

export class ProbeApi {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private get(path: string): Promise<Response> {
    return this.fetchImpl(this.baseUrl + path);
  }

  private post(path: string, body: unknown): Promise<Response> {
    return this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async listClaims(offset = 0, limit = 20, split?: string): Promise<ClaimPage> {
    const params = new URLSearchParams({
      offset: String(offset),
      limit: String(limit),
    });
    if (split !== undefined) {
      params.set("split", split);
    }
    return unwrap(await this.get(`/v1/claims?${params.toString()}`));
  }

  async getClaim(id: number): Promise<ClaimDetail> {
    return unwrap(await this.get(`/v1/claims/${id}`));
  }

  async maskClaim(
    claimId: number,
    strategy: MaskStrategy,
    tokenIndex?: number,
    sessionId?: string,
  ): Promise<MaskResult> {
    return unwrap(
      await this.post("/v1/mask", {
        claim_id: claimId,
        strategy,
        token_index: tokenIndex ?? null,
        session_id: sessionId ?? null,
      }),
    );
  }

  async predict(
    maskedText: string,
    k = 1,
    claimId?: number,
    sessionId?: string,
  ): Promise<Prediction[]> {
    const payload = await unwrap<{ predictions: Prediction[] }>(
      await this.post("/v1/predict", {
        masked_text: maskedText,
        k,
        claim_id: claimId ?? null,
        session_id: sessionId ?? null,
      }),
    );
    return payload.predictions;
  }

  async createSession(): Promise<string> {
    const payload = await unwrap<{ session_id: string }>(
      await this.post("/v1/sessions", {}),
    );
    return payload.session_id;
  }

  async getSession(sessionId: string): Promise<SessionState> {
    return unwrap(await this.get(`/v1/sessions/${sessionId}`));
  }

  async submitVerdict(
    sessionId: string,
    claimId: number,
    verdict: VerdictLabel,
  ): Promise<VerdictResult> {
    return unwrap(
      await this.post(`/v1/sessions/${sessionId}/verdicts`, {
        claim_id: claimId,
        verdict,
      }),
    );
  }
}
