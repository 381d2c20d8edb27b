import type {
  EvaluationView,
  QuestionsPayload,
  SessionStatePayload,
  StepName,
  SummaryPayload,
  VerdictKind,
} from './types';

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly retryable: boolean,
  ) {
    super(message);
  }
}

interface NamedSource {
  name: string;
  content: Blob | string;
}

/** Thin typed client over the session HTTP API. */
export class ApiClient {
  constructor(private readonly baseUrl: string = '') {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`, 0, true);
    }
    const text = await response.text();
    let body: unknown = null;
    try {
      body = text ? JSON.parse(text) : null;
    } catch {
      body = null;
    }
    if (!response.ok) {
      const record = (body ?? {}) as { error?: string; retryable?: boolean };
      throw new ApiError(
        record.error ?? `request failed (${response.status})`,
        response.status,
        record.retryable ?? false,
      );
    }
    return body as T;
  }

  createSession(): Promise<{ session_id: string; step: StepName }> {
    return this.request('/sessions', { method: 'POST' });
  }

  getState(sessionId: string): Promise<SessionStatePayload> {
    return this.request(`/sessions/${sessionId}`);
  }

  async uploadArtifacts(
    sessionId: string,
    problem: NamedSource,
    code: NamedSource,
  ): Promise<{ session_id: string; step: StepName }> {
    const form = new FormData();
    form.append('problem', toBlob(problem.content), problem.name);
    form.append('code', toBlob(code.content), code.name);
    return this.request(`/sessions/${sessionId}/artifacts`, {
      method: 'POST',
      body: form,
    });
  }

  declareVerdict(sessionId: string, verdict: VerdictKind): Promise<QuestionsPayload> {
    return this.request(`/sessions/${sessionId}/verdict`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ verdict }),
    });
  }

  getQuestions(sessionId: string): Promise<QuestionsPayload> {
    return this.request(`/sessions/${sessionId}/questions`);
  }

  submitAnswer(
    sessionId: string,
    questionId: string,
    answer: string,
  ): Promise<EvaluationView> {
    return this.request(`/sessions/${sessionId}/questions/${questionId}/answer`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ answer }),
    });
  }

  finalizeSummary(sessionId: string): Promise<SummaryPayload> {
    return this.request(`/sessions/${sessionId}/summary`, { method: 'POST' });
  }

  rateQuestion(
    questionId: string,
    stars: number,
    sessionId?: string,
  ): Promise<{ rating: unknown; aggregate: { mean: number | null; count: number } }> {
    return this.request(`/questions/${questionId}/rating`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ stars, session_id: sessionId ?? null }),
    });
  }
}

function toBlob(content: Blob | string): Blob {
  return typeof content === 'string' ? new Blob([content], { type: 'text/plain' }) : content;
}
