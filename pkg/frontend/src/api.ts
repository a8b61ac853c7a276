/* Thin typed client for the study service JSON endpoints. */

export interface OpenAssignment {
  done: false;
  sample_id: string;
  images: string[];
  answered: number;
  total: number;
}

export interface StudyExhausted {
  done: true;
  rater: string;
  answered: number;
  total: number;
}

export type Assignment = OpenAssignment | StudyExhausted;

export interface SubmitReceipt {
  accepted: boolean;
  responses: number;
  sample_coverage: number;
  sample_complete: boolean;
}

export interface SampleResult {
  sample_id: string;
  scores: Record<string, number>;
  ordering: string[];
  rater_count: number;
  complete: boolean;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

/** 409 from the service: this rater already ranked the sample. */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(message, 409);
    this.name = "ConflictError";
  }
}

async function errorDetail(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") return body.detail;
    if (body && body.detail !== undefined) return JSON.stringify(body.detail);
  } catch {
    // not json, fall through
  }
  return `request failed with status ${res.status}`;
}

export class StudyApi {
  // wrapping fetch keeps its `this` binding off the window
  constructor(
    private base = "",
    private fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, init);
    } catch (err) {
      // status 0 marks "never reached the server", the one retryable case
      throw new ApiError(`network failure: ${String(err)}`, 0);
    }
    if (res.status === 409) throw new ConflictError(await errorDetail(res));
    if (!res.ok) throw new ApiError(await errorDetail(res), res.status);
    return res.json();
  }

  assignment(rater: string): Promise<Assignment> {
    const q = encodeURIComponent(rater);
    return this.request(`/api/assignment?rater=${q}`) as Promise<Assignment>;
  }

  submit(rater: string, sampleId: string, ordering: readonly string[]): Promise<SubmitReceipt> {
    return this.request("/api/response", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ rater, sample_id: sampleId, ordering }),
    }) as Promise<SubmitReceipt>;
  }

  results(): Promise<SampleResult[]> {
    return this.request("/api/results") as Promise<SampleResult[]>;
  }

  imageUrl(sampleId: string, imageId: string): string {
    return `${this.base}/api/image/${encodeURIComponent(sampleId)}/${encodeURIComponent(imageId)}`;
  }
}
