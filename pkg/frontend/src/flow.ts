/* Session state machine: fetch assignment, rank, submit, advance.
 *
 * The view layer stays dumb; everything that must hold regardless of how
 * the DOM behaves lives here. Submissions are serialized by an in-flight
 * flag, a payload is only ever a permutation of what the server served,
 * and a 409 (already answered) advances without counting anything twice,
 * which makes "submit, network died, submit again" safe.
 */

import { ApiError, Assignment, ConflictError, SubmitReceipt } from "./api.js";
import { isPermutationOf, moveItem } from "./ordering.js";

export interface FlowApi {
  assignment(rater: string): Promise<Assignment>;
  submit(rater: string, sampleId: string, ordering: readonly string[]): Promise<SubmitReceipt>;
}

export interface LoadingState {
  kind: "loading";
}

export interface RankingState {
  kind: "ranking";
  sampleId: string;
  /** Image ids exactly as served (already shuffled server-side). */
  served: string[];
  /** Current board state, index 0 = rank 1. */
  ordering: string[];
  answered: number;
  total: number;
  submitting: boolean;
  loaded: string[];
  failed: string[];
  /** Transient banner text, e.g. after a failed submit. */
  notice: string | null;
}

export interface DoneState {
  kind: "done";
  rater: string;
  answered: number;
  total: number;
}

export interface FatalState {
  kind: "fatal";
  message: string;
}

export type FlowState = LoadingState | RankingState | DoneState | FatalState;

export class StudyFlow {
  private state: FlowState = { kind: "loading" };

  constructor(
    private api: FlowApi,
    readonly rater: string,
    private onChange: (state: FlowState) => void = () => {},
  ) {}

  current(): FlowState {
    return this.state;
  }

  private set(state: FlowState): void {
    this.state = state;
    this.onChange(state);
  }

  async start(): Promise<void> {
    this.set({ kind: "loading" });
    await this.advance();
  }

  private async advance(): Promise<void> {
    let task: Assignment;
    try {
      task = await this.api.assignment(this.rater);
    } catch (err) {
      this.set({ kind: "fatal", message: `could not reach the study service (${(err as Error).message})` });
      return;
    }
    if (task.done) {
      this.set({ kind: "done", rater: this.rater, answered: task.answered, total: task.total });
      return;
    }
    this.set({
      kind: "ranking",
      sampleId: task.sample_id,
      served: task.images.slice(),
      ordering: task.images.slice(),
      answered: task.answered,
      total: task.total,
      submitting: false,
      loaded: [],
      failed: [],
      notice: null,
    });
  }

  /** Reorder: take the tile at `from` and insert it at `to`. */
  move(from: number, to: number): void {
    const s = this.state;
    if (s.kind !== "ranking" || s.submitting) return;
    this.set({ ...s, ordering: moveItem(s.ordering, from, to) });
  }

  imageLoaded(id: string): void {
    const s = this.state;
    if (s.kind !== "ranking" || !s.served.includes(id)) return;
    this.set({
      ...s,
      loaded: s.loaded.includes(id) ? s.loaded : [...s.loaded, id],
      failed: s.failed.filter((f) => f !== id),
    });
  }

  imageFailed(id: string): void {
    const s = this.state;
    if (s.kind !== "ranking" || !s.served.includes(id)) return;
    this.set({
      ...s,
      failed: s.failed.includes(id) ? s.failed : [...s.failed, id],
      loaded: s.loaded.filter((l) => l !== id),
    });
  }

  /** Submission needs every image on screen and nothing in flight. */
  canSubmit(): boolean {
    const s = this.state;
    return (
      s.kind === "ranking" &&
      !s.submitting &&
      s.failed.length === 0 &&
      s.loaded.length === s.served.length
    );
  }

  async submit(): Promise<void> {
    const s = this.state;
    if (s.kind !== "ranking" || !this.canSubmit()) return;
    if (!isPermutationOf(s.ordering, s.served)) {
      // should be unreachable; reset rather than send a corrupted board
      this.set({ ...s, ordering: s.served.slice(), notice: "board state was corrupted and has been reset" });
      return;
    }
    this.set({ ...s, submitting: true, notice: null });
    try {
      await this.api.submit(this.rater, s.sampleId, s.ordering);
    } catch (err) {
      if (err instanceof ConflictError) {
        // the earlier attempt did land; move on without double counting
        await this.advance();
        return;
      }
      const message =
        err instanceof ApiError && err.status === 0
          ? "network failure, your ranking was kept, press submit to retry"
          : `submission rejected: ${(err as Error).message}`;
      this.set({ ...s, submitting: false, notice: message });
      return;
    }
    await this.advance();
  }
}
