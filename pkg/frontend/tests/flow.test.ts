import { describe, expect, it } from "vitest";

import { ApiError, Assignment, ConflictError, SubmitReceipt } from "../src/api.js";
import { FlowApi, RankingState, StudyFlow } from "../src/flow.js";
import { isPermutationOf } from "../src/ordering.js";

function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s * 1664525 + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

interface LoggedResponse {
  rater: string;
  sample_id: string;
  ordering: string[];
}

/** In-memory stand-in with the same behavior as the real service:
 * least-covered assignment, shuffled images, duplicate 409, permutation 422. */
class FakeService implements FlowApi {
  log: LoggedResponse[] = [];
  served = new Map<string, string[]>(); // `${rater}:${sample}` -> images as served
  private answered = new Map<string, Set<string>>();
  private coverage = new Map<string, number>();
  private rand = lcg(99);

  constructor(readonly samples: Map<string, string[]>) {
    for (const sid of samples.keys()) this.coverage.set(sid, 0);
  }

  private answeredBy(rater: string): Set<string> {
    let set = this.answered.get(rater);
    if (!set) {
      set = new Set();
      this.answered.set(rater, set);
    }
    return set;
  }

  async assignment(rater: string): Promise<Assignment> {
    const done = this.answeredBy(rater);
    const open = [...this.samples.keys()].filter((sid) => !done.has(sid)).sort();
    if (open.length === 0) {
      return { done: true, rater, answered: done.size, total: this.samples.size };
    }
    open.sort((a, b) => (this.coverage.get(a)! - this.coverage.get(b)!) || (a < b ? -1 : 1));
    const sid = open[0];
    const images = this.samples.get(sid)!.slice();
    for (let i = images.length - 1; i > 0; i--) {
      const j = Math.floor(this.rand() * (i + 1));
      [images[i], images[j]] = [images[j], images[i]];
    }
    this.served.set(`${rater}:${sid}`, images.slice());
    return { done: false, sample_id: sid, images, answered: done.size, total: this.samples.size };
  }

  async submit(rater: string, sampleId: string, ordering: readonly string[]): Promise<SubmitReceipt> {
    const expected = this.samples.get(sampleId);
    if (!expected) throw new ApiError(`unknown sample '${sampleId}'`, 404);
    if (this.answeredBy(rater).has(sampleId)) {
      throw new ConflictError(`rater '${rater}' already answered sample '${sampleId}'`);
    }
    if (!isPermutationOf(ordering, expected)) {
      throw new ApiError("ordering must be a permutation of the sample's images", 422);
    }
    this.log.push({ rater, sample_id: sampleId, ordering: ordering.slice() });
    this.answeredBy(rater).add(sampleId);
    this.coverage.set(sampleId, this.coverage.get(sampleId)! + 1);
    return {
      accepted: true,
      responses: this.log.length,
      sample_coverage: this.coverage.get(sampleId)!,
      sample_complete: this.coverage.get(sampleId)! >= 2,
    };
  }
}

function fiveSamples(): Map<string, string[]> {
  const samples = new Map<string, string[]>();
  for (let i = 0; i < 5; i++) {
    samples.set(`sample_${i}`, ["v0", "v1", "v2", "v3", "v4", "v5"].map((v) => `${v}`));
  }
  return samples;
}

function ranking(flow: StudyFlow): RankingState {
  const s = flow.current();
  if (s.kind !== "ranking") throw new Error(`expected ranking state, got ${s.kind}`);
  return s;
}

function loadAll(flow: StudyFlow): void {
  for (const id of ranking(flow).served) flow.imageLoaded(id);
}

describe("full study loop", () => {
  it("two raters rank five samples each and every payload is a served permutation", async () => {
    const service = new FakeService(fiveSamples());
    const rand = lcg(5);

    for (const rater of ["rater-a", "rater-b"]) {
      const flow = new StudyFlow(service, rater);
      await flow.start();
      let guard = 0;
      while (flow.current().kind === "ranking") {
        if (++guard > 10) throw new Error("study did not terminate");
        loadAll(flow);
        // random but valid reordering before submitting
        for (let k = 0; k < 6; k++) {
          flow.move(Math.floor(rand() * 6), Math.floor(rand() * 6));
        }
        await flow.submit();
      }
      const end = flow.current();
      expect(end.kind).toBe("done");
      if (end.kind === "done") {
        expect(end.answered).toBe(5);
        expect(end.total).toBe(5);
        expect(end.rater).toBe(rater);
      }
    }

    expect(service.log.length).toBe(10);
    for (const row of service.log) {
      const served = service.served.get(`${row.rater}:${row.sample_id}`)!;
      expect(isPermutationOf(row.ordering, served)).toBe(true);
    }
    // each sample got exactly one ballot per rater
    const perSample = new Map<string, number>();
    for (const row of service.log) {
      perSample.set(row.sample_id, (perSample.get(row.sample_id) ?? 0) + 1);
    }
    expect([...perSample.values()]).toEqual([2, 2, 2, 2, 2]);
  });

  it("progress counter advances with each accepted submission", async () => {
    const service = new FakeService(fiveSamples());
    const flow = new StudyFlow(service, "r1");
    await flow.start();
    for (let expected = 0; expected < 5; expected++) {
      expect(ranking(flow).answered).toBe(expected);
      loadAll(flow);
      await flow.submit();
    }
    expect(flow.current().kind).toBe("done");
  });
});

describe("submission gating", () => {
  it("refuses to submit before every image reported in", async () => {
    const service = new FakeService(fiveSamples());
    const flow = new StudyFlow(service, "r1");
    await flow.start();
    expect(flow.canSubmit()).toBe(false);
    await flow.submit();
    expect(service.log.length).toBe(0);
    expect(flow.current().kind).toBe("ranking");
  });

  it("a failed image blocks submission until its retry loads", async () => {
    const service = new FakeService(fiveSamples());
    const flow = new StudyFlow(service, "r1");
    await flow.start();
    const served = ranking(flow).served;
    for (const id of served.slice(1)) flow.imageLoaded(id);
    flow.imageFailed(served[0]);
    expect(flow.canSubmit()).toBe(false);
    flow.imageLoaded(served[0]); // retry succeeded
    expect(flow.canSubmit()).toBe(true);
  });

  it("ignores load reports for ids that were never served", async () => {
    const service = new FakeService(fiveSamples());
    const flow = new StudyFlow(service, "r1");
    await flow.start();
    flow.imageLoaded("not-served");
    expect(ranking(flow).loaded).toEqual([]);
  });

  it("serializes concurrent submits down to one request", async () => {
    const service = new FakeService(fiveSamples());
    let release!: () => void;
    const gate = new Promise<void>((r) => {
      release = r;
    });
    let submits = 0;
    const slow: FlowApi = {
      assignment: (r) => service.assignment(r),
      submit: async (r, sid, ord) => {
        submits += 1;
        await gate;
        return service.submit(r, sid, ord);
      },
    };
    const flow = new StudyFlow(slow, "r1");
    await flow.start();
    loadAll(flow);
    const first = flow.submit();
    const second = flow.submit(); // double click
    release();
    await Promise.all([first, second]);
    expect(submits).toBe(1);
    expect(service.log.length).toBe(1);
  });
});

describe("failure paths", () => {
  it("a duplicate conflict advances without double counting", async () => {
    const service = new FakeService(fiveSamples());
    const flow = new StudyFlow(service, "r1");
    await flow.start();
    const first = ranking(flow).sampleId;
    loadAll(flow);

    // same rater token in another tab answers the same sample first
    await service.submit("r1", first, service.samples.get(first)!);
    expect(service.log.length).toBe(1);

    await flow.submit(); // 409 under the hood
    expect(service.log.length).toBe(1); // nothing counted twice
    const after = ranking(flow);
    expect(after.sampleId).not.toBe(first);
    expect(after.answered).toBe(1);
  });

  it("network failure keeps the ranking and the retry sends the same payload", async () => {
    const service = new FakeService(fiveSamples());
    let failures = 1;
    const bodies: string[][] = [];
    const flaky: FlowApi = {
      assignment: (r) => service.assignment(r),
      submit: async (r, sid, ord) => {
        bodies.push(ord.slice());
        if (failures-- > 0) throw new ApiError("network failure: offline", 0);
        return service.submit(r, sid, ord);
      },
    };
    const flow = new StudyFlow(flaky, "r1");
    await flow.start();
    loadAll(flow);
    flow.move(0, 3);
    const intended = ranking(flow).ordering.slice();

    await flow.submit();
    const after = ranking(flow);
    expect(after.notice).toContain("retry");
    expect(after.ordering).toEqual(intended);
    expect(after.submitting).toBe(false);

    await flow.submit();
    expect(bodies).toEqual([intended, intended]);
    expect(service.log.length).toBe(1);
    expect(flow.current().kind).toBe("ranking"); // next sample came up
  });

  it("a submit that landed but then timed out resolves via the conflict path", async () => {
    const service = new FakeService(fiveSamples());
    let dropAck = true;
    const lossy: FlowApi = {
      assignment: (r) => service.assignment(r),
      submit: async (r, sid, ord) => {
        const receipt = await service.submit(r, sid, ord);
        if (dropAck) {
          dropAck = false;
          throw new ApiError("network failure: timeout", 0);
        }
        return receipt;
      },
    };
    const flow = new StudyFlow(lossy, "r1");
    await flow.start();
    const first = ranking(flow).sampleId;
    loadAll(flow);

    await flow.submit(); // lands server-side, ack lost
    expect(ranking(flow).sampleId).toBe(first);

    await flow.submit(); // 409 now, flow advances
    expect(ranking(flow).sampleId).not.toBe(first);
    expect(service.log.length).toBe(1);
  });

  it("an unreachable service on start is fatal, not a crash", async () => {
    const dead: FlowApi = {
      assignment: async () => {
        throw new ApiError("network failure: refused", 0);
      },
      submit: async () => {
        throw new ApiError("network failure: refused", 0);
      },
    };
    const flow = new StudyFlow(dead, "r1");
    await flow.start();
    const s = flow.current();
    expect(s.kind).toBe("fatal");
    if (s.kind === "fatal") expect(s.message).toContain("study service");
  });

  it("move is ignored while a submit is in flight", async () => {
    const service = new FakeService(fiveSamples());
    let release!: () => void;
    const gate = new Promise<void>((r) => {
      release = r;
    });
    const slow: FlowApi = {
      assignment: (r) => service.assignment(r),
      submit: async (r, sid, ord) => {
        await gate;
        return service.submit(r, sid, ord);
      },
    };
    const flow = new StudyFlow(slow, "r1");
    await flow.start();
    loadAll(flow);
    const frozen = ranking(flow).ordering.slice();
    const pending = flow.submit();
    flow.move(0, 5);
    expect(ranking(flow).ordering).toEqual(frozen);
    release();
    await pending;
    expect(service.log[0].ordering).toEqual(frozen);
  });
});

describe("state change notifications", () => {
  it("every emitted ranking state is a permutation of the served ids", async () => {
    const service = new FakeService(fiveSamples());
    const seen: RankingState[] = [];
    const flow = new StudyFlow(service, "r1", (s) => {
      if (s.kind === "ranking") seen.push(s);
    });
    await flow.start();
    loadAll(flow);
    const rand = lcg(3);
    for (let k = 0; k < 20; k++) flow.move(Math.floor(rand() * 6), Math.floor(rand() * 6));
    await flow.submit();
    expect(seen.length).toBeGreaterThan(20);
    for (const s of seen) expect(isPermutationOf(s.ordering, s.served)).toBe(true);
  });
});
