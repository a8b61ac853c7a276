#!/usr/bin/env python3
"""Drive a running ranking-study service with simulated raters.

Each rater pulls assignments from the HTTP API until told they are
done, ranking by the true severity ladder (variant ids sort
lexicographically, v0 mildest) with an optional chance of one adjacent
swap per ballot.  Point it at a `study-serve` instance:

    faceqa study-serve --samples corpus/ --out log.jsonl --port 8000 &
    python3 scripts/simulate_study.py --raters 5 --noise 0.3
"""

import argparse
import json
import urllib.request

import numpy as np


def get(base: str, path: str) -> dict:
    with urllib.request.urlopen(base + path) as resp:
        return json.load(resp)


def post(base: str, path: str, payload: dict) -> dict:
    req = urllib.request.Request(
        base + path, data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.load(resp)


def main() -> None:
    parser = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--base-url", default="http://127.0.0.1:8000")
    parser.add_argument("--raters", type=int, default=2)
    parser.add_argument("--noise", type=float, default=0.3,
                        help="chance of one adjacent swap per ballot")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)

    health = get(args.base_url, "/api/health")
    print(f"service up: {health['samples']} sample(s), "
          f"{health['responses']} response(s) already logged")

    for index in range(args.raters):
        rater = f"sim_{index:03d}"
        while True:
            task = get(args.base_url, f"/api/assignment?rater={rater}")
            if task["done"]:
                print(f"{rater}: done ({task['answered']}/{task['total']})")
                break
            order = sorted(task["images"])
            if len(order) > 1 and rng.random() < args.noise:
                i = int(rng.integers(0, len(order) - 1))
                order[i], order[i + 1] = order[i + 1], order[i]
            out = post(args.base_url, "/api/response",
                       {"rater": rater, "sample_id": task["sample_id"],
                        "ordering": order})
            print(f"{rater} -> {task['sample_id']} "
                  f"(coverage {out['sample_coverage']})")

    for row in get(args.base_url, "/api/results"):
        print(f"{row['sample_id']}: {' > '.join(row['ordering'])}  "
              f"[{row['rater_count']} rater(s)]")


if __name__ == "__main__":
    main()
