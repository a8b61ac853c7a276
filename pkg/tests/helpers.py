"""Independent oracles used by the test suite.

Everything here is deliberately written the slow, obvious way: exact
rational arithmetic for the rank statistics, O(n^2) pair loops, and a
central finite-difference gradient checker.  The production code must
agree with these, not the other way around.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import torch


def average_ranks_exact(values) -> list[Fraction]:
    """Rank vector (1-based, ties averaged) as exact fractions."""
    ranks = []
    for v in values:
        less = sum(1 for u in values if u < v)
        equal = sum(1 for u in values if u == v)
        # positions less+1 .. less+equal, averaged
        ranks.append(Fraction(2 * less + equal + 1, 2))
    return ranks


def brute_srcc(x, y) -> float:
    """Spearman rho: Pearson correlation of the averaged rank vectors.

    Tie-free inputs take an all-Fraction path, so the float returned is
    the correctly rounded value of the exact rational result.
    """
    rx = average_ranks_exact(x)
    ry = average_ranks_exact(y)
    n = len(rx)
    mx = sum(rx, Fraction(0)) / n
    my = sum(ry, Fraction(0)) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    if vx == 0 or vy == 0:
        raise ZeroDivisionError("constant input")
    if vx == vy:
        # rank vectors over the same index set share their variance when
        # both are untied, so the ratio stays rational
        return float(cov / vx)
    return float(cov) / math.sqrt(float(vx) * float(vy))


def brute_krcc(x, y) -> float:
    """Kendall tau-b by direct enumeration of all pairs."""
    n = len(x)
    conc = disc = 0
    for i in range(n):
        for j in range(i + 1, n):
            sx = (x[i] > x[j]) - (x[i] < x[j])
            sy = (y[i] > y[j]) - (y[i] < y[j])
            if sx == 0 or sy == 0:
                continue
            if sx == sy:
                conc += 1
            else:
                disc += 1
    n0 = n * (n - 1) // 2
    tx = _tie_pairs_exact(x)
    ty = _tie_pairs_exact(y)
    if tx == n0 or ty == n0:
        raise ZeroDivisionError("constant input")
    if tx == 0 and ty == 0:
        return float(Fraction(conc - disc, n0))
    return (conc - disc) / math.sqrt((n0 - tx) * (n0 - ty))


def _tie_pairs_exact(values) -> int:
    counts = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(c * (c - 1) // 2 for c in counts.values())


def brute_weighted_scores(orderings) -> dict[str, Fraction]:
    """Aggregate rank-order ballots.

    ``orderings`` is a list of full orderings (best first) over the same
    image ids.  Position p in a list of n contributes weight n - p; the
    final score is the sum divided by the number of ballots.
    """
    n = len(orderings[0])
    total: dict[str, int] = {}
    for ordering in orderings:
        assert sorted(ordering) == sorted(orderings[0])
        for pos, image_id in enumerate(ordering):
            total[image_id] = total.get(image_id, 0) + (n - pos)
    return {k: Fraction(v, len(orderings)) for k, v in total.items()}


def finite_diff_grads(loss_fn, params, step=1e-4) -> list[torch.Tensor]:
    """Central-difference gradients of a deterministic scalar loss.

    ``loss_fn`` takes no arguments and must not mutate state; ``params``
    are the tensors to perturb in place, one scalar entry at a time.
    """
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                plus = float(loss_fn())
                flat[i] = orig - step
                minus = float(loss_fn())
                flat[i] = orig
                gflat[i] = (plus - minus) / (2.0 * step)
            grads.append(g)
    return grads


def grad_agreement(analytic, numeric, rel_tol=1e-3) -> float:
    """Fraction of parameter entries whose gradients agree within rel_tol."""
    ok = total = 0
    for a, f in zip(analytic, numeric):
        a = a.reshape(-1)
        f = f.reshape(-1)
        denom = torch.maximum(f.abs(), torch.full_like(f, 1e-8))
        ok += int(((a - f).abs() / denom <= rel_tol).sum())
        total += f.numel()
    return ok / total


def bicubic_weight(t: float, a: float = -0.75) -> float:
    """Keys cubic kernel used by OpenCV's INTER_CUBIC."""
    t = abs(t)
    if t <= 1.0:
        return (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    if t < 2.0:
        return a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a
    return 0.0
