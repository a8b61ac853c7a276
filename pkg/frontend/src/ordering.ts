/* Pure ordering operations for the ranking board.
 *
 * The ordering is the ranked list of image ids, index 0 = rank 1 (most
 * realistic). Every operation returns a fresh array and never invents or
 * drops ids, so the result stays a permutation of the input no matter how
 * drags and key presses interleave.
 */

export function moveItem(order: readonly string[], from: number, to: number): string[] {
  const next = order.slice();
  if (from < 0 || from >= next.length) return next;
  const clamped = Math.max(0, Math.min(next.length - 1, to));
  const [item] = next.splice(from, 1);
  next.splice(clamped, 0, item);
  return next;
}

export function moveId(order: readonly string[], id: string, to: number): string[] {
  const from = order.indexOf(id);
  if (from === -1) return order.slice();
  return moveItem(order, from, to);
}

export function isPermutationOf(order: readonly string[], served: readonly string[]): boolean {
  if (order.length !== served.length) return false;
  const want = new Map<string, number>();
  for (const id of served) want.set(id, (want.get(id) ?? 0) + 1);
  for (const id of order) {
    const n = want.get(id);
    if (!n) return false;
    want.set(id, n - 1);
  }
  return true;
}
