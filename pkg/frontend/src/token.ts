/* Anonymous rater identity.
 *
 * There is no login: the first visit mints a random token and keeps it in
 * localStorage, so reloading mid-study resumes where the rater left off.
 * Storage can be unavailable (private windows); then the token only lives
 * for the session, which still gives a consistent identity to the server.
 */

const STORAGE_KEY = "study-rater-token";

export interface TokenStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export function freshToken(randomBytes?: (n: number) => Uint8Array): string {
  let bytes: Uint8Array;
  if (randomBytes) {
    bytes = randomBytes(9);
  } else if (typeof crypto !== "undefined" && crypto.getRandomValues) {
    bytes = crypto.getRandomValues(new Uint8Array(9));
  } else {
    bytes = new Uint8Array(9);
    for (let i = 0; i < bytes.length; i++) bytes[i] = Math.floor(Math.random() * 256);
  }
  let hex = "";
  for (const b of bytes) hex += b.toString(16).padStart(2, "0");
  return "r-" + hex;
}

export function raterToken(store: TokenStore, randomBytes?: (n: number) => Uint8Array): string {
  try {
    const existing = store.getItem(STORAGE_KEY);
    if (existing) return existing;
  } catch {
    // storage denied, fall through to a session-only token
  }
  const token = freshToken(randomBytes);
  try {
    store.setItem(STORAGE_KEY, token);
  } catch {
    // session-only token
  }
  return token;
}
