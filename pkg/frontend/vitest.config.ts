import { defineConfig } from "vitest/config";

// Generous timeouts: one suite boots the real Python service and walks a
// whole study through it.
export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
