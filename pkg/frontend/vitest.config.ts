import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.spec.ts"],
    globalSetup: ["tests/global-setup.ts"],
    // Walking a replayed session through the real service takes a few
    // seconds per test; the whole suite still has to finish inside a minute.
    testTimeout: 30_000,
    hookTimeout: 60_000,
  },
});
