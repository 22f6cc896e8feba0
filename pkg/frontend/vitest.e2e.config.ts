import { defineConfig } from "vitest/config";

// End-to-end run against a live gateway; the target comes from GATEWAY_URL.
export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/e2e.test.ts"],
    testTimeout: 180_000,
    hookTimeout: 60_000,
  },
});
