import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // Every parity test shells out to the engine CLI, which pays Python
    // interpreter startup per call.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
