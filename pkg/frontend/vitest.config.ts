import { defineConfig } from "vitest/config";

// Generous timeouts: the CLI suite compiles the package in beforeAll and
// spawns real node/python3 subprocesses per test.
export default defineConfig({
  test: {
    testTimeout: 60000,
    hookTimeout: 180000,
  },
});
