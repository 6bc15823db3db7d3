import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // several tests shell out to the Python core CLI, which pays the
    // interpreter + numpy/sklearn import cost on every invocation
    testTimeout: 60000,
  },
});
