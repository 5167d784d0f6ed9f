import { defineConfig } from "vitest/config";

export default defineConfig({
  build: {
    outDir: "dist",
    sourcemap: true,
  },
  server: {
    // while developing, forward API calls to a locally running backend
    proxy: {
      "/session": "http://127.0.0.1:8711",
      "/health": "http://127.0.0.1:8711",
    },
  },
  test: {
    environment: "jsdom",
  },
});
