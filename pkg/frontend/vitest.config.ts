import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'happy-dom',
    environmentOptions: {
      happyDOM: {
        url: 'http://127.0.0.1:8099/',
        settings: {
          // the e2e suite talks to the real service on another port
          fetch: { disableSameOriginPolicy: true },
        },
      },
    },
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
