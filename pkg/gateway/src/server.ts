/** Entry point: resolve config, load checkpoints, serve. */

import { createApp } from "./app.js";
import { createDeterministicBackend, createTransformersBackend, type ScoringBackend } from "./backend.js";
import { ConfigError, resolveConfig } from "./config.js";

async function main(): Promise<void> {
  let config;
  try {
    config = resolveConfig(process.env, process.argv.slice(2));
  } catch (err) {
    if (err instanceof ConfigError) {
      console.error(`config error: ${err.message}`);
      process.exit(2);
    }
    throw err;
  }

  let backend: ScoringBackend;
  if (config.backend === "deterministic") {
    backend = createDeterministicBackend();
    console.log("using deterministic word-overlap backend (no checkpoints)");
  } else {
    console.log(
      `loading rerank=${config.rerankModelId} nli=${config.nliModelId} (device=${config.device})`,
    );
    try {
      backend = await createTransformersBackend(config);
    } catch (err) {
      console.error(`model load failed: ${err instanceof Error ? err.message : err}`);
      process.exit(1);
    }
  }

  const app = createApp(backend);
  app.listen(config.port, config.host, () => {
    console.log(`gateway listening on http://${config.host}:${config.port}`);
  });
}

void main();
