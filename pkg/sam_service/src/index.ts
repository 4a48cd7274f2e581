import path from "path";

import { loadCheckpoint } from "./model";
import { buildApp, newState } from "./server";

function main() {
  const checkpoint = process.env.SAM_SERVICE_CHECKPOINT
    ?? path.join(__dirname, "..", "checkpoints", "geometric-v1.json");
  const port = Number(process.env.SAM_SERVICE_PORT ?? 8662);
  const device = process.env.SAM_SERVICE_DEVICE ?? "cpu";
  const cacheSize = Number(process.env.SAM_SERVICE_CACHE ?? 64);

  const state = newState(cacheSize);
  const app = buildApp(state);
  const server = app.listen(port, () => {
    // Load after binding so /healthz can answer "not ready" during startup.
    try {
      state.model = loadCheckpoint(checkpoint);
      state.modelName = `${state.model.name} (${device})`;
      console.log(`sam-service ready on :${port} with ${state.modelName}`);
    } catch (err) {
      console.error(`checkpoint unreadable: ${err}`);
      server.close(() => process.exit(1));
    }
  });
}

main();
