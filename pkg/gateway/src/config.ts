/** Gateway configuration: defaults < environment < flags. */

export interface GatewayConfig {
  rerankModelId: string;
  nliModelId: string;
  host: string;
  port: number;
  batchSize: number;
  device: string;
  backend: "transformers" | "deterministic";
}

export const DEFAULT_CONFIG: GatewayConfig = {
  rerankModelId: "Xenova/bge-reranker-base",
  nliModelId: "Xenova/nli-deberta-v3-xsmall",
  host: "127.0.0.1",
  port: 8090,
  batchSize: 16,
  device: "cpu",
  backend: "transformers",
};

const ENV_KEYS: Record<keyof GatewayConfig, string> = {
  rerankModelId: "GATEWAY_RERANK_MODEL",
  nliModelId: "GATEWAY_NLI_MODEL",
  host: "GATEWAY_HOST",
  port: "GATEWAY_PORT",
  batchSize: "GATEWAY_BATCH_SIZE",
  device: "GATEWAY_DEVICE",
  backend: "GATEWAY_BACKEND",
};

const FLAGS: Record<string, keyof GatewayConfig> = {
  "--rerank-model": "rerankModelId",
  "--nli-model": "nliModelId",
  "--host": "host",
  "--port": "port",
  "--batch-size": "batchSize",
  "--device": "device",
  "--backend": "backend",
};

export class ConfigError extends Error {}

function assign(config: GatewayConfig, key: keyof GatewayConfig, raw: string): void {
  if (key === "port" || key === "batchSize") {
    const value = Number(raw);
    if (!Number.isInteger(value) || value < 1) {
      throw new ConfigError(`${key} must be a positive integer, got ${JSON.stringify(raw)}`);
    }
    config[key] = value;
  } else if (key === "backend") {
    if (raw !== "transformers" && raw !== "deterministic") {
      throw new ConfigError(`backend must be "transformers" or "deterministic", got ${JSON.stringify(raw)}`);
    }
    config[key] = raw;
  } else {
    config[key] = raw;
  }
}

export function resolveConfig(
  env: NodeJS.ProcessEnv = process.env,
  argv: string[] = [],
): GatewayConfig {
  const config: GatewayConfig = { ...DEFAULT_CONFIG };
  for (const [key, envName] of Object.entries(ENV_KEYS) as [keyof GatewayConfig, string][]) {
    const raw = env[envName];
    if (raw !== undefined && raw !== "") assign(config, key, raw);
  }
  for (let i = 0; i < argv.length; i += 1) {
    const key = FLAGS[argv[i]];
    if (key === undefined) throw new ConfigError(`unknown flag ${argv[i]}`);
    const raw = argv[i + 1];
    if (raw === undefined) throw new ConfigError(`flag ${argv[i]} needs a value`);
    assign(config, key, raw);
    i += 1;
  }
  return config;
}
