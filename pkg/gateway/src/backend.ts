/** Scoring backends: the real cross-encoder pair, plus a deterministic
 * word-overlap double for tests and offline development. */

import type { GatewayConfig } from "./config.js";

export type NliLabel = "entailment" | "neutral" | "contradiction";

export interface NliVerdict {
  label: NliLabel;
  /** Probability of the entailment label, whatever the argmax label is. */
  score: number;
}

export interface ScoringBackend {
  readonly rerankModelId: string;
  readonly nliModelId: string;
  /** Raw relevance logits, one per text, aligned with the input order. */
  rerank(query: string, texts: string[]): Promise<number[]>;
  nli(premise: string, hypothesis: string): Promise<NliVerdict>;
}

export class BackendError extends Error {}

function softmax(logits: number[]): number[] {
  const max = Math.max(...logits);
  const exps = logits.map((v) => Math.exp(v - max));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((v) => v / total);
}

/** Load both checkpoints; any failure propagates so startup can exit non-zero. */
export async function createTransformersBackend(
  config: GatewayConfig,
): Promise<ScoringBackend> {
  const { AutoTokenizer, AutoModelForSequenceClassification } = await import(
    "@xenova/transformers"
  );

  const [rerankTokenizer, rerankModel, nliTokenizer, nliModel] = await Promise.all([
    AutoTokenizer.from_pretrained(config.rerankModelId),
    AutoModelForSequenceClassification.from_pretrained(config.rerankModelId),
    AutoTokenizer.from_pretrained(config.nliModelId),
    AutoModelForSequenceClassification.from_pretrained(config.nliModelId),
  ]);

  const id2label: Record<string, string> = (nliModel as any).config.id2label ?? {};
  const labels = Object.keys(id2label)
    .sort((a, b) => Number(a) - Number(b))
    .map((k) => id2label[k].toLowerCase());
  const entailIndex = labels.findIndex((l) => l.startsWith("entail"));
  if (entailIndex === -1) {
    throw new BackendError(
      `nli model ${config.nliModelId} has no entailment label (labels: ${labels.join(", ")})`,
    );
  }

  async function scorePairs(queries: string[], texts: string[]): Promise<number[]> {
    const encoded = rerankTokenizer(queries, {
      text_pair: texts,
      padding: true,
      truncation: true,
    });
    const { logits } = await rerankModel(encoded);
    const [batch, width] = logits.dims as [number, number];
    if (width !== 1) {
      throw new BackendError(
        `rerank model ${config.rerankModelId} must output a single relevance logit, got ${width}`,
      );
    }
    return Array.from({ length: batch }, (_, i) => Number(logits.data[i]));
  }

  return {
    rerankModelId: config.rerankModelId,
    nliModelId: config.nliModelId,

    async rerank(query, texts) {
      const scores: number[] = [];
      for (let start = 0; start < texts.length; start += config.batchSize) {
        const chunk = texts.slice(start, start + config.batchSize);
        scores.push(...(await scorePairs(chunk.map(() => query), chunk)));
      }
      return scores;
    },

    async nli(premise, hypothesis) {
      const encoded = nliTokenizer(premise, {
        text_pair: hypothesis,
        padding: true,
        truncation: true,
      });
      const { logits } = await nliModel(encoded);
      const row = Array.from(logits.data as Float32Array, Number).slice(0, labels.length);
      const probs = softmax(row);
      let best = 0;
      for (let i = 1; i < probs.length; i += 1) if (probs[i] > probs[best]) best = i;
      const label = labels[best].startsWith("entail")
        ? "entailment"
        : labels[best].startsWith("contra")
          ? "contradiction"
          : "neutral";
      return { label, score: probs[entailIndex] };
    },
  };
}

const tokenize = (text: string): string[] =>
  text.toLowerCase().match(/[^\W_]+/gu) ?? [];

/** Word-overlap test double: protocol-shaped, fast, fully deterministic.
 *
 * Rerank score is the count of distinct query words present in the text
 * minus one, so unrelated texts go negative like raw cross-encoder logits.
 * NLI scores the fraction of hypothesis words present in the premise as the
 * entailment probability (so premise == hypothesis scores 1.0).
 */
export function createDeterministicBackend(): ScoringBackend {
  return {
    rerankModelId: "deterministic/word-overlap",
    nliModelId: "deterministic/word-overlap",

    async rerank(query, texts) {
      const queryWords = new Set(tokenize(query));
      return texts.map((text) => {
        const words = new Set(tokenize(text));
        let overlap = 0;
        for (const word of queryWords) if (words.has(word)) overlap += 1;
        return overlap - 1;
      });
    },

    async nli(premise, hypothesis) {
      const premiseWords = new Set(tokenize(premise));
      const hypothesisWords = tokenize(hypothesis);
      const hit = hypothesisWords.filter((w) => premiseWords.has(w)).length;
      const score = hypothesisWords.length === 0 ? 0 : hit / hypothesisWords.length;
      const negated = (text: string) => tokenize(text).includes("not");
      const label: NliLabel =
        score >= 0.5
          ? "entailment"
          : negated(premise) !== negated(hypothesis)
            ? "contradiction"
            : "neutral";
      return { label, score };
    },
  };
}
