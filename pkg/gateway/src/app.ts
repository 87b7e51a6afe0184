/** HTTP surface: /rerank, /nli, /health.
 *
 * Request handling is concurrent; model inference is serialized behind an
 * in-process queue so identical requests score identically regardless of
 * load, and the runtime never interleaves two forward passes.
 */

import express, { type Express, type NextFunction, type Request, type Response } from "express";
import { z } from "zod";

import type { ScoringBackend } from "./backend.js";

const rerankSchema = z.object({
  query: z.string(),
  texts: z.array(z.string()),
});

const nliSchema = z.object({
  premise: z.string(),
  hypothesis: z.string(),
});

class InferenceQueue {
  private tail: Promise<unknown> = Promise.resolve();

  run<T>(job: () => Promise<T>): Promise<T> {
    const next = this.tail.then(job, job);
    this.tail = next.then(
      () => undefined,
      () => undefined,
    );
    return next;
  }
}

function parse<T>(schema: z.ZodType<T>, body: unknown, res: Response): T | undefined {
  const result = schema.safeParse(body);
  if (result.success) return result.data;
  const detail = result.error.issues
    .map((issue) => `${issue.path.join(".") || "body"}: ${issue.message}`)
    .join("; ");
  res.status(400).json({ error: detail });
  return undefined;
}

export function createApp(backend: ScoringBackend): Express {
  const app = express();
  const queue = new InferenceQueue();
  app.use(express.json({ limit: "5mb" }));

  app.get("/health", (_req, res) => {
    res.json({
      status: "ok",
      ready: true,
      models: { rerank: backend.rerankModelId, nli: backend.nliModelId },
    });
  });

  app.post("/rerank", async (req, res, next) => {
    const body = parse(rerankSchema, req.body, res);
    if (body === undefined) return;
    if (body.texts.length === 0) {
      res.json({ scores: [] });
      return;
    }
    try {
      const scores = await queue.run(() => backend.rerank(body.query, body.texts));
      if (scores.length !== body.texts.length) {
        throw new Error(
          `backend returned ${scores.length} scores for ${body.texts.length} texts`,
        );
      }
      res.json({ scores });
    } catch (err) {
      next(err);
    }
  });

  app.post("/nli", async (req, res, next) => {
    const body = parse(nliSchema, req.body, res);
    if (body === undefined) return;
    try {
      const verdict = await queue.run(() => backend.nli(body.premise, body.hypothesis));
      res.json({ label: verdict.label, score: verdict.score });
    } catch (err) {
      next(err);
    }
  });

  // Body-parser failures (invalid JSON, wrong content type) are client errors;
  // everything else is a backend failure.
  app.use((err: Error & { status?: number }, _req: Request, res: Response, _next: NextFunction) => {
    const status = err.status !== undefined && err.status < 500 ? err.status : 500;
    res.status(status).json({ error: err.message });
  });

  return app;
}
