/** Ambient declaration for the optional checkpoint runtime.
 *
 * @xenova/transformers is an optional peer dependency loaded dynamically at
 * startup; this shim keeps the build independent of whether it is installed.
 */
declare module "@xenova/transformers" {
  export const AutoTokenizer: {
    from_pretrained(modelId: string, options?: Record<string, unknown>): Promise<any>;
  };
  export const AutoModelForSequenceClassification: {
    from_pretrained(modelId: string, options?: Record<string, unknown>): Promise<any>;
  };
  export const env: Record<string, any>;
}
