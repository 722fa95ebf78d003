/**
 * Request/response loop of the adapter.
 *
 * Every incoming line produces exactly one reply line in order; failures of
 * any kind (malformed JSON, bad shapes, a throwing predict function) turn
 * into protocol error messages and the loop keeps serving.
 */
import * as readline from 'node:readline';
import type { Readable, Writable } from 'node:stream';

import { decodeF32, encodeF32 } from './codec.js';
import { inputDim, LinearModel, predictBatch } from './model.js';
import { Request, serializeError, serializeProbs, serializeReady } from './protocol.js';

export type PredictFn = (model: LinearModel, input: Float64Array, batch: number) => Float64Array;

export class AdapterSession {
  constructor(
    private readonly model: LinearModel,
    private readonly predict: PredictFn = predictBatch,
  ) {}

  /** One reply line (without newline) for one request line. */
  handleLine(line: string): string {
    let msg: Request;
    try {
      msg = JSON.parse(line) as Request;
    } catch {
      return serializeError(0, 'malformed request: not valid JSON');
    }
    if (msg.type === 'hello') {
      return serializeReady(this.model.numClasses, this.model.inputShape);
    }
    if (msg.type === 'predict') {
      return this.handlePredict(msg);
    }
    const id = typeof (msg as { id?: unknown }).id === 'number' ? (msg as { id: number }).id : 0;
    return serializeError(id, `unknown request type ${JSON.stringify((msg as { type?: unknown }).type)}`);
  }

  private handlePredict(msg: PredictRequest): string {
    const id = typeof msg.id === 'number' ? msg.id : 0;
    try {
      if (!Array.isArray(msg.shape) || msg.shape.length !== 4) {
        return serializeError(id, 'shape must be [B, C, H, W]');
      }
      const [batch, c, h, w] = msg.shape;
      const [mc, mh, mw] = this.model.inputShape;
      if (c !== mc || h !== mh || w !== mw) {
        return serializeError(id, `input shape [${c},${h},${w}] does not match model [${mc},${mh},${mw}]`);
      }
      if (!Number.isInteger(batch) || batch < 1) {
        return serializeError(id, `batch size ${batch} must be a positive integer`);
      }
      if (msg.dtype !== 'f32le') {
        return serializeError(id, `unsupported dtype ${JSON.stringify(msg.dtype)}`);
      }
      const input = decodeF32(msg.data, batch * inputDim(this.model));
      const probs = this.predict(this.model, input, batch);
      return serializeProbs(id, batch, this.model.numClasses, encodeF32(probs));
    } catch (err) {
      return serializeError(id, err instanceof Error ? err.message : String(err));
    }
  }
}

/** Serve until the input stream closes. */
export async function serve(model: LinearModel, input: Readable, output: Writable): Promise<void> {
  const session = new AdapterSession(model);
  const lines = readline.createInterface({ input, crlfDelay: Infinity });
  for await (const line of lines) {
    if (line.trim() === '') continue;
    output.write(session.handleLine(line) + '\n');
  }
}
