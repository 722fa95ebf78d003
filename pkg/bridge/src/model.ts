/**
 * Linear-softmax classifier plus the fixed demo instance.
 *
 * Arithmetic mirrors the engine's builtin dense layer: float32 weights,
 * float64 accumulation, logits rounded to float32 before a float64 softmax.
 * Keeping the two pipelines numerically aligned is what lets bridge-served
 * predictions reproduce builtin ones within float32 resolution.
 */
import * as fs from 'node:fs';

export interface LinearModel {
  numClasses: number;
  inputShape: [number, number, number];
  /** numClasses x inputDim, row-major */
  weights: Float32Array;
  bias: Float32Array;
}

export function inputDim(model: LinearModel): number {
  const [c, h, w] = model.inputShape;
  return c * h * w;
}

/** Formula-defined weights: w[k][j] = f32(0.5 sin(1 + k*D + j)), b[k] = f32(0.1 cos(1 + k)). */
export function demoModel(
  numClasses = 3,
  inputShape: [number, number, number] = [1, 8, 8],
): LinearModel {
  const [c, h, w] = inputShape;
  const dim = c * h * w;
  const weights = new Float32Array(numClasses * dim);
  const bias = new Float32Array(numClasses);
  for (let k = 0; k < numClasses; k++) {
    for (let j = 0; j < dim; j++) {
      weights[k * dim + j] = Math.fround(0.5 * Math.sin(1 + k * dim + j));
    }
    bias[k] = Math.fround(0.1 * Math.cos(1 + k));
  }
  return { numClasses, inputShape: [c, h, w], weights, bias };
}

interface ModelFile {
  num_classes: number;
  input_shape: [number, number, number];
  weights: number[][];
  bias: number[];
}

export function loadModelFile(path: string): LinearModel {
  const doc = JSON.parse(fs.readFileSync(path, 'utf-8')) as ModelFile;
  const [c, h, w] = doc.input_shape;
  const dim = c * h * w;
  if (doc.weights.length !== doc.num_classes) {
    throw new Error(`weights have ${doc.weights.length} rows, expected ${doc.num_classes}`);
  }
  const weights = new Float32Array(doc.num_classes * dim);
  for (let k = 0; k < doc.num_classes; k++) {
    if (doc.weights[k].length !== dim) {
      throw new Error(`weights row ${k} has ${doc.weights[k].length} entries, expected ${dim}`);
    }
    weights.set(doc.weights[k], k * dim);
  }
  if (doc.bias.length !== doc.num_classes) {
    throw new Error(`bias has ${doc.bias.length} entries, expected ${doc.num_classes}`);
  }
  return {
    numClasses: doc.num_classes,
    inputShape: [c, h, w],
    weights,
    bias: Float32Array.from(doc.bias),
  };
}

/** One batch of flattened images (batch x dim) to probability rows (batch x K). */
export function predictBatch(model: LinearModel, input: Float64Array, batch: number): Float64Array {
  const dim = inputDim(model);
  const k = model.numClasses;
  const out = new Float64Array(batch * k);
  const logits = new Float64Array(k);
  for (let b = 0; b < batch; b++) {
    const base = b * dim;
    for (let c = 0; c < k; c++) {
      let acc = 0;
      const row = c * dim;
      for (let j = 0; j < dim; j++) {
        acc += model.weights[row + j] * input[base + j];
      }
      logits[c] = Math.fround(acc + model.bias[c]);
    }
    let max = -Infinity;
    for (const v of logits) max = Math.max(max, v);
    let sum = 0;
    for (let c = 0; c < k; c++) {
      out[b * k + c] = Math.exp(logits[c] - max);
      sum += out[b * k + c];
    }
    for (let c = 0; c < k; c++) out[b * k + c] /= sum;
  }
  return out;
}
