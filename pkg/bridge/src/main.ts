#!/usr/bin/env node
/**
 * Adapter entry point: serve a linear-softmax classifier over stdin/stdout.
 *
 *   node dist/main.js                         demo model (3 classes, 1x8x8)
 *   node dist/main.js --classes 5 --shape 3,4,4
 *   node dist/main.js --weights model.json    {num_classes, input_shape, weights, bias}
 */
import { demoModel, LinearModel, loadModelFile } from './model.js';
import { serve } from './session.js';

function buildModel(argv: string[]): LinearModel {
  let classes = 3;
  let shape: [number, number, number] = [1, 8, 8];
  let weightsPath: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === '--weights') {
      weightsPath = argv[++i];
    } else if (arg === '--classes') {
      classes = Number(argv[++i]);
    } else if (arg === '--shape') {
      const parts = argv[++i].split(',').map(Number);
      if (parts.length !== 3 || parts.some((v) => !Number.isInteger(v) || v < 1)) {
        throw new Error(`--shape needs C,H,W positive integers, got ${argv[i]}`);
      }
      shape = parts as [number, number, number];
    } else {
      throw new Error(`unknown argument ${arg}`);
    }
  }
  return weightsPath ? loadModelFile(weightsPath) : demoModel(classes, shape);
}

async function main(): Promise<void> {
  let model: LinearModel;
  try {
    model = buildModel(process.argv.slice(2));
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    process.exit(2);
  }
  await serve(model, process.stdin, process.stdout);
}

void main();
