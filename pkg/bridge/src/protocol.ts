/**
 * Message shapes and canonical serialization for the wire protocol.
 *
 * Replies are emitted with a fixed key order and no whitespace so that the
 * handshake and error grammar is byte-stable across adapter versions.
 */

export interface HelloRequest {
  type: 'hello';
  version: number;
}

export interface PredictRequest {
  type: 'predict';
  id: number;
  shape: [number, number, number, number];
  dtype: 'f32le';
  data: string;
}

export type Request = HelloRequest | PredictRequest;

export function serializeReady(numClasses: number, inputShape: [number, number, number]): string {
  return JSON.stringify({ type: 'ready', num_classes: numClasses, input_shape: inputShape });
}

export function serializeProbs(id: number, batch: number, numClasses: number, data: string): string {
  return JSON.stringify({ type: 'probs', id, shape: [batch, numClasses], dtype: 'f32le', data });
}

export function serializeError(id: number, message: string): string {
  return JSON.stringify({ type: 'error', id, message });
}
