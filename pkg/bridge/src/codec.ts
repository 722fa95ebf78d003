/**
 * Base64 transport of little-endian float32 arrays.
 *
 * The wire format pins byte order explicitly, so encoding goes through a
 * DataView rather than relying on platform endianness.
 */

export function encodeF32(values: ArrayLike<number>): string {
  const buf = new ArrayBuffer(values.length * 4);
  const view = new DataView(buf);
  for (let i = 0; i < values.length; i++) {
    view.setFloat32(i * 4, values[i], true);
  }
  return Buffer.from(buf).toString('base64');
}

export function decodeF32(data: string, expectedCount: number): Float64Array {
  const buf = Buffer.from(data, 'base64');
  if (buf.length !== expectedCount * 4) {
    throw new Error(
      `payload is ${buf.length} bytes, expected ${expectedCount * 4} for ${expectedCount} float32 values`,
    );
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const out = new Float64Array(expectedCount);
  for (let i = 0; i < expectedCount; i++) {
    out[i] = view.getFloat32(i * 4, true);
  }
  return out;
}
