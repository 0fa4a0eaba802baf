/** Matrix container used across the file boundary: row-major float64. */
export interface Matrix {
  rows: number;
  cols: number;
  /** Row-major values, length rows * cols. */
  data: Float64Array;
}

/** Eight-byte magic opening every binary matrix file. */
export const MAGIC = "BFMMBIN1";

const HEADER_BYTES = 16; // magic + uint32 rows + uint32 cols, little-endian

/** Raised when a buffer does not parse as a matrix file. */
export class FormatError extends Error {}

/** Serialize a matrix to the engine's binary file layout. */
export function encodeMatrix(m: Matrix): Buffer {
  if (m.data.length !== m.rows * m.cols) {
    throw new FormatError(
      `data length ${m.data.length} does not match ${m.rows}x${m.cols}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + 8 * m.data.length);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(m.rows, 8);
  buf.writeUInt32LE(m.cols, 12);
  for (let i = 0; i < m.data.length; i++) {
    buf.writeDoubleLE(m.data[i], HEADER_BYTES + 8 * i);
  }
  return buf;
}

/** Parse a binary matrix file, validating magic and byte count. */
export function decodeMatrix(buf: Buffer): Matrix {
  if (buf.length < HEADER_BYTES) {
    throw new FormatError(`truncated header (${buf.length} bytes)`);
  }
  const magic = buf.toString("ascii", 0, 8);
  if (magic !== MAGIC) {
    throw new FormatError(`bad magic ${JSON.stringify(magic)}`);
  }
  const rows = buf.readUInt32LE(8);
  const cols = buf.readUInt32LE(12);
  const expected = HEADER_BYTES + 8 * rows * cols;
  if (buf.length !== expected) {
    throw new FormatError(
      `expected ${expected} bytes for ${rows}x${cols}, found ${buf.length}`);
  }
  const data = new Float64Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readDoubleLE(HEADER_BYTES + 8 * i);
  }
  return { rows, cols, data };
}

/** Pack (N, 3) points plus optional (N, m) weights into one matrix, the
 * shape the engine reads as a point file. */
export function pointsMatrix(points: Matrix, weights?: Matrix): Matrix {
  if (points.cols !== 3) {
    throw new FormatError(`points need 3 columns, got ${points.cols}`);
  }
  if (!weights) {
    return points;
  }
  if (weights.rows !== points.rows) {
    throw new FormatError(
      `weights rows ${weights.rows} do not match points rows ${points.rows}`);
  }
  const cols = 3 + weights.cols;
  const data = new Float64Array(points.rows * cols);
  for (let r = 0; r < points.rows; r++) {
    data.set(points.data.subarray(3 * r, 3 * r + 3), cols * r);
    data.set(
      weights.data.subarray(weights.cols * r, weights.cols * (r + 1)),
      cols * r + 3);
  }
  return { rows: points.rows, cols, data };
}

/** Wrap a flat array as a matrix without copying. */
export function asMatrix(data: Float64Array, rows: number, cols: number): Matrix {
  if (data.length !== rows * cols) {
    throw new FormatError(
      `data length ${data.length} does not match ${rows}x${cols}`);
  }
  return { rows, cols, data };
}
