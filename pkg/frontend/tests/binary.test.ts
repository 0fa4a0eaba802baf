import { describe, expect, it } from "vitest";

import {
  FormatError,
  asMatrix,
  decodeMatrix,
  encodeMatrix,
  pointsMatrix,
} from "../src/binary.js";

describe("encode/decode", () => {
  it("round trips a matrix bit for bit", () => {
    const data = new Float64Array([1.5, -0.25, 3.3333333333333335, 0, 1e-300, 2 ** 53]);
    const m = asMatrix(data, 2, 3);
    const back = decodeMatrix(encodeMatrix(m));
    expect(back.rows).toBe(2);
    expect(back.cols).toBe(3);
    expect(Array.from(back.data)).toEqual(Array.from(data));
  });

  it("round trips an empty matrix", () => {
    const back = decodeMatrix(encodeMatrix(asMatrix(new Float64Array(0), 0, 4)));
    expect(back.rows).toBe(0);
    expect(back.cols).toBe(4);
    expect(back.data.length).toBe(0);
  });

  it("rejects a wrong magic string", () => {
    const buf = encodeMatrix(asMatrix(new Float64Array([1]), 1, 1));
    buf.write("NOTMINE!", 0, "ascii");
    expect(() => decodeMatrix(buf)).toThrow(FormatError);
    expect(() => decodeMatrix(buf)).toThrow(/magic/);
  });

  it("rejects a truncated header", () => {
    expect(() => decodeMatrix(Buffer.from("BFMM"))).toThrow(/truncated/);
  });

  it("rejects a payload shorter than the header promises", () => {
    const buf = encodeMatrix(asMatrix(new Float64Array(12), 4, 3));
    expect(() => decodeMatrix(buf.subarray(0, buf.length - 8))).toThrow(/4x3/);
  });

  it("refuses to encode mismatched dimensions", () => {
    expect(() => encodeMatrix({ rows: 2, cols: 2, data: new Float64Array(3) }))
      .toThrow(FormatError);
  });
});

describe("pointsMatrix", () => {
  it("interleaves coordinates and weight columns row by row", () => {
    const points = asMatrix(new Float64Array([1, 2, 3, 4, 5, 6]), 2, 3);
    const weights = asMatrix(new Float64Array([10, 11, 20, 21]), 2, 2);
    const packed = pointsMatrix(points, weights);
    expect(packed.cols).toBe(5);
    expect(Array.from(packed.data)).toEqual([1, 2, 3, 10, 11, 4, 5, 6, 20, 21]);
  });

  it("passes bare points through unchanged", () => {
    const points = asMatrix(new Float64Array([1, 2, 3]), 1, 3);
    expect(pointsMatrix(points)).toBe(points);
  });

  it("rejects non-3-column points and row mismatches", () => {
    const flat = asMatrix(new Float64Array([1, 2]), 1, 2);
    expect(() => pointsMatrix(flat)).toThrow(/3 columns/);
    const points = asMatrix(new Float64Array([1, 2, 3]), 1, 3);
    const weights = asMatrix(new Float64Array([1, 2]), 2, 1);
    expect(() => pointsMatrix(points, weights)).toThrow(/rows/);
  });
});

describe("asMatrix", () => {
  it("rejects a length that disagrees with the shape", () => {
    expect(() => asMatrix(new Float64Array(5), 2, 3)).toThrow(FormatError);
  });
});
