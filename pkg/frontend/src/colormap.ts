/** Client-side color mapping and layer compositing for slice frames.
 *
 * The uncertainty ramp is a fixed five-point perceptually ordered sequence
 * (dark blue, blue, teal, yellow-green, yellow); frame min/max from the
 * server metadata map to the ramp endpoints.
 */

export const UNCERTAINTY_RAMP: ReadonlyArray<[number, number, number]> = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

/** Interpolate the ramp at t in [0, 1]. */
export function rampColor(t: number): [number, number, number] {
  const clamped = Math.min(1, Math.max(0, t));
  const pos = clamped * (UNCERTAINTY_RAMP.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.min(lo + 1, UNCERTAINTY_RAMP.length - 1);
  const f = pos - lo;
  const a = UNCERTAINTY_RAMP[lo];
  const b = UNCERTAINTY_RAMP[hi];
  return [
    Math.round(a[0] + f * (b[0] - a[0])),
    Math.round(a[1] + f * (b[1] - a[1])),
    Math.round(a[2] + f * (b[2] - a[2])),
  ];
}

/** Grayscale RGBA pixels for a base volume frame windowed to [min, max]. */
export function grayscale(frame: Float32Array, min: number, max: number): Uint8ClampedArray {
  const out = new Uint8ClampedArray(frame.length * 4);
  const span = max > min ? max - min : 1;
  for (let i = 0; i < frame.length; i++) {
    const v = Math.round((255 * (frame[i] - min)) / span);
    out[4 * i] = v;
    out[4 * i + 1] = v;
    out[4 * i + 2] = v;
    out[4 * i + 3] = 255;
  }
  return out;
}

/**
 * Alpha-composite a color-mapped overlay frame onto base RGBA pixels.
 *
 * opacity 0 leaves the base untouched; min/max are the color scale bounds
 * (normally the slice metadata's min/max).
 */
export function compositeOverlay(
  base: Uint8ClampedArray,
  overlay: Float32Array,
  min: number,
  max: number,
  opacity: number,
): Uint8ClampedArray {
  if (base.length !== overlay.length * 4) {
    throw new Error(`layer size mismatch: ${base.length / 4} vs ${overlay.length}`);
  }
  const out = new Uint8ClampedArray(base);
  if (opacity <= 0) return out;
  const alpha = Math.min(1, opacity);
  const span = max > min ? max - min : 1;
  for (let i = 0; i < overlay.length; i++) {
    const [r, g, b] = rampColor((overlay[i] - min) / span);
    out[4 * i] = Math.round((1 - alpha) * out[4 * i] + alpha * r);
    out[4 * i + 1] = Math.round((1 - alpha) * out[4 * i + 1] + alpha * g);
    out[4 * i + 2] = Math.round((1 - alpha) * out[4 * i + 2] + alpha * b);
  }
  return out;
}
