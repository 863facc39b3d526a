import type { SliceFrame, SliceMeta } from "./types.js";

/** Which layers are composited into the rendered frame. */
export interface LayerFlags {
  volume: boolean;
  warped: boolean;
  uncertainty: boolean;
  landmarks: boolean;
  fieldMagnitude: boolean;
}

export interface ViewState {
  sessionId: string;
  axis: "x" | "y" | "z";
  index: number;
  layers: LayerFlags;
  overlayOpacity: number;
  /** Color scale endpoints; null means use the frame metadata min/max. */
  scaleBounds: [number, number] | null;
  /** Server revision of the data currently on screen. */
  renderedRevision: number;
}

export function defaultView(sessionId: string): ViewState {
  return {
    sessionId,
    axis: "z",
    index: 0,
    layers: {
      volume: true,
      warped: false,
      uncertainty: true,
      landmarks: true,
      fieldMagnitude: false,
    },
    overlayOpacity: 0.5,
    scaleBounds: null,
    renderedRevision: -1,
  };
}

/** The stale badge must show whenever the frame lags the server. */
export function isStale(view: ViewState, serverRevision: number): boolean {
  return view.renderedRevision !== serverRevision;
}

export function axisNumber(axis: "x" | "y" | "z"): number {
  return { x: 0, y: 1, z: 2 }[axis];
}

/** Flat index into a slice frame; the second in-plane axis varies fastest. */
export function frameValue(frame: SliceFrame, i0: number, i1: number): number {
  const [d0, d1] = frame.meta.dims;
  if (i0 < 0 || i0 >= d0 || i1 < 0 || i1 >= d1) {
    throw new Error(`pixel (${i0}, ${i1}) outside frame ${d0}x${d1}`);
  }
  return frame.values[i0 * d1 + i1];
}

/**
 * World coordinates (mm) of an in-plane pixel, from the grid header the
 * server attached to the slice. The fixed axis uses the slice index.
 */
export function sliceToWorld(meta: SliceMeta, i0: number, i1: number): number[] {
  const ax = axisNumber(meta.axis as "x" | "y" | "z");
  const inPlane = [0, 1, 2].filter((a) => a !== ax);
  const world = [0, 0, 0];
  world[ax] = meta.grid.origin_mm[ax] + meta.index * meta.grid.spacing_mm[ax];
  world[inPlane[0]] = meta.origin_mm[0] + i0 * meta.spacing_mm[0];
  world[inPlane[1]] = meta.origin_mm[1] + i1 * meta.spacing_mm[1];
  return world;
}

/** Nearest in-plane pixel of a world point; inverse of sliceToWorld. */
export function worldToSlice(meta: SliceMeta, world: number[]): [number, number] {
  const ax = axisNumber(meta.axis as "x" | "y" | "z");
  const inPlane = [0, 1, 2].filter((a) => a !== ax);
  const i0 = Math.round((world[inPlane[0]] - meta.origin_mm[0]) / meta.spacing_mm[0]);
  const i1 = Math.round((world[inPlane[1]] - meta.origin_mm[1]) / meta.spacing_mm[1]);
  return [i0, i1];
}

/** In-plane pixel with the largest frame value (peak-uncertainty probe). */
export function argmaxPixel(frame: SliceFrame): [number, number] {
  let best = 0;
  for (let i = 1; i < frame.values.length; i++) {
    if (frame.values[i] > frame.values[best]) best = i;
  }
  const d1 = frame.meta.dims[1];
  return [Math.floor(best / d1), best % d1];
}
