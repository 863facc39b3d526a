/** Payload shapes of the session service (the server is the source of truth). */

export interface KernelDoc {
  family: string;
  sill: number;
  param: number;
  nugget: number;
}

export interface GridDoc {
  origin_mm: number[];
  spacing_mm: number[];
  dims: number[];
}

export interface LandmarkDoc {
  id: number;
  pre: number[];
  post: number[];
  source: string;
  residual_mm: number;
}

export interface SessionSummary {
  id: string;
  revision: number;
  n_landmarks: number;
  n_manual: number;
  landmarks: LandmarkDoc[];
  affine_available: boolean;
  affine_row_major: number[] | null;
  kernel_source: string | null;
  kernels: KernelDoc[];
  protocol: string | null;
  variogram_eligible: boolean;
  grid: GridDoc;
  volumes: { pre: boolean; post: boolean };
}

export interface SliceMeta {
  kind: string;
  axis: string;
  index: number;
  dims: number[];
  spacing_mm: number[];
  origin_mm: number[];
  grid: GridDoc;
  min: number;
  max: number;
  revision: number;
}

export interface SliceFrame {
  meta: SliceMeta;
  /** Row-major values, dims[0] varying fastest. */
  values: Float32Array;
}

export interface AddLandmarkResponse {
  revision: number;
  landmark_id: number;
  uncertainty_before: number;
  uncertainty_after: number;
  summary: SessionSummary;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: Record<string, unknown>;
}
