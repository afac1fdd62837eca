/**
 * View-side state: surface buffers, preview overlay, selections and the
 * sequence-id reconciliation for drag previews. No deformation math
 * happens here beyond adding the bridge-supplied overlay to base
 * positions for rendering.
 */

import type { SkeletonMsg, SurfaceMsg } from "./protocol.js";

/** Deterministic, well-separated color for a feature tag (golden-angle hue). */
export function tagColor(tag: number): [number, number, number] {
  const hue = ((tag * 137.50776405) % 360) / 360;
  const s = 0.65;
  const v = 0.9;
  const i = Math.floor(hue * 6);
  const f = hue * 6 - i;
  const p = v * (1 - s);
  const q = v * (1 - f * s);
  const t = v * (1 - (1 - f) * s);
  switch (i % 6) {
    case 0:
      return [v, t, p];
    case 1:
      return [q, v, p];
    case 2:
      return [p, v, t];
    case 3:
      return [p, q, v];
    case 4:
      return [t, p, v];
    default:
      return [v, p, q];
  }
}

export interface SurfaceBuffers {
  positions: Float32Array; // base + cumulative displacement
  indices: Uint32Array;
  colors: Float32Array; // per-triangle-corner rgb (non-indexed by feature)
}

export class ViewState {
  surface: SurfaceMsg | null = null;
  skeleton: SkeletonMsg | null = null;
  /** Overlay from the latest accepted preview; length 3n or empty. */
  preview: Float64Array = new Float64Array(0);
  selectedFeatures: Set<number> = new Set();
  fixedFeatures: Set<number> = new Set();
  selectedJoint: number | null = null;
  pinnedJoints: Set<number> = new Set();
  harmonicOrder = 2;
  pendingCommit = false;
  private lastAppliedSeq = -1;

  loadSurface(msg: SurfaceMsg): void {
    if (msg.positions.length % 3 !== 0 || msg.triangles.length % 3 !== 0) {
      throw new Error("malformed surface message");
    }
    if (msg.feature.length * 3 !== msg.triangles.length) {
      throw new Error("feature tags do not match triangle count");
    }
    this.surface = msg;
    this.preview = Float64Array.from(msg.displacement);
    this.skeleton = null;
    this.selectedJoint = null;
  }

  loadSkeleton(msg: SkeletonMsg): void {
    this.skeleton = msg;
    this.selectedJoint = null;
    this.pinnedJoints.clear();
  }

  featureTags(): number[] {
    if (!this.surface) return [];
    return [...new Set(this.surface.feature)].sort((a, b) => a - b);
  }

  /**
   * Accept a preview overlay only if its sequence id is newer than the
   * last applied one; stale (out-of-order) responses are discarded.
   */
  acceptPreview(seq: number, displacement: number[]): boolean {
    if (seq <= this.lastAppliedSeq) return false;
    if (this.surface && displacement.length !== this.surface.positions.length) {
      throw new Error("preview overlay length does not match surface");
    }
    this.lastAppliedSeq = seq;
    this.preview = Float64Array.from(displacement);
    return true;
  }

  clearPreviewTo(displacement: number[]): void {
    this.preview = Float64Array.from(displacement);
  }

  /** Rendered vertex positions: base plus the bridge-supplied overlay. */
  displacedPositions(): Float64Array {
    if (!this.surface) return new Float64Array(0);
    const base = this.surface.positions;
    const out = new Float64Array(base.length);
    const ov = this.preview.length === base.length ? this.preview : null;
    for (let i = 0; i < base.length; i++) {
      out[i] = base[i] + (ov ? ov[i] : 0);
    }
    return out;
  }

  /** Joint positions displaced by nothing: joints always render at solve-time coords. */
  jointDegrees(): number[] {
    if (!this.skeleton) return [];
    const n = this.skeleton.joints.length / 3;
    const deg = new Array<number>(n).fill(0);
    for (const j of this.skeleton.bones) deg[j] += 1;
    return deg;
  }

  curveOf(joint: number): number[] | null {
    if (!this.skeleton) return null;
    for (const curve of this.skeleton.curves) {
      if (curve.includes(joint)) return curve;
    }
    return null;
  }

  /** Flat non-indexed render buffers colored by feature tag. */
  buildBuffers(): SurfaceBuffers {
    if (!this.surface) throw new Error("no surface loaded");
    const pos = this.displacedPositions();
    const tris = this.surface.triangles;
    const ntri = tris.length / 3;
    const positions = new Float32Array(tris.length * 3);
    const colors = new Float32Array(tris.length * 3);
    const indices = new Uint32Array(tris.length);
    for (let t = 0; t < ntri; t++) {
      const [r, g, b] = tagColor(this.surface.feature[t]);
      for (let c = 0; c < 3; c++) {
        const v = tris[3 * t + c];
        const dst = 3 * (3 * t + c);
        positions[dst] = pos[3 * v];
        positions[dst + 1] = pos[3 * v + 1];
        positions[dst + 2] = pos[3 * v + 2];
        colors[dst] = r;
        colors[dst + 1] = g;
        colors[dst + 2] = b;
        indices[3 * t + c] = 3 * t + c;
      }
    }
    return { positions, indices, colors };
  }
}
