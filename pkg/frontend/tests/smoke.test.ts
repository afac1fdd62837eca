import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { JointDrag } from "../src/drag.js";
import {
  AckMsg,
  BridgeClient,
  PreviewMsg,
  SkeletonMsg,
  SurfaceMsg,
} from "../src/protocol.js";
import { tagColor, ViewState } from "../src/state.js";
import { Fixture, startFixture, TcpTransport } from "./helpers.js";

const FIXTURES = join(__dirname, "fixtures");

async function until(cond: () => boolean, ms: number): Promise<void> {
  const deadline = Date.now() + ms;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error("condition never became true");
    await new Promise((r) => setTimeout(r, 50));
  }
}

describe("cube steering session", () => {
  let fixture: Fixture;
  let client: BridgeClient;
  const state = new ViewState();

  beforeAll(async () => {
    fixture = await startFixture(join(FIXTURES, "gen_cube_mesh.py"));
    client = new BridgeClient(await TcpTransport.connect(fixture.uiPort));
  }, 120_000);

  afterAll(async () => {
    client?.close();
    await fixture?.stop();
  });

  it("loads a six-feature cube with six distinct colors", async () => {
    const surface = (await client.request({ type: "get_surface" })) as SurfaceMsg;
    expect(surface.type).toBe("surface");
    state.loadSurface(surface);
    const tags = state.featureTags();
    expect(tags).toEqual([0, 1, 2, 3, 4, 5]);
    const colors = new Set(tags.map((t) => tagColor(t).join(",")));
    expect(colors.size).toBe(6);
  }, 60_000);

  it("translates a selected feature with k=2 and previews", async () => {
    state.selectedFeatures.add(1);
    state.fixedFeatures.add(0);
    const k = 2;
    const step: [number, number, number] = [0.01, 0, 0];
    const resp = (await client.request({
      type: "action",
      kind: "translate",
      handles: [...state.selectedFeatures],
      fixed: [...state.fixedFeatures],
      order: 2,
      params: { vector: [k * step[0], k * step[1], k * step[2]] },
    })) as PreviewMsg;
    expect(resp.type).toBe("preview");
    state.clearPreviewTo(resp.displacement);
    const maxDisp = Math.max(...resp.displacement.map(Math.abs));
    expect(maxDisp).toBeCloseTo(0.02, 10);
  }, 60_000);

  it("commits with n=1 and observes the ACK", async () => {
    const ack = (await client.request({
      type: "commit",
      steps: 1,
      between: 0,
    })) as AckMsg;
    expect(ack.type).toBe("ack");
    expect(ack.code).toBe(0);
    expect(ack.order_id).not.toBe("");
  }, 60_000);
});

describe("Y-tube skeleton drag", () => {
  let fixture: Fixture;
  let client: BridgeClient;
  const state = new ViewState();

  beforeAll(async () => {
    fixture = await startFixture(join(FIXTURES, "gen_y_mesh.py"));
    client = new BridgeClient(await TcpTransport.connect(fixture.uiPort));
    const surface = (await client.request({ type: "get_surface" })) as SurfaceMsg;
    state.loadSurface(surface);
  }, 120_000);

  afterAll(async () => {
    client?.close();
    await fixture?.stop();
  });

  it("dragging a tip joint previews only its curve's bound vertices", async () => {
    const skel = (await client.request({ type: "skeletonize" })) as SkeletonMsg;
    expect(skel.type).toBe("skeleton");
    state.loadSkeleton(skel);

    const deg = state.jointDegrees();
    const tip = deg.findIndex((d) => d === 1);
    expect(tip).toBeGreaterThanOrEqual(0);
    const curve = state.curveOf(tip);
    expect(curve).not.toBeNull();

    const drag = new JointDrag(client, state);
    drag.start(tip);
    drag.move([
      skel.joints[3 * tip],
      skel.joints[3 * tip + 1],
      skel.joints[3 * tip + 2] + 0.1,
    ]);
    drag.release();
    await until(
      () => state.preview.some((x) => Math.abs(x) > 1e-12),
      60_000,
    );

    const n = state.preview.length / 3;
    const movedVerts: number[] = [];
    for (let v = 0; v < n; v++) {
      const m = Math.hypot(
        state.preview[3 * v],
        state.preview[3 * v + 1],
        state.preview[3 * v + 2],
      );
      if (m > 1e-12) movedVerts.push(v);
    }
    expect(movedVerts.length).toBeGreaterThan(0);
    const allowed = new Set(curve!);
    for (const v of movedVerts) {
      expect(allowed.has(skel.bind[v])).toBe(true);
    }
  }, 120_000);
});
