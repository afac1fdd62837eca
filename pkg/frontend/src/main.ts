/** Browser entry point: wires panels, scene and the bridge socket. */

import { JointDrag } from "./drag.js";
import {
  ActionKind,
  BridgeClient,
  SkeletonMsg,
  SurfaceMsg,
  WebSocketTransport,
} from "./protocol.js";
import { SteerScene } from "./scene.js";
import { tagColor, ViewState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(text: string, isError = false): void {
  const b = el<HTMLDivElement>("banner");
  b.textContent = text;
  b.className = isError ? "error" : "";
}

async function start(): Promise<void> {
  const transport = await WebSocketTransport.connect(
    `ws://${location.host}/ws`,
  );
  const client = new BridgeClient(transport);
  const state = new ViewState();
  const canvas = el<HTMLCanvasElement>("view");
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  const scene = new SteerScene(state, canvas);
  const drag = new JointDrag(client, state);
  let stackDepth = 0;

  function redraw(): void {
    scene.rebuildSurface();
    scene.rebuildSkeleton();
    scene.render();
    el<HTMLButtonElement>("commit").disabled =
      stackDepth === 0 || state.pendingCommit;
  }

  function rebuildFeaturePanel(): void {
    const panel = el<HTMLDivElement>("features");
    panel.innerHTML = "";
    for (const tag of state.featureTags()) {
      const row = document.createElement("div");
      const [r, g, b] = tagColor(tag);
      const swatch = document.createElement("span");
      swatch.className = "swatch";
      swatch.style.background = `rgb(${255 * r | 0},${255 * g | 0},${255 * b | 0})`;
      row.appendChild(swatch);
      for (const role of ["handle", "fixed"] as const) {
        const box = document.createElement("input");
        box.type = "checkbox";
        box.title = `${role} ${tag}`;
        box.onchange = () => {
          const set =
            role === "handle" ? state.selectedFeatures : state.fixedFeatures;
          if (box.checked) set.add(tag);
          else set.delete(tag);
        };
        row.appendChild(box);
      }
      row.appendChild(document.createTextNode(` feature ${tag}`));
      panel.appendChild(row);
    }
  }

  const surface = await client.request({ type: "get_surface" });
  if (surface.type !== "surface") {
    banner(`could not load surface: ${JSON.stringify(surface)}`, true);
    return;
  }
  state.loadSurface(surface as SurfaceMsg);
  rebuildFeaturePanel();
  redraw();
  banner(`loaded ${surface.positions.length / 3} vertices`);

  client.onSnapshot((snap) => {
    banner(`snapshot: step ${snap.step}, field ${snap.field}`);
  });

  el<HTMLButtonElement>("run-action").onclick = async () => {
    const kind = el<HTMLSelectElement>("action-kind").value as ActionKind;
    const k = Number(el<HTMLInputElement>("repeat").value) || 1;
    const vec = ["vx", "vy", "vz"].map(
      (id) => k * Number(el<HTMLInputElement>(id).value),
    ) as [number, number, number];
    const scale = ["sx", "sy", "sz"].map((id) =>
      Number(el<HTMLInputElement>(id).value),
    ) as [number, number, number];
    const resp = await client.request({
      type: "action",
      kind,
      handles: [...state.selectedFeatures],
      fixed: [...state.fixedFeatures],
      order: Number(el<HTMLSelectElement>("order").value),
      params: {
        vector: vec,
        scale,
        offset: k * Number(el<HTMLInputElement>("offset").value),
      },
    });
    if (resp.type === "preview") {
      stackDepth += 1;
      state.clearPreviewTo(resp.displacement);
      redraw();
    } else if (resp.type === "error") {
      banner(resp.message, true);
    }
  };

  el<HTMLButtonElement>("skeletonize").onclick = async () => {
    const resp = await client.request({ type: "skeletonize" });
    if (resp.type === "skeleton") {
      state.loadSkeleton(resp as SkeletonMsg);
      redraw();
    } else if (resp.type === "error") {
      banner(resp.message, true);
    }
  };

  el<HTMLButtonElement>("apply-skeleton").onclick = async () => {
    const resp = await client.request({ type: "apply_skeleton" });
    if (resp.type === "preview") {
      stackDepth += 1;
      state.clearPreviewTo(resp.displacement);
      redraw();
    } else if (resp.type === "error") {
      banner(resp.message, true);
    }
  };

  el<HTMLButtonElement>("undo").onclick = async () => {
    const resp = await client.request({ type: "undo" });
    if (resp.type === "preview") {
      stackDepth = Math.max(0, stackDepth - 1);
      state.clearPreviewTo(resp.displacement);
      redraw();
    } else if (resp.type === "error") {
      banner(resp.message, true);
    }
  };

  el<HTMLButtonElement>("commit").onclick = async () => {
    state.pendingCommit = true;
    redraw();
    const resp = await client.request({
      type: "commit",
      steps: Number(el<HTMLInputElement>("steps").value) || 1,
      between: Number(el<HTMLInputElement>("between").value) || 0,
    });
    state.pendingCommit = false;
    if (resp.type === "ack") {
      banner(
        resp.code === 0
          ? `committed order ${resp.order_id}`
          : `order rejected (code ${resp.code})`,
        resp.code !== 0,
      );
    }
    redraw();
  };

  // pointer handling: pick a joint, drag in the camera plane, release
  canvas.addEventListener("pointerdown", (ev) => {
    const ndcX = (ev.offsetX / canvas.clientWidth) * 2 - 1;
    const ndcY = -(ev.offsetY / canvas.clientHeight) * 2 + 1;
    const joint = scene.pickJoint(ndcX, ndcY);
    if (joint !== null) drag.start(joint);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (drag.dragging === null) return;
    const ndcX = (ev.offsetX / canvas.clientWidth) * 2 - 1;
    const ndcY = -(ev.offsetY / canvas.clientHeight) * 2 + 1;
    drag.move(scene.dragPosition(ndcX, ndcY, drag.dragging));
    redraw();
  });
  canvas.addEventListener("pointerup", () => drag.release());
}

start().catch((err) => banner(String(err), true));
