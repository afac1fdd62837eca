/**
 * Typed view of the bridge UI protocol: JSON objects over a framed
 * bidirectional transport. Every request gets exactly one response in
 * order; snapshot frames may arrive at any time between responses.
 */

export interface SurfaceMsg {
  type: "surface";
  positions: number[]; // flat xyz per vertex
  triangles: number[]; // flat vertex indices, 3 per triangle
  feature: number[]; // tag per triangle
  displacement: number[]; // flat xyz, cumulative field
}

export interface PreviewMsg {
  type: "preview";
  displacement: number[];
}

export interface SkeletonMsg {
  type: "skeleton";
  joints: number[]; // flat xyz per joint
  bones: number[]; // flat joint index pairs
  bind: number[]; // joint index per surface vertex
  curves: number[][];
}

export interface SnapshotMsg {
  type: "snapshot";
  step: number;
  field: string;
  values: number[];
}

export interface AckMsg {
  type: "ack";
  code: number;
  order_id: string;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type BridgeResponse =
  | SurfaceMsg
  | PreviewMsg
  | SkeletonMsg
  | AckMsg
  | ErrorMsg;
export type BridgeMessage = BridgeResponse | SnapshotMsg;

export type ActionKind = "translate" | "scale-by-direction" | "scale-by-normals";

export interface ActionParams {
  vector?: [number, number, number];
  scale?: [number, number, number];
  offset?: number;
}

export interface ActionRequest {
  type: "action";
  kind: ActionKind;
  handles: number[];
  fixed: number[];
  order: number;
  params: ActionParams;
}

export interface MoveJointRequest {
  type: "move_joint";
  joint: number;
  position: [number, number, number];
  pinned: number[];
}

export type BridgeRequest =
  | { type: "get_surface" }
  | ActionRequest
  | { type: "skeletonize" }
  | MoveJointRequest
  | { type: "apply_skeleton" }
  | { type: "undo" }
  | { type: "commit"; steps: number; between: number }
  | { type: "export"; path: string };

/** Framed message pipe; implementations deliver whole JSON objects. */
export interface Transport {
  send(obj: BridgeRequest): void;
  onMessage(handler: (msg: BridgeMessage) => void): void;
  close(): void;
}

/**
 * Request/response correlation over a Transport. Responses resolve the
 * oldest pending request; snapshots bypass the queue entirely.
 */
export class BridgeClient {
  private pending: Array<(msg: BridgeResponse) => void> = [];
  private snapshotHandlers: Array<(msg: SnapshotMsg) => void> = [];

  constructor(private transport: Transport) {
    transport.onMessage((msg) => this.dispatch(msg));
  }

  private dispatch(msg: BridgeMessage): void {
    if (msg.type === "snapshot") {
      for (const h of this.snapshotHandlers) h(msg);
      return;
    }
    const resolve = this.pending.shift();
    if (resolve) resolve(msg);
  }

  onSnapshot(handler: (msg: SnapshotMsg) => void): void {
    this.snapshotHandlers.push(handler);
  }

  request(req: BridgeRequest): Promise<BridgeResponse> {
    return new Promise((resolve) => {
      this.pending.push(resolve);
      this.transport.send(req);
    });
  }

  /** Fire a request without waiting; the response still resolves in order. */
  requestNoWait(
    req: BridgeRequest,
    onResponse: (msg: BridgeResponse) => void,
  ): void {
    this.pending.push(onResponse);
    this.transport.send(req);
  }

  close(): void {
    this.transport.close();
  }
}

/** Browser transport: the bridge's ui port upgraded to a WebSocket. */
export class WebSocketTransport implements Transport {
  private handlers: Array<(msg: BridgeMessage) => void> = [];

  constructor(private ws: WebSocket) {
    ws.onmessage = (ev) => {
      const msg = JSON.parse(String(ev.data)) as BridgeMessage;
      for (const h of this.handlers) h(msg);
    };
  }

  static connect(url: string): Promise<WebSocketTransport> {
    return new Promise((resolve, reject) => {
      const ws = new WebSocket(url);
      ws.onopen = () => resolve(new WebSocketTransport(ws));
      ws.onerror = (ev) => reject(ev);
    });
  }

  send(obj: BridgeRequest): void {
    this.ws.send(JSON.stringify(obj));
  }

  onMessage(handler: (msg: BridgeMessage) => void): void {
    this.handlers.push(handler);
  }

  close(): void {
    this.ws.close();
  }
}
