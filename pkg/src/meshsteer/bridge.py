"""Client-side bridge: owns the surface, the action stack and the UI link.

All deformation math runs here; the UI only sends intents and renders
the arrays it gets back. The UI port speaks newline-delimited JSON over
plain TCP, and additionally understands HTTP on the same port: GET
requests serve static assets and WebSocket upgrades carry the same JSON
protocol as text frames, so a browser can connect directly.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import select
import socket
import struct
from dataclasses import dataclass, field

import numpy as np

from .mesh import DisplacementField, SurfaceMesh, write_displacement_field
from .operators import SolveError
from .protocol import (
    ACK_OK,
    METHOD_CODES,
    Ack,
    Bye,
    Connection,
    Displacement,
    Hello,
    ProtocolError,
    Snapshot,
    SurfaceMeshMsg,
)
from .skeleton import (
    CurveSkeleton,
    JointConstraint,
    SkeletonError,
    SkeletonParams,
    apply_skeleton_to_surface,
    skeletonize,
    solve_skeleton_deformation,
)
from .surface import HandleSpec, SurfaceAction, compute_handle_displacement


class BridgeError(Exception):
    """Bridge session failure."""


@dataclass
class _StackEntry:
    kind: str  # "action" | "skeleton"
    spec: HandleSpec = None
    action: SurfaceAction = None
    constraints: tuple = ()
    skeleton_params: SkeletonParams = None


class BridgeSession:
    """Surface state, action stack and skeleton bookkeeping for one client.

    The cumulative field always equals the replay of the stack from the
    pristine surface; every mutation path goes through ``_replay``-safe
    appends or pops.
    """

    def __init__(self, surface: SurfaceMesh, method: str = "elasticity"):
        self.pristine = surface
        self.method = method
        self.stack: list[_StackEntry] = []
        self.cumulative = np.zeros((surface.num_vertices, 3))
        self.skeleton: CurveSkeleton | None = None
        self.skeleton_params = SkeletonParams()
        self._pending_joint_field: np.ndarray | None = None
        self.snapshots: list[Snapshot] = []

    @property
    def displaced(self) -> SurfaceMesh:
        return self.pristine.with_vertices(self.pristine.vertices + self.cumulative)

    # -- stack ------------------------------------------------------------

    def _entry_field(self, entry: _StackEntry, surface: SurfaceMesh) -> np.ndarray:
        if entry.kind == "action":
            return compute_handle_displacement(surface, entry.spec, entry.action).values
        skel = skeletonize(surface, entry.skeleton_params)
        joints = solve_skeleton_deformation(skel, list(entry.constraints))
        return apply_skeleton_to_surface(surface, skel, joints).values

    def _replay(self, stack: list[_StackEntry]) -> np.ndarray:
        total = np.zeros((self.pristine.num_vertices, 3))
        for entry in stack:
            surface = self.pristine.with_vertices(self.pristine.vertices + total)
            total = total + self._entry_field(entry, surface)
        return total

    def stack_apply(self, entry: _StackEntry) -> np.ndarray:
        """Compute on the displaced surface, compose, record; atomic on error."""
        fld = self._entry_field(entry, self.displaced)
        self.stack.append(entry)
        self.cumulative = self.cumulative + fld
        self.skeleton = None  # geometry changed; any skeleton is stale
        self._pending_joint_field = None
        return self.cumulative

    def apply_action(
        self, spec: HandleSpec, action: SurfaceAction
    ) -> np.ndarray:
        return self.stack_apply(_StackEntry("action", spec=spec, action=action))

    def undo(self) -> np.ndarray:
        if not self.stack:
            raise BridgeError("nothing to undo")
        self.stack.pop()
        self.cumulative = self._replay(self.stack)
        self.skeleton = None
        self._pending_joint_field = None
        return self.cumulative

    # -- skeleton ---------------------------------------------------------

    def make_skeleton(self) -> CurveSkeleton:
        self.skeleton = skeletonize(self.displaced, self.skeleton_params)
        self._pending_joint_field = None
        self._pending_constraints: tuple = ()
        return self.skeleton

    def preview_move_joint(
        self, joint: int, position, pinned=()
    ) -> np.ndarray:
        """Preview field for a dragged joint; not recorded until applied."""
        if self.skeleton is None:
            raise BridgeError("no skeleton; run skeletonize first")
        target = np.asarray(position, dtype=np.float64)
        constraints = [
            JointConstraint(int(joint), tuple(target - self.skeleton.joints[int(joint)]))
        ]
        for p in pinned:
            if int(p) != int(joint):
                constraints.append(JointConstraint(int(p)))
        joints = solve_skeleton_deformation(self.skeleton, constraints)
        fld = apply_skeleton_to_surface(self.displaced, self.skeleton, joints).values
        self._pending_joint_field = fld
        self._pending_constraints = tuple(constraints)
        return self.cumulative + fld

    def apply_skeleton(self) -> np.ndarray:
        if self._pending_joint_field is None:
            raise BridgeError("no pending skeleton preview to apply")
        entry = _StackEntry(
            "skeleton",
            constraints=self._pending_constraints,
            skeleton_params=self.skeleton_params,
        )
        self.stack.append(entry)
        self.cumulative = self.cumulative + self._pending_joint_field
        self.skeleton = None
        self._pending_joint_field = None
        return self.cumulative

    # -- interchange ------------------------------------------------------

    def export_field(self, path) -> None:
        write_displacement_field(path, DisplacementField(self.cumulative))

    def surface_payload(self) -> dict:
        s = self.pristine
        return {
            "type": "surface",
            "positions": s.vertices.ravel().tolist(),
            "triangles": s.triangles.ravel().tolist(),
            "feature": s.feature.tolist(),
            "displacement": self.cumulative.ravel().tolist(),
        }

    def preview_payload(self, total: np.ndarray) -> dict:
        return {"type": "preview", "displacement": total.ravel().tolist()}

    def skeleton_payload(self) -> dict:
        sk = self.skeleton
        return {
            "type": "skeleton",
            "joints": sk.joints.ravel().tolist(),
            "bones": sk.bones.ravel().tolist(),
            "bind": sk.bind.tolist(),
            "curves": [list(c) for c in sk.curves],
        }


def handle_request(session: BridgeSession, req: dict, server_link=None) -> dict:
    """One UI request to one JSON-shaped response; errors never mutate."""
    try:
        rtype = req.get("type")
        if rtype == "get_surface":
            return session.surface_payload()
        if rtype == "action":
            spec = HandleSpec(
                frozenset(req.get("handles", [])),
                frozenset(req.get("fixed", [])),
                int(req.get("order", 2)),
            )
            params = req.get("params", {})
            action = SurfaceAction(
                req["kind"],
                vector=tuple(params.get("vector", (0.0, 0.0, 0.0))),
                scale=tuple(params.get("scale", (1.0, 1.0, 1.0))),
                offset=float(params.get("offset", 0.0)),
            )
            total = session.apply_action(spec, action)
            return session.preview_payload(total)
        if rtype == "skeletonize":
            session.make_skeleton()
            return session.skeleton_payload()
        if rtype == "move_joint":
            total = session.preview_move_joint(
                req["joint"], req["position"], req.get("pinned", ())
            )
            return session.preview_payload(total)
        if rtype == "apply_skeleton":
            return session.preview_payload(session.apply_skeleton())
        if rtype == "undo":
            return session.preview_payload(session.undo())
        if rtype == "commit":
            if server_link is None:
                return {"type": "error", "message": "no server connection"}
            server_link.send(
                Displacement(
                    session.cumulative,
                    int(req.get("steps", 1)),
                    int(req.get("between", 0)),
                    METHOD_CODES[session.method],
                )
            )
            while True:
                msg = server_link.recv()
                if isinstance(msg, Ack):
                    return {"type": "ack", "code": msg.code, "order_id": msg.detail}
                if isinstance(msg, Snapshot):
                    session.snapshots.append(msg)
        if rtype == "export":
            session.export_field(req["path"])
            return {"type": "ack", "code": ACK_OK, "order_id": ""}
        return {"type": "error", "message": f"unknown request type {rtype!r}"}
    except (BridgeError, SkeletonError, SolveError, ValueError, KeyError) as exc:
        return {"type": "error", "message": str(exc)}


def snapshot_payload(msg: Snapshot) -> dict:
    return {
        "type": "snapshot",
        "step": int(msg.step),
        "field": msg.field_name,
        "values": np.asarray(msg.values).tolist(),
    }


# ---------------------------------------------------------------------------
# UI transports: JSON lines over TCP, HTTP static files, WebSocket frames


_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class _UiPeer:
    """One accepted UI socket in one of three modes: sniffing, line, ws."""

    def __init__(self, sock: socket.socket, asset_dir: str | None):
        self.sock = sock
        self.buf = bytearray()
        self.mode = "sniff"
        self.asset_dir = asset_dir
        self.closed = False

    def fileno(self):
        return self.sock.fileno()

    def feed(self) -> list[dict]:
        """Read available bytes; return decoded JSON requests."""
        try:
            chunk = self.sock.recv(1 << 20)
        except OSError:
            chunk = b""
        if not chunk:
            self.closed = True
            return []
        self.buf.extend(chunk)
        if self.mode == "sniff":
            self._sniff()
        if self.mode == "line":
            return self._read_lines()
        if self.mode == "ws":
            return self._read_ws()
        return []

    def send_json(self, obj: dict) -> None:
        data = json.dumps(obj).encode()
        if self.mode == "ws":
            self.sock.sendall(_ws_frame(data))
        else:
            self.sock.sendall(data + b"\n")

    # -- mode detection ---------------------------------------------------

    def _sniff(self) -> None:
        if len(self.buf) < 4:
            return
        head = bytes(self.buf[:8])
        if head.startswith((b"GET ", b"HEAD", b"POST")):
            if b"\r\n\r\n" in self.buf:
                self._handle_http()
        else:
            self.mode = "line"

    def _handle_http(self) -> None:
        raw, _, rest = bytes(self.buf).partition(b"\r\n\r\n")
        self.buf = bytearray(rest)
        lines = raw.decode("latin-1").split("\r\n")
        path = lines[0].split(" ")[1] if len(lines[0].split(" ")) > 1 else "/"
        headers = {}
        for ln in lines[1:]:
            k, _, v = ln.partition(":")
            headers[k.strip().lower()] = v.strip()
        if headers.get("upgrade", "").lower() == "websocket":
            accept = base64.b64encode(
                hashlib.sha1(
                    (headers.get("sec-websocket-key", "") + _WS_GUID).encode()
                ).digest()
            ).decode()
            self.sock.sendall(
                (
                    "HTTP/1.1 101 Switching Protocols\r\n"
                    "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                    f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
                ).encode()
            )
            self.mode = "ws"
            return
        self._serve_static(path)
        self.closed = True

    def _serve_static(self, path: str) -> None:
        if self.asset_dir is None:
            self._http_response(404, b"no assets configured")
            return
        rel = path.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(self.asset_dir, rel))
        root = os.path.realpath(self.asset_dir)
        if not full.startswith(root + os.sep) and full != root:
            self._http_response(404, b"not found")
            return
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            self._http_response(404, b"not found")
            return
        ctype = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".css": "text/css",
            ".json": "application/json",
        }.get(os.path.splitext(full)[1], "application/octet-stream")
        with open(full, "rb") as fh:
            body = fh.read()
        self._http_response(200, body, ctype)

    def _http_response(self, status: int, body: bytes, ctype="text/plain") -> None:
        reason = {200: "OK", 404: "Not Found"}[status]
        self.sock.sendall(
            (
                f"HTTP/1.1 {status} {reason}\r\nContent-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n"
            ).encode()
            + body
        )

    # -- framing ----------------------------------------------------------

    def _read_lines(self) -> list[dict]:
        out = []
        while b"\n" in self.buf:
            line, _, rest = bytes(self.buf).partition(b"\n")
            self.buf = bytearray(rest)
            line = line.strip()
            if line:
                out.append(json.loads(line))
        return out

    def _read_ws(self) -> list[dict]:
        out = []
        while True:
            frame = _ws_parse(self.buf)
            if frame is None:
                break
            opcode, payload, used = frame
            del self.buf[:used]
            if opcode == 8:  # close
                self.closed = True
                break
            if opcode == 9:  # ping -> pong
                self.sock.sendall(_ws_frame(payload, opcode=10))
                continue
            if opcode in (1, 2) and payload:
                out.append(json.loads(payload))
        return out


def _ws_frame(payload: bytes, opcode: int = 1) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


def _ws_parse(buf: bytearray):
    """(opcode, payload, consumed) for one complete client frame, else None."""
    if len(buf) < 2:
        return None
    opcode = buf[0] & 0x0F
    masked = bool(buf[1] & 0x80)
    n = buf[1] & 0x7F
    pos = 2
    if n == 126:
        if len(buf) < 4:
            return None
        n = struct.unpack(">H", bytes(buf[2:4]))[0]
        pos = 4
    elif n == 127:
        if len(buf) < 10:
            return None
        n = struct.unpack(">Q", bytes(buf[2:10]))[0]
        pos = 10
    mask = b"\x00" * 4
    if masked:
        if len(buf) < pos + 4:
            return None
        mask = bytes(buf[pos : pos + 4])
        pos += 4
    if len(buf) < pos + n:
        return None
    raw = bytes(buf[pos : pos + n])
    if masked:
        raw = bytes(b ^ mask[i % 4] for i, b in enumerate(raw))
    return opcode, raw, pos + n


# ---------------------------------------------------------------------------
# session wiring


def connect_to_server(address: tuple[str, int]) -> tuple[Connection, SurfaceMesh]:
    """HELLO handshake; returns the link and the received surface."""
    sock = socket.create_connection(address)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    conn = Connection(sock)
    conn.send(Hello())
    msg = conn.recv()
    if not isinstance(msg, SurfaceMeshMsg):
        raise ProtocolError(f"expected SURFACE_MESH, got {type(msg).__name__}")
    surface = SurfaceMesh(
        msg.coords,
        msg.triangles.astype(np.int64),
        msg.tags,
        msg.volume_ids.astype(np.int64),
    )
    return conn, surface


def run_bridge(
    server_address: tuple[str, int],
    ui_port: int,
    export_path: str | None = None,
    asset_dir: str | None = None,
    method: str = "elasticity",
    stop_check=None,
) -> int:
    """Serve UI peers until the server link closes or stop_check fires."""
    link, surface = connect_to_server(server_address)
    session = BridgeSession(surface, method=method)
    listener = socket.create_server(("127.0.0.1", ui_port))
    peers: list[_UiPeer] = []
    try:
        while True:
            if stop_check is not None and stop_check():
                break
            readers = [listener, link.sock] + [p for p in peers if not p.closed]
            ready, _, _ = select.select(readers, [], [], 0.1)
            for r in ready:
                if r is listener:
                    sock, _ = listener.accept()
                    peers.append(_UiPeer(sock, asset_dir))
                elif r is link.sock:
                    for msg in link.poll():
                        if isinstance(msg, Snapshot):
                            session.snapshots.append(msg)
                            for p in peers:
                                if not p.closed and p.mode in ("line", "ws"):
                                    p.send_json(snapshot_payload(msg))
                    if link.closed:
                        if export_path:
                            session.export_field(export_path)
                        return 0
                else:
                    for req in r.feed():
                        r.send_json(handle_request(session, req, link))
            peers = [p for p in peers if not p.closed]
    finally:
        try:
            link.send(Bye())
        except OSError:
            pass
        link.close()
        listener.close()
        for p in peers:
            p.sock.close()
    if export_path:
        session.export_field(export_path)
    return 0
