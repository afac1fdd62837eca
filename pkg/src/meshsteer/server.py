"""Steering session server: solver loop, order scheduling, instrumentation.

The server owns the volume mesh. It extracts and sends the surface once
per session, then alternates solver batches with socket polls at a fixed
cadence. Received displacement orders queue in arrival order; one
schedule step is applied per loop iteration, each followed by a batch of
solver steps, so deformation never interleaves inside a solver step.
"""

from __future__ import annotations

import hashlib
import socket
import time
from dataclasses import dataclass, field

import numpy as np

from .mesh import (
    FLOAT_FMT,
    DisplacementField,
    SurfaceMesh,
    TetMesh,
    export_surface_obj,
    extract_surface,
    load_tet_mesh,
)
from .operators import SolveConfig, volume_laplacian
from .protocol import (
    ACK_ERROR,
    ACK_OK,
    ACK_REJECT_DUPLICATE,
    DEFAULT_PORT,
    METHOD_NAMES,
    Ack,
    Bye,
    Connection,
    Displacement,
    Hello,
    ProtocolError,
    Snapshot,
    SurfaceMeshMsg,
)
from .volume import (
    DeformationOrder,
    ElasticParams,
    PartitionedMesh,
    apply_deformation_step,
    make_schedule,
    partition,
)


class ServerError(Exception):
    """Configuration or session failure."""


@dataclass(frozen=True)
class ServerConfig:
    mesh_path: str
    parts: int = 1
    port: int = DEFAULT_PORT  # 0 binds an ephemeral port
    cadence: int = 10  # solver steps between socket polls
    snapshot_every: int = 0  # solver steps between snapshots; 0 disables
    snapshot_dir: str = "."
    method: str = "elasticity"
    default_schedule: int = 1  # used when an order carries zero steps
    elastic: ElasticParams = field(default_factory=ElasticParams)
    solve_config: SolveConfig = field(default_factory=SolveConfig)
    max_steps: int = 0  # stop after this many solver steps; 0 = until BYE

    def __post_init__(self):
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")
        if self.parts < 1:
            raise ValueError("parts must be >= 1")
        if self.snapshot_every < 0 or self.max_steps < 0:
            raise ValueError("step counts must be nonnegative")
        if self.method not in ("elasticity", "harmonic"):
            raise ValueError(f"unknown deformation method {self.method!r}")


class DemoSolver:
    """Damped-Jacobi relaxation of a scalar Laplace problem.

    One step sweeps phi toward the discrete harmonic function with
    Dirichlet values 1 on the inlet feature and 0 on the outlet feature.
    Deterministic, never touches coordinates, and reassembles its
    operator whenever the mesh it sees has moved.
    """

    def __init__(self, inlet_tag: int = 0, outlet_tag: int = 1, damping: float = 0.8):
        self.inlet_tag = inlet_tag
        self.outlet_tag = outlet_tag
        self.damping = damping
        self._A = None
        self._diag = None
        self._coords_version = None

    def init(self, mesh: TetMesh) -> dict[str, np.ndarray]:
        tags = mesh.boundary_tags
        faces = mesh.boundary_faces
        self._inlet = np.unique(faces[tags == self.inlet_tag])
        self._outlet = np.unique(faces[tags == self.outlet_tag])
        if not len(self._inlet) or not len(self._outlet):
            raise ServerError("demo solver needs inlet and outlet features")
        phi = np.zeros(mesh.num_vertices)
        phi[self._inlet] = 1.0
        phi[self._outlet] = 0.0
        return {"phi": phi}

    def _operator(self, mesh: TetMesh):
        version = mesh.vertices.tobytes()
        if self._coords_version != hashlib.sha256(version).digest():
            self._A = volume_laplacian(mesh)
            self._diag = self._A.diagonal()
            self._coords_version = hashlib.sha256(version).digest()
        return self._A, self._diag

    def step(self, mesh: TetMesh, fields: dict[str, np.ndarray], dt: float) -> dict:
        if "phi" not in fields:
            raise ServerError("demo solver requires a 'phi' field")
        A, diag = self._operator(mesh)
        phi = fields["phi"]
        phi = phi - self.damping * (A @ phi) / diag
        phi[self._inlet] = 1.0
        phi[self._outlet] = 0.0
        return {**fields, "phi": phi}


class TimingLedger:
    """Named wall-time interval samples for the overhead report."""

    SURFACE_EXTRACT = "surface-extract"
    SURFACE_SEND = "surface-send"
    ALLOCATION = "matrix-allocation"
    ASSEMBLY = "formation-assembly"
    SOLVE = "solve"
    DEFORMATION = "deformation"
    SOLVER_TEN_STEPS = "solver-ten-steps"

    def __init__(self):
        self.samples: dict[str, list[float]] = {}

    def add(self, name: str, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("negative duration")
        self.samples.setdefault(name, []).append(seconds)

    def timed(self, name: str):
        return _Interval(self, name)

    def mean(self, name: str) -> float:
        vals = self.samples.get(name, [])
        return float(np.mean(vals)) if vals else 0.0


class _Interval:
    def __init__(self, ledger, name):
        self.ledger, self.name = ledger, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ledger.add(self.name, time.perf_counter() - self.t0)
        return False


def overhead_report(ledger: TimingLedger) -> dict[str, float]:
    """Deformation cost in equivalent solver steps plus absolute means.

    Overhead is total deformation wall time divided by the mean per-step
    solver time, where per-step time comes from ten-step batch samples.
    """
    deform = ledger.samples.get(TimingLedger.DEFORMATION, [])
    ten = ledger.samples.get(TimingLedger.SOLVER_TEN_STEPS, [])
    if not deform:
        raise ServerError("ledger holds no deformation sample")
    if len(ten) < 3:
        raise ServerError("ledger needs at least three ten-step solver samples")
    per_step = float(np.mean(ten)) / 10.0
    total_deform = float(np.sum(deform))
    report = {
        "overhead_steps": total_deform / per_step if per_step > 0 else 0.0,
        "deformation_seconds": total_deform,
        "solver_step_seconds": per_step,
    }
    for name in (
        TimingLedger.SURFACE_EXTRACT,
        TimingLedger.SURFACE_SEND,
        TimingLedger.ALLOCATION,
        TimingLedger.ASSEMBLY,
        TimingLedger.SOLVE,
    ):
        report[f"mean_{name}_seconds"] = ledger.mean(name)
    return report


def order_id(msg: Displacement) -> str:
    """Content hash identifying an order for duplicate rejection."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(msg.values, dtype="<f8").tobytes())
    h.update(f"{msg.schedule_steps}:{msg.steps_between}:{msg.method}".encode())
    return h.hexdigest()[:16]


@dataclass
class _ActiveSchedule:
    order: DeformationOrder
    targets: list
    next_index: int = 0

    @property
    def done(self) -> bool:
        return self.next_index >= len(self.targets)


class SteeringServer:
    """One steering session over one client connection.

    The event log records ("solver", step), ("deform", schedule index),
    ("order", id), ("snapshot", step) tuples in execution order so tests
    can assert the interleaving exactly.
    """

    def __init__(self, config: ServerConfig, solver=None, mesh: TetMesh = None):
        self.config = config
        self.solver = solver if solver is not None else DemoSolver()
        self.mesh = mesh if mesh is not None else load_tet_mesh(config.mesh_path)
        self.ledger = TimingLedger()
        self.events: list[tuple] = []
        self.step_count = 0
        self.fields: dict[str, np.ndarray] = {}
        self.surface: SurfaceMesh = None
        self.pmesh: PartitionedMesh = None
        self.offset: np.ndarray = None
        self.active: _ActiveSchedule = None
        self.queue: list[tuple[str, DeformationOrder]] = []
        self.seen_ids: set[str] = set()
        self._listener: socket.socket = None
        self._conn: Connection = None
        self._batch_times: list[float] = []

    # -- setup ------------------------------------------------------------

    @property
    def bound_port(self) -> int:
        if self._listener is None:
            raise ServerError("server is not listening")
        return self._listener.getsockname()[1]

    def listen(self) -> int:
        self.pmesh = partition(self.mesh, self.config.parts)
        with self.ledger.timed(TimingLedger.SURFACE_EXTRACT):
            self.surface = extract_surface(self.mesh)
        self.offset = np.zeros((self.surface.num_vertices, 3))
        self.fields = self.solver.init(self.mesh)
        self._listener = socket.create_server(("127.0.0.1", self.config.port))
        return self.bound_port

    def _accept(self) -> None:
        sock, _ = self._listener.accept()
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._conn = Connection(sock)
        msg = self._conn.recv()
        if not isinstance(msg, Hello):
            raise ProtocolError(f"expected HELLO, got {type(msg).__name__}")
        with self.ledger.timed(TimingLedger.SURFACE_SEND):
            self._conn.send(
                SurfaceMeshMsg(
                    self.surface.vertices,
                    self.surface.triangles.astype(np.uint64),
                    self.surface.feature,
                    self.surface.volume_vertex_of.astype(np.uint64),
                )
            )

    # -- loop pieces ------------------------------------------------------

    def _solver_steps(self, count: int) -> None:
        mesh = self.pmesh.deformed_mesh()
        for _ in range(count):
            t0 = time.perf_counter()
            self.fields = self.solver.step(mesh, self.fields, 0.01)
            self._batch_times.append(time.perf_counter() - t0)
            if len(self._batch_times) >= 10:
                self.ledger.add(
                    TimingLedger.SOLVER_TEN_STEPS, sum(self._batch_times[:10])
                )
                del self._batch_times[:10]
            self.step_count += 1
            self.events.append(("solver", self.step_count))
            if (
                self.config.snapshot_every
                and self.step_count % self.config.snapshot_every == 0
            ):
                self._snapshot()

    def _snapshot(self) -> None:
        step = self.step_count
        surf = self.surface.with_vertices(
            self.surface.vertices + self.offset
        )
        export_surface_obj(surf, f"{self.config.snapshot_dir}/snap_{step}.obj")
        phi = self.fields["phi"]
        with open(f"{self.config.snapshot_dir}/snap_{step}.phi", "w") as fh:
            fh.write(f"dispfield v1 {len(phi)}\n")
            for x in phi:
                fh.write(FLOAT_FMT % x + "\n")
        if self._conn is not None and not self._conn.closed:
            self._conn.send(Snapshot(step, "phi", np.asarray(phi)))
        self.events.append(("snapshot", step))

    def _handle_message(self, msg) -> bool:
        """Returns False when the session should close."""
        if isinstance(msg, Displacement):
            oid = order_id(msg)
            if oid in self.seen_ids:
                self._conn.send(Ack(ACK_REJECT_DUPLICATE, oid))
                return True
            if len(msg.values) != self.surface.num_vertices:
                self._conn.send(Ack(ACK_ERROR, "field length mismatch"))
                return True
            self.seen_ids.add(oid)
            order = DeformationOrder(
                DisplacementField(msg.values),
                msg.schedule_steps or self.config.default_schedule,
                msg.steps_between,
                METHOD_NAMES[msg.method],
            )
            self.queue.append((oid, order))
            self.events.append(("order", oid))
            self._conn.send(Ack(ACK_OK, oid))
            return True
        if isinstance(msg, Bye):
            return False
        if isinstance(msg, Hello):
            raise ProtocolError("duplicate HELLO")
        raise ProtocolError(f"unexpected {type(msg).__name__} from client")

    def _advance_schedule(self) -> None:
        if self.active is None and self.queue:
            _, order = self.queue.pop(0)
            self.active = _ActiveSchedule(
                order,
                make_schedule(order.field, order.schedule_steps, self.offset),
            )
        if self.active is None:
            return
        target = self.active.targets[self.active.next_index]
        timings: dict = {}
        with self.ledger.timed(TimingLedger.DEFORMATION):
            apply_deformation_step(
                self.pmesh,
                self.offset,
                target,
                self.surface,
                self.active.order.method,
                self.config.elastic,
                self.config.solve_config,
                timings,
            )
        if timings:
            self.ledger.add(TimingLedger.ASSEMBLY, timings["assembly"])
            self.ledger.add(TimingLedger.SOLVE, timings["solve"])
        self.offset = target.values.copy()
        self.events.append(("deform", self.active.next_index))
        self.active.next_index += 1
        between = self.active.order.steps_between
        if self.active.done:
            self.active = None
        if between:
            self._solver_steps(between)

    # -- session ----------------------------------------------------------

    def run(self) -> int:
        """Execute one full session; returns 0 on clean close."""
        if self._listener is None:
            self.listen()
        try:
            self._accept()
            open_session = True
            while open_session:
                self._solver_steps(self.config.cadence)
                for msg in self._conn.poll(timeout=0.0):
                    if not self._handle_message(msg):
                        open_session = False
                self._advance_schedule()
                if self._conn.closed:
                    open_session = False
                if self.config.max_steps and self.step_count >= self.config.max_steps:
                    open_session = False
            return 0
        except ProtocolError:
            return 1
        finally:
            if self._conn is not None:
                self._conn.close()
            self._listener.close()
            self._listener = None


def run_session(config: ServerConfig, solver=None) -> int:
    return SteeringServer(config, solver=solver).run()
