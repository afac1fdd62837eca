import socket
import threading
import time

import numpy as np
import pytest

from meshsteer.generators import generate_box_channel
from meshsteer.mesh import DisplacementField
from meshsteer.protocol import (
    ACK_OK,
    ACK_REJECT_DUPLICATE,
    METHOD_CODES,
    Ack,
    Bye,
    Connection,
    Displacement,
    Hello,
    Snapshot,
    SurfaceMeshMsg,
)
from meshsteer.server import (
    DemoSolver,
    ServerConfig,
    ServerError,
    SteeringServer,
    TimingLedger,
    order_id,
    overhead_report,
)


@pytest.fixture()
def channel_mesh():
    return generate_box_channel(8, 5, 5, (1.0, 0.5, 0.5))


def start_server(mesh, **overrides):
    base = dict(mesh_path="", parts=1, port=0, cadence=10, snapshot_dir=".")
    base.update(overrides)
    cfg = ServerConfig(**base)
    srv = SteeringServer(cfg, mesh=mesh)
    port = srv.listen()
    thread = threading.Thread(target=srv.run)
    thread.start()
    return srv, port, thread


def connect(port):
    sock = socket.create_connection(("127.0.0.1", port))
    conn = Connection(sock)
    conn.send(Hello())
    msg = conn.recv()
    assert isinstance(msg, SurfaceMeshMsg)
    return conn, msg


def recv_of(conn, cls, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        msg = conn.recv(timeout=max(0.01, deadline - time.monotonic()))
        if isinstance(msg, cls):
            return msg
    raise TimeoutError(f"no {cls.__name__} within {timeout}s")


class TestDemoSolver:
    def test_converges_to_linear_ramp(self, channel_mesh):
        solver = DemoSolver()
        fields = solver.init(channel_mesh)
        for _ in range(20000):
            new = solver.step(channel_mesh, fields, 0.01)
            if np.abs(new["phi"] - fields["phi"]).max() < 1e-12:
                fields = new
                break
            fields = new
        expected = 1.0 - channel_mesh.vertices[:, 0] / 1.0
        assert np.abs(fields["phi"] - expected).max() < 1e-6

    def test_max_principle(self, channel_mesh):
        solver = DemoSolver()
        fields = solver.init(channel_mesh)
        for _ in range(200):
            fields = solver.step(channel_mesh, fields, 0.01)
        phi = fields["phi"]
        assert phi.min() >= -1e-12
        assert phi.max() <= 1.0 + 1e-12

    def test_step_never_moves_mesh(self, channel_mesh):
        solver = DemoSolver()
        fields = solver.init(channel_mesh)
        before = channel_mesh.vertices.copy()
        solver.step(channel_mesh, fields, 0.01)
        assert np.array_equal(channel_mesh.vertices, before)

    def test_missing_field_rejected(self, channel_mesh):
        solver = DemoSolver()
        solver.init(channel_mesh)
        with pytest.raises(ServerError):
            solver.step(channel_mesh, {}, 0.01)

    def test_deterministic(self, channel_mesh):
        a = DemoSolver()
        fa = a.init(channel_mesh)
        b = DemoSolver()
        fb = b.init(channel_mesh)
        for _ in range(25):
            fa = a.step(channel_mesh, fa, 0.01)
            fb = b.step(channel_mesh, fb, 0.01)
        assert np.array_equal(fa["phi"], fb["phi"])


class TestOverheadReport:
    def _ledger(self, deform, ten_steps):
        ledger = TimingLedger()
        for d in deform:
            ledger.add(TimingLedger.DEFORMATION, d)
        for t in ten_steps:
            ledger.add(TimingLedger.SOLVER_TEN_STEPS, t)
        return ledger

    def test_definition(self):
        # deformation equal to one ten-step sample -> overhead 10 steps
        ledger = self._ledger([0.5], [0.5, 0.5, 0.5])
        assert overhead_report(ledger)["overhead_steps"] == pytest.approx(10.0)

    def test_zero_deformation(self):
        ledger = self._ledger([0.0], [0.5, 0.5, 0.5])
        assert overhead_report(ledger)["overhead_steps"] == 0.0

    def test_requires_samples(self):
        with pytest.raises(ServerError):
            overhead_report(self._ledger([], [0.5, 0.5, 0.5]))
        with pytest.raises(ServerError):
            overhead_report(self._ledger([0.5], [0.5]))

    def test_negative_duration_rejected(self):
        with pytest.raises(ValueError):
            TimingLedger().add("x", -1.0)


class TestOrderId:
    def test_content_addressed(self):
        a = Displacement(np.ones((3, 3)), 2, 5, 0)
        b = Displacement(np.ones((3, 3)), 2, 5, 0)
        c = Displacement(np.ones((3, 3)), 3, 5, 0)
        assert order_id(a) == order_id(b)
        assert order_id(a) != order_id(c)


class TestSession:
    def test_idle_session_advances_solver_only(self, channel_mesh):
        srv, port, thread = start_server(channel_mesh, max_steps=30)
        conn, _ = connect(port)
        thread.join(timeout=30)
        conn.close()
        assert srv.step_count == 30
        assert all(e[0] == "solver" for e in srv.events)
        assert np.array_equal(srv.pmesh.current, channel_mesh.vertices)

    def test_single_step_order(self, channel_mesh):
        srv, port, thread = start_server(channel_mesh, max_steps=300)
        conn, surface = connect(port)
        d = np.zeros((len(surface.coords), 3))
        d[:, 0] = 0.01
        conn.send(Displacement(d, 1, 0, METHOD_CODES["elasticity"]))
        ack = recv_of(conn, Ack)
        assert ack.code == ACK_OK
        thread.join(timeout=60)
        conn.close()
        deforms = [e for e in srv.events if e[0] == "deform"]
        assert len(deforms) == 1
        assert np.array_equal(srv.offset, d)

    def test_duplicate_rejected_and_queueing(self, channel_mesh):
        srv, port, thread = start_server(channel_mesh, max_steps=200)
        conn, surface = connect(port)
        n = len(surface.coords)
        d1 = np.zeros((n, 3))
        d1[:, 0] = 0.01
        d2 = np.zeros((n, 3))
        d2[:, 1] = 0.01
        conn.send(Displacement(d1, 3, 2, METHOD_CODES["harmonic"]))
        conn.send(Displacement(d1, 3, 2, METHOD_CODES["harmonic"]))
        conn.send(Displacement(d2, 1, 0, METHOD_CODES["harmonic"]))
        codes = [recv_of(conn, Ack).code for _ in range(3)]
        assert codes == [ACK_OK, ACK_REJECT_DUPLICATE, ACK_OK]
        thread.join(timeout=60)
        conn.close()
        deforms = [e for e in srv.events if e[0] == "deform"]
        assert len(deforms) == 4  # 3-step schedule then the queued 1-step
        assert np.array_equal(srv.offset, d2)

    def test_mismatched_field_length_errors(self, channel_mesh):
        srv, port, thread = start_server(channel_mesh, max_steps=40)
        conn, _ = connect(port)
        conn.send(Displacement(np.zeros((2, 3)), 1, 0, 0))
        ack = recv_of(conn, Ack)
        assert ack.code == 2
        thread.join(timeout=30)
        conn.close()

    def test_snapshot_frames_emitted(self, channel_mesh, tmp_path):
        srv, port, thread = start_server(
            channel_mesh, max_steps=25, snapshot_every=10, snapshot_dir=str(tmp_path)
        )
        conn, _ = connect(port)
        snap = recv_of(conn, Snapshot)
        assert snap.step == 10
        assert snap.field_name == "phi"
        thread.join(timeout=30)
        conn.close()
        names = sorted(p.name for p in tmp_path.iterdir())
        assert "snap_10.obj" in names and "snap_10.phi" in names

    def test_bye_closes_session(self, channel_mesh):
        srv, port, thread = start_server(channel_mesh)
        conn, _ = connect(port)
        conn.send(Bye())
        thread.join(timeout=30)
        assert not thread.is_alive()
        conn.close()
