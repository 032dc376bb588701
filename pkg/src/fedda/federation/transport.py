"""Transports between the server loop and client workers.

Both transports return uploads sorted by client id so aggregation order does
not depend on arrival order.
"""

import logging
import socket
import struct
import threading

from fedda.federation import wire

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    pass


class InMemoryTransport:
    """Direct function calls into the workers."""

    def __init__(self, workers):
        self.workers = {w.client_id: w for w in workers}

    def exchange(self, msg, client_ids):
        uploads = []
        for cid in sorted(client_ids):
            # the codec is the identity on float64 arrays, so skipping it here
            # keeps results bit-identical to the socket path
            uploads.append(wire.Upload(cid, tuple(self.workers[cid].run(msg))))
        return uploads

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _serve_worker(worker, host, port):
    sock = socket.create_connection((host, port))
    try:
        sock.sendall(wire.frame(wire.HELLO, struct.pack("<Q", worker.client_id)))
        while True:
            kind, payload = wire.read_frame(sock)
            if kind == wire.SHUTDOWN:
                return
            if kind != wire.BROADCAST:
                raise wire.ProtocolError(f"client {worker.client_id}: unexpected message type {kind}")
            msg = wire.decode_broadcast(payload)
            try:
                arrays = worker.run(msg)
            except Exception as exc:  # reported to the server, which aborts the run
                sock.sendall(wire.frame(wire.ERROR, f"{type(exc).__name__}: {exc}".encode()))
                continue
            sock.sendall(wire.encode_upload(wire.Upload(worker.client_id, tuple(arrays))))
    except (OSError, wire.ProtocolError) as exc:
        log.debug("client %d connection ended: %s", worker.client_id, exc)
    finally:
        sock.close()


class SocketTransport:
    """One TCP connection per client; each worker runs in its own thread."""

    def __init__(self, workers, host="127.0.0.1", timeout=300.0):
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.bind((host, 0))
        self._listener.listen(len(workers))
        self._listener.settimeout(timeout)
        port = self._listener.getsockname()[1]
        self._threads = []
        for w in workers:
            th = threading.Thread(target=_serve_worker, args=(w, host, port), daemon=True)
            th.start()
            self._threads.append(th)
        self._conns = {}
        try:
            for _ in workers:
                conn, _addr = self._listener.accept()
                conn.settimeout(timeout)
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                kind, payload = wire.read_frame(conn)
                if kind != wire.HELLO or len(payload) != 8:
                    raise wire.ProtocolError("expected HELLO with client id")
                (cid,) = struct.unpack("<Q", payload)
                self._conns[cid] = conn
        except (OSError, wire.ProtocolError) as exc:
            self.close()
            raise TransportError(f"socket transport setup failed: {exc}") from exc

    def exchange(self, msg, client_ids):
        ids = sorted(client_ids)
        data = wire.encode_broadcast(msg)
        try:
            for cid in ids:
                self._conns[cid].sendall(data)
            uploads = {}
            for cid in ids:
                kind, payload = wire.read_frame(self._conns[cid])
                if kind == wire.ERROR:
                    raise TransportError(f"client {cid} failed: {payload.decode(errors='replace')}")
                if kind != wire.UPLOAD:
                    raise wire.ProtocolError(f"unexpected message type {kind} from client {cid}")
                up = wire.decode_upload(payload)
                if up.client_id != cid:
                    raise wire.ProtocolError(f"upload from client {up.client_id} on connection {cid}")
                uploads[cid] = up
        except OSError as exc:
            raise TransportError(f"socket exchange failed: {exc}") from exc
        return [uploads[cid] for cid in ids]

    def close(self):
        for conn in self._conns.values():
            try:
                conn.sendall(wire.frame(wire.SHUTDOWN))
            except OSError:
                pass
            conn.close()
        self._conns = {}
        self._listener.close()
        for th in self._threads:
            th.join(timeout=5.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_transport(kind, workers):
    if kind in ("memory", "inmemory"):
        return InMemoryTransport(workers)
    if kind == "socket":
        return SocketTransport(workers)
    raise ValueError(f"unknown transport {kind!r}")
