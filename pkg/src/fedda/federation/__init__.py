"""Round loop, clients, transports and the wire codec."""

from fedda.federation.client import ALGORITHMS, ClientWorker, LocalConfig, client_round, local_sgd
from fedda.federation.runner import RunResult, build_problem, run_training
from fedda.federation.server import (BaselineState, ServerState, baseline_round, fedda_i1_round,
                                     sample_clients, server_round)
from fedda.federation.transport import InMemoryTransport, SocketTransport, make_transport

__all__ = [
    "ALGORITHMS", "BaselineState", "ClientWorker", "InMemoryTransport", "LocalConfig", "RunResult",
    "ServerState", "SocketTransport", "baseline_round", "build_problem", "client_round",
    "fedda_i1_round", "local_sgd", "make_transport", "run_training", "sample_clients", "server_round",
]
