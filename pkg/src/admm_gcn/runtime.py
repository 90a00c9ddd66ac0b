"""Multi-agent execution of the ADMM iterations.

Agents ``0..M-1`` own one community each (its Z blocks, U and theta);
agent ``M`` is the weight agent and owns W and tau. Every epoch runs
three phases separated by barriers:

1. communities send Z reports (the last one carries ``[Z_L, U]``), the
   weight agent updates every layer and broadcasts the new weights;
2. communities exchange first-order messages, then second-order ones,
   then update their Z blocks;
3. communities update their multipliers.

Agents talk only through messages, carried either by in-process queues
or by loopback TCP sockets using the wire framing of ``messages``.

Timing: for each phase, training time is the slowest agent's compute,
and the rest of the phase's wall time is communication.
"""

from __future__ import annotations

import os
import queue
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import engine
from .messages import (
    Inbox,
    Kind,
    Message,
    ProtocolError,
    TraceWriter,
    build_first_order,
    encode,
    read_frame,
    read_trace,
)
from .problem import Problem

PHASES = ("weights", "messages", "multipliers")
POLL = 0.05


class AgentFailure(RuntimeError):
    def __init__(self, agent, error):
        super().__init__(f"agent {agent} failed: {type(error).__name__}: {error}")
        self.agent = agent
        self.error = error


@dataclass
class AgentClock:
    compute_seconds: float = 0.0
    comm_seconds: float = 0.0

    def add(self, compute=0.0, comm=0.0):
        if compute < 0 or comm < 0:
            raise ValueError("clock increments must be non-negative")
        self.compute_seconds += compute
        self.comm_seconds += comm


@dataclass
class EpochTiming:
    """Per-phase wall and slowest-agent compute seconds."""

    wall: list
    compute: list

    @property
    def total(self):
        return float(sum(self.wall))

    @property
    def training(self):
        return float(sum(self.compute))

    @property
    def communication(self):
        return max(self.total - self.training, 0.0)

    def comm_by_phase(self):
        return {p: max(w - c, 0.0) for p, w, c in zip(PHASES, self.wall, self.compute)}


@dataclass
class RunResult:
    state: engine.ModelState
    timings: list
    clocks: list
    weights: list = field(default_factory=list)
    message_counts: dict = field(default_factory=dict)

    @property
    def total(self):
        return sum(t.total for t in self.timings)

    @property
    def training(self):
        return sum(t.training for t in self.timings)

    @property
    def communication(self):
        return sum(t.communication for t in self.timings)


def host_threads():
    cap = os.environ.get("ADMM_GCN_THREADS")
    if cap:
        return max(1, int(cap))
    return os.cpu_count() or 1


def expected_counts(problem: Problem, L: int) -> dict:
    """Messages per epoch by kind, for one outer iteration."""
    links = sum(len(c.neighbors) for c in problem.communities)
    return {
        Kind.Z_REPORT: problem.M * L,
        Kind.WEIGHT_BROADCAST: problem.M * L,
        Kind.FIRST_ORDER: links * L,
        Kind.SECOND_ORDER: links * (L - 1),
    }


# -- transports --------------------------------------------------------------

class InProcessTransport:
    def __init__(self, n_agents, pairs):
        self.queues = [queue.Queue() for _ in range(n_agents)]

    def send(self, msg: Message):
        self.queues[msg.dst].put(msg)

    def close(self):
        pass


class SocketTransport:
    """One loopback TCP connection per communicating pair of agents.

    A reader thread per endpoint decodes frames into the owner's queue, so
    a sender never blocks on a peer that is itself sending.
    """

    def __init__(self, n_agents, pairs):
        self.queues = [queue.Queue() for _ in range(n_agents)]
        self._socks = {}
        self._locks = {}
        self._readers = []
        listener = socket.create_server(("127.0.0.1", 0))
        try:
            addr = listener.getsockname()
            for a, b in sorted(pairs):
                client = socket.create_connection(addr)
                server, _ = listener.accept()
                for s in (client, server):
                    s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._socks[(a, b)] = client
                self._socks[(b, a)] = server
        finally:
            listener.close()
        for (src, dst), s in self._socks.items():
            self._locks[(src, dst)] = threading.Lock()
            # the endpoint held by ``src`` receives frames for ``src``
            t = threading.Thread(target=self._read, args=(s, src), daemon=True)
            t.start()
            self._readers.append(t)

    def _read(self, sock, owner):
        stream = sock.makefile("rb")
        try:
            while (msg := read_frame(stream)) is not None:
                self.queues[owner].put(msg)
        except (OSError, ValueError, ProtocolError):
            pass

    def send(self, msg: Message):
        key = (msg.src, msg.dst)
        if key not in self._socks:
            raise ProtocolError(f"no link between agents {msg.src} and {msg.dst}")
        with self._locks[key]:
            self._socks[key].sendall(encode(msg))

    def close(self):
        for s in self._socks.values():
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
        for t in self._readers:
            t.join(timeout=1.0)


TRANSPORTS = {"inproc": InProcessTransport, "socket": SocketTransport}


def _blas_limit():
    return threadpool_limits(limits=1)


# -- parallel runner ---------------------------------------------------------

class _Abort(Exception):
    pass


class ParallelRunner:
    """Runs epochs with ``M + 1`` agent threads.

    ``workers`` bounds how many agents compute at the same time (default
    ``M + 1``, capped by ``host_threads()``). ``trace`` names a file that
    receives every message sent, in send order.
    """

    def __init__(self, problem: Problem, hp: engine.Hyperparams, transport="inproc",
                 workers=None, trace=None, layer_parallel=True, limit_blas=True, ledger=None):
        if transport not in TRANSPORTS:
            raise ValueError(f"unknown transport {transport!r}; choose from {sorted(TRANSPORTS)}")
        self.problem = problem
        self.hp = hp
        self.transport_name = transport
        self.workers = workers if workers is not None else min(problem.M + 1, host_threads())
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.trace_path = trace
        self.layer_parallel = layer_parallel
        self.limit_blas = limit_blas
        self.ledger = ledger

    # messaging helpers (run inside agent threads)

    def _send(self, msg):
        if self._trace is not None:
            with self._trace_lock:
                self._trace.write(msg)
        with self._count_lock:
            self._counts[msg.kind] = self._counts.get(msg.kind, 0) + 1
        self._transport.send(msg)

    def _receive(self, agent, inbox, kind, layers, sources):
        """Block until ``inbox`` holds ``kind`` messages for every layer and
        source; messages of other kinds may arrive meanwhile and are kept."""
        q = self._transport.queues[agent]
        missing = {(kind, l, src) for l in layers for src in sources}
        missing = {key for key in missing if not inbox.has(*key)}
        while missing:
            try:
                msg = q.get(timeout=POLL)
            except queue.Empty:
                if self._failed.is_set():
                    raise _Abort from None
                continue
            inbox.put(msg)
            missing.discard((msg.kind, msg.layer, msg.src))

    def _barrier(self):
        try:
            self._barrier_obj.wait()
        except threading.BrokenBarrierError:
            raise _Abort from None

    def _compute(self, agent, phase, fn, *args):
        with self._slots:
            t0 = time.perf_counter()
            out = fn(*args)
            self._phase_compute[agent][phase] += time.perf_counter() - t0
        return out

    def _mark(self):
        self._marks.append(time.perf_counter())

    # agent bodies

    def _community(self, m, epochs):
        comm = self.problem.communities[m]
        hp, L, M = self.hp, self.L, self.problem.M
        Z = self._Z[m]
        U = self._U[m]
        theta = self._theta[m]
        count = self.problem.train_count
        for k in range(self._k0, self._k0 + epochs):
            # phase 1: report, then wait for new weights
            for l in range(1, L + 1):
                payload = (Z[l], U) if l == L else (Z[l],)
                self._send(Message(Kind.Z_REPORT, m, M, l, payload))
            winbox = Inbox(m)
            self._receive(m, winbox, Kind.WEIGHT_BROADCAST, range(1, L + 1), (M,))
            W = [winbox.get(Kind.WEIGHT_BROADCAST, l, M).payload[0] for l in range(1, L + 1)]
            self._barrier()

            # phase 2: p round, s round, Z update
            inbox = Inbox(m)
            firsts = self._compute(m, 1, engine.first_order_messages, comm, Z, W)
            for msg in firsts:
                if msg.dst == m:
                    inbox.put(msg)
                else:
                    self._send(msg)
            self._receive(m, inbox, Kind.FIRST_ORDER, range(L), comm.neighbors)
            seconds = self._compute(m, 1, engine.second_order_messages, comm, inbox, Z, U, L)
            for msg in seconds:
                self._send(msg)
            self._receive(m, inbox, Kind.SECOND_ORDER, range(1, L), comm.neighbors)
            new_Z, new_theta = self._compute(
                m, 1, engine.z_phase, comm, inbox, Z, U, W, theta, hp, count, k, self.ledger)
            self._barrier()

            # phase 3: multipliers from iteration-k activations
            U, _ = self._compute(m, 2, engine.update_U, comm, inbox, Z[L], U, L, hp.rho, k, self.ledger)
            Z, theta = new_Z, new_theta
            self._barrier()
        self._Z[m], self._U[m], self._theta[m] = Z, U, theta

    def _weights(self, epochs):
        problem, hp, L, M = self.problem, self.hp, self.L, self.problem.M
        W, tau = self._W, self._tau
        pool = ThreadPoolExecutor(L) if self.layer_parallel and self.workers > 1 and L > 1 else None
        try:
            for k in range(self._k0, self._k0 + epochs):
                inbox = Inbox(M)
                self._receive(M, inbox, Kind.Z_REPORT, range(1, L + 1), range(M))
                Zs = [problem.stack([inbox.get(Kind.Z_REPORT, l, m).payload[0] for m in range(M)])
                      for l in range(1, L + 1)]
                Ust = problem.stack([inbox.get(Kind.Z_REPORT, L, m).payload[1] for m in range(M)])
                W, tau = self._compute(M, 0, engine.weight_phase_stacked,
                                       problem, W, tau, Zs, Ust, hp, k, self.ledger, pool)
                self._weight_history.append([w.copy() for w in W])
                for m in range(M):
                    for l in range(1, L + 1):
                        self._send(Message(Kind.WEIGHT_BROADCAST, M, m, l, (W[l - 1],)))
                self._barrier()
                self._barrier()
                self._barrier()
        finally:
            if pool is not None:
                pool.shutdown()
        self._W, self._tau = W, tau

    def _guard(self, agent, body, *args):
        try:
            body(*args)
        except _Abort:
            pass
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            with self._count_lock:
                if self._error is None:
                    self._error = AgentFailure(agent, exc)
            self._failed.set()
            self._barrier_obj.abort()

    def run(self, state: engine.ModelState, epochs: int) -> RunResult:
        problem, M = self.problem, self.problem.M
        if state.M != M:
            raise ValueError(f"state has {state.M} communities, problem {M}")
        self.L = state.L
        self._k0 = state.k
        self._W, self._tau = [w.copy() for w in state.W], list(state.tau)
        self._Z = [[state.Z[l][m] for l in range(self.L + 1)] for m in range(M)]
        self._U = list(state.U)
        self._theta = [[state.theta[l][m] for l in range(self.L - 1)] for m in range(M)]
        self._weight_history = []
        self._counts = {}
        self._count_lock = threading.Lock()
        self._trace_lock = threading.Lock()
        self._error = None
        self._failed = threading.Event()
        self._slots = threading.Semaphore(self.workers)
        self._marks = []
        self._barrier_obj = threading.Barrier(M + 1, action=self._mark)
        pairs = {(min(m, r), max(m, r)) for c in problem.communities for m, r in
                 ((c.index, n) for n in c.neighbors)}
        pairs |= {(m, M) for m in range(M)}
        self._transport = TRANSPORTS[self.transport_name](M + 1, pairs)
        self._trace = TraceWriter(self.trace_path) if self.trace_path else None

        timings = []
        clocks = [AgentClock() for _ in range(M + 1)]
        limiter = _blas_limit() if self.limit_blas else None
        try:
            for _ in range(epochs):
                self._phase_compute = [[0.0] * 3 for _ in range(M + 1)]
                self._marks = [time.perf_counter()]
                threads = [threading.Thread(target=self._guard, args=(m, self._community, m, 1),
                                            name=f"agent-{m}") for m in range(M)]
                threads.append(threading.Thread(target=self._guard, args=(M, self._weights, 1),
                                                name="weight-agent"))
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
                if self._error is not None:
                    raise self._error
                self._k0 += 1
                wall = list(np.diff(self._marks))
                compute = [max(a[p] for a in self._phase_compute) for p in range(3)]
                timings.append(EpochTiming(wall=wall, compute=compute))
                for a, clock in enumerate(clocks):
                    busy = sum(self._phase_compute[a])
                    clock.add(compute=busy, comm=max(sum(wall) - busy, 0.0))
        finally:
            if limiter is not None:
                limiter.unregister()
            self._transport.close()
            if self._trace is not None:
                self._trace.close()

        out = engine.ModelState(
            W=self._W,
            Z=[[self._Z[m][l] for m in range(M)] for l in range(self.L + 1)],
            U=self._U,
            tau=self._tau,
            theta=[[self._theta[m][l] for m in range(M)] for l in range(self.L - 1)],
            k=self._k0,
        )
        return RunResult(out, timings, clocks, self._weight_history,
                         {k.name.lower(): v for k, v in sorted(self._counts.items())})


# -- serial schedule ---------------------------------------------------------

def run_serial(problem: Problem, hp: engine.Hyperparams, state: engine.ModelState, epochs: int,
               ledger=None, limit_blas=True) -> RunResult:
    """One agent plays every role in turn; all time is training time.

    BLAS is held to one thread, as for each agent of ``ParallelRunner``,
    so the schedules are compared on equal terms.
    """
    timings, weights = [], []
    clock = AgentClock()
    limiter = _blas_limit() if limit_blas else None
    try:
        for _ in range(epochs):
            t0 = time.perf_counter()
            state, _ = engine.outer_iteration(state, problem, hp, ledger)
            dt = time.perf_counter() - t0
            timings.append(EpochTiming(wall=[dt, 0.0, 0.0], compute=[dt, 0.0, 0.0]))
            clock.add(compute=dt)
            weights.append([w.copy() for w in state.W])
    finally:
        if limiter is not None:
            limiter.unregister()
    return RunResult(state, timings, [clock], weights, {})


def run_epoch(schedule, state, problem, hp, **kw):
    """One outer iteration under ``"serial"`` or ``"parallel"`` scheduling.

    Returns ``(new_state, clocks)``.
    """
    if schedule == "serial":
        res = run_serial(problem, hp, state, 1, ledger=kw.get("ledger"))
    elif schedule == "parallel":
        res = ParallelRunner(problem, hp, **kw).run(state, 1)
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    return res.state, res.clocks


# -- replay ------------------------------------------------------------------

def replay(trace_path, problem: Problem, hp: engine.Hyperparams, state: engine.ModelState,
           epochs: int) -> engine.ModelState:
    """Recompute a logged run from its message trace alone.

    Weights come from the logged broadcasts and every Z/U update reads its
    inbox from the logged first- and second-order messages.
    """
    L, M = state.L, problem.M
    per_epoch = sum(expected_counts(problem, L).values())
    msgs = list(read_trace(trace_path))
    if len(msgs) != per_epoch * epochs:
        raise ProtocolError(f"trace holds {len(msgs)} messages, expected {per_epoch * epochs}")
    state = state.copy()
    for e in range(epochs):
        chunk = msgs[e * per_epoch:(e + 1) * per_epoch]
        W = [None] * L
        inboxes = [Inbox(m) for m in range(M)]
        for msg in chunk:
            if msg.kind == Kind.WEIGHT_BROADCAST and msg.dst == 0:
                W[msg.layer - 1] = msg.payload[0]
            elif msg.kind in (Kind.FIRST_ORDER, Kind.SECOND_ORDER):
                inboxes[msg.dst].put(msg)
        new = state.copy()
        new.W = W
        for m, comm in enumerate(problem.communities):
            Z_m = [state.Z[l][m] for l in range(L + 1)]
            # self-addressed first-order messages never travel; rebuild them
            for l in range(L):
                inboxes[m].put(build_first_order(comm, l, m, Z_m[l], W[l]))
            theta_m = [state.theta[l][m] for l in range(L - 1)]
            Z_new, th = engine.z_phase(comm, inboxes[m], Z_m, state.U[m], W, theta_m, hp,
                                       problem.train_count, state.k)
            for l in range(1, L + 1):
                new.Z[l][m] = Z_new[l]
            for l in range(L - 1):
                new.theta[l][m] = th[l]
            new.U[m], _ = engine.update_U(comm, inboxes[m], Z_m[L], state.U[m], L, hp.rho)
        new.k = state.k + 1
        state = new
    return state
