"""Node execution backends with identical semantics.

The engine is written against one operation: map a function over all node
states and get the results back ordered by node id.  Reductions are then
performed by the coordinator in that fixed order, so the sequential
simulator and the concurrent worker pool produce bit-identical floating
point results.

The threaded backend gives each worker ownership of a disjoint subset of
nodes (node_id mod workers) and talks to it over a pair of queues; node
state is only ever touched by its owning worker.  FADL_WORKERS caps the
worker count (default: one per node).
"""

from __future__ import annotations

import os
import queue
import threading

__all__ = ["SequentialBackend", "ThreadedBackend", "make_backend"]


class SequentialBackend:
    kind = "sequential"

    def __init__(self, nodes):
        self.nodes = list(nodes)

    def map(self, fn, *args):
        return [fn(node, *args) for node in self.nodes]

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _worker_loop(owned, inbox, outbox):
    while True:
        item = inbox.get()
        if item is None:
            return
        fn, args = item
        batch = []
        for pos, node in owned:
            try:
                batch.append((pos, "ok", fn(node, *args)))
            except BaseException as exc:  # reported to the coordinator
                batch.append((pos, "err", exc))
        outbox.put(batch)


class ThreadedBackend:
    kind = "threads"

    def __init__(self, nodes, max_workers: int | None = None):
        nodes = list(nodes)
        if max_workers is None:
            env = os.environ.get("FADL_WORKERS", "")
            max_workers = int(env) if env.strip() else len(nodes)
        max_workers = max(1, min(max_workers, max(1, len(nodes))))
        self._inboxes = []
        self._outboxes = []
        self._threads = []
        for t in range(max_workers):
            owned = [(pos, node) for pos, node in enumerate(nodes) if pos % max_workers == t]
            inbox: queue.Queue = queue.Queue()
            outbox: queue.Queue = queue.Queue()
            th = threading.Thread(
                target=_worker_loop, args=(owned, inbox, outbox), daemon=True
            )
            th.start()
            self._inboxes.append(inbox)
            self._outboxes.append(outbox)
            self._threads.append(th)
        self._n_nodes = len(nodes)
        self._closed = False

    @property
    def workers(self) -> int:
        return len(self._threads)

    def map(self, fn, *args):
        if self._closed:
            raise RuntimeError("backend already closed")
        for inbox in self._inboxes:
            inbox.put((fn, args))
        collected = []
        for outbox in self._outboxes:
            collected.extend(outbox.get())
        collected.sort(key=lambda item: item[0])
        results = []
        for pos, status, payload in collected:
            if status == "err":
                raise payload
            results.append(payload)
        assert len(results) == self._n_nodes
        return results

    def close(self):
        if self._closed:
            return
        self._closed = True
        for inbox in self._inboxes:
            inbox.put(None)
        for th in self._threads:
            th.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def make_backend(kind: str, nodes, max_workers: int | None = None):
    if kind == "sequential":
        return SequentialBackend(nodes)
    if kind == "threads":
        return ThreadedBackend(nodes, max_workers)
    raise ValueError(f"unknown backend kind: {kind!r}")
