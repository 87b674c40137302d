"""Debug hook points for stall injection and write recording.

Hooks are off unless ``IST_DEBUG_HOOKS=1`` is set or a handler is installed
programmatically.  Call sites guard on :data:`enabled` so the disabled cost is
one module attribute load.

Points fired by the library:

``dcss_installed(desc)``
    a DCSS descriptor was just placed in its slot, before it is completed
``before_update_dcss(tree, node, index)``
    an insert/delete is about to issue its DCSS
``after_announce(op)``
    a rebuild descriptor was installed by the announcing thread
``after_mark(op, key_count)``
    a helper finished marking and counting the target subtree
``after_next_mark(node, index)``
    a collaborative marker claimed ``index`` through ``next_mark``
``after_degree_claim(op, index)``
    a collaborative builder claimed child ``index`` of the new root
``slot_write(node, index, new, status)``
    a DCSS decided to write ``new`` into ``node.children[index]``; ``status``
    is the node's status word read at that decision
``key_write(node, index, key, changed, status)``
    a collaborative builder wrote a separator into a new root; ``changed``
    and ``status`` were read atomically with the write
"""

import contextlib
import os
import threading

enabled = os.environ.get("IST_DEBUG_HOOKS") == "1"

_handlers = {}
_lock = threading.Lock()


def fire(point, *args):
    fn = _handlers.get(point)
    if fn is not None:
        fn(*args)


def install(point, fn):
    global enabled
    with _lock:
        _handlers[point] = fn
        enabled = True


def remove(point):
    global enabled
    with _lock:
        _handlers.pop(point, None)
        if not _handlers:
            enabled = os.environ.get("IST_DEBUG_HOOKS") == "1"


def clear():
    global enabled
    with _lock:
        _handlers.clear()
        enabled = os.environ.get("IST_DEBUG_HOOKS") == "1"


@contextlib.contextmanager
def installed(**handlers):
    """Install ``point=fn`` handlers for the duration of a ``with`` block."""
    for point, fn in handlers.items():
        install(point, fn)
    try:
        yield
    finally:
        for point in handlers:
            remove(point)


class WriteRecorder:
    """Collects slot and separator writes, flagging those into frozen nodes.

    A slot write is flagged when the status word read at its decision point is
    not the initial word.  A separator write is flagged when it changes the
    stored key of a node that is no longer in its initial state.
    """

    def __init__(self):
        self.writes = 0
        self.frozen_writes = []
        self._lock = threading.Lock()

    def slot_write(self, node, index, new, status):
        with self._lock:
            self.writes += 1
            if status != 0:
                self.frozen_writes.append(("slot", node, index, new))

    def key_write(self, node, index, key, changed, status):
        with self._lock:
            self.writes += 1
            if changed and status != 0:
                self.frozen_writes.append(("key", node, index, key))

    @contextlib.contextmanager
    def recording(self):
        with installed(slot_write=self.slot_write, key_write=self.key_write):
            yield self


class StallPoint:
    """Blocks the first ``count`` threads that reach a hook point.

    ``reached`` is set once a thread is parked; ``release()`` lets it go.
    """

    def __init__(self, count=1, predicate=None):
        self.remaining = count
        self.predicate = predicate
        self.reached = threading.Event()
        self._release = threading.Event()
        self._lock = threading.Lock()
        self.stalled = []

    def __call__(self, *args):
        if self.predicate is not None and not self.predicate(*args):
            return
        with self._lock:
            if self.remaining <= 0:
                return
            self.remaining -= 1
            self.stalled.append(threading.current_thread().name)
        self.reached.set()
        self._release.wait()

    def release(self):
        self._release.set()
