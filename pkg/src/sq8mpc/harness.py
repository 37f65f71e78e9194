"""Run the same protocol function at three in-process parties.

Used by run-local, the benches and the test suite.  Each party gets its
own thread and session; the first exception tears the mesh down so the
other threads unblock instead of hanging.
"""

from __future__ import annotations

import threading
from typing import Any, Callable

from .session import DABIT_BATCH, PartySession, TruncMode, make_local_sessions

ProtocolFn = Callable[[PartySession], Any]


def run_parties(
    fn: ProtocolFn | dict[int, ProtocolFn],
    k: int,
    mode: TruncMode = TruncMode.EXACT,
    master_seed: bytes | None = None,
    timeout: float = 60.0,
    dabit_batch: int = DABIT_BATCH,
    keep_sessions: bool = False,
):
    """Execute fn(sess) at parties 1..3 and return their results.

    Returns [r1, r2, r3], or ([r1, r2, r3], sessions) with
    keep_sessions=True so callers can inspect CommStats afterwards.
    """
    sessions = make_local_sessions(
        k, mode=mode, master_seed=master_seed, timeout=timeout,
        dabit_batch=dabit_batch,
    )
    fns = fn if isinstance(fn, dict) else {p: fn for p in sessions}
    results: dict[int, Any] = {}
    errors: dict[int, BaseException] = {}

    def work(p: int):
        try:
            results[p] = fns[p](sessions[p])
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            errors[p] = exc
            for s in sessions.values():
                s.close()

    threads = [
        threading.Thread(target=work, args=(p,), name=f"party-{p}")
        for p in sessions
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    if errors:
        party = min(errors)
        raise errors[party]
    out = [results[p] for p in sorted(results)]
    if keep_sessions:
        return out, sessions
    for s in sessions.values():
        s.close()
    return out
