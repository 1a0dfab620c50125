"""Thin wrapper over POT's network-simplex transport solver."""
from __future__ import annotations

import os

import numpy as np

# POT probes every installed array backend on import; only numpy is used here.
for _name in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_name}", "1")

MAX_ITER = 10 ** 9


class LPError(RuntimeError):
    pass


def transport_lp(a: np.ndarray, b: np.ndarray, C: np.ndarray):
    """Exact discrete OT. Returns ``(plan, u, v)`` with ``u ⊕ v ≤ C`` and equality on the support."""
    import ot  # deferred: the import costs about a second

    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    # the simplex requires equal masses to machine precision
    b = b * (a.sum() / b.sum())
    G, log = ot.emd(a, b, C, numItermax=MAX_ITER, log=True, check_marginals=False)
    if log.get("warning"):
        raise LPError(f"network simplex did not terminate cleanly: {log['warning']}")
    return np.asarray(G), np.asarray(log["u"]), np.asarray(log["v"])
