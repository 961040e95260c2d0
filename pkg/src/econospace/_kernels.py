"""Hot inner loops, in two interchangeable implementations.

The numba path compiles explicit loops with ``@njit``; the numpy path is the
vectorised fallback. Set ``ECONOSPACE_DISABLE_NUMBA=1`` to force the numpy
path (numba's own ``NUMBA_DISABLE_JIT`` also works, it just runs the loops in
the interpreter). Both paths accumulate in the same order and must agree
bit-for-bit; ``tests/test_kernels.py`` checks that.

No ``fastmath``: it licenses reassociation, which breaks reproducibility.
"""

import os

import numpy as np

__all__ = ["BACKEND", "scatter_add", "upwind_divergence", "rk4_pairs", "NUMPY", "NUMBA"]


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _scatter_add_np(cell_ids, weights, ncells):
    out = np.zeros((ncells, weights.shape[1]))
    # ufunc.at is unbuffered: rows are added in index order, like the loop.
    np.add.at(out, cell_ids, weights)
    return out


def _upwind_divergence_np(f, u_face, dx):
    # f: (A, N, B) cell values; u_face: (A, N + 1, B) face velocities, exterior faces zero.
    flux = np.zeros_like(u_face)
    ui = u_face[:, 1:-1, :]
    upwind = np.where(ui > 0.0, f[:, :-1, :], f[:, 1:, :])
    flux[:, 1:-1, :] = ui * upwind
    return (flux[:, 1:, :] - flux[:, :-1, :]) / dx


def _rk4_pairs_np(x0, y0, a, b, dt, steps):
    # dx/dt = a*y, dy/dt = b*x, element-wise.
    xs = np.empty((steps + 1, x0.shape[0]))
    ys = np.empty((steps + 1, x0.shape[0]))
    x = x0.astype(np.float64).copy()
    y = y0.astype(np.float64).copy()
    xs[0] = x
    ys[0] = y
    half = 0.5 * dt
    for n in range(steps):
        k1x = a * y
        k1y = b * x
        k2x = a * (y + half * k1y)
        k2y = b * (x + half * k1x)
        k3x = a * (y + half * k2y)
        k3y = b * (x + half * k2x)
        k4x = a * (y + dt * k3y)
        k4y = b * (x + dt * k3x)
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        xs[n + 1] = x
        ys[n + 1] = y
    return xs, ys


# ---------------------------------------------------------------------------
# loop implementations (compiled with numba when available)
# ---------------------------------------------------------------------------


def _scatter_add_loop(cell_ids, weights, ncells):
    n, m = weights.shape
    out = np.zeros((ncells, m))
    for i in range(n):
        c = cell_ids[i]
        for j in range(m):
            out[c, j] += weights[i, j]
    return out


def _upwind_divergence_loop(f, u_face, dx):
    na, n, nb = f.shape
    out = np.empty_like(f)
    for a in range(na):
        for b in range(nb):
            left = 0.0  # flux through the lower face of the current cell
            for i in range(n):
                if i == n - 1:
                    right = 0.0
                else:
                    u = u_face[a, i + 1, b]
                    if u > 0.0:
                        right = u * f[a, i, b]
                    else:
                        right = u * f[a, i + 1, b]
                out[a, i, b] = (right - left) / dx
                left = right
    return out


def _rk4_pairs_loop(x0, y0, a, b, dt, steps):
    m = x0.shape[0]
    xs = np.empty((steps + 1, m))
    ys = np.empty((steps + 1, m))
    half = 0.5 * dt
    for j in range(m):
        x = x0[j]
        y = y0[j]
        aj = a[j]
        bj = b[j]
        xs[0, j] = x
        ys[0, j] = y
        for n in range(steps):
            k1x = aj * y
            k1y = bj * x
            k2x = aj * (y + half * k1y)
            k2y = bj * (x + half * k1x)
            k3x = aj * (y + half * k2y)
            k3y = bj * (x + half * k2x)
            k4x = aj * (y + dt * k3y)
            k4y = bj * (x + dt * k3x)
            x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            xs[n + 1, j] = x
            ys[n + 1, j] = y
    return xs, ys


NUMPY = {
    "scatter_add": _scatter_add_np,
    "upwind_divergence": _upwind_divergence_np,
    "rk4_pairs": _rk4_pairs_np,
}

NUMBA = None
if os.environ.get("ECONOSPACE_DISABLE_NUMBA", "").strip() not in ("1", "true", "yes"):
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        njit = None
    if njit is not None:
        _jit = njit(cache=True, nogil=True)
        NUMBA = {
            "scatter_add": _jit(_scatter_add_loop),
            "upwind_divergence": _jit(_upwind_divergence_loop),
            "rk4_pairs": _jit(_rk4_pairs_loop),
        }

BACKEND = "numba" if NUMBA is not None else "numpy"
_ACTIVE = NUMBA if NUMBA is not None else NUMPY


def scatter_add(cell_ids, weights, ncells):
    """Sum rows of ``weights`` (N, M) into ``ncells`` bins, in row order."""
    return _ACTIVE["scatter_add"](
        np.ascontiguousarray(cell_ids, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        int(ncells),
    )


def upwind_divergence(f, u_face, dx):
    """Discrete divergence of the upwind flux along axis 1 of a (A, N, B) block."""
    return _ACTIVE["upwind_divergence"](
        np.ascontiguousarray(f, dtype=np.float64),
        np.ascontiguousarray(u_face, dtype=np.float64),
        float(dx),
    )


def rk4_pairs(x0, y0, a, b, dt, steps):
    """RK4 trajectories of independent linear pairs dx/dt = a*y, dy/dt = b*x."""
    return _ACTIVE["rk4_pairs"](
        np.ascontiguousarray(x0, dtype=np.float64),
        np.ascontiguousarray(y0, dtype=np.float64),
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        float(dt),
        int(steps),
    )
