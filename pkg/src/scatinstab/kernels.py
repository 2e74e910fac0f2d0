"""Hot inner loops: direct Green's-function sums and plane-wave phase sums.

Each kernel exists twice, a numba ``@njit`` loop and a vectorized numpy
version.  The public names dispatch to numba unless the environment variable
``SCATINSTAB_NUMBA`` is set to ``0`` (or numba is not importable).
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SCATINSTAB_NUMBA", "1") != "0"
BACKEND = "numba" if USE_NUMBA else "numpy"

_COINCIDE2 = 1e-24
_CHUNK = 1 << 20


def green_sum_numpy(targets, sources, q, s, self_value):
    """``out[b, t] = sum_y G(x_t - y) q[b, y]`` with ``G = e^{is r}/(4 pi r)``.

    A source coinciding with the target contributes ``self_value * q`` instead.
    ``q`` has shape ``(B, S)``; cell volumes must already be folded into it.
    """
    targets = np.ascontiguousarray(targets, dtype=float)
    sources = np.ascontiguousarray(sources, dtype=float)
    q = np.atleast_2d(np.asarray(q, dtype=complex))
    out = np.zeros((q.shape[0], len(targets)), dtype=complex)
    step = max(1, _CHUNK // max(1, len(sources)))
    for t0 in range(0, len(targets), step):
        d = targets[t0:t0 + step, None, :] - sources[None, :, :]
        r = np.sqrt(np.einsum("tsk,tsk->ts", d, d))
        same = r * r < _COINCIDE2
        r_safe = np.where(same, 1.0, r)
        g = np.exp(1j * s * r_safe) / (4.0 * np.pi * r_safe)
        g[same] = self_value
        out[:, t0:t0 + step] = q @ g.T
    return out


def phase_sum_numpy(points, q, wavevectors):
    """``out[p] = sum_x exp(i k_p . x) q[x]`` for (possibly complex) ``k_p``."""
    points = np.asarray(points, dtype=float)
    q = np.asarray(q, dtype=complex)
    k = np.atleast_2d(np.asarray(wavevectors, dtype=complex))
    out = np.empty(len(k), dtype=complex)
    step = max(1, _CHUNK // max(1, len(points)))
    for k0 in range(0, len(k), step):
        out[k0:k0 + step] = np.exp(1j * (k[k0:k0 + step] @ points.T)) @ q
    return out


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def green_sum_numba(targets, sources, q, s, self_value):
        nb = q.shape[0]
        nt = targets.shape[0]
        ns = sources.shape[0]
        out = np.zeros((nb, nt), dtype=np.complex128)
        inv4pi = 1.0 / (4.0 * np.pi)
        for t in range(nt):
            tx = targets[t, 0]
            ty = targets[t, 1]
            tz = targets[t, 2]
            for y in range(ns):
                dx = tx - sources[y, 0]
                dy = ty - sources[y, 1]
                dz = tz - sources[y, 2]
                r2 = dx * dx + dy * dy + dz * dz
                if r2 < 1e-24:
                    g = self_value
                else:
                    r = np.sqrt(r2)
                    g = np.exp(1j * s * r) * (inv4pi / r)
                for b in range(nb):
                    out[b, t] += g * q[b, y]
        return out

    @numba.njit(cache=True)
    def phase_sum_numba(points, q, wavevectors):
        nk = wavevectors.shape[0]
        npnt = points.shape[0]
        out = np.zeros(nk, dtype=np.complex128)
        for p in range(nk):
            kx = wavevectors[p, 0]
            ky = wavevectors[p, 1]
            kz = wavevectors[p, 2]
            acc = 0j
            for x in range(npnt):
                acc += np.exp(1j * (kx * points[x, 0] + ky * points[x, 1]
                                    + kz * points[x, 2])) * q[x]
            out[p] = acc
        return out


def green_sum(targets, sources, q, s, self_value=0.0):
    q = np.atleast_2d(np.asarray(q, dtype=complex))
    if USE_NUMBA:
        return green_sum_numba(np.ascontiguousarray(targets, dtype=float),
                               np.ascontiguousarray(sources, dtype=float),
                               np.ascontiguousarray(q), complex(s), complex(self_value))
    return green_sum_numpy(targets, sources, q, complex(s), complex(self_value))


def phase_sum(points, q, wavevectors):
    k = np.atleast_2d(np.asarray(wavevectors, dtype=complex))
    if USE_NUMBA:
        return phase_sum_numba(np.ascontiguousarray(points, dtype=float),
                               np.ascontiguousarray(q, dtype=complex),
                               np.ascontiguousarray(k))
    return phase_sum_numpy(points, q, k)
