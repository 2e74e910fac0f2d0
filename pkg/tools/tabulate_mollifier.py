"""Tabulate sup-norms of the mollifier derivatives used by ``cm_norm_estimate``.

Run once; paste the printed table into ``potential.MOLLIFIER_DERIVATIVE_BOUNDS``.
The mollifier is phi(x) = exp(1 - 1/(1 - |x|^2)) on the unit ball of R^3.
"""

import numpy as np
import sympy as sp
from scipy.optimize import minimize

x, y, z = sp.symbols("x y z", real=True)
phi = sp.exp(1 - 1 / (1 - x**2 - y**2 - z**2))


def sorted_multi_indices(k):
    for a in range(k, -1, -1):
        for b in range(min(a, k - a), -1, -1):
            c = k - a - b
            if c <= b:
                yield (a, b, c)


def sup_abs(expr):
    f = sp.lambdify((x, y, z), expr, "numpy")

    def g(p):
        r2 = p @ p
        if r2 >= 1.0:
            return 0.0
        return -abs(f(*p))

    ax = np.linspace(0.0, 0.999, 48)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    mask = X**2 + Y**2 + Z**2 < 0.998
    with np.errstate(all="ignore"):
        vals = np.abs(f(X[mask], Y[mask], Z[mask]))
    vals = np.nan_to_num(np.broadcast_to(vals, X[mask].shape))
    pts = np.stack([X[mask], Y[mask], Z[mask]], axis=1)
    best = 0.0
    for i in np.argsort(vals)[-6:]:
        res = minimize(g, pts[i], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        best = max(best, -res.fun, vals[i])
    return best


def main(kmax=8):
    table = []
    for k in range(kmax + 1):
        best = 0.0
        for alpha in sorted_multi_indices(k):
            expr = sp.diff(phi, x, alpha[0], y, alpha[1], z, alpha[2])
            best = max(best, sup_abs(expr))
        table.append(best)
        print(k, repr(best), flush=True)
    print(tuple(table))


if __name__ == "__main__":
    main()
