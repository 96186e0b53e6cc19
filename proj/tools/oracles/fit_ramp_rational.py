"""Fit a (3,2) rational function to the ramp max(0, x) on [-1, 1].

Offline oracle for the rational activation initialisation. Runs a linearised
least-squares fit followed by the differential-correction algorithm for the
minimax fit, with the denominator normalised so that its constant term is 1.
Prints the coefficients and the max error on a dense grid; the C++ constants
and the test bound are copied from this output.
"""
import numpy as np
from scipy.optimize import linprog

GRID = np.linspace(-1.0, 1.0, 20001)
RAMP = np.maximum(0.0, GRID)


def num_den(c, x):
    a3, a2, a1, a0, b2, b1 = c
    return a3 * x**3 + a2 * x**2 + a1 * x + a0, b2 * x**2 + b1 * x + 1.0


def max_err(c):
    p, q = num_den(c, GRID)
    return np.max(np.abs(p / q - RAMP))


def differential_correction(c, iters=60):
    x, f = GRID[::10], RAMP[::10]
    V = np.stack([x**3, x**2, x, np.ones_like(x)], axis=1)
    W = np.stack([x**2, x], axis=1)
    best = c
    for _ in range(iters):
        p, q = num_den(best, x)
        delta = np.max(np.abs(p / q - f))
        # variables: a3 a2 a1 a0 b2 b1 z ; minimise z
        # |P - f Q| - delta Q <= z * Qk  (both signs)
        qk = q
        rows, rhs = [], []
        for s in (1.0, -1.0):
            A = np.hstack([s * V, (-s * f[:, None] - delta) * W, -qk[:, None]])
            rows.append(A)
            rhs.append(s * f + delta)
        A = np.vstack(rows)
        b = np.concatenate(rhs)
        bounds = [(None, None)] * 6 + [(None, None)]
        res = linprog(np.r_[np.zeros(6), 1.0], A_ub=A, b_ub=b, bounds=bounds,
                      method="highs")
        if not res.success:
            break
        cand = res.x[:6]
        if max_err(cand) < max_err(best) - 1e-15:
            best = cand
        else:
            break
    return best


def main():
    # linearised least squares: P - f Q = 0 with Q = b2 x^2 + b1 x + 1
    x, f = GRID, RAMP
    A = np.stack([x**3, x**2, x, np.ones_like(x), -f * x**2, -f * x], axis=1)
    c0, *_ = np.linalg.lstsq(A, f, rcond=None)
    print("lstsq max error", max_err(c0))
    c = differential_correction(c0)
    e = max_err(c)
    p10, q10 = num_den(c, np.array([10.0]))
    print("minimax coefficients (a3 a2 a1 a0 | b2 b1 b0=1):")
    print(" ".join(f"{v:.17g}" for v in c))
    print(f"max error {e:.17g}")
    print(f"r(10) = {(p10 / q10)[0]:.17g}")


if __name__ == "__main__":
    main()
