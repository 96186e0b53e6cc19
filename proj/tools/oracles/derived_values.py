"""Reference numbers used by the unit and acceptance tests.

Each value is computed here independently of the C++ code (brute force,
closed forms via sympy, or running a scalar recurrence) and copied into the
tests as a literal.
"""
import itertools
import math

import numpy as np
import sympy as sp


def multiset_count(n_ops, max_degree):
    ops = range(n_ops)
    seen = set()
    for d in range(1, max_degree + 1):
        for combo in itertools.product(ops, repeat=d):
            seen.add(tuple(sorted(combo)))
    return len(seen)


def burgers_terms_subset():
    # op index: 0 = U, 1 = D_x U, 2 = D_x^2 U, 3 = D_x^3 U
    listed = [(0,), (1,), (2,), (3,), (0, 0), (0, 1), (0, 2), (1, 1), (0, 0, 0), (0, 0, 1), (0, 0, 2),
              (0, 1, 1), (0, 0, 0, 0), (0, 0, 0, 1), (0, 0, 0, 2), (0, 0, 1, 1), (0, 1, 1, 1)]
    allowed = set()
    for d in range(1, 5):
        for combo in itertools.combinations_with_replacement(range(4), d):
            allowed.add(combo)
    return len(listed), all(t in allowed for t in listed)


def irls():
    p = 0.1
    a = 0.5 ** (p - 2.0)
    return a, a * 0.25, 1.0 + 0.5**p


def adam_scalar(steps=200, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
    w, m, v = 0.0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = 2.0 * (w - 3.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh, vh = m / (1 - b1**t), v / (1 - b2**t)
        w -= lr * mh / (math.sqrt(vh) + eps)
    return w


def wave():
    t, x, y = sp.symbols("t x y")
    u = -sp.sin(t - x) + sp.exp(sp.Rational(1, 20) * (t - x - y)) + sp.sin(t - y)
    at_pi = float(u.subs({t: sp.pi, x: sp.pi, y: sp.pi}))
    residual = sp.simplify(sp.diff(u, x, 2) - (sp.diff(u, t, 2) - sp.diff(u, y, 2)))
    return at_pi, residual


def targeted_outlier():
    r = np.array([1.0] * 100 + [50.0])
    thr = r.mean() + 3 * r.std()
    return np.nonzero(r > thr)[0].tolist(), thr


def ramp_at_10():
    num = [1.1914858983147432, 1.5957424316546363, 0.49999999999999101, 0.021844417692519207]
    den = [2.3829717966294734, 0.0, 1.0]
    x = 10.0
    return (num[0] * x**3 + num[1] * x**2 + num[2] * x + num[3]) / (den[0] * x**2 + den[1] * x + den[2])


if __name__ == "__main__":
    print("enumeration J=4, 4 ops:", multiset_count(4, 4))
    print("enumeration J=2, 2 ops:", multiset_count(2, 2))
    for n in range(1, 6):
        print(f"  counts n={n}:", [multiset_count(n, j) for j in range(1, 5)])
    print("burgers listed terms, all in J=4 closure:", burgers_terms_subset())
    print("IRLS a(0.5), a*xi^2, lp(1, 0.5):", irls())
    print("Adam 200 steps on (w-3)^2:", adam_scalar())
    print("wave u(pi,pi,pi), wave residual:", wave())
    print("targeted outlier index, threshold:", targeted_outlier())
    print("glorot 20x20:", math.sqrt(6 / 40))
    print("sqrt(float32 eps):", math.sqrt(2.0**-23))
    print("ramp r(10):", ramp_at_10())
