"""Independent reference computations used by the tests.

Nothing here imports the package's numerical code; each oracle is written
from the defining formula.
"""
import numpy as np
from scipy import signal
from scipy.linalg import expm


def qnu_double_sum(x, colw):
    """sum_{i <= j} x_i x_j w_ij, enumerating pairs in row-major order."""
    x = [float(v) for v in x]
    n = len(x)
    total, p = 0.0, 0
    for i in range(n):
        for j in range(i, n):
            total += x[i] * x[j] * colw[p]
            p += 1
    assert p == len(colw)
    return total


def pairs(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def lm_explicit(J, e, mu):
    """(J^T J + I/mu)^-1 J^T e via an explicit inverse."""
    J = np.asarray(J, float)
    A = J.T @ J + np.eye(J.shape[1]) / mu
    return np.linalg.inv(A) @ (J.T @ np.asarray(e, float))


def critically_damped_step(omega, gain, u, t):
    """Closed-form step response of s'' + 2 w s' + w^2 s = g u from rest."""
    return gain * u / omega ** 2 * (1.0 - (1.0 + omega * t) * np.exp(-omega * t))


def zoh_arx(omega, zeta, gain, dt):
    """Exact difference equation of the linear plant under zero-order hold.

    Returns LNU weights for n_y = n_u = 2:
    ``[0, a1, a2, b1, b2]`` with ``y(k) = a1 y(k-1) + a2 y(k-2) + b1 u(k-1) + b2 u(k-2)``.
    """
    A = np.array([[0.0, 1.0], [-omega ** 2, -2 * zeta * omega]])
    B = np.array([[0.0], [gain]])
    M = np.zeros((3, 3))
    M[:2, :2], M[:2, 2:] = A, B
    P = expm(M * dt)
    num, den = signal.ss2tf(P[:2, :2], P[:2, 2:], np.array([[1.0, 0.0]]), np.zeros((1, 1)))
    num = num[0] / den[0]
    den = den / den[0]
    return np.array([0.0, -den[1], -den[2], num[1], num[2]])


def total_variation_gain(zeta):
    """L1 norm of the unit-static-gain impulse response of an underdamped 2nd-order system.

    The step response peaks alternate with overshoot ratios M^n, M the
    classical overshoot, so the total variation is (1 + M) / (1 - M).
    """
    if zeta >= 1:
        return 1.0
    M = np.exp(-np.pi * zeta / np.sqrt(1 - zeta ** 2))
    return (1 + M) / (1 - M)


def least_squares(X, y):
    return np.linalg.lstsq(np.asarray(X, float), np.asarray(y, float), rcond=None)[0]


def central_difference(f, w, h):
    w = np.asarray(w, float)
    g = np.empty(w.size)
    for i in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        g[i] = (f(wp) - f(wm)) / (2 * h)
    return g
