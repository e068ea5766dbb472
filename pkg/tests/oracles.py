"""Independent plain-arithmetic oracles used to freeze expected values.

Everything here is deliberately written against numpy, with none of the
package's own machinery, so tests compare two separate routes to the same
numbers. Keep it boring.
"""

import numpy as np


def dh_matrix(theta, a, d, alpha):
    """Standard Denavit-Hartenberg link matrix Rz(theta) Tz(d) Tx(a) Rx(alpha)."""
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_oracle(q, a, d, alpha):
    """Chain the six link matrices; returns a 4x4 numpy array."""
    H = np.eye(4)
    for i in range(6):
        H = H @ dh_matrix(q[i], a[i], d[i], alpha[i])
    return H


def euler_zyx_to_matrix(phi, theta, psi):
    """Rz(psi) @ Ry(theta) @ Rx(phi) built from scipy-style elementary rotations."""
    cps, sps = np.cos(psi), np.sin(psi)
    cth, sth = np.cos(theta), np.sin(theta)
    cph, sph = np.cos(phi), np.sin(phi)
    rz = np.array([[cps, -sps, 0], [sps, cps, 0], [0, 0, 1]])
    ry = np.array([[cth, 0, sth], [0, 1, 0], [-sth, 0, cth]])
    rx = np.array([[1, 0, 0], [0, cph, -sph], [0, sph, cph]])
    return rz @ ry @ rx


def matrix_to_euler_zyx(R):
    """Inverse of euler_zyx_to_matrix away from the pitch singularity."""
    psi = np.arctan2(R[1, 0], R[0, 0])
    theta = np.arctan2(-R[2, 0], np.hypot(R[0, 0], R[1, 0]))
    phi = np.arctan2(R[2, 1], R[2, 2])
    return phi, theta, psi


def central_difference(f, point, h=1e-6):
    """Gradient of scalar f at point by central differences, one coordinate at a time."""
    point = [float(v) for v in point]
    grad = []
    for i in range(len(point)):
        hi = list(point)
        lo = list(point)
        hi[i] += h
        lo[i] -= h
        grad.append((f(hi) - f(lo)) / (2.0 * h))
    return grad


def se3_inverse_oracle(H):
    R = H[:3, :3]
    d = H[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ d
    return out


UR10E_A = (0.0, -0.6127, -0.57155, 0.0, 0.0, 0.0)
UR10E_D = (0.1807, 0.0, 0.0, 0.17415, 0.11985, 0.11655)
UR10E_ALPHA = (np.pi / 2, 0.0, 0.0, np.pi / 2, -np.pi / 2, 0.0)
