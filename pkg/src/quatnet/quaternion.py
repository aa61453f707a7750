"""Quaternion scalars, dense quaternion tensors and the algebra everything else builds on.

A quaternion is stored as four float64 components ``(q0, q1, q2, q3)`` for
``q = q0 + q1 i + q2 j + q3 k``.  Vectorised code keeps the components in the
trailing axis of an ndarray of shape ``(..., 4)``; the scalar ``Quaternion``
class is a thin convenience wrapper over a single such 4-vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AXES = ("i", "j", "k")

# Sign patterns of the self-inverse mappings q^eta = -eta q eta.  Each axis
# keeps the real part and its own component, flipping the other two.
_INVOLUTION_SIGNS = {
    "i": np.array([1.0, 1.0, -1.0, -1.0]),
    "j": np.array([1.0, -1.0, 1.0, -1.0]),
    "k": np.array([1.0, -1.0, -1.0, 1.0]),
}

_CONJ_SIGNS = np.array([1.0, -1.0, -1.0, -1.0])

# Structure tensor of the Hamilton product: e_a e_b = sum_c QMUL_TABLE[a,b,c] e_c.
QMUL_TABLE = np.zeros((4, 4, 4))
for _a in range(4):
    QMUL_TABLE[0, _a, _a] = 1.0
    QMUL_TABLE[_a, 0, _a] = 1.0
QMUL_TABLE[1, 1] = QMUL_TABLE[2, 2] = QMUL_TABLE[3, 3] = [-1.0, 0.0, 0.0, 0.0]
QMUL_TABLE[1, 2, 3], QMUL_TABLE[2, 1, 3] = 1.0, -1.0
QMUL_TABLE[2, 3, 1], QMUL_TABLE[3, 2, 1] = 1.0, -1.0
QMUL_TABLE[3, 1, 2], QMUL_TABLE[1, 3, 2] = 1.0, -1.0


@dataclass(frozen=True)
class Quaternion:
    """One quaternion value q0 + q1 i + q2 j + q3 k over 64-bit reals."""

    q0: float = 0.0
    q1: float = 0.0
    q2: float = 0.0
    q3: float = 0.0

    def __post_init__(self):
        for name in ("q0", "q1", "q2", "q3"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_array(cls, arr) -> "Quaternion":
        a = np.asarray(arr, dtype=float)
        if a.shape != (4,):
            raise ValueError(f"expected a 4-vector, got shape {a.shape}")
        return cls(*a.tolist())

    def as_array(self) -> np.ndarray:
        return np.array([self.q0, self.q1, self.q2, self.q3], dtype=np.float64)

    @property
    def components(self):
        return (self.q0, self.q1, self.q2, self.q3)

    def is_unit(self, tol: float = 1e-12) -> bool:
        return abs(norm(self) - 1.0) <= tol

    def is_pure(self, tol: float = 1e-12) -> bool:
        return abs(self.q0) <= tol

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return qadd(self, other)

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        return qadd(self, other * -1.0)

    def __mul__(self, scalar: float) -> "Quaternion":
        return Quaternion(self.q0 * scalar, self.q1 * scalar,
                          self.q2 * scalar, self.q3 * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Quaternion":
        return self * -1.0

    def __repr__(self) -> str:
        return (f"Quaternion({self.q0:g}, {self.q1:g}i, "
                f"{self.q2:g}j, {self.q3:g}k)")


ONE = Quaternion(1.0)
I = Quaternion(0.0, 1.0)
J = Quaternion(0.0, 0.0, 1.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)


def qadd(x: Quaternion, y: Quaternion) -> Quaternion:
    """Componentwise sum of two quaternions."""
    return Quaternion(x.q0 + y.q0, x.q1 + y.q1, x.q2 + y.q2, x.q3 + y.q3)


def hamilton(x: Quaternion, y: Quaternion) -> Quaternion:
    """Hamilton product x ⊗ y (non-commutative).

    Expands to the full 16-term bilinear form with the sign table
    i^2 = j^2 = k^2 = -1, ij = k, jk = i, ki = j.
    """
    return Quaternion(
        x.q0 * y.q0 - x.q1 * y.q1 - x.q2 * y.q2 - x.q3 * y.q3,
        x.q0 * y.q1 + x.q1 * y.q0 + x.q2 * y.q3 - x.q3 * y.q2,
        x.q0 * y.q2 - x.q1 * y.q3 + x.q2 * y.q0 + x.q3 * y.q1,
        x.q0 * y.q3 + x.q1 * y.q2 - x.q2 * y.q1 + x.q3 * y.q0,
    )


def hadamard(x: Quaternion, y: Quaternion) -> Quaternion:
    """Componentwise (Hadamard) product x ∘ y."""
    return Quaternion(x.q0 * y.q0, x.q1 * y.q1, x.q2 * y.q2, x.q3 * y.q3)


def conjugate(q: Quaternion) -> Quaternion:
    return Quaternion(q.q0, -q.q1, -q.q2, -q.q3)


def norm(q: Quaternion) -> float:
    return float(np.sqrt(q.q0 ** 2 + q.q1 ** 2 + q.q2 ** 2 + q.q3 ** 2))


def involution(q: Quaternion, axis: str) -> Quaternion:
    """Self-inverse mapping q^eta = -eta q eta for eta in {i, j, k}.

    Axis ``i`` flips the j and k components, ``j`` flips i and k, and ``k``
    flips i and j.
    """
    if axis not in _INVOLUTION_SIGNS:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    s = _INVOLUTION_SIGNS[axis]
    return Quaternion(q.q0 * s[0], q.q1 * s[1], q.q2 * s[2], q.q3 * s[3])


def conj_involution(q: Quaternion, axis: str) -> Quaternion:
    """Conjugate of the involution, conjugate(involution(q, axis))."""
    return conjugate(involution(q, axis))


_UNITS = {"1": ONE, "i": I, "j": J, "k": K, "-i": -I, "-j": -J, "-k": -K}

# Each identity rebuilds a quantity from the four mappings of one family.
# Entry: (family, premultiplier, scale, signs).  Family "involutions" expects
# parts (q, q^i, q^j, q^k); family "conjugates" expects the conjugate
# involutions (q*, q^{i*}, q^{j*}, q^{k*}).
RECONSTRUCTION_IDENTITIES = {
    "q0-from-involutions": ("involutions", "1", 0.25, (1, 1, 1, 1)),
    "q1-from-involutions": ("involutions", "-i", 0.25, (1, 1, -1, -1)),
    "q2-from-involutions": ("involutions", "-j", 0.25, (1, -1, 1, -1)),
    "q3-from-involutions": ("involutions", "-k", 0.25, (1, -1, -1, 1)),
    "conjugate-from-involutions": ("involutions", "1", 0.5, (-1, 1, 1, 1)),
    "conj-involution-i-from-involutions": ("involutions", "1", 0.5, (1, -1, 1, 1)),
    "conj-involution-j-from-involutions": ("involutions", "1", 0.5, (1, 1, -1, 1)),
    "conj-involution-k-from-involutions": ("involutions", "1", 0.5, (1, 1, 1, -1)),
    "q0-from-conjugates": ("conjugates", "1", 0.25, (1, 1, 1, 1)),
    "q1-from-conjugates": ("conjugates", "i", 0.25, (1, 1, -1, -1)),
    "q2-from-conjugates": ("conjugates", "j", 0.25, (1, -1, 1, -1)),
    "q3-from-conjugates": ("conjugates", "k", 0.25, (1, -1, -1, 1)),
    "q-from-conjugates": ("conjugates", "1", 0.5, (-1, 1, 1, 1)),
    "involution-i-from-conjugates": ("conjugates", "1", 0.5, (1, -1, 1, 1)),
    "involution-j-from-conjugates": ("conjugates", "1", 0.5, (1, 1, -1, 1)),
    "involution-k-from-conjugates": ("conjugates", "1", 0.5, (1, 1, 1, -1)),
}


def reconstruct(parts, identity: str) -> Quaternion:
    """Evaluate one of the reconstruction identities over a 4-tuple of mappings.

    ``parts`` is ``(q, q^i, q^j, q^k)`` for the "from-involutions" identities
    or ``(q*, q^{i*}, q^{j*}, q^{k*})`` for the "from-conjugates" ones.  The
    ``q0``..``q3`` identities return the component as a real quaternion.
    """
    if identity not in RECONSTRUCTION_IDENTITIES:
        raise ValueError(f"unknown reconstruction identity {identity!r}")
    _, premul, scale, signs = RECONSTRUCTION_IDENTITIES[identity]
    acc = np.zeros(4)
    for s, part in zip(signs, parts):
        acc += s * part.as_array()
    out = Quaternion.from_array(scale * acc)
    if premul != "1":
        out = hamilton(_UNITS[premul], out)
    return out


def involution_family(q: Quaternion):
    """(q, q^i, q^j, q^k)."""
    return (q,) + tuple(involution(q, ax) for ax in AXES)


def conjugate_family(q: Quaternion):
    """(q*, q^{i*}, q^{j*}, q^{k*})."""
    return (conjugate(q),) + tuple(conj_involution(q, ax) for ax in AXES)


# ---------------------------------------------------------------------------
# Vectorised counterparts on (..., 4) component arrays.

def hamilton_arr(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Hamilton product over the trailing component axis, broadcasting."""
    x0, x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    y0, y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2], y[..., 3]
    return np.stack([
        x0 * y0 - x1 * y1 - x2 * y2 - x3 * y3,
        x0 * y1 + x1 * y0 + x2 * y3 - x3 * y2,
        x0 * y2 - x1 * y3 + x2 * y0 + x3 * y1,
        x0 * y3 + x1 * y2 - x2 * y1 + x3 * y0,
    ], axis=-1)


def hadamard_arr(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x * y


def conjugate_arr(q: np.ndarray) -> np.ndarray:
    return q * _CONJ_SIGNS


def involution_arr(q: np.ndarray, axis: str) -> np.ndarray:
    if axis not in _INVOLUTION_SIGNS:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    return q * _INVOLUTION_SIGNS[axis]


def norm_arr(q: np.ndarray) -> np.ndarray:
    """Elementwise quaternion norm; drops the component axis."""
    return np.sqrt(np.sum(q * q, axis=-1))


def _components(arr: np.ndarray) -> np.ndarray:
    # contiguous (4, ...) slices; strided views would force BLAS repacking
    return np.ascontiguousarray(np.moveaxis(arr, -1, 0))


def qmatvec(w: np.ndarray, x: np.ndarray, input_left: bool = False) -> np.ndarray:
    """Quaternion matrix-vector product over component arrays.

    ``w`` has shape ``(m, n, 4)`` and ``x`` shape ``(..., n, 4)``; the result
    is ``(..., m, 4)`` with ``out_i = sum_j w_ij ⊗ x_j``.  With
    ``input_left=True`` the operand order is swapped per term,
    ``out_i = sum_j x_j ⊗ w_ij``, which differs because the Hamilton product
    is non-commutative.
    """
    wc = _components(w)
    xc = _components(x)
    w0, w1, w2, w3 = wc[0].T, wc[1].T, wc[2].T, wc[3].T
    x0, x1, x2, x3 = xc
    if input_left:
        z0 = x0 @ w0 - x1 @ w1 - x2 @ w2 - x3 @ w3
        z1 = x0 @ w1 + x1 @ w0 + x2 @ w3 - x3 @ w2
        z2 = x0 @ w2 - x1 @ w3 + x2 @ w0 + x3 @ w1
        z3 = x0 @ w3 + x1 @ w2 - x2 @ w1 + x3 @ w0
    else:
        z0 = x0 @ w0 - x1 @ w1 - x2 @ w2 - x3 @ w3
        z1 = x1 @ w0 + x0 @ w1 + x3 @ w2 - x2 @ w3
        z2 = x2 @ w0 - x3 @ w1 + x0 @ w2 + x1 @ w3
        z3 = x3 @ w0 + x2 @ w1 - x1 @ w2 + x0 @ w3
    return np.stack([z0, z1, z2, z3], axis=-1)


def qvecmat(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``out_j = sum_i v_i ⊗ w_ij`` for ``v`` of shape ``(..., m, 4)``, ``w`` ``(m, n, 4)``."""
    wc = _components(w)
    vc = _components(v)
    w0, w1, w2, w3 = wc
    v0, v1, v2, v3 = vc
    r0 = v0 @ w0 - v1 @ w1 - v2 @ w2 - v3 @ w3
    r1 = v0 @ w1 + v1 @ w0 + v2 @ w3 - v3 @ w2
    r2 = v0 @ w2 - v1 @ w3 + v2 @ w0 + v3 @ w1
    r3 = v0 @ w3 + v1 @ w2 - v2 @ w1 + v3 @ w0
    return np.stack([r0, r1, r2, r3], axis=-1)


def qouter(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batch-summed quaternion outer product.

    ``u`` has shape ``(..., m, 4)`` and ``v`` ``(..., n, 4)`` with matching
    leading dimensions; returns ``(m, n, 4)`` with
    ``out_ij = sum_batch u_i ⊗ v_j``.
    """
    m, n = u.shape[-2], v.shape[-2]
    uc = _components(u.reshape(-1, m, 4))
    vc = _components(v.reshape(-1, n, 4))
    u0, u1, u2, u3 = uc[0].T, uc[1].T, uc[2].T, uc[3].T
    v0, v1, v2, v3 = vc
    o0 = u0 @ v0 - u1 @ v1 - u2 @ v2 - u3 @ v3
    o1 = u0 @ v1 + u1 @ v0 + u2 @ v3 - u3 @ v2
    o2 = u0 @ v2 - u1 @ v3 + u2 @ v0 + u3 @ v1
    o3 = u0 @ v3 + u1 @ v2 - u2 @ v1 + u3 @ v0
    return np.stack([o0, o1, o2, o3], axis=-1)


class QTensor:
    """Dense row-major array of quaternions.

    ``data`` has shape ``(*shape, 4)`` with the quaternion components in the
    trailing axis.  The logical shape never includes that axis.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim < 1 or data.shape[-1] != 4:
            raise ValueError(f"component axis of size 4 required, got shape {data.shape}")
        self.data = data

    @classmethod
    def zeros(cls, shape) -> "QTensor":
        return cls(np.zeros(tuple(shape) + (4,)))

    @classmethod
    def from_components(cls, q0, q1, q2, q3) -> "QTensor":
        return cls(np.stack([q0, q1, q2, q3], axis=-1))

    @classmethod
    def from_quaternions(cls, quats, shape=None) -> "QTensor":
        flat = np.array([q.as_array() for q in quats])
        if shape is not None:
            flat = flat.reshape(tuple(shape) + (4,))
        return cls(flat)

    @classmethod
    def from_real(cls, values) -> "QTensor":
        """Embed a real array as quaternions with zero imaginary parts."""
        values = np.asarray(values, dtype=np.float64)
        data = np.zeros(values.shape + (4,))
        data[..., 0] = values
        return cls(data)

    @property
    def shape(self):
        return self.data.shape[:-1]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=int)) if self.shape else 1

    def item(self, *index) -> Quaternion:
        return Quaternion.from_array(self.data[index])

    def quaternions(self):
        """Iterate the stored quaternions in row-major order."""
        flat = self.data.reshape(-1, 4)
        return [Quaternion.from_array(row) for row in flat]

    def reshape(self, shape) -> "QTensor":
        return QTensor(self.data.reshape(tuple(shape) + (4,)))

    def copy(self) -> "QTensor":
        return QTensor(self.data.copy())

    def conjugate(self) -> "QTensor":
        return QTensor(conjugate_arr(self.data))

    def norms(self) -> np.ndarray:
        return norm_arr(self.data)

    def __add__(self, other: "QTensor") -> "QTensor":
        return QTensor(self.data + other.data)

    def __sub__(self, other: "QTensor") -> "QTensor":
        return QTensor(self.data - other.data)

    def __repr__(self) -> str:
        return f"QTensor(shape={self.shape})"
