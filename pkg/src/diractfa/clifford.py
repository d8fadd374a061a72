"""Dirac matrix sets in arbitrary spatial dimension.

The construction is the usual recursive tensor-product scheme. Write
``gens(k)`` for a list of ``2k + 1`` mutually anticommuting Hermitian
involutions of size ``2**k``::

    gens(0) = [1]
    gens(k) = [sigma_1 (x) g for g in gens(k - 1)] + [sigma_2 (x) I, sigma_3 (x) I]

For spatial dimension ``d`` we take ``k = ceil(d / 2)``, set
``alpha_0 = sigma_3 (x) I`` (the last generator, already in the
``diag(I, -I)`` block form) and ``alpha_1 .. alpha_d`` the first ``d``
generators.  For ``d = 3`` this reproduces Dirac's representation
``alpha_i = [[0, sigma_i], [sigma_i, 0]]``.
"""

from dataclasses import dataclass, field
import math
import numbers

import numpy as np

SIGMA_1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_3 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_1, SIGMA_2, SIGMA_3)


@dataclass(frozen=True, eq=False)
class DiracMatrixSet:
    """alpha_0 (mass matrix) followed by alpha_1 .. alpha_d, plus the mass."""

    d: int
    n: int
    alphas: np.ndarray = field(repr=False)
    m: float = 0.0

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=complex)
        if alphas.shape != (self.d + 1, self.n, self.n):
            raise ValueError(
                f"alphas must have shape {(self.d + 1, self.n, self.n)}, got {alphas.shape}")
        if self.m < 0:
            raise ValueError("mass must be non-negative")
        alphas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)

    @property
    def alpha0(self):
        return self.alphas[0]

    def with_mass(self, m):
        return DiracMatrixSet(self.d, self.n, self.alphas, float(m))

    def generator(self, xi):
        """m alpha_0 + sum_j xi_j alpha_j for xi of shape (..., d)."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.d:
            raise ValueError(f"xi must end in an axis of length {self.d}")
        return self.m * self.alphas[0] + np.tensordot(xi, self.alphas[1:], axes=([-1], [0]))


def _generators(k):
    if k == 0:
        return [np.ones((1, 1), dtype=complex)]
    prev = _generators(k - 1)
    eye = np.eye(2 ** (k - 1), dtype=complex)
    return [np.kron(SIGMA_1, g) for g in prev] + [np.kron(SIGMA_2, eye), np.kron(SIGMA_3, eye)]


def spinor_dimension(d):
    return 2 ** math.ceil(d / 2)


def build_dirac_matrices(d, m=0.0):
    """Dirac matrices for spatial dimension ``d`` with mass ``m``.

    Returns a :class:`DiracMatrixSet` of size ``n = 2**ceil(d/2)`` whose
    ``alpha_0`` is ``diag(1, ..., 1, -1, ..., -1)``.
    """
    if isinstance(d, bool) or not isinstance(d, numbers.Integral):
        raise TypeError(f"d must be an integer, got {d!r}")
    if d < 1:
        raise ValueError("d must be at least 1")
    if m < 0:
        raise ValueError("mass must be non-negative")
    k = math.ceil(d / 2)
    gens = _generators(k)
    alphas = np.stack([gens[-1]] + gens[:d])
    return DiracMatrixSet(int(d), 2 ** k, alphas, float(m))


@dataclass
class CliffordReport:
    ok: bool
    max_residual: float
    worst_pair: tuple
    hermitian: bool
    max_hermitian_residual: float
    non_hermitian: list
    alpha0_block_form: bool
    tol: float

    def to_dict(self):
        return {
            "ok": self.ok,
            "max_residual": self.max_residual,
            "worst_pair": list(self.worst_pair),
            "hermitian": self.hermitian,
            "max_hermitian_residual": self.max_hermitian_residual,
            "non_hermitian": list(self.non_hermitian),
            "alpha0_block_form": self.alpha0_block_form,
            "tol": self.tol,
        }


def verify_clifford(dset, tol=1e-12):
    """Check Hermiticity, the anticommutation relations and the alpha_0 form.

    Residuals are max-abs entrywise norms. The report names the worst
    ``(i, j)`` pair of ``alpha_i alpha_j + alpha_j alpha_i - 2 delta_ij I``.
    """
    a = np.asarray(dset.alphas)
    count, n = a.shape[0], a.shape[1]
    eye = np.eye(n)
    worst, worst_pair = -1.0, (0, 0)
    for i in range(count):
        for j in range(i, count):
            r = a[i] @ a[j] + a[j] @ a[i] - 2.0 * (i == j) * eye
            res = float(np.max(np.abs(r)))
            if res > worst:
                worst, worst_pair = res, (i, j)
    herm = [float(np.max(np.abs(a[i] - a[i].conj().T))) for i in range(count)]
    non_herm = [i for i, h in enumerate(herm) if h > tol]
    half = n // 2
    target = np.diag(np.r_[np.ones(half), -np.ones(n - half)])
    block = n % 2 == 0 and float(np.max(np.abs(a[0] - target))) <= tol
    ok = worst <= tol and not non_herm and block
    return CliffordReport(ok, worst, worst_pair, not non_herm, max(herm), non_herm, block, tol)
