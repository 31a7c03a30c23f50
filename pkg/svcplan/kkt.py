import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import NumericalFailure
from .settings import DEFAULT_REFINEMENT_STEPS, DEFAULT_REGULARIZATION, MAX_REGULARIZATION

logger = logging.getLogger(__name__)


class KktSystem:
    """
    Quasi-definite Newton system

        [ delta I    A'       G'          ]
        [ A         -delta I  0           ]
        [ G          0       -(W^2 + delta I) ]

    factorized with a sparse LU. Solves are refined against the unregularized
    matrix. When the factorization breaks down, delta grows by 100x up to
    MAX_REGULARIZATION.
    """

    def __init__(
        self,
        a: sp.csr_matrix,
        g: sp.csr_matrix,
        regularization: float = DEFAULT_REGULARIZATION,
        refinement_steps: int = DEFAULT_REFINEMENT_STEPS,
    ):
        self.n = a.shape[1]
        self.p = a.shape[0]
        self.m = g.shape[0]
        self.regularization = regularization
        self.refinement_steps = refinement_steps
        zero = sp.csc_matrix
        self._static = sp.bmat(
            [
                [zero((self.n, self.n)), a.T, g.T],
                [a, zero((self.p, self.p)), zero((self.p, self.m))],
                [g, zero((self.m, self.p)), zero((self.m, self.m))],
            ],
            format="csc",
        )
        self._matrix = None
        self._lu = None

    @property
    def dim(self) -> int:
        return self.n + self.p + self.m

    def _regularizer(self, delta: float) -> sp.csc_matrix:
        diag = np.concatenate([np.full(self.n, delta), np.full(self.p + self.m, -delta)])
        return sp.diags(diag, format="csc")

    def factor(self, w_squared: sp.csc_matrix):
        lower = sp.block_diag(
            [sp.csc_matrix((self.n + self.p, self.n + self.p)), -w_squared], format="csc"
        )
        self._matrix = (self._static + lower).tocsc()
        delta = self.regularization
        while True:
            try:
                lu = spla.splu((self._matrix + self._regularizer(delta)).tocsc(), permc_spec="COLAMD")
            except RuntimeError as exc:
                lu, reason = None, str(exc)
            else:
                reason = "non-finite factor"
                if np.all(np.isfinite(lu.U.data)):
                    break
                lu = None
            if delta * 100 > MAX_REGULARIZATION:
                raise NumericalFailure(f"KKT factorization failed at regularization {delta:.1e}: {reason}")
            delta *= 100
            logger.debug("KKT factorization retry with regularization %.1e", delta)
        self._lu = lu

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        u = self._lu.solve(rhs)
        for _ in range(self.refinement_steps):
            residual = rhs - self._matrix @ u
            if not np.all(np.isfinite(residual)):
                raise NumericalFailure("KKT solve produced non-finite values")
            u = u + self._lu.solve(residual)
        return u

    def split(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return u[: self.n], u[self.n : self.n + self.p], u[self.n + self.p :]
