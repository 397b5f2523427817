"""Exponential one-step integrators for the linearized noise dynamics.

The homogeneous flow dG/dt = -i M(t) G is advanced with commutator-free
fourth-order exponentials (two matrix exponentials per step, Gauss
sampling of M), or with a single midpoint exponential (second order) for
the cross-check path.  The rank-one Langevin diffusion entering the
second moments is integrated exactly within each sub-exponential via a
Krylov series and Gauss-Legendre quadrature.

Stiffness is no constraint here: a matrix exponential reproduces fast
phase rotation and damping exactly for frozen M, so the step size only
needs to resolve the slow drive-induced variation of M(t).  All the
generators of one step are processed as a single batch to keep the
per-step Python overhead small.
"""

from __future__ import annotations

import numpy as np

# Gauss-Legendre nodes on [0, 1] and the fourth-order commutator-free weights.
GAUSS_NODE_1 = 0.5 - np.sqrt(3.0) / 6.0
GAUSS_NODE_2 = 0.5 + np.sqrt(3.0) / 6.0
CF4_A1 = 0.25 + np.sqrt(3.0) / 6.0
CF4_A2 = 0.25 - np.sqrt(3.0) / 6.0

# diagonal Pade coefficients and validity radii (1-norm)
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0,
        8821612800.0,
        2075673600.0,
        302702400.0,
        30270240.0,
        2162160.0,
        110880.0,
        3960.0,
        90.0,
        1.0,
    ),
}
_THETA = ((3, 1.495585217958292e-2), (5, 2.539398330063230e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068e0))

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

# Taylor term counts reaching ~1e-17 tails for the diffusion series
_TERMS = ((0.25, 14), (0.5, 17), (1.0, 22), (1.5, 26), (2.2, 30))


def _pade_batch(a: np.ndarray, order: int) -> np.ndarray:
    """Diagonal Pade exponential of a stacked batch (m, n, n)."""
    b = _PADE[order]
    eye = np.broadcast_to(np.eye(a.shape[-1], dtype=a.dtype), a.shape)
    a2 = a @ a
    pieces_u = b[1] * eye + b[3] * a2
    pieces_v = b[0] * eye + b[2] * a2
    if order >= 5:
        a4 = a2 @ a2
        pieces_u = pieces_u + b[5] * a4
        pieces_v = pieces_v + b[4] * a4
    if order >= 7:
        a6 = a4 @ a2
        pieces_u = pieces_u + b[7] * a6
        pieces_v = pieces_v + b[6] * a6
    if order >= 9:
        a8 = a6 @ a2
        pieces_u = pieces_u + b[9] * a8
        pieces_v = pieces_v + b[8] * a8
    u = a @ pieces_u
    return np.linalg.solve(pieces_v - u, pieces_v + u)


def expm_batch(a: np.ndarray) -> np.ndarray:
    """Matrix exponentials of a batch (m, n, n) of small-norm generators.

    One Pade order (chosen from the largest 1-norm in the batch) and one
    batched linear solve serve the whole stack; scaling-and-squaring
    covers the rare large-norm case.
    """
    norm = float(np.abs(a).sum(axis=-2).max())
    order = next((m for m, theta in _THETA if norm <= theta), None)
    squarings = 0
    if order is None:
        order = 9
        squarings = max(0, int(np.ceil(np.log2(norm / _THETA[-1][1]))))
        a = a * (0.5**squarings)
    e = _pade_batch(a, order)
    for _ in range(squarings):
        e = e @ e
    return e


def expm_small(a: np.ndarray) -> np.ndarray:
    """Single-matrix convenience wrapper around :func:`expm_batch`."""
    return expm_batch(a[None])[0]


def _n_terms(norm: float) -> int:
    for theta, m in _TERMS:
        if norm <= theta:
            return m
    return 30 + int(3 * (norm - 2.2) + 1)


def diffusion_batch(gens: np.ndarray, strengths) -> np.ndarray:
    """Exact second-moment source over each sub-exponential of a batch.

    For every generator G (step size already folded in) computes
    ``strength * int_0^1 e^{G u} E01 e^{G^T u} du`` with E01 the unit
    matrix with a single one at (0, 1): the Van Loan block integral
    specialized to the rank-one Langevin diffusion.  The integrand
    columns e^{G u} e_{0,1} are Taylor polynomials in u evaluated at
    Gauss-Legendre nodes.
    """
    m, dim = gens.shape[0], gens.shape[-1]
    norm = float(np.abs(gens).sum(axis=-2).max())
    n_terms = _n_terms(norm)
    vec = np.zeros((m, 2, dim), dtype=complex)
    vec[:, 0, 0] = 1.0
    vec[:, 1, 1] = 1.0
    stack = np.empty((n_terms, m, 2, dim), dtype=complex)
    stack[0] = vec
    gen_t = np.swapaxes(gens, -1, -2)
    for j in range(1, n_terms):
        vec = (vec @ gen_t) / j
        stack[j] = vec
    powers = _GL_X[:, None] ** np.arange(n_terms)[None, :]  # (q, terms)
    nodes = (powers @ stack.reshape(n_terms, -1)).reshape(len(_GL_X), m, 2, dim)
    out = np.empty((m, dim, dim), dtype=complex)
    for i in range(m):
        u = nodes[:, i, 0, :]  # (q, dim)
        v = nodes[:, i, 1, :]
        out[i] = (u * _GL_W[:, None]).T @ v * strengths[i]
    return out


class StepKernel:
    """Propagator pieces for one fine step [t, t+h].

    ``exps`` is the list of (E, F) sub-exponential pairs in application
    order for the production (fourth-order) path; ``check`` optionally
    holds the single midpoint pair for the propagator cross-check path.
    """

    __slots__ = ("exps", "check")

    def __init__(self, exps, check=None):
        self.exps = exps
        self.check = check


def build_kernel(m1, m2, h, diffusion, m_mid=None) -> StepKernel:
    """Assemble sub-exponentials for one step from sampled matrices.

    m1, m2: M at the two Gauss nodes; m_mid: M at the midpoint (only when
    the cross-check path runs).  ``diffusion`` is the scalar noise rate
    (the single nonzero entry of the diffusion matrix); pass 0 to skip
    source accumulation.
    """
    gens = [-1j * h * (CF4_A1 * m1 + CF4_A2 * m2), -1j * h * (CF4_A2 * m1 + CF4_A1 * m2)]
    strengths = [0.5 * diffusion * h, 0.5 * diffusion * h]
    if m_mid is not None:
        gens.append(-1j * h * m_mid)
        strengths.append(diffusion * h)
    gens = np.stack(gens)
    exps = expm_batch(gens)
    if diffusion:
        sources = diffusion_batch(gens, strengths)
    else:
        sources = [None] * len(gens)
    pairs = list(zip(exps, sources))
    return StepKernel(pairs[:2], check=pairs[2] if m_mid is not None else None)


class CovarianceState:
    """Production path: second moments stepped in the differential form."""

    __slots__ = ("c",)

    def __init__(self, c0: np.ndarray):
        self.c = np.array(c0, dtype=complex)

    def step(self, kernel: StepKernel):
        for e, f in kernel.exps:
            self.c = e @ self.c @ e.T
            if f is not None:
                self.c += f


class PropagatorState:
    """Cross-check path: explicit propagator with accumulated source.

    Maintains G(t, t0) and Q(t) = int G(t, tau) D G(t, tau)^T dtau, so the
    second moments are reconstructed as G C0 G^T + Q without ever forming
    an inverse of G (whose damped modes underflow over long spans).
    """

    __slots__ = ("g", "q", "c0")

    def __init__(self, c0: np.ndarray):
        dim = c0.shape[0]
        self.g = np.eye(dim, dtype=complex)
        self.q = np.zeros((dim, dim), dtype=complex)
        self.c0 = np.array(c0, dtype=complex)

    def step(self, kernel: StepKernel):
        pairs = [kernel.check] if kernel.check is not None else kernel.exps
        for e, f in pairs:
            self.g = e @ self.g
            self.q = e @ self.q @ e.T
            if f is not None:
                self.q += f

    def covariance(self) -> np.ndarray:
        return self.g @ self.c0 @ self.g.T + self.q


class VectorStack:
    """Homogeneously propagated column bundle (two-time correlations).

    Columns are added on the fly; every column obeys dv/dt = -i M(t) v
    with no source, which is the regression evolution of correlations
    against a fixed earlier time.
    """

    __slots__ = ("dim", "columns", "owners")

    def __init__(self, dim: int):
        self.dim = dim
        self.columns = np.zeros((dim, 0), dtype=complex)
        self.owners: list = []

    def add(self, vectors: np.ndarray, owner) -> None:
        self.columns = np.hstack([self.columns, vectors])
        self.owners.extend([owner] * vectors.shape[1])

    def step(self, kernel: StepKernel):
        if self.columns.shape[1] == 0:
            return
        for e, _ in kernel.exps:
            self.columns = e @ self.columns
