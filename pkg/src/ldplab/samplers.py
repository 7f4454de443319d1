"""Random generation: Gaussian matrices, Haar frames, Wishart matrices,
p-generalized Gaussians, and uniform points on scaled lp balls.

Every operation is a pure function of (rng, arguments): it derives a fresh
generator from the ``SeededRng`` value, so identical inputs reproduce
identical output bit for bit.  Independent draws come from distinct
``stream_id`` values (or the ``count`` arguments), never from shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalFailure
from .linalg import SymmetricPSD


@dataclass(frozen=True)
class SeededRng:
    """A named random stream: (seed, stream_id) -> reproducible sequence.

    Streams with distinct ids are derived through ``SeedSequence`` spawn
    keys and are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        )

    def child(self, *key: int) -> np.random.Generator:
        """Generator for a sub-stream; distinct keys are independent."""
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *key))
        )


@dataclass(frozen=True)
class PGaussianParams:
    """Parameter of the p-generalized Gaussian family.

    ``p = math.inf`` denotes Uniform[-1, 1] (the cube case), which this
    family degenerates to in the applications here.
    """

    p: float

    def __post_init__(self):
        if not self.p >= 1:
            raise DomainError("p must be >= 1")


def gaussian_matrix(rng: SeededRng, k: int, n: int) -> np.ndarray:
    """k x n matrix of i.i.d. standard normals."""
    if k < 1 or n < 1:
        raise DomainError("matrix dimensions must be >= 1")
    return rng.generator().standard_normal((k, n))


def _inv_sqrt_psd(s: np.ndarray) -> np.ndarray:
    """(S)^(-1/2) for symmetric positive definite S via eigendecomposition."""
    try:
        vals, vecs = np.linalg.eigh(s)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    if vals[0] <= vals[-1] * s.shape[0] * 1e-14:
        raise NumericalFailure("matrix is numerically singular")
    return (vecs / np.sqrt(vals)) @ vecs.T


def stiefel_batch(gen: np.random.Generator, k: int, n: int, count: int) -> np.ndarray:
    """``count`` Haar frames as a (count, k, n) array, drawn from ``gen``.

    Internal vectorized form of :func:`haar_stiefel` used by the Monte Carlo
    drivers; k = 1 reduces to normalizing Gaussian rows.
    """
    g = gen.standard_normal((count, k, n))
    if k == 1:
        norms = np.linalg.norm(g, axis=2, keepdims=True)
        return g / norms
    s = np.einsum("bkn,bln->bkl", g, g)
    vals, vecs = np.linalg.eigh(s)
    inv_root = np.einsum(
        "bij,bj,bkj->bik", vecs, 1.0 / np.sqrt(vals), vecs
    )
    return np.einsum("bij,bjn->bin", inv_root, g)


def haar_stiefel(rng: SeededRng, k: int, n: int) -> np.ndarray:
    """Uniform k x n orthonormal frame: V = (G G^T)^(-1/2) G, G Gaussian."""
    if k > n:
        raise DomainError("k must be <= n")
    gen = rng.generator()
    for attempt in range(2):
        g = gen.standard_normal((k, n))
        try:
            return _inv_sqrt_psd(g @ g.T) @ g
        except NumericalFailure:
            if attempt == 1:
                raise
    raise NumericalFailure("unreachable")  # pragma: no cover


def haar_orthogonal(rng: SeededRng, n: int) -> np.ndarray:
    """Haar-uniform n x n orthogonal matrix (the square Stiefel case)."""
    return haar_stiefel(rng, n, n)


def wishart(rng: SeededRng, k: int, n: int) -> SymmetricPSD:
    """H H^T for a k x n standard Gaussian H (identity scale matrix)."""
    if not 1 <= k <= n:
        raise DomainError("need n >= k >= 1")
    h = rng.generator().standard_normal((k, n))
    return SymmetricPSD.from_matrix(h @ h.T)


def p_gaussian_batch(gen: np.random.Generator, p: float, shape) -> np.ndarray:
    """Draws with density exp(-|x|^p / p) / (2 p^(1/p) Gamma(1 + 1/p)).

    Uses the exact Gamma transform |X|^p / p ~ Gamma(1/p, 1) for finite p;
    p = inf yields Uniform[-1, 1].
    """
    if math.isinf(p):
        return gen.uniform(-1.0, 1.0, size=shape)
    g = gen.gamma(1.0 / p, 1.0, size=shape)
    signs = gen.integers(0, 2, size=shape) * 2.0 - 1.0
    return signs * (p * g) ** (1.0 / p)


def p_gaussian(rng: SeededRng, params: PGaussianParams, count: int) -> np.ndarray:
    """``count`` i.i.d. p-generalized Gaussian draws."""
    if count < 1:
        raise DomainError("count must be >= 1")
    return p_gaussian_batch(rng.generator(), params.p, count)


def uniform_lp_ball(
    rng: SeededRng, p: float, n: int, radius_scale: float
) -> np.ndarray:
    """Uniform point on ``radius_scale`` times the unit lp ball in R^n.

    Representation: radius_scale * U^(1/n) * Z / ||Z||_p with Z a vector of
    i.i.d. p-Gaussians and U ~ Uniform[0, 1] independent of Z.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if not (1 <= p < math.inf):
        raise DomainError("p must be in [1, inf)")
    if radius_scale <= 0:
        raise DomainError("radius_scale must be > 0")
    gen = rng.generator()
    z = p_gaussian_batch(gen, p, n)
    u = gen.uniform()
    return radius_scale * u ** (1.0 / n) * z / np.linalg.norm(z, ord=p)


def lp_ball_batch(
    gen: np.random.Generator, p: float, n: int, radius_scale: float, count: int
) -> np.ndarray:
    """(count, n) array of independent uniform lp-ball points."""
    z = p_gaussian_batch(gen, p, (count, n))
    u = gen.uniform(size=(count, 1))
    norms = np.linalg.norm(z, ord=p, axis=1, keepdims=True)
    return radius_scale * u ** (1.0 / n) * z / norms


def dickey_corner(rng: SeededRng, k: int, m: int, big_n: int) -> np.ndarray:
    """T = (S + G G^T)^(-1/2) G with S Wishart of k x (N + k - 1) Gaussian
    rows independent of the k x m Gaussian G.

    ``T T^T`` always has operator norm < 1.
    """
    if k < 1 or m < 1 or big_n < 1:
        raise DomainError("k, m, N must all be >= 1")
    gen = rng.generator()
    h = gen.standard_normal((k, big_n + k - 1))
    g = gen.standard_normal((k, m))
    return _inv_sqrt_psd(h @ h.T + g @ g.T) @ g


def dickey_corner_batch(
    gen: np.random.Generator, k: int, m: int, big_n: int, count: int
) -> np.ndarray:
    """(count, k, m) array of independent Dickey corner draws."""
    h = gen.standard_normal((count, k, big_n + k - 1))
    g = gen.standard_normal((count, k, m))
    s = np.einsum("bkn,bln->bkl", h, h) + np.einsum("bkn,bln->bkl", g, g)
    vals, vecs = np.linalg.eigh(s)
    inv_root = np.einsum("bij,bj,bkj->bik", vecs, 1.0 / np.sqrt(vals), vecs)
    return np.einsum("bij,bjm->bim", inv_root, g)


def stiefel_corner_batch(
    gen: np.random.Generator, k: int, n: int, ell: int, count: int
) -> np.ndarray:
    """Leading k x ell blocks of ``count`` Haar frames, shape (count, k, ell)."""
    if k == 1:
        g = gen.standard_normal((count, n))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        return (g[:, :ell] / norms)[:, None, :]
    return stiefel_batch(gen, k, n, count)[:, :, :ell]
