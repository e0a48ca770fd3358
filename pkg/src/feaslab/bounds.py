"""Binomial-tail feasibility bounds.

``binomial_tail(m, N, alpha)`` is ``P{Bin(N, alpha) <= m - 1}``, the upper
bound on the chance that an SAA solution built from ``N`` samples of a
domain with ``m`` chains has degree of feasibility below ``1 - alpha``.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence


class BoundInputError(ValueError):
    pass


def _validate(m: int, N: int, alpha: float) -> tuple[int, int, float]:
    if int(m) != m or int(N) != N:
        raise BoundInputError("m and N must be integers")
    m, N, alpha = int(m), int(N), float(alpha)
    if m < 1:
        raise BoundInputError(f"m must be at least 1, got {m}")
    if m > N:
        raise BoundInputError(f"the bound needs m <= N, got m={m}, N={N}")
    if not 0.0 <= alpha <= 1.0:
        raise BoundInputError(f"alpha must lie in [0, 1], got {alpha}")
    return m, N, alpha


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_S0, _S1, _S2, _S3, _S4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188


def _stirlerr(n: int) -> float:
    """``log(n!) - log(sqrt(2 pi n) (n/e)^n)``."""
    if n <= 15:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - _HALF_LOG_2PI
    nn = float(n) * n
    if n > 500:
        return (_S0 - _S1 / nn) / n
    if n > 80:
        return (_S0 - (_S1 - _S2 / nn) / nn) / n
    if n > 35:
        return (_S0 - (_S1 - (_S2 - _S3 / nn) / nn) / nn) / n
    return (_S0 - (_S1 - (_S2 - (_S3 - _S4 / nn) / nn) / nn) / nn) / n


def _bd0(x: float, mu: float) -> float:
    """Deviance ``x log(x/mu) + mu - x`` without cancellation near ``x = mu``."""
    if abs(x - mu) < 0.1 * (x + mu):
        v = (x - mu) / (x + mu)
        s = (x - mu) * v
        ej = 2.0 * x * v
        v *= v
        j = 1
        while True:
            ej *= v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / mu) + mu - x


def log_binom_pmf(k: int, N: int, alpha: float) -> float:
    """Log of ``C(N, k) alpha^k (1 - alpha)^(N - k)`` by the saddle-point form."""
    q = 1.0 - alpha
    if k == 0:
        return N * math.log1p(-alpha)
    if k == N:
        return N * math.log(alpha)
    lc = (_stirlerr(N) - _stirlerr(k) - _stirlerr(N - k)
          - _bd0(k, N * alpha) - _bd0(N - k, N * q))
    return lc - 0.5 * (math.log(2.0 * math.pi) + math.log(k) + math.log1p(-k / N))


def _log_terms(ks: Iterable[int], N: int, alpha: float) -> list[float]:
    return [log_binom_pmf(k, N, alpha) for k in ks]


def _sum_exp(logs: Sequence[float]) -> float:
    if not logs:
        return 0.0
    top = max(logs)
    if top == -math.inf:
        return 0.0
    return math.exp(top) * math.fsum(math.exp(v - top) for v in logs)


def binomial_tail(m: int, N: int, alpha: float) -> float:
    """Sum of ``C(N, k) alpha^k (1 - alpha)^(N - k)`` over ``k < m``.

    Each term is formed in log space and the terms are added with
    ``math.fsum`` after scaling by the largest one, so ``N`` up to 1e5 neither
    overflows nor loses relative accuracy.  ``alpha = 0`` gives 1 and
    ``alpha = 1`` gives 0.
    """
    m, N, alpha = _validate(m, N, alpha)
    if alpha == 0.0:
        return 1.0
    if alpha == 1.0:
        return 0.0
    return min(1.0, _sum_exp(_log_terms(range(m), N, alpha)))


def binomial_upper_tail(m: int, N: int, alpha: float) -> float:
    """``P{Bin(N, alpha) >= m}``, summed directly to avoid cancellation."""
    m, N, alpha = _validate(m, N, alpha)
    if alpha == 0.0:
        return 0.0
    if alpha == 1.0:
        return 1.0
    return min(1.0, _sum_exp(_log_terms(range(m, N + 1), N, alpha)))


def chernoff_estimate(m: int, N: int, alpha: float) -> float:
    """``exp(-(N alpha - m + 1)^2 / (2 N alpha))``, valid when ``N alpha >= m - 1``."""
    m, N, alpha = _validate(m, N, alpha)
    if alpha <= 0.0:
        raise BoundInputError("the Chernoff estimate needs alpha > 0")
    gap = N * alpha - (m - 1)
    if gap < 0:
        raise BoundInputError(f"the Chernoff estimate needs N*alpha >= m - 1, got {N * alpha} < {m - 1}")
    return math.exp(-gap * gap / (2.0 * N * alpha))


def multistage_product(inputs: Iterable[tuple[int, int, float]]) -> float:
    """Lower bound ``prod_t P{Bin(N_t, alpha_t) >= m_t}`` on the joint event."""
    out = 1.0
    for m, N, alpha in inputs:
        out *= binomial_upper_tail(m, N, alpha)
    return out
