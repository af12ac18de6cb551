# -*- coding: utf-8 -*-
"""
Created the 18/10/2026

Binomial tails and their inverse, falling factorials, Stirling numbers of the second kind and
the statistics of the number of distinct blob positions visited by repeated uniform draws.

Exact integer arithmetic is used up to the configured size cap, log-space evaluation (log-gamma
and a log-space Stirling recurrence) beyond it.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import optimize, special

from pymodaq.utils.logger import set_logger, get_module_name

from pymodaq_plugins_blob import config
from pymodaq_plugins_blob.utils import DomainError, ResourceError

logger = set_logger(get_module_name(__file__), add_to_console=False)

PMF_TOLERANCE = 1e-9


@dataclass(frozen=True)
class VisitStats:
    """Distribution of the number of distinct positions visited by `draws` uniform draws among
    `population` positions"""
    population: int
    draws: int
    pmf: np.ndarray = field(repr=False)
    mean: float

    @property
    def closed_form_mean(self) -> float:
        return visit_mean(self.population, self.draws)

    @property
    def support(self) -> np.ndarray:
        return np.arange(len(self.pmf))


def _check_probability(p: float, name: str = 'p'):
    if not 0. <= p <= 1.:
        raise DomainError(f'{name}={p} is not a probability')


def bino_tail(ell: int, a: int, p: float) -> float:
    """Probability mass of the right tail {a..ell} of a Binomial(ell, p) distribution

    Evaluated through the regularised incomplete beta function, which has no cancellation
    for p close to 0 or 1.
    """
    if ell < 1:
        raise DomainError(f'ell={ell} must be a positive integer')
    if not 0 <= a <= ell + 1:
        raise DomainError(f'a={a} must lie in [0, ell+1={ell + 1}]')
    _check_probability(p)
    if a == 0:
        return 1.
    if a == ell + 1:
        return 0.
    return float(special.betainc(a, ell - a + 1, p))


def inv_bino_tail(ell: int, a: int, target: float, xtol: Optional[float] = None,
                  maxiter: Optional[int] = None) -> float:
    """Bias p for which bino_tail(ell, a, p) equals target, found by bisection on [0, 1]"""
    if not 1 <= a <= ell:
        raise DomainError(f'a={a} must lie in [1, ell={ell}]: the tail has no inverse')
    if not 0. < target < 1.:
        raise DomainError(f'target={target} must lie in the open interval (0, 1)')
    if xtol is None:
        xtol = config('combinatorics', 'bisect_xtol')
    if maxiter is None:
        maxiter = config('combinatorics', 'bisect_maxiter')
    return float(optimize.bisect(lambda p: bino_tail(ell, a, p) - target, 0., 1.,
                                 xtol=xtol, maxiter=maxiter))


def falling_factorial(x: int, k: int) -> int:
    """x! / (x-k)!, zero when k > x"""
    if x < 0 or k < 0:
        raise DomainError('falling factorial arguments must be nonnegative')
    if k > x:
        return 0
    return math.prod(range(x - k + 1, x + 1))


def log_falling_factorial(x: float, k: float) -> float:
    """Natural log of the falling factorial; -inf when k > x"""
    if k > x:
        return -math.inf
    return float(special.gammaln(x + 1) - special.gammaln(x - k + 1))


def log_binomial(n: float, k: float) -> float:
    if k < 0 or k > n:
        return -math.inf
    return float(special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1))


@lru_cache(maxsize=256)
def _stirling2_row(n: int) -> Tuple[int, ...]:
    row = [1]
    for m in range(1, n + 1):
        new = [0] * (m + 1)
        for k in range(1, m + 1):
            new[k] = k * (row[k] if k < m else 0) + row[k - 1]
        row = new
    return tuple(row)


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind: partitions of n labelled items into k nonempty blocks"""
    if n < 0 or k < 0:
        raise DomainError('Stirling number arguments must be nonnegative')
    if k > n:
        return 0
    return _stirling2_row(n)[k]


def log_stirling2_row(n: int, kmax: Optional[int] = None) -> np.ndarray:
    """log S(n, k) for k = 0..kmax (-inf where S(n, k) = 0)

    Exact integers below the configured cap, otherwise the recurrence
    S(m, k) = k S(m-1, k) + S(m-1, k-1) is run in log space one row at a time.
    """
    if n < 0:
        raise DomainError('n must be nonnegative')
    kmax = n if kmax is None else min(kmax, n)
    if n <= config('combinatorics', 'exact_cap'):
        exact = _stirling2_row(n)
        return np.array([math.log(exact[k]) if exact[k] > 0 else -math.inf
                         for k in range(kmax + 1)])

    row = np.full(n + 1, -np.inf)
    row[0] = 0.
    log_k = np.log(np.arange(1, n + 1, dtype=float))
    for m in range(1, n + 1):
        new = np.full(n + 1, -np.inf)
        new[1:m + 1] = np.logaddexp(log_k[:m] + row[1:m + 1], row[:m])
        row = new
    return row[:kmax + 1]


def log_stirling2(n: int, k: int) -> float:
    if k > n:
        return -math.inf
    return float(log_stirling2_row(n, k)[k])


def visit_mean(population: int, draws: int) -> float:
    """Expected number of distinct positions visited: population * [1 - (1 - 1/population)^draws]"""
    if population < 1:
        raise DomainError(f'population={population} must be positive')
    if draws < 0:
        raise DomainError(f'draws={draws} must be nonnegative')
    if draws == 0:
        return 0.
    if population == 1:
        return 1.
    return float(-population * np.expm1(draws * np.log1p(-1. / population)))


def visit_stats(population: int, draws: int, max_draws: Optional[int] = None,
                max_population: Optional[int] = None) -> VisitStats:
    """Distribution of the number of distinct positions hit by `draws` uniform draws with replacement

    pmf[s] = (population)_s S(draws, s) / population^draws for s = 0..min(draws, population)
    """
    if population < 1:
        raise DomainError(f'population={population} must be positive')
    if draws < 0:
        raise DomainError(f'draws={draws} must be nonnegative')
    if max_draws is None:
        max_draws = config('combinatorics', 'max_pmf_draws')
    if max_population is None:
        max_population = config('combinatorics', 'max_pmf_population')
    if draws > max_draws or population > max_population:
        raise ResourceError(f'exact visit distribution capped at draws <= {max_draws} and population '
                            f'<= {max_population} (got {draws}, {population}); use visit_mean instead')

    smax = min(draws, population)
    if draws <= config('combinatorics', 'exact_cap'):
        total = population ** draws
        row = _stirling2_row(draws)
        pmf = np.array([float(Fraction(falling_factorial(population, s) * row[s], total))
                        for s in range(smax + 1)])
    else:
        log_s = log_stirling2_row(draws, smax)
        s = np.arange(smax + 1)
        log_ff = special.gammaln(population + 1) - special.gammaln(population - s + 1)
        pmf = np.exp(log_ff + log_s - draws * math.log(population))

    mean = float(np.dot(np.arange(smax + 1), pmf))
    closed = visit_mean(population, draws)
    if abs(mean - closed) > PMF_TOLERANCE * max(1., closed):
        logger.warning(f'visit mean {mean} departs from the closed form {closed} '
                       f'(population={population}, draws={draws})')
    pmf.flags.writeable = False
    return VisitStats(population=population, draws=draws, pmf=pmf, mean=mean)
