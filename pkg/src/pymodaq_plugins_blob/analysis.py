# -*- coding: utf-8 -*-
"""
Created the 18/10/2026

Closed-form figures of merit of both blob schemes: the erasure breakeven eps*, the number of
tracing positions needed in single-use mode, n_max for single- and multi-use, the
multi-use failure probability and the parameter optimisation over ell and t.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
from scipy import optimize, special

from pymodaq.utils.logger import set_logger, get_module_name

from pymodaq_plugins_blob import config
from pymodaq_plugins_blob.combinatorics import bino_tail, inv_bino_tail, visit_stats
from pymodaq_plugins_blob.tardos import sufficient_length
from pymodaq_plugins_blob.utils import DomainError, ceil_div, thread_count

logger = set_logger(get_module_name(__file__), add_to_console=False)

VARIANTS = ('exact', 'approximation', 'ell1')

# parameter set behind the figure data
FIGURE_PARAMS = dict(M=2 ** 24, k=128, k0=96, gamma=0.1)
FIGURE_U_OVER_PFP = 2. ** 30
# CSV file of each figure-data series
FIGURE_FILES = dict(epsilon_star='fig2.csv', nmax_single_ell='fig3.csv', nmax_single_c='fig4.csv',
                    nmax_multi_t='fig5.csv', crossover='fig6.csv', nmax_multi_ell='nmax_multi_ell.csv')


@dataclass(frozen=True)
class MeritInputs:
    M: int
    k: int
    k0: int
    ell: int
    gamma: float
    l_suff: int
    t: Optional[int] = None
    mode: str = 'single'

    def __post_init__(self):
        if self.ell < 1 or self.k % self.ell:
            raise DomainError(f'ell={self.ell} must divide k={self.k}')
        if self.M % self.w:
            raise DomainError(f'entry width w={self.w} must divide M={self.M}')
        if not 0 < self.k0 <= self.k:
            raise DomainError(f'0 < k0 <= k violated: k0={self.k0}, k={self.k}')
        if not 0 < self.gamma < 1:
            raise DomainError(f'0 < gamma < 1 violated: gamma={self.gamma}')
        if self.l_suff < 1:
            raise DomainError('l_suff must be at least 1')

    @property
    def w(self) -> int:
        return self.k // self.ell

    @property
    def N(self) -> int:
        return self.M // self.w

    def with_ell(self, ell: int) -> 'MeritInputs':
        return MeritInputs(self.M, self.k, self.k0, ell, self.gamma, self.l_suff, self.t, self.mode)


@dataclass(frozen=True)
class MeritResult:
    n_max: float
    epsilon_star: float
    t_used: int
    formula_variant: str
    clamped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def epsilon_star(l_suff: int, t: int) -> float:
    """Erasure fraction at which the surviving tracing positions drop to l_suff: 1 - sqrt(l_suff / t)"""
    if l_suff < 1:
        raise DomainError('l_suff must be at least 1')
    if t < l_suff:
        raise DomainError(f't={t} is below l_suff={l_suff}: no erasure margin exists')
    return 1. - math.sqrt(l_suff / t)


def unavailable_threshold(k: int, k0: int, ell: int) -> int:
    """ceil((k0/k) ell) = ceil(k0/w): missing entries that make brute-forcing the next key fail"""
    return ceil_div(k0 * ell, k)


def attack_failure_single(ell: int, a: int, eps: float) -> float:
    """Probability that at least `a` of ell addressed entries are erased at erasure fraction eps"""
    if a == 1:
        # every addressed chunk is needed (w >= k0)
        return float(-np.expm1(ell * np.log1p(-eps))) if eps < 1 else 1.
    return bino_tail(ell, a, eps)


def required_t_single(ell: int, k: int, k0: int, gamma: float, l_suff: int) -> int:
    """Tracing positions needed so that the untraceable attacker fails on the next key with
    probability gamma; independent of M and of the number of uses"""
    inv = inv_bino_tail(ell, unavailable_threshold(k, k0, ell), gamma)
    return math.ceil(l_suff / (1. - inv) ** 2)


def _clamp(value: float, what: str) -> Tuple[float, bool]:
    if value < 0:
        logger.warning(f'{what} n_max={value:.4g} is negative, clamped to 0')
        return 0., True
    return value, False


def nmax_single(M: int, k: int, k0: int, ell: int, gamma: float, l_suff: int) -> MeritResult:
    """Keys stored in the blob once the single-use tracing positions are set aside: M/k - t/ell"""
    MeritInputs(M, k, k0, ell, gamma, l_suff)  # validates
    inv = inv_bino_tail(ell, unavailable_threshold(k, k0, ell), gamma)
    t_real = l_suff / (1. - inv) ** 2
    n_max, clamped = _clamp(M / k - t_real / ell, 'single-use')
    t_used = math.ceil(t_real)
    return MeritResult(n_max=n_max, epsilon_star=epsilon_star(l_suff, t_used),
                       t_used=t_used, formula_variant='exact', clamped=clamped)


def nmax_single_bitwise(M: int, k: int, k0: int, gamma: float, l_suff: int) -> MeritResult:
    """nmax_single at ell = k (one-bit entries): M/k - (l_suff/k)[1 - InvBinoTail(k, k0, gamma)]^-2"""
    inv = inv_bino_tail(k, k0, gamma)
    t_real = l_suff / (1. - inv) ** 2
    n_max, clamped = _clamp(M / k - t_real / k, 'single-use')
    t_used = math.ceil(t_real)
    return MeritResult(n_max=n_max, epsilon_star=epsilon_star(l_suff, t_used), t_used=t_used,
                       formula_variant='exact', clamped=clamped)


def p_miss(epsilon_star: float, N: int, t: int, visited: int) -> float:
    """Probability that a fresh index hits an erased entry when `visited` functional entries are
    known to the attackers and a fraction epsilon_star of the others is erased"""
    functional = N - t
    if not 0 <= visited <= functional:
        raise DomainError(f'visited={visited} must lie in [0, N - t = {functional}]')
    return epsilon_star * (functional - visited) / functional


def pfail_multi_bound(ell: int, a: int, eps_star: float, N: int, t: int, n: int) -> float:
    """Jensen lower bound on the multi-use failure probability after n uses"""
    p = eps_star * math.exp(n * ell * math.log1p(-1. / (N - t)))
    return bino_tail(ell, a, p)


def pfail_multi_exact(ell: int, a: int, eps_star: float, N: int, t: int, n: int) -> float:
    """Failure probability averaged over the distribution of the number of visited entries"""
    stats = visit_stats(N - t, n * ell)
    p = eps_star * (N - t - stats.support) / (N - t)
    if a == 0:
        tails = np.ones_like(p)
    else:
        tails = special.betainc(a, ell - a + 1, p)
    return float(np.dot(stats.pmf, tails))


def _nmax_multi_raw(N: int, ell: int, l_suff: int, inv: float, t: float, variant: str) -> float:
    if N - t < 2:
        return 0.
    eps = 1. - math.sqrt(l_suff / t)
    if eps <= 0:
        return -math.inf
    numerator = math.log(eps / inv)
    if variant == 'approximation':
        return (N - t) / ell * numerator
    return numerator / (-ell * math.log1p(-1. / (N - t)))


def max_t_multi(N: int, ell: int) -> int:
    """Largest t at which the multi-use bound stays finite: a single functional entry is visited
    by the first use"""
    return N - max(ell, 2)


def nmax_multi(M: int, k: int, k0: int, ell: int, gamma: float, l_suff: int, t: int,
               variant: str = 'exact') -> MeritResult:
    """n at which the multi-use failure probability bound drops to gamma

    variant 'exact' keeps the logarithm of the denominator, 'approximation' expands it to
    first order, 'ell1' is the closed form for ell = 1.
    """
    if variant not in VARIANTS:
        raise DomainError(f'variant must be one of {VARIANTS}')
    inputs = MeritInputs(M, k, k0, ell, gamma, l_suff, t, 'multi')
    if variant == 'ell1' and ell != 1:
        raise DomainError('the ell1 closed form only applies to ell = 1')
    if not t > l_suff / (1. - gamma) ** 2:
        raise DomainError(f't={t} violates t > l_suff/(1-gamma)^2 = {l_suff / (1. - gamma) ** 2:.6g}')
    N = inputs.N
    if not t <= max_t_multi(N, ell):
        raise DomainError(f't={t} leaves fewer than max(ell, 2) = {max(ell, 2)} functional entries '
                          f'out of N={N}')
    if variant == 'ell1':
        eps = epsilon_star(l_suff, t)
        value = (math.log(eps) + math.log(1. / gamma)) / (-math.log1p(-1. / (M / k - t)))
    else:
        inv = inv_bino_tail(ell, unavailable_threshold(k, k0, ell), gamma)
        value = _nmax_multi_raw(N, ell, l_suff, inv, t, variant)
    n_max, clamped = _clamp(value, 'multi-use')
    return MeritResult(n_max=n_max, epsilon_star=epsilon_star(l_suff, t), t_used=int(t),
                       formula_variant=variant, clamped=clamped)


def optimize_ell_single(inputs: MeritInputs) -> Tuple[int, MeritResult]:
    """Best divisor ell of k for the single-use scheme, ties toward smaller ell"""
    best = None
    for ell in divisors(inputs.k):
        if inputs.M % (inputs.k // ell):
            continue
        result = nmax_single(inputs.M, inputs.k, inputs.k0, ell, inputs.gamma, inputs.l_suff)
        if best is None or result.n_max > best[1].n_max:
            best = (ell, result)
    return best


def optimize_t_multi(inputs: MeritInputs, grid_points: Optional[int] = None) -> Tuple[Optional[int], MeritResult]:
    """Best number of tracing positions for the multi-use scheme at fixed ell

    A coarse log-spaced grid over the feasible interval is refined with a bounded scalar search
    and the two neighbouring integers are compared; ties go to the smaller t. Returns
    (None, zero result) when no t is feasible.
    """
    grid_points = grid_points or config('analysis', 'grid_points')
    ell, N, l_suff = inputs.ell, inputs.N, inputs.l_suff
    variant = 'ell1' if ell == 1 else 'exact'
    inv = inv_bino_tail(ell, unavailable_threshold(inputs.k, inputs.k0, ell), inputs.gamma)
    lower = math.floor(max(l_suff / (1. - inputs.gamma) ** 2, l_suff / (1. - inv) ** 2)) + 1
    upper = max_t_multi(N, ell)
    if lower > upper:
        logger.debug(f'no feasible t for ell={ell}, l_suff={l_suff}')
        return None, MeritResult(0., 0., 0, variant, clamped=True)

    def value(t: float) -> float:
        return _nmax_multi_raw(N, ell, l_suff, inv, t, 'exact')

    grid = np.unique(np.geomspace(lower, upper, grid_points))
    values = np.array([value(t) for t in grid])
    i = int(np.argmax(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    candidates = {int(round(grid[i]))}
    if hi > lo:
        refined = optimize.minimize_scalar(lambda t: -value(t), bounds=(lo, hi), method='bounded')
        candidates.update({math.floor(refined.x), math.ceil(refined.x)})
    candidates = sorted(t for t in candidates if lower <= t <= upper)
    t_best = max(candidates, key=lambda t: (value(t), -t))
    result = nmax_multi(inputs.M, inputs.k, inputs.k0, ell, inputs.gamma, l_suff, t_best, variant)
    return t_best, result


def optimize_ell_multi(inputs: MeritInputs) -> Tuple[int, Optional[int], MeritResult]:
    """Best (ell, t) for the multi-use scheme over the divisors of k"""
    best = None
    for ell in divisors(inputs.k):
        if inputs.M % (inputs.k // ell):
            continue
        t, result = optimize_t_multi(inputs.with_ell(ell))
        if best is None or result.n_max > best[2].n_max:
            best = (ell, t, result)
    return best


def divisors(k: int) -> List[int]:
    return [d for d in range(1, k + 1) if k % d == 0]


@dataclass(frozen=True)
class CrossoverRow:
    c: int
    l_suff: int
    nmax_single: float
    nmax_multi: float
    t_multi: Optional[int]


@dataclass(frozen=True)
class CrossoverTable:
    rows: List[CrossoverRow]
    crossover: Optional[int]


def _crossover_row(M, k, k0, gamma, u_over_pfp, c) -> CrossoverRow:
    l_suff = sufficient_length(c, u_over_pfp)
    single = nmax_single(M, k, k0, k, gamma, l_suff)
    t_multi, multi = optimize_t_multi(MeritInputs(M, k, k0, 1, gamma, l_suff, mode='multi'))
    return CrossoverRow(c=c, l_suff=l_suff, nmax_single=single.n_max, nmax_multi=multi.n_max,
                        t_multi=t_multi)


def crossover_scan(M: int, k: int, k0: int, gamma: float, u_over_pfp: float,
                   c_range: Iterable[int]) -> CrossoverTable:
    """Single-use (ell = k) against multi-use (ell = 1, optimal t) over coalition sizes; the
    crossover is the smallest c where single-use is ahead"""
    c_range = list(c_range)
    if not c_range:
        raise DomainError('c_range is empty')
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        rows = list(pool.map(lambda c: _crossover_row(M, k, k0, gamma, u_over_pfp, c), c_range))
    crossover = next((row.c for row in rows if row.nmax_single > row.nmax_multi), None)
    logger.info(f'crossover scan over c={c_range[0]}..{c_range[-1]}: crossover at c={crossover}')
    return CrossoverTable(rows=rows, crossover=crossover)


def _save_csv(path: Path, header: str, rows) -> Path:
    np.savetxt(path, np.asarray(rows, dtype=float), delimiter=',', header=header, comments='',
               fmt='%.10g')
    logger.info(f'figure data written to {path}')
    return path


def write_figures(out_dir: Union[str, Path], c_range: Iterable[int] = range(2, 31)) -> List[Path]:
    """CSV data of the figures at M=2^24, k=128, k0=96, gamma=0.1, U/P_FP=2^30"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    M, k, k0, gamma = (FIGURE_PARAMS[key] for key in ('M', 'k', 'k0', 'gamma'))
    c_range = list(c_range)
    paths = []

    l_suff = sufficient_length(8, FIGURE_U_OVER_PFP)
    ts = np.unique(np.geomspace(l_suff, 50 * l_suff, 200).astype(int))
    paths.append(_save_csv(out_dir / FIGURE_FILES['epsilon_star'], 't,epsilon_star',
                           [(t, epsilon_star(l_suff, int(t))) for t in ts]))

    rows = [(ell, nmax_single(M, k, k0, ell, gamma, L).n_max, L)
            for L in (5000, 40000, 80000) for ell in divisors(k)]
    paths.append(_save_csv(out_dir / FIGURE_FILES['nmax_single_ell'], 'ell,nmax,l_suff', rows))

    rows = [(c, nmax_single_bitwise(M, k, k0, gamma, sufficient_length(c, FIGURE_U_OVER_PFP)).n_max)
            for c in c_range]
    paths.append(_save_csv(out_dir / FIGURE_FILES['nmax_single_c'], 'c,nmax', rows))

    rows = []
    for c in (2, 4, 8, 16):
        L = sufficient_length(c, FIGURE_U_OVER_PFP)
        lower = math.floor(L / (1. - gamma) ** 2) + 1
        for t in np.unique(np.geomspace(lower, max_t_multi(M // k, 1), 200).astype(int)):
            rows.append((t, nmax_multi(M, k, k0, 1, gamma, L, int(t), 'ell1').n_max, c))
    paths.append(_save_csv(out_dir / FIGURE_FILES['nmax_multi_t'], 't,nmax,c', rows))

    table = crossover_scan(M, k, k0, gamma, FIGURE_U_OVER_PFP, c_range)
    paths.append(_save_csv(out_dir / FIGURE_FILES['crossover'], 'c,nmax_single,nmax_multi',
                           [(row.c, row.nmax_single, row.nmax_multi) for row in table.rows]))

    rows = []
    for L, t in ((5000, 40000), (20000, 50000)):
        for ell in divisors(k):
            rows.append((ell, nmax_multi(M, k, k0, ell, gamma, L, t).n_max, L, t))
    paths.append(_save_csv(out_dir / FIGURE_FILES['nmax_multi_ell'], 'ell,nmax,l_suff,t', rows))
    return paths
