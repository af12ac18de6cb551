# -*- coding: utf-8 -*-
"""
Created the 18/10/2026

Binary bias-based (Tardos) fingerprinting code embedded in the tracing positions of a blob:
code generation, accusation under erasures and symbol errors, sufficient code lengths.
"""
import hashlib
import math
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING, FrozenSet, Optional, Tuple, Union

import numpy as np
from scipy import stats

from pymodaq.utils.logger import set_logger, get_module_name

from pymodaq_plugins_blob import config
from pymodaq_plugins_blob.utils import DomainError, ShapeError, rng
from pymodaq_plugins_blob.primitives import codec

if TYPE_CHECKING:
    from pymodaq_plugins_blob.attacksim import PirateBlob
    from pymodaq_plugins_blob.blobcore import SchemeParams

logger = set_logger(get_module_name(__file__), add_to_console=False)


def sufficient_length(c: int, u_over_pfp: float) -> int:
    """Sufficient binary code length (pi^2 / 2) c^2 ln(U / P_FP) for tracing a coalition of c"""
    if c < 1:
        raise DomainError(f'coalition size c={c} must be at least 1')
    if not u_over_pfp > 1:
        raise DomainError(f'U/P_FP={u_over_pfp} must exceed 1')
    return math.ceil(math.pi ** 2 / 2 * c ** 2 * math.log(u_over_pfp))


def erasure_adjusted_length(base: int, epsilon: float) -> int:
    """Code length when a fraction epsilon of the undetectable positions is erased: base (1-eps)^-2"""
    if not 0. <= epsilon < 1.:
        raise DomainError(f'epsilon={epsilon} must lie in [0, 1)')
    keep = 1 - Fraction(epsilon)
    return math.ceil(Fraction(base) / (keep * keep))


def bias_cutoff(c0: int) -> float:
    return 1. / (config('tardos', 'cutoff_factor') * c0)


def sample_biases(t: int, cutoff: float, generator: np.random.Generator) -> np.ndarray:
    """Biases drawn from the arcsine density restricted to (cutoff, 1 - cutoff)"""
    r_low = math.asin(math.sqrt(cutoff))
    r = generator.uniform(r_low, math.pi / 2 - r_low, size=t)
    return np.sin(r) ** 2


@dataclass(frozen=True, eq=False)
class TracingCode:
    """Operator secret: tracing positions, biases, per-position two-value alphabet and codewords

    alphabet has shape (t, 2, W) with W = ceil(w / 8) bytes per value, codewords shape (U, t)
    with 0/1 entries.
    """
    N: int
    w: int
    positions: np.ndarray
    biases: np.ndarray
    alphabet: np.ndarray = field(repr=False)
    codewords: np.ndarray = field(repr=False)
    cutoff: float

    def __post_init__(self):
        for array in (self.positions, self.biases, self.alphabet, self.codewords):
            array.flags.writeable = False

    @property
    def t(self) -> int:
        return len(self.positions)

    @property
    def U(self) -> int:
        return self.codewords.shape[0]

    def user_values(self, user: int) -> np.ndarray:
        """(t, W) alphabet values handed to `user` at the tracing positions"""
        return self.alphabet[np.arange(self.t), self.codewords[user].astype(np.intp)]

    def save(self, path: Union[str, Path]):
        Path(path).write_bytes(codec.encode_tracing_code(self))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'TracingCode':
        return codec.decode_tracing_code(Path(path).read_bytes(), cls)

    def digest(self) -> str:
        return hashlib.sha256(codec.encode_tracing_code(self)).hexdigest()


def _draw_alphabet(t: int, w: int, generator: np.random.Generator) -> np.ndarray:
    width = codec.entry_bytes(w)
    pairs = codec.mask_entries(generator.integers(0, 256, size=(t, 2, width), dtype=np.uint8), w)
    clash = np.all(pairs[:, 0] == pairs[:, 1], axis=1)
    while np.any(clash):
        pairs[clash, 1] = codec.mask_entries(
            generator.integers(0, 256, size=(int(clash.sum()), width), dtype=np.uint8), w)
        clash = np.all(pairs[:, 0] == pairs[:, 1], axis=1)
    return pairs


def generate_code(params: 'SchemeParams', rng_seed: bytes) -> TracingCode:
    """Draw a tracing code for params.U users over params.t positions of an N-entry blob"""
    if params.t > params.N:
        raise DomainError(f't={params.t} tracing positions do not fit in N={params.N} entries')
    if params.U < 1:
        raise DomainError('at least one user is required')
    generator = rng(rng_seed)
    cutoff = bias_cutoff(params.c0)
    positions = np.sort(generator.choice(params.N, size=params.t, replace=False)).astype(np.int64)
    biases = sample_biases(params.t, cutoff, generator)
    alphabet = _draw_alphabet(params.t, params.w, generator)
    codewords = (generator.random((params.U, params.t)) < biases).astype(np.uint8)
    logger.debug(f'tracing code drawn: t={params.t}, U={params.U}, cutoff={cutoff:.3e}')
    return TracingCode(N=params.N, w=params.w, positions=positions, biases=biases,
                       alphabet=alphabet, codewords=codewords, cutoff=cutoff)


class ScoreFunction(metaclass=ABCMeta):
    """Per-position accusation weights given the pirate's binary symbols"""

    @abstractmethod
    def weights(self, biases: np.ndarray, symbols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Return (a, b): score increments of users holding 1 resp. 0 at each position"""


class SymmetricScore(ScoreFunction):
    """Symmetric score: +sqrt((1-p)/p) for a matching 1, -sqrt(p/(1-p)) for a mismatch,
    mirrored for symbol 0. Innocent users score 0 on average with unit variance per position."""

    def weights(self, biases, symbols):
        g1 = np.sqrt((1 - biases) / biases)
        g0 = np.sqrt(biases / (1 - biases))
        ones = symbols == 1
        a = np.where(ones, g1, -g1)
        b = np.where(ones, -g0, g0)
        return a, b


class ThresholdPolicy(metaclass=ABCMeta):

    @abstractmethod
    def threshold(self, biases: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
        """Accusation threshold given the biases and weights of the scored positions"""


class FixedThreshold(ThresholdPolicy):

    def __init__(self, value: float):
        self.value = float(value)

    def threshold(self, biases, a, b):
        return self.value


class AnalyticThreshold(ThresholdPolicy):
    """Z = sqrt(2 m ln(U/P_FP)) over m scored positions"""

    def __init__(self, u_over_pfp: float):
        if not u_over_pfp > 1:
            raise DomainError('U/P_FP must exceed 1')
        self.u_over_pfp = u_over_pfp

    def threshold(self, biases, a, b):
        return math.sqrt(2 * len(biases) * math.log(self.u_over_pfp))


class CalibratedThreshold(ThresholdPolicy):
    """Empirical (1 - P_FP/U) quantile of the scores of simulated innocent users

    Innocent codewords are redrawn from the biases and scored against the same pirate. When too
    few samples fall beyond the quantile to resolve it, the quantile of a normal fit is used.
    """

    def __init__(self, u_over_pfp: float, rng_seed: bytes, samples: Optional[int] = None,
                 chunk: Optional[int] = None, min_tail_samples: Optional[int] = None):
        if not u_over_pfp > 1:
            raise DomainError('U/P_FP must exceed 1')
        self.u_over_pfp = u_over_pfp
        self.rng_seed = rng_seed
        self.samples = samples or config('tardos', 'calibration_samples')
        self.chunk = chunk or config('tardos', 'calibration_chunk')
        self.min_tail_samples = min_tail_samples or config('tardos', 'min_tail_samples')

    def innocent_scores(self, biases: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        generator = rng(self.rng_seed)
        offset = b.sum()
        delta = a - b
        scores = np.empty(self.samples)
        for start in range(0, self.samples, self.chunk):
            stop = min(start + self.chunk, self.samples)
            innocents = generator.random((stop - start, len(biases))) < biases
            scores[start:stop] = innocents @ delta + offset
        return scores

    def threshold(self, biases, a, b):
        if len(biases) == 0:
            return 0.
        scores = self.innocent_scores(biases, a, b)
        tail = 1. / self.u_over_pfp
        if self.samples * tail >= self.min_tail_samples:
            return float(np.quantile(scores, 1 - tail, method='higher'))
        logger.debug(f'{self.samples} samples cannot resolve a {tail:.2e} tail, using a normal fit')
        return float(scores.mean() + scores.std(ddof=1) * stats.norm.isf(tail))


@dataclass(frozen=True, eq=False)
class AccusationReport:
    scores: np.ndarray = field(repr=False)
    threshold: float
    accused: FrozenSet[int]
    erasure_fraction: float
    symbol_error_positions: FrozenSet[int]
    scored_positions: int = 0

    def to_dict(self) -> dict:
        return dict(threshold=self.threshold,
                    accused=sorted(self.accused),
                    erasure_fraction=self.erasure_fraction,
                    symbol_error_positions=sorted(self.symbol_error_positions),
                    scored_positions=self.scored_positions,
                    scores=[float(s) for s in self.scores])


def classify(code: TracingCode, pirate: 'PirateBlob') -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read the pirate at the tracing positions

    Returns (symbols, erased, symbol_error) arrays of length t; symbols is 0/1 where the value
    matches one of the two alphabet values.
    """
    values = pirate.values[code.positions]
    erased = pirate.erased[code.positions]
    is_zero = np.all(values == code.alphabet[:, 0], axis=1) & ~erased
    is_one = np.all(values == code.alphabet[:, 1], axis=1) & ~erased
    symbol_error = ~(erased | is_zero | is_one)
    return is_one.astype(np.uint8), erased, symbol_error


def accuse(code: TracingCode, pirate: 'PirateBlob', threshold_policy: ThresholdPolicy,
           score: Optional[ScoreFunction] = None) -> AccusationReport:
    """Score every user against the pirate blob and accuse those above the threshold

    Erased positions contribute nothing; symbol-error positions are excluded from the scores and
    reported separately.
    """
    if len(pirate.values) != code.N:
        raise ShapeError(f'pirate blob has {len(pirate.values)} entries, the deployment has {code.N}')
    score = score or SymmetricScore()
    symbols, erased, symbol_error = classify(code, pirate)
    scored = ~(erased | symbol_error)
    biases = code.biases[scored]
    a, b = score.weights(biases, symbols[scored])

    scores = code.codewords[:, scored] @ (a - b) + b.sum()
    threshold = threshold_policy.threshold(biases, a, b)
    accused = frozenset(int(u) for u in np.flatnonzero(scores > threshold))
    if symbol_error.any():
        logger.info(f'{int(symbol_error.sum())} symbol errors found at tracing positions')
    return AccusationReport(scores=scores, threshold=threshold, accused=accused,
                            erasure_fraction=float(erased.mean()) if code.t else 0.,
                            symbol_error_positions=frozenset(int(p) for p in code.positions[symbol_error]),
                            scored_positions=int(scored.sum()))


def make_threshold(name: Optional[str], u_over_pfp: float, rng_seed: bytes) -> ThresholdPolicy:
    """Threshold policy by configuration name: 'calibrated' or 'analytic'"""
    name = name or config('tardos', 'threshold')
    if name == 'calibrated':
        return CalibratedThreshold(u_over_pfp, rng_seed)
    if name == 'analytic':
        return AnalyticThreshold(u_over_pfp)
    raise DomainError(f'unknown threshold policy {name!r}')
