# -*- coding: utf-8 -*-
"""
Created the 18/10/2026

Two-step collusion attack on blobs: merge the coalition's copies under the Marking Assumption,
then erase a random fraction of the positions that could still carry tracing information.
Sweeps run the whole deployment, usage, attack, accusation and next-key cycle per trial.
"""
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Union

import numpy as np

from pymodaq.utils.logger import set_logger, get_module_name

from pymodaq_plugins_blob import config
from pymodaq_plugins_blob.analysis import epsilon_star
from pymodaq_plugins_blob.blobcore import ControlMessage, SchemeParams, initialise
from pymodaq_plugins_blob.primitives import codec
from pymodaq_plugins_blob.tardos import AccusationReport, accuse, make_threshold
from pymodaq_plugins_blob.utils import DeploymentMismatchError, DomainError, derive_seed, rng, thread_count

logger = set_logger(get_module_name(__file__), add_to_console=False)

STRATEGIES = ('uniform', 'majority', 'first', 'random-output')


@dataclass(frozen=True, eq=False)
class PirateBlob:
    """Output of the collusion attack

    values holds (N, W) entry bytes, zero where erased; erased, detected and used are boolean
    masks over [N] for the erasures, the positions where colluders disagreed and the positions
    the attackers saw used.
    """
    values: np.ndarray = field(repr=False)
    w: int
    erased: np.ndarray = field(repr=False)
    detected: np.ndarray = field(repr=False)
    used: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.values)

    @property
    def entries(self) -> np.ndarray:
        return self.values

    @property
    def erased_set(self) -> FrozenSet[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.erased))

    @property
    def detected_set(self) -> FrozenSet[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.detected))

    @property
    def erasure_fraction(self) -> float:
        """|E| / (N - |V| - |D|)"""
        eligible = int((~self.used & ~self.detected).sum())
        return float(self.erased.sum()) / eligible if eligible else 0.

    def to_bytes(self) -> bytes:
        return codec.encode_blob(self.values, self.w, codec.MASTER_OWNER, erased=self.erased)

    def save(self, path: Union[str, Path]):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'PirateBlob':
        """Pirate-blob files carry the entries and erasures only"""
        values, w, _, erased = codec.decode_blob(Path(path).read_bytes())
        if erased is None:
            erased = np.zeros(len(values), dtype=bool)
        empty = np.zeros(len(values), dtype=bool)
        return cls(values=values, w=w, erased=erased, detected=empty, used=empty.copy())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class AttackOutcome:
    pirate: PirateBlob
    epsilon_used: float
    traced: bool
    falsely_accused: FrozenSet[int]
    next_key_failures: int
    trials: int
    coalition: tuple = ()
    report: Optional[AccusationReport] = None

    def to_dict(self) -> dict:
        return dict(epsilon=self.epsilon_used, traced=self.traced,
                    falsely_accused=sorted(self.falsely_accused),
                    next_key_failures=self.next_key_failures, trials=self.trials,
                    coalition=list(self.coalition),
                    erasure_fraction=self.pirate.erasure_fraction,
                    detected=len(self.pirate.detected_set))


def _mask(N: int, indices) -> np.ndarray:
    if isinstance(indices, np.ndarray) and indices.dtype == bool:
        if len(indices) != N:
            raise DomainError(f'mask of length {len(indices)} for N={N} entries')
        return indices.copy()
    mask = np.zeros(N, dtype=bool)
    indices = np.fromiter((int(i) for i in indices), dtype=np.int64)
    if len(indices) and (indices.min() < 0 or indices.max() >= N):
        raise DomainError(f'indices outside [0, {N})')
    mask[indices] = True
    return mask


def _pick_detected(observed: np.ndarray, strategy: str, w: int,
                   generator: np.random.Generator) -> np.ndarray:
    """Pirate values at detected positions from the (c, d, W) values the colluders hold there"""
    c, d, width = observed.shape
    if strategy == 'first':
        return observed[0]
    if strategy == 'random-output':
        return codec.mask_entries(generator.integers(0, 256, size=(d, width), dtype=np.uint8), w)

    # multiplicity of each colluder's value among the coalition, per position
    same = np.all(observed[:, None] == observed[None, :], axis=-1).sum(axis=1)
    if strategy == 'majority':
        # uniform priority among rows holding a most frequent value breaks ties uniformly
        priority = np.where(same == same.max(axis=0), generator.random((c, d)), -1.)
    else:
        # row weights 1/multiplicity make every distinct value equally likely
        weights = 1. / same
        cumulative = np.cumsum(weights / weights.sum(axis=0), axis=0)
        priority = (cumulative > generator.random(d)).astype(float)
    rows = np.argmax(priority, axis=0)
    return observed[rows, np.arange(d)]


def run_collusion(blobs: Sequence, visible_used: Iterable[int], epsilon: float,
                  strategy: Optional[str] = None, rng_seed: bytes = b'\x00' * 16) -> PirateBlob:
    """Build a pirate blob from the coalition's blobs

    Positions where the colluders disagree (outside the used set) are detected and filled
    following the strategy. A uniformly random subset of floor(epsilon * |([N] \\ V) \\ D|)
    of the remaining unused positions is then erased.
    """
    strategy = strategy or config('attack', 'strategy')
    if strategy not in STRATEGIES:
        raise DomainError(f'strategy must be one of {STRATEGIES}, got {strategy!r}')
    if len(blobs) < 1:
        raise DomainError('the coalition needs at least one blob')
    if not 0. <= epsilon <= 1.:
        raise DomainError(f'epsilon={epsilon} must lie in [0, 1]')
    N, w = blobs[0].N, blobs[0].w
    if any(blob.N != N or blob.w != w for blob in blobs):
        raise DeploymentMismatchError('coalition blobs come from different deployments')

    generator = rng(rng_seed)
    used = _mask(N, visible_used)
    stacked = np.stack([blob.entries for blob in blobs])
    detected = np.any(np.any(stacked != stacked[0], axis=2), axis=0) & ~used
    values = stacked[0].copy()
    positions = np.flatnonzero(detected)
    if len(positions):
        values[positions] = _pick_detected(stacked[:, positions], strategy, w, generator)

    candidates = np.flatnonzero(~used & ~detected)
    size = math.floor(epsilon * len(candidates))
    erased = np.zeros(N, dtype=bool)
    erased[generator.choice(candidates, size=size, replace=False)] = True
    values[erased] = 0
    logger.debug(f'collusion of {len(blobs)}: {len(positions)} detected, {size} erased')
    return PirateBlob(values=values, w=w, erased=erased, detected=detected, used=used)


def _count_failures(pirate: PirateBlob, params: SchemeParams, trials: int, rng_seed: bytes,
                    excluded: Optional[np.ndarray], tracing=None) -> int:
    if excluded is None:
        excluded = pirate.used if params.single_use else np.zeros(pirate.N, dtype=bool)
    excluded = _mask(pirate.N, excluded)
    if tracing is not None:
        excluded |= _mask(pirate.N, tracing)
    available = ~excluded
    population = int(available.sum())
    missing = int((pirate.erased & available).sum())
    if population < params.ell and params.single_use:
        raise DomainError(f'{population} drawable entries cannot serve a key of ell={params.ell}')
    generator = rng(rng_seed)
    # only the number of erased entries among the ell addressed ones matters
    if params.single_use:
        hits = generator.hypergeometric(missing, population - missing, params.ell, size=trials)
    else:
        hits = generator.binomial(params.ell, missing / population, size=trials)
    return int((hits >= params.unavailable_needed).sum())


def evaluate_next_key_failure(pirate: PirateBlob, params: SchemeParams, trials: int,
                              rng_seed: bytes, excluded=None, tracing=None) -> float:
    """Fraction of fresh control messages for which ceil(k0/w) or more addressed entries are
    missing from the pirate blob

    Draws follow the scheme mode over the entries not in `excluded` (by default the used set in
    single-use mode) nor in `tracing`. Control messages never address tracing positions, so
    without `tracing` (mask or indices, known to the operator only) they count as drawable
    entries the pirate kept.
    """
    if trials < 1:
        raise DomainError('trials must be at least 1')
    return _count_failures(pirate, params, trials, rng_seed, excluded, tracing) / trials


def attacker_epsilon(params: SchemeParams, margin: Optional[float] = None,
                     t_public: Optional[bool] = None,
                     hidden_t_fraction: Optional[float] = None) -> float:
    """Erasure fraction the attackers pick: eps* + margin

    With a secret t the attackers assume t = hidden_t_fraction * N.
    """
    margin = config('attack', 'epsilon_margin') if margin is None else margin
    t_public = config('attack', 't_public') if t_public is None else t_public
    hidden_t_fraction = config('attack', 'hidden_t_fraction') if hidden_t_fraction is None \
        else hidden_t_fraction
    t = params.t if t_public else hidden_t_fraction * params.N
    l_suff = params.l_suff
    base = epsilon_star(l_suff, t) if t >= l_suff else 0.
    return min(1., base + margin)


def observed_indices(messages: Iterable[ControlMessage], N: int) -> np.ndarray:
    """Sorted set of the blob indices revealed by the broadcast control messages"""
    resolved = [np.asarray(msg.resolve(N), dtype=np.int64) for msg in messages]
    if not resolved:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(resolved))


def _trial(params: SchemeParams, c: int, n: int, epsilon: float, seed: bytes, strategy: Optional[str],
           threshold: Optional[str], form: str, failure_trials: int) -> AttackOutcome:
    state, _ = initialise(params, derive_seed(seed, 'init'), build_blobs=False)
    messages = [state.next_control_message(derive_seed(seed, 'round', r), form) for r in range(n)]
    visible = observed_indices(messages, params.N)
    coalition = tuple(sorted(int(u) for u in
                             rng(derive_seed(seed, 'coalition')).choice(params.U, size=c, replace=False)))
    pirate = run_collusion([state.user_blob(u) for u in coalition], visible, epsilon, strategy,
                           derive_seed(seed, 'collusion'))
    report = accuse(state.code, pirate,
                    make_threshold(threshold, params.u_over_pfp, derive_seed(seed, 'calibration')))
    failures = _count_failures(pirate, params, failure_trials, derive_seed(seed, 'next-key'), None,
                               tracing=state.tracing)
    return AttackOutcome(pirate=pirate, epsilon_used=epsilon,
                         traced=bool(report.accused & set(coalition)),
                         falsely_accused=frozenset(report.accused - set(coalition)),
                         next_key_failures=failures, trials=failure_trials,
                         coalition=coalition, report=report)


def sweep_attack(params: SchemeParams, c: int, n: int, epsilon_grid: Iterable[float], trials: int,
                 rng_seed: bytes, strategy: Optional[str] = None, threshold: Optional[str] = None,
                 form: str = 'explicit', failure_trials: int = 1000) -> List[AttackOutcome]:
    """Run `trials` independent attacks per epsilon; outcomes are returned epsilon-major in grid order"""
    epsilon_grid = [float(eps) for eps in epsilon_grid]
    if any(not 0. <= eps <= 1. for eps in epsilon_grid):
        raise DomainError('epsilon grid values must lie in [0, 1]')
    if not 1 <= c <= params.U:
        raise DomainError(f'coalition size c={c} must lie in [1, U={params.U}]')
    jobs = [(eps, derive_seed(rng_seed, 'sweep', i, j))
            for i, eps in enumerate(epsilon_grid) for j in range(trials)]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        futures = [pool.submit(_trial, params, c, n, eps, seed, strategy, threshold, form, failure_trials)
                   for eps, seed in jobs]
        outcomes = [future.result() for future in futures]
    logger.info(f'sweep done: {len(epsilon_grid)} epsilon values x {trials} trials, c={c}, n={n}')
    return outcomes


def summarise_sweep(outcomes: Sequence[AttackOutcome], params: SchemeParams, c: int, n: int) -> List[Dict]:
    """One record per epsilon: traced rate, rate of trials with a false accusation, next-key failure rate"""
    groups: Dict[float, List[AttackOutcome]] = {}
    for outcome in outcomes:
        groups.setdefault(outcome.epsilon_used, []).append(outcome)
    records = []
    for eps, group in groups.items():
        records.append(dict(
            epsilon=eps,
            traced_rate=float(np.mean([o.traced for o in group])),
            false_positive_rate=float(np.mean([bool(o.falsely_accused) for o in group])),
            fail_rate=sum(o.next_key_failures for o in group) / sum(o.trials for o in group),
            n=n, c=c, params_hash=params.digest()))
    return records


def to_json_lines(records: Iterable[Dict]) -> str:
    return ''.join(json.dumps(record, sort_keys=True) + '\n' for record in records)
