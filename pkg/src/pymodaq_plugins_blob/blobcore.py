# -*- coding: utf-8 -*-
"""
Created the 18/10/2026

The blob and both protocol variants: initialisation, operator-side control messages (single-use
with bookkeeping of the used set, multi-use with collisions allowed), key assembly on the user
side, and encryption/decryption through a pluggable authenticated cipher.
"""
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from Crypto.Cipher import AES

from pymodaq.utils.logger import set_logger, get_module_name

from pymodaq_plugins_blob import config
from pymodaq_plugins_blob.ciphers import get_cipher
from pymodaq_plugins_blob.primitives import codec
from pymodaq_plugins_blob.tardos import TracingCode, generate_code, sufficient_length
from pymodaq_plugins_blob.utils import (AuthenticityError, DeploymentMismatchError, DomainError,
                                        ExhaustionError, FormatError, ParamsError, ResourceError,
                                        SeedSearchError, ceil_div, derive_seed, rng)

logger = set_logger(get_module_name(__file__), add_to_console=False)

MODES = ('single', 'multi')
FORMS = ('explicit', 'seeded')
NONCE_BYTES = 12


class ErasedEntryError(AuthenticityError):
    """A control message addresses an erased pirate-blob entry"""


@dataclass(frozen=True)
class SchemeParams:
    """Public system parameters of a blob deployment"""
    M: int
    w: int
    N: int
    k: int
    ell: int
    t: int
    k0: int
    gamma: float
    U: int
    c0: int
    p_fp: float
    mode: str = 'single'
    cipher: str = 'aes-gcm'

    @classmethod
    def create(cls, N: int, w: int, ell: int, t: int, k0: int, gamma: float, U: int, c0: int,
               p_fp: float, mode: str = 'single', cipher: str = 'aes-gcm') -> 'SchemeParams':
        """Build params from the entry geometry, deriving M = N w and k = ell w"""
        params = cls(M=N * w, w=w, N=N, k=ell * w, ell=ell, t=t, k0=k0, gamma=gamma, U=U, c0=c0,
                     p_fp=p_fp, mode=mode, cipher=cipher)
        params.validate()
        return params

    def validate(self):
        checks = [
            (self.w >= 1 and self.N >= 1 and self.ell >= 1, 'w, N and ell must be positive'),
            (self.M == self.N * self.w, f'M = N*w violated: {self.M} != {self.N}*{self.w}'),
            (self.k == self.ell * self.w, f'k = ell*w violated: {self.k} != {self.ell}*{self.w}'),
            (0 < self.k0 <= self.k, f'0 < k0 <= k violated: k0={self.k0}, k={self.k}'),
            (0 < self.gamma < 1, f'0 < gamma < 1 violated: gamma={self.gamma}'),
            (0 <= self.t < self.N, f't < N violated: t={self.t}, N={self.N}'),
            (self.ell <= self.N - self.t, f'ell <= N - t violated: ell={self.ell}, N-t={self.N - self.t}'),
            (self.U >= 1 and self.c0 >= 1, 'U and c0 must be positive'),
            (0 < self.p_fp < 1, f'0 < P_FP < 1 violated: P_FP={self.p_fp}'),
            (self.mode in MODES, f'mode must be one of {MODES}, got {self.mode!r}'),
        ]
        for ok, message in checks:
            if not ok:
                raise ParamsError(message)

    @property
    def single_use(self) -> bool:
        return self.mode == 'single'

    @property
    def u_over_pfp(self) -> float:
        return self.U / self.p_fp

    @property
    def l_suff(self) -> int:
        return sufficient_length(self.c0, self.u_over_pfp)

    @property
    def unavailable_needed(self) -> int:
        """Addressed entries that must be missing for brute-forcing to fail: ceil(k0 / w)"""
        return ceil_div(self.k0, self.w)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> 'SchemeParams':
        try:
            params = cls(**d)
        except TypeError as e:
            raise ParamsError(f'invalid parameter set: {e}')
        params.validate()
        return params

    @classmethod
    def from_json(cls, text: Union[str, bytes]) -> 'SchemeParams':
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class Blob:
    """N entries of w bits, held as a read-only (N, ceil(w/8)) uint8 array"""
    entries: np.ndarray = field(repr=False)
    w: int
    owner: int

    erased = None

    def __post_init__(self):
        self.entries.flags.writeable = False

    @property
    def N(self) -> int:
        return len(self.entries)

    def to_bytes(self) -> bytes:
        return codec.encode_blob(self.entries, self.w, self.owner)

    def save(self, path: Union[str, Path]):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Blob':
        entries, w, owner, erased = codec.decode_blob(Path(path).read_bytes())
        if erased is not None:
            raise FormatError(f'{path} is a pirate blob, not a user blob')
        return cls(entries=entries, w=w, owner=owner)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def expand_seed(seed: bytes, retry: int, ell: int, N: int) -> np.ndarray:
    """Single-shot index expansion of a seeded control message

    An AES-CTR keystream keyed by the seed, with the retry counter as nonce, is cut into 64-bit
    words masked to ceil(log2 N) bits; words >= N are rejected until ell indices are collected.
    """
    if len(seed) != 16:
        raise DomainError('control message seeds are 16 bytes')
    stream = AES.new(seed, AES.MODE_CTR, nonce=struct.pack('<I', retry))
    mask = np.uint64((1 << codec.index_bits(N)) - 1)
    batch = max(2 * ell, 64)
    indices = np.empty(0, dtype=np.int64)
    while len(indices) < ell:
        words = np.frombuffer(stream.encrypt(bytes(8 * batch)), dtype='<u8') & mask
        indices = np.concatenate([indices, words[words < N].astype(np.int64)])
    return indices[:ell]


@dataclass(frozen=True, eq=False)
class ControlMessage:
    """Broadcast description of the index vector L, explicit or as (seed, retry)"""
    form: str
    sequence_number: int
    ell: int
    indices: Optional[np.ndarray] = field(default=None, repr=False)
    seed: Optional[bytes] = None
    retry: int = 0

    def resolve(self, N: int) -> np.ndarray:
        """The index vector L addressed by this message"""
        if self.form == 'explicit':
            return self.indices
        return expand_seed(self.seed, self.retry, self.ell, N)

    def to_bytes(self) -> bytes:
        if self.form == 'explicit':
            return codec.encode_message(codec.FORM_EXPLICIT, self.sequence_number, indices=self.indices)
        return codec.encode_message(codec.FORM_SEEDED, self.sequence_number, seed=self.seed,
                                    retry=self.retry)

    @classmethod
    def from_bytes(cls, data: bytes, ell: int) -> 'ControlMessage':
        fields = codec.decode_message(data)
        if fields['form'] == codec.FORM_EXPLICIT:
            if len(fields['indices']) != ell:
                raise FormatError(f'explicit message carries {len(fields["indices"])} indices, expected {ell}')
            return cls('explicit', fields['sequence_number'], ell, indices=fields['indices'])
        return cls('seeded', fields['sequence_number'], ell, seed=fields['seed'], retry=fields['retry'])

    def compact_bits(self, N: int) -> int:
        """Broadcast size: header plus ell*ceil(log2 N) bits (explicit) or seed and retry (seeded)"""
        header = 8 * codec.MESSAGE_HEADER.size
        if self.form == 'explicit':
            return header + self.ell * codec.index_bits(N)
        return header + 8 * codec.SEED_TAIL.size

    def pack_compact(self, N: int) -> bytes:
        if self.form == 'seeded':
            return self.to_bytes()
        head = codec.MESSAGE_HEADER.pack(codec.FORM_EXPLICIT, self.sequence_number)
        return head + codec.pack_indices(self.indices, N)


@dataclass(frozen=True, eq=False)
class Ciphertext:
    payload: bytes
    control: ControlMessage
    cipher: str = field(default_factory=lambda: config('blob', 'cipher'))


def gather_key_bits(entries: np.ndarray, indices: np.ndarray, w: int) -> bytes:
    """Concatenate the w-bit entries at `indices` in order, least-significant bit first"""
    bits = np.unpackbits(entries[indices], axis=1, bitorder='little')[:, :w]
    return np.packbits(bits.ravel(), bitorder='little').tobytes()


def derive_key(blob, msg: ControlMessage) -> bytes:
    """k-bit key assembled from the blob entries addressed by the message (duplicates kept)"""
    indices = np.asarray(msg.resolve(blob.N), dtype=np.int64)
    if len(indices) and (indices.min() < 0 or indices.max() >= blob.N):
        raise DomainError(f'control message addresses entries outside [0, {blob.N})')
    if blob.erased is not None and blob.erased[indices].any():
        raise ErasedEntryError(f'{int(blob.erased[indices].sum())} addressed entries are erased')
    return gather_key_bits(blob.entries, indices, blob.w)


class OperatorState:
    """Operator secret and bookkeeping of a deployment

    Holds the params, the tracing code, the master entries (tracing positions zeroed), the used
    set (single-use mode) as a boolean mask over [N], and the number of keys issued.
    """

    def __init__(self, params: SchemeParams, code: TracingCode, master: np.ndarray, root_seed: bytes,
                 used: Optional[np.ndarray] = None, counter: int = 0):
        params.validate()
        self.params = params
        self.code = code
        self.master = master
        self.master.flags.writeable = False
        self.root_seed = root_seed
        self.cipher = get_cipher(params.cipher)
        if params.k not in self.cipher.key_sizes:
            raise ParamsError(f'k={params.k} must equal a key size of {params.cipher}: '
                              f'{self.cipher.key_sizes}')
        self.tracing = np.zeros(params.N, dtype=bool)
        self.tracing[code.positions] = True
        self.used_mask = np.zeros(params.N, dtype=bool)
        if used is not None and len(used):
            self.used_mask[np.asarray(used, dtype=np.int64)] = True
        if (self.used_mask & self.tracing).any():
            raise DomainError('used set intersects the tracing positions')
        self.counter = counter
        self._functional = np.flatnonzero(~self.tracing)

    @property
    def used(self) -> np.ndarray:
        """Sorted used set V"""
        return np.flatnonzero(self.used_mask)

    @property
    def remaining(self) -> int:
        return self.params.N - self.params.t - int(self.used_mask.sum())

    @property
    def functional_indices(self) -> np.ndarray:
        return self._functional

    def master_blob(self) -> Blob:
        return Blob(entries=self.master.copy(), w=self.params.w, owner=codec.MASTER_OWNER)

    def user_blob(self, user: int) -> Blob:
        if not 0 <= user < self.params.U:
            raise DomainError(f'user {user} outside [0, {self.params.U})')
        entries = self.master.copy()
        entries[self.code.positions] = self.code.user_values(user)
        return Blob(entries=entries, w=self.params.w, owner=user)

    def _draw_explicit(self, generator: np.random.Generator) -> np.ndarray:
        ell = self.params.ell
        if self.params.single_use:
            available = np.flatnonzero(~(self.tracing | self.used_mask))
            return generator.choice(available, size=ell, replace=False).astype(np.int64)
        return self._functional[generator.integers(0, len(self._functional), size=ell)]

    def _valid(self, indices: np.ndarray) -> bool:
        if self.tracing[indices].any():
            return False
        if self.params.single_use:
            return not self.used_mask[indices].any() and len(np.unique(indices)) == len(indices)
        return True

    def _draw_seeded(self, generator: np.random.Generator) -> Tuple[bytes, int]:
        seed = generator.bytes(16)
        max_retries = config('blob', 'max_seed_retries')
        for retry in range(max_retries):
            if self._valid(expand_seed(seed, retry, self.params.ell, self.params.N)):
                logger.debug(f'seeded control message valid after {retry + 1} tries')
                return seed, retry
        raise SeedSearchError(f'no valid retry counter below {max_retries} for a seeded control message')

    def next_control_message(self, rng_seed: bytes, form: str = 'explicit') -> ControlMessage:
        """Draw the next index vector L and update the used set in single-use mode"""
        if form not in FORMS:
            raise DomainError(f'form must be one of {FORMS}')
        ell = self.params.ell
        if self.params.single_use and self.remaining < ell:
            raise ExhaustionError(f'single-use key material exhausted: N - t - |V| = {self.remaining} '
                                  f'< ell = {ell}')
        generator = rng(rng_seed)
        if form == 'explicit':
            msg = ControlMessage('explicit', self.counter, ell, indices=self._draw_explicit(generator))
        else:
            seed, retry = self._draw_seeded(generator)
            msg = ControlMessage('seeded', self.counter, ell, seed=seed, retry=retry)
        if self.params.single_use:
            self.used_mask[msg.resolve(self.params.N)] = True
        self.counter += 1
        return msg

    def encrypt(self, plaintext: bytes, rng_seed: bytes, form: str = 'explicit') -> Ciphertext:
        msg = self.next_control_message(derive_seed(rng_seed, 'message'), form)
        key = gather_key_bits(self.master, msg.resolve(self.params.N), self.params.w)
        nonce = derive_seed(rng_seed, 'nonce')[:NONCE_BYTES]
        payload = nonce + self.cipher.encrypt(key, nonce, plaintext, msg.to_bytes())
        return Ciphertext(payload=payload, control=msg, cipher=self.params.cipher)

    def save(self, path: Union[str, Path]):
        Path(path).write_bytes(codec.encode_state(
            self.params.to_json().encode(), bytes.fromhex(self.code.digest()), self.root_seed,
            self.counter, self.used, self.master, self.params.w))

    @classmethod
    def load(cls, path: Union[str, Path], code: Union[TracingCode, str, Path]) -> 'OperatorState':
        fields = codec.decode_state(Path(path).read_bytes())
        params = SchemeParams.from_json(fields['params_json'])
        if not isinstance(code, TracingCode):
            code = TracingCode.load(code)
        if bytes.fromhex(code.digest()) != fields['code_digest']:
            raise DeploymentMismatchError('tracing code does not belong to this operator state')
        master = codec.unpack_entries(fields['master_bytes'], params.N, params.w)
        return cls(params, code, master, fields['root_seed'], used=fields['used'],
                   counter=fields['counter'])


def initialise(params: SchemeParams, rng_seed: bytes,
               build_blobs: bool = True) -> Tuple[OperatorState, List[Blob]]:
    """Draw the tracing code and functional entries and personalise one blob per user"""
    params.validate()
    footprint = (params.U + 1) * params.N * codec.entry_bytes(params.w) if build_blobs else 0
    if footprint > config('blob', 'max_deployment_bytes'):
        raise ResourceError(f'{params.U} blobs of {params.N} entries need {footprint} bytes, above '
                            f'the configured max_deployment_bytes')
    code = generate_code(params, derive_seed(rng_seed, 'code'))
    generator = rng(derive_seed(rng_seed, 'entries'))
    master = codec.mask_entries(
        generator.integers(0, 256, size=(params.N, codec.entry_bytes(params.w)), dtype=np.uint8),
        params.w)
    master[code.positions] = 0
    state = OperatorState(params, code, master, derive_seed(rng_seed, 'operator'))
    blobs = [state.user_blob(u) for u in range(params.U)] if build_blobs else []
    logger.info(f'deployment initialised: N={params.N}, w={params.w}, t={params.t}, U={params.U}, '
                f'mode={params.mode}')
    return state, blobs


def next_control_message(state: OperatorState, rng_seed: bytes, form: str = 'explicit') -> ControlMessage:
    return state.next_control_message(rng_seed, form)


def encrypt(state: OperatorState, plaintext: bytes, rng_seed: bytes, form: str = 'explicit') -> Ciphertext:
    return state.encrypt(plaintext, rng_seed, form)


def decrypt(blob, ct: Ciphertext, cipher: Optional[str] = None) -> bytes:
    """Decrypt with the key assembled from `blob` and the cipher named in the ciphertext

    AuthenticityError when any addressed entry differs from the operator's,
    ErasedEntryError when one is erased.
    """
    cipher = get_cipher(cipher or ct.cipher)
    key = derive_key(blob, ct.control)
    nonce, body = ct.payload[:NONCE_BYTES], ct.payload[NONCE_BYTES:]
    return cipher.decrypt(key, nonce, body, ct.control.to_bytes())
