# -*- coding: utf-8 -*-
"""
Created the 18/10/2026

Little-endian binary formats: bit-packed blob entries, tracing codes, blob and pirate-blob files,
control messages and operator state.

Entries are held as uint8 arrays of shape (N, W), W = ceil(w / 8); bit i of an entry is bit
(i mod 8) of byte i // 8 and bits beyond w are zero.
"""
import struct
from typing import Tuple

import numpy as np

from pymodaq_plugins_blob.utils import FormatError

VERSION = 1
MASTER_OWNER = 0xFFFFFFFF

CODE_MAGIC = b'BLTC'
BLOB_MAGIC = b'BLOB'
PIRATE_MAGIC = b'BLBP'
STATE_MAGIC = b'BLOS'

CODE_HEADER = struct.Struct('<4sHQQQHd')
BLOB_HEADER = struct.Struct('<4sHQHI')
STATE_HEADER = struct.Struct('<4sHIQQ')
MESSAGE_HEADER = struct.Struct('<BQ')
SEED_TAIL = struct.Struct('<16sI')

FORM_EXPLICIT = 0
FORM_SEEDED = 1


def entry_bytes(w: int) -> int:
    return (w + 7) // 8


def index_bits(N: int) -> int:
    """Bits needed to address one of N entries"""
    return max(1, (N - 1).bit_length())


def mask_entries(entries: np.ndarray, w: int) -> np.ndarray:
    """Clear the padding bits beyond w in the last byte of every entry"""
    spare = 8 * entry_bytes(w) - w
    if spare:
        entries[..., -1] &= np.uint8(0xFF >> spare)
    return entries


def pack_entries(entries: np.ndarray, w: int) -> bytes:
    """Concatenate the w-bit entries into one little-endian bit string"""
    if w == 1:
        return np.packbits(entries[:, 0], bitorder='little').tobytes()
    bits = np.unpackbits(entries, axis=1, bitorder='little')[:, :w]
    return np.packbits(bits.ravel(), bitorder='little').tobytes()


def unpack_entries(data: bytes, N: int, w: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    if len(raw) != (N * w + 7) // 8:
        raise FormatError(f'expected {(N * w + 7) // 8} bytes of entries, got {len(raw)}')
    bits = np.unpackbits(raw, count=N * w, bitorder='little').reshape(N, w)
    if w == 1:
        return bits.copy()
    padded = np.zeros((N, 8 * entry_bytes(w)), dtype=np.uint8)
    padded[:, :w] = bits
    return np.packbits(padded, axis=1, bitorder='little')


def pack_bits(flags: np.ndarray) -> bytes:
    return np.packbits(flags.astype(np.uint8), bitorder='little').tobytes()


def unpack_bits(data: bytes, count: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=count,
                         bitorder='little').astype(bool)


class _Reader:
    """Sequential reader over a bytes payload raising FormatError on truncation"""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError('truncated payload')
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def array(self, dtype: str, count: int) -> np.ndarray:
        return np.frombuffer(self.take(np.dtype(dtype).itemsize * count), dtype=dtype).copy()

    def rest(self) -> bytes:
        return self.take(len(self.data) - self.offset)

    def done(self):
        if self.offset != len(self.data):
            raise FormatError(f'{len(self.data) - self.offset} trailing bytes')


def _check_magic(magic: bytes, expected: bytes, version: int):
    if magic != expected:
        raise FormatError(f'bad magic {magic!r}, expected {expected!r}')
    if version != VERSION:
        raise FormatError(f'unsupported version {version}')


def encode_tracing_code(code) -> bytes:
    parts = [CODE_HEADER.pack(CODE_MAGIC, VERSION, code.N, code.t, code.U, code.w, code.cutoff),
             code.positions.astype('<u8').tobytes(),
             code.biases.astype('<f8').tobytes(),
             np.ascontiguousarray(code.alphabet, dtype=np.uint8).tobytes()]
    if code.t:
        parts.append(np.packbits(code.codewords, axis=1, bitorder='little').tobytes())
    return b''.join(parts)


def decode_tracing_code(data: bytes, cls):
    reader = _Reader(data)
    magic, version, N, t, U, w, cutoff = reader.unpack(CODE_HEADER)
    _check_magic(magic, CODE_MAGIC, version)
    positions = reader.array('<u8', t).astype(np.int64)
    biases = reader.array('<f8', t).astype(np.float64)
    alphabet = reader.array('u1', t * 2 * entry_bytes(w)).reshape(t, 2, entry_bytes(w))
    if t:
        rows = reader.array('u1', U * ((t + 7) // 8)).reshape(U, (t + 7) // 8)
        codewords = np.unpackbits(rows, axis=1, count=t, bitorder='little')
    else:
        codewords = np.zeros((U, 0), dtype=np.uint8)
    reader.done()
    return cls(N=N, w=w, positions=positions, biases=biases, alphabet=alphabet,
               codewords=codewords, cutoff=cutoff)


def encode_blob(entries: np.ndarray, w: int, owner: int, erased: np.ndarray = None) -> bytes:
    """Blob file, or pirate-blob file with its erasure bitmap when `erased` is given"""
    magic = BLOB_MAGIC if erased is None else PIRATE_MAGIC
    parts = [BLOB_HEADER.pack(magic, VERSION, len(entries), w, owner), pack_entries(entries, w)]
    if erased is not None:
        parts.append(pack_bits(erased))
    return b''.join(parts)


def decode_blob(data: bytes) -> Tuple[np.ndarray, int, int, np.ndarray]:
    """Return (entries, w, owner, erased); erased is None for plain blob files"""
    reader = _Reader(data)
    magic, version, N, w, owner = reader.unpack(BLOB_HEADER)
    _check_magic(magic, PIRATE_MAGIC if magic == PIRATE_MAGIC else BLOB_MAGIC, version)
    entries = unpack_entries(reader.take((N * w + 7) // 8), N, w)
    erased = None
    if magic == PIRATE_MAGIC:
        erased = unpack_bits(reader.take((N + 7) // 8), N)
    reader.done()
    return entries, w, owner, erased


def encode_message(form: int, sequence_number: int, indices=None, seed: bytes = None,
                   retry: int = 0) -> bytes:
    head = MESSAGE_HEADER.pack(form, sequence_number)
    if form == FORM_EXPLICIT:
        return head + np.asarray(indices, dtype='<u8').tobytes()
    return head + SEED_TAIL.pack(seed, retry)


def decode_message(data: bytes) -> dict:
    reader = _Reader(data)
    form, sequence_number = reader.unpack(MESSAGE_HEADER)
    if form == FORM_EXPLICIT:
        body = reader.rest()
        if len(body) % 8:
            raise FormatError('explicit control message body is not a whole number of u64')
        return dict(form=form, sequence_number=sequence_number,
                    indices=np.frombuffer(body, dtype='<u8').astype(np.int64))
    if form == FORM_SEEDED:
        seed, retry = reader.unpack(SEED_TAIL)
        reader.done()
        return dict(form=form, sequence_number=sequence_number, seed=seed, retry=retry)
    raise FormatError(f'unknown control message form tag {form}')


def pack_indices(indices: np.ndarray, N: int) -> bytes:
    """Compact broadcast encoding: each index on index_bits(N) bits"""
    bits = index_bits(N)
    values = np.asarray(indices, dtype=np.uint64)
    flags = (values[:, None] >> np.arange(bits, dtype=np.uint64)) & np.uint64(1)
    return np.packbits(flags.astype(np.uint8).ravel(), bitorder='little').tobytes()


def unpack_indices(data: bytes, count: int, N: int) -> np.ndarray:
    bits = index_bits(N)
    flags = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=count * bits,
                          bitorder='little').reshape(count, bits).astype(np.int64)
    return flags @ (1 << np.arange(bits, dtype=np.int64))


def encode_state(params_json: bytes, code_digest: bytes, root_seed: bytes, counter: int,
                 used: np.ndarray, master: np.ndarray, w: int) -> bytes:
    used = np.sort(np.asarray(used, dtype=np.int64))
    return b''.join([STATE_HEADER.pack(STATE_MAGIC, VERSION, len(params_json), counter, len(used)),
                     params_json, code_digest, root_seed,
                     used.astype('<u8').tobytes(), pack_entries(master, w)])


def decode_state(data: bytes) -> dict:
    """Header fields of an operator state file; master entries are left packed"""
    reader = _Reader(data)
    magic, version, params_len, counter, used_count = reader.unpack(STATE_HEADER)
    _check_magic(magic, STATE_MAGIC, version)
    params_json = reader.take(params_len)
    code_digest = reader.take(32)
    root_seed = reader.take(16)
    used = reader.array('<u8', used_count).astype(np.int64)
    return dict(params_json=params_json, code_digest=code_digest, root_seed=root_seed,
                counter=counter, used=used, master_bytes=reader.rest())
