# -*- coding: utf-8 -*-
"""
Created the 18/10/2026
Configuration, error types and seed derivation shared by the blob modules
"""
import hashlib
import os
from pathlib import Path
from typing import Union

import numpy as np

from pymodaq.utils.config import BaseConfig

SEED_BYTES = 16


class Config(BaseConfig):
    """Main class to deal with configuration values for this plugin"""
    config_template_path = Path(__file__).parent.joinpath('resources/config_template.toml')
    config_name = f"config_{__package__.split('pymodaq_plugins_')[1]}"


class BlobError(Exception):
    """Base class of every error raised by the blob schemes"""


class DomainError(BlobError, ValueError):
    """An argument lies outside the domain of the operation"""


class ParamsError(DomainError):
    """SchemeParams violate one of their arithmetic constraints"""


class ShapeError(DomainError):
    """An array or blob does not have the expected number of entries"""


class DeploymentMismatchError(DomainError):
    """Artifacts from different deployments were mixed"""


class ResourceError(BlobError):
    """A computation would exceed a configured size cap"""


class ExhaustionError(BlobError):
    """Single-use key material is depleted"""


class SeedSearchError(ExhaustionError):
    """No retry counter made a seeded control message valid"""


class AuthenticityError(BlobError):
    """Decryption failed its authenticity check"""


class FormatError(BlobError):
    """A file or wire message is malformed"""


class ProtocolError(BlobError):
    """A protocol invariant was violated, e.g. an authorised user failed to decrypt"""


def ceil_div(a: int, b: int) -> int:
    """Exact integer ceiling of a / b for positive b"""
    return -(-a // b)


def as_seed(seed: Union[bytes, str, int]) -> bytes:
    """Normalise a seed given as raw bytes, a hex string or an integer"""
    if isinstance(seed, (bytes, bytearray)):
        return bytes(seed)
    if isinstance(seed, str):
        try:
            return bytes.fromhex(seed)
        except ValueError:
            raise DomainError(f'seed {seed!r} is not a hex string')
    if isinstance(seed, (int, np.integer)):
        if seed < 0:
            raise DomainError('integer seeds must be nonnegative')
        return int(seed).to_bytes(SEED_BYTES, 'little')
    raise DomainError(f'unsupported seed type {type(seed).__name__}')


def derive_seed(root: Union[bytes, str, int], *labels) -> bytes:
    """Derive a 16-byte child seed from a root seed and a list of labels

    Labels are rendered with str() and separated, so derive_seed(s, 'user', 3) and
    derive_seed(s, 'user3') differ.
    """
    key = hashlib.blake2b(as_seed(root), digest_size=32).digest()
    h = hashlib.blake2b(key=key, digest_size=SEED_BYTES, person=b'blob-seed')
    for label in labels:
        encoded = str(label).encode()
        h.update(len(encoded).to_bytes(4, 'little'))
        h.update(encoded)
    return h.digest()


def rng(seed: Union[bytes, str, int]) -> np.random.Generator:
    """numpy Generator deterministically seeded from seed bytes"""
    return np.random.default_rng(int.from_bytes(as_seed(seed), 'little'))


def thread_count() -> int:
    """Worker threads allowed by the BLOB_THREADS environment variable"""
    try:
        return max(1, int(os.environ.get('BLOB_THREADS', '1')))
    except ValueError:
        return 1
