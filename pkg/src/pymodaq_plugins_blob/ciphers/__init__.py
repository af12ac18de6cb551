"""Authenticated ciphers usable with blob keys, registered by name

Every module of this subpackage is imported at load time and registers its cipher with the
`register` decorator; modules whose packages are missing are skipped with a warning.
"""
import importlib
from abc import ABCMeta, abstractmethod
from pathlib import Path
from typing import Dict, Tuple, Type

from .. import set_logger
from ..utils import DomainError

logger = set_logger('ciphers', add_to_console=False)

CIPHERS: Dict[str, Type['Cipher']] = {}


class Cipher(metaclass=ABCMeta):
    """Authenticated encryption with associated data under a k-bit key"""
    name: str = ''
    key_sizes: Tuple[int, ...] = ()  # accepted key sizes, in bits
    nonce_size: int = 12  # bytes
    tag_size: int = 16  # bytes

    def check_key(self, key: bytes):
        if 8 * len(key) not in self.key_sizes:
            raise DomainError(f'{self.name} takes keys of {self.key_sizes} bits, got {8 * len(key)}')

    @abstractmethod
    def encrypt(self, key: bytes, nonce: bytes, plaintext: bytes, associated_data: bytes) -> bytes:
        """Return ciphertext followed by the authentication tag"""

    @abstractmethod
    def decrypt(self, key: bytes, nonce: bytes, ciphertext: bytes, associated_data: bytes) -> bytes:
        """Return the plaintext or raise AuthenticityError"""


def register(cls: Type[Cipher]) -> Type[Cipher]:
    CIPHERS[cls.name] = cls
    return cls


def get_cipher(name: str) -> Cipher:
    try:
        return CIPHERS[name]()
    except KeyError:
        raise DomainError(f'unknown cipher {name!r}, available: {sorted(CIPHERS)}')


for path in Path(__file__).parent.iterdir():
    try:
        if path.suffix == '.py' and '__init__' not in str(path):
            importlib.import_module('.' + path.stem, __package__)
    except Exception as e:
        logger.warning("{:} cipher couldn't be loaded due to some missing packages or errors: {:}".format(path.stem, str(e)))
        pass
