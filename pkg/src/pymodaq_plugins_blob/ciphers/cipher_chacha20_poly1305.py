from Crypto.Cipher import ChaCha20_Poly1305

from pymodaq_plugins_blob.ciphers import Cipher, register
from pymodaq_plugins_blob.utils import AuthenticityError


@register
class ChaCha20Poly1305(Cipher):
    """ChaCha20-Poly1305, for deployments with k = 256"""
    name = 'chacha20-poly1305'
    key_sizes = (256,)

    def _new(self, key: bytes, nonce: bytes, associated_data: bytes):
        self.check_key(key)
        cipher = ChaCha20_Poly1305.new(key=key, nonce=nonce)
        cipher.update(associated_data)
        return cipher

    def encrypt(self, key, nonce, plaintext, associated_data):
        ciphertext, tag = self._new(key, nonce, associated_data).encrypt_and_digest(plaintext)
        return ciphertext + tag

    def decrypt(self, key, nonce, ciphertext, associated_data):
        if len(ciphertext) < self.tag_size:
            raise AuthenticityError('ciphertext shorter than its tag')
        body, tag = ciphertext[:-self.tag_size], ciphertext[-self.tag_size:]
        try:
            return self._new(key, nonce, associated_data).decrypt_and_verify(body, tag)
        except ValueError:
            raise AuthenticityError('MAC check failed')
