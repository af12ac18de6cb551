from Crypto.Cipher import AES

from pymodaq_plugins_blob.ciphers import Cipher, register
from pymodaq_plugins_blob.utils import AuthenticityError


@register
class AesGcm(Cipher):
    """AES in Galois/Counter mode, 128-, 192- or 256-bit keys"""
    name = 'aes-gcm'
    key_sizes = (128, 192, 256)

    def _new(self, key: bytes, nonce: bytes, associated_data: bytes):
        self.check_key(key)
        cipher = AES.new(key, AES.MODE_GCM, nonce=nonce, mac_len=self.tag_size)
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
