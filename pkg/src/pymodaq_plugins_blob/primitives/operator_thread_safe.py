from threading import Lock

from pymodaq.utils.logger import set_logger, get_module_name

from pymodaq_plugins_blob.blobcore import ControlMessage, OperatorState

logger = set_logger(get_module_name(__file__), add_to_console=False)


class OperatorStateThreadSafe(OperatorState):
    """Operator state whose used-set updates and saves are serialised under a lock"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.lock = Lock()

    def next_control_message(self, rng_seed: bytes, form: str = 'explicit') -> ControlMessage:
        try:
            self.lock.acquire()
            msg = super().next_control_message(rng_seed, form)
        except Exception as e:
            logger.debug(str(e))
            raise
        finally:
            self.lock.release()

        return msg

    def save(self, path):
        try:
            self.lock.acquire()
            super().save(path)
        finally:
            self.lock.release()
