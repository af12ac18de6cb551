from pymodaq.resources.setup_plugin import setup
from pathlib import Path

setup(Path(__file__).parent)
