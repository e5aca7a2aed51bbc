"""trainkit: toy-scale learned models for the line-repair pipeline.

Trains a small patch segmenter and a mask-reconnection model on the
synthetic corpus and serves them to the pipeline through its file-exchange
protocol.  Interacts with the pipeline package only via its on-disk formats
and CLI.
"""

from .config import TrainConfig  # noqa: F401
from .models import TinyUNet  # noqa: F401
from .serve import ExchangeServer, load_model  # noqa: F401
from .train import train_patch_model, train_reconnect_model, weighted_bce  # noqa: F401

__version__ = "0.1.0"
