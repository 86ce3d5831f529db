"""D-TrAttUnet segmentation network."""

__version__ = "0.1.0"
