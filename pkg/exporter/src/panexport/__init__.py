"""panexport: feed pretrained torch models into the panscope toolchain."""

__version__ = "0.1.0"
