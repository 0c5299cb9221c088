"""Single-photon extraction by single-photon Raman interaction in a fiber-coupled cavity."""

__version__ = "0.1.0"
