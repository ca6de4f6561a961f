"""Privacy-preserving proximity tracing with rotating keys and an untrusted relay."""

__version__ = "0.1.0"
