from .store import (
    CAP_EXCEEDED,
    DUPLICATE,
    INVALID_POW,
    MAX_BATCH,
    BackendStore,
    PublishError,
    PublishRequest,
    StoredMessage,
    batch_digest,
    leading_zero_bits,
    pow_ok,
    solve_pow,
)

__all__ = [
    "BackendStore",
    "CAP_EXCEEDED",
    "DUPLICATE",
    "INVALID_POW",
    "MAX_BATCH",
    "PublishError",
    "PublishRequest",
    "StoredMessage",
    "batch_digest",
    "leading_zero_bits",
    "pow_ok",
    "solve_pow",
]
