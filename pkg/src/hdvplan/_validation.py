"""Small input validation helpers in the spirit of ``sklearn.utils.validation``."""
import numbers

import numpy as np

from .exceptions import ValidationError


def check_scalar(value, name, *, min_val=None, max_val=None, include_min=True, include_max=True):
    """Validate a finite real scalar and return it as ``float``."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValidationError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value}")
    if min_val is not None:
        if value < min_val or (not include_min and value == min_val):
            op = ">=" if include_min else ">"
            raise ValidationError(f"{name} must be {op} {min_val}, got {value}")
    if max_val is not None:
        if value > max_val or (not include_max and value == max_val):
            op = "<=" if include_max else "<"
            raise ValidationError(f"{name} must be {op} {max_val}, got {value}")
    return value


def check_1d(values, name, *, size=None, finite=True):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.size != size:
        raise ValidationError(f"{name} must have {size} entries, got {arr.size}")
    if finite:
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise ValidationError(f"{name} has a non-finite entry", index=int(bad[0]))
    return arr


def check_state(state, size, name="state"):
    """Coerce a vehicle state (tuple, NamedTuple or array) to a float vector."""
    return check_1d(state, name, size=size)


def check_choice(value, name, choices):
    if value not in choices:
        raise ValidationError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
