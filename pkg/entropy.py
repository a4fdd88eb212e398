from __future__ import annotations

import numpy as np

# eigenvalues / probabilities at or below this count as zero (0 log 0 = 0)
ZERO_CUTOFF = 1e-15


def shannon(p) -> float:
    """Shannon entropy in bits of a (not necessarily normalized) weight array."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > ZERO_CUTOFF]
    return float(-np.sum(p * np.log2(p)))


def von_neumann(matrix) -> float:
    # -sum e log2 e over the spectrum, no normalization applied
    vals = np.linalg.eigvalsh(np.asarray(matrix))
    return shannon(vals)


def spectrum_entropy(vals) -> np.ndarray:
    """Row-wise -sum e log2 e for a stack of spectra, shape (..., n) -> (...)."""
    vals = np.asarray(vals, dtype=float)
    safe = np.where(vals > ZERO_CUTOFF, vals, 1.0)
    return -np.sum(np.where(vals > ZERO_CUTOFF, vals * np.log2(safe), 0.0), axis=-1)


def binary(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return float(-x * np.log2(x) - (1 - x) * np.log2(1 - x))


def mutual_information(joint) -> float:
    # I(A;B) in bits from a 2-d joint table P(a, b)
    joint = np.asarray(joint, dtype=float)
    return shannon(joint.sum(axis=1)) + shannon(joint.sum(axis=0)) - shannon(joint)
