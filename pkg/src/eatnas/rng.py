"""Deterministic randomness plumbing: seed splitting and hash-derived variates.

Everything here is fully specified so results reproduce across processes and
platforms: stream seeds come from 64-bit FNV-1a over label paths, and
hash-derived normals go through a fixed rational approximation of the inverse
normal CDF (relative error below 1.15e-9).
"""

from __future__ import annotations

import math
import random

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 encoding of ``text``."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def mix64(h: int) -> int:
    """Fixed 64-bit avalanche finalizer (the splitmix64 mixing function).

    FNV-1a alone diffuses trailing-byte differences poorly into the high
    bits, so keys differing only near the end would yield correlated
    uniforms; the finalizer gives full avalanche while staying bit-exact
    and platform independent.
    """
    h &= _MASK64
    h ^= h >> 30
    h = (h * 0xBF58476D1CE4E5B9) & _MASK64
    h ^= h >> 27
    h = (h * 0x94D049BB133111EB) & _MASK64
    h ^= h >> 31
    return h


def child_rng(master_seed: int, *path: str) -> random.Random:
    """Derive an independent random stream for a labelled purpose.

    The stream seed is ``mix64(fnv1a64("<master>/<label>/..."))``, so a
    (seed, path) pair names the same stream in every run and every process.
    """
    return random.Random(mix64(fnv1a64("/".join((str(master_seed),) + path))))


def unit_from_key(key: str) -> float:
    """Map a key to a uniform float in (0, 1).

    The key's FNV-1a hash is passed through :func:`mix64` and the top 53
    bits of the result are centered into (0, 1).
    """
    return ((mix64(fnv1a64(key)) >> 11) + 0.5) / float(1 << 53)


def normal_from_key(key: str) -> float:
    """Standard-normal variate derived deterministically from a key."""
    return inverse_normal_cdf(unit_from_key(key))


# Coefficients of the rational approximation (central region uses a quintic
# over a quintic in r = (p - 1/2)^2; the tails use q = sqrt(-2 ln p)).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def inverse_normal_cdf(p: float) -> float:
    """Inverse CDF of the standard normal distribution for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
                / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    q = math.sqrt(-2.0 * math.log(1.0 - p))
    return -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
