"""Logistic-map keystream and the XOR cipher applied to compressed codes.

This is a toy cipher. It is deterministic and reversible, not secure.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .codec import CompressedImage
from .errors import DegenerateKeystreamError, InvalidKeyError

__all__ = [
    "ChaoticKey",
    "Keystream",
    "derive_key",
    "logistic_sequence",
    "xor_keystream",
    "encrypt",
    "decrypt",
    "encrypt_image",
    "decrypt_image",
    "write_key",
    "read_key",
]

X0_MIN = 1e-6
X0_MAX = 1.0 - 1e-6
R_MIN = 3.5699  # exclusive
R_MAX = 4.0
DEFAULT_R = 4.0
DEFAULT_BURN_IN = 1000
PERTURBATION = 1e-6
MAX_ATTEMPTS = 100
FIXED_POINT_TOL = 1e-12


@dataclass(frozen=True)
class ChaoticKey:
    x0: float
    r: float = DEFAULT_R
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if not X0_MIN <= self.x0 <= X0_MAX:
            raise InvalidKeyError(f"x0={self.x0!r} outside [{X0_MIN}, {X0_MAX}]")
        if not R_MIN < self.r <= R_MAX:
            raise InvalidKeyError(f"r={self.r!r} outside ({R_MIN}, {R_MAX}]")
        if self.burn_in < 0:
            raise InvalidKeyError("burn_in cannot be negative")


@dataclass(frozen=True, eq=False)
class Keystream:
    """Orbit values, their byte quantization, and the key that produced them.

    ``key`` differs from the requested key only when degeneracy forced a
    perturbation of ``x0``.
    """

    values: np.ndarray
    bytes: np.ndarray
    key: ChaoticKey


def _perturb(x0: float) -> float:
    x0 += PERTURBATION
    if x0 > X0_MAX:
        x0 -= X0_MAX - X0_MIN
    return x0


def _orbit(x0: float, r: float, burn_in: int, n: int):
    """Iterate the map; None if the orbit collapses or stalls."""
    out = [0.0] * n
    x = x0
    for i in range(burn_in + n):
        nxt = r * x * (1.0 - x)
        if not 0.0 < nxt < 1.0 or abs(nxt - x) < FIXED_POINT_TOL:
            return None
        x = nxt
        if i >= burn_in:
            out[i - burn_in] = x
    return out


def logistic_sequence(key: ChaoticKey, n: int) -> Keystream:
    """``n`` iterates of ``x -> r x (1 - x)`` after ``key.burn_in`` discarded ones.

    An orbit that reaches 0 or 1, or stalls on a fixed point, is restarted
    from ``x0 + 1e-6`` (wrapping inside the admissible range).
    """
    if n < 1:
        raise ValueError("keystream length must be at least 1")
    x0 = key.x0
    for _ in range(MAX_ATTEMPTS):
        values = _orbit(x0, key.r, key.burn_in, n)
        if values is not None:
            arr = np.array(values, dtype=np.float64)
            q = np.minimum(np.floor(arr * 256.0), 255).astype(np.uint8)
            used = key if x0 == key.x0 else dataclasses.replace(key, x0=x0)
            return Keystream(arr, q, used)
        x0 = _perturb(x0)
    raise DegenerateKeystreamError(
        f"logistic orbit from x0={key.x0!r}, r={key.r!r} degenerate after {MAX_ATTEMPTS} attempts"
    )


def derive_key(ci: CompressedImage, r: float = DEFAULT_R,
               burn_in: int = DEFAULT_BURN_IN) -> ChaoticKey:
    """Seed the map from the first raw code coefficient of ``ci``.

    The returned key already carries any perturbation the degeneracy check
    applies for a payload of this size, so it can be stored as is.
    """
    if not R_MIN < r <= R_MAX:
        raise InvalidKeyError(f"r={r!r} outside ({R_MIN}, {R_MAX}]")
    x0 = min(max(float(ci.first_code_raw), X0_MIN), X0_MAX)
    key = ChaoticKey(x0, r, burn_in)
    return logistic_sequence(key, max(len(ci.codes), 1)).key


def xor_keystream(data, key: ChaoticKey) -> bytes:
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if buf.size == 0:
        return b""
    return (buf ^ logistic_sequence(key, buf.size).bytes).tobytes()


def encrypt(ci: CompressedImage, key: ChaoticKey) -> bytes:
    """XOR the code bytes with the keystream; header fields stay in clear."""
    return xor_keystream(ci.codes, key)


def decrypt(e, key: ChaoticKey, n: int) -> bytes:
    if len(e) != n:
        raise ValueError(f"ciphertext has {len(e)} bytes, expected {n}")
    return xor_keystream(e, key)


def encrypt_image(ci: CompressedImage, key: ChaoticKey) -> CompressedImage:
    if ci.encrypted:
        raise ValueError("payload is already encrypted")
    return ci.replace(codes=encrypt(ci, key), encrypted=True)


def decrypt_image(ci: CompressedImage, key: ChaoticKey) -> CompressedImage:
    if not ci.encrypted:
        raise ValueError("payload is not encrypted")
    return ci.replace(codes=decrypt(ci.codes, key, len(ci.codes)), encrypted=False)


# --------------------------------------------------------------------------
# key files
# --------------------------------------------------------------------------


def format_key(key: ChaoticKey) -> str:
    return f"x0={key.x0.hex()}\nr={key.r.hex()}\nburn_in={key.burn_in}\n"


def parse_key(text: str) -> ChaoticKey:
    fields = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        if not sep:
            raise InvalidKeyError(f"key file line {lineno}: expected name=value")
        fields[name.strip()] = value.strip()
    if set(fields) != {"x0", "r", "burn_in"}:
        raise InvalidKeyError(f"key file needs exactly x0, r, burn_in; got {sorted(fields)}")
    try:
        x0 = float.fromhex(fields["x0"])
        r = float.fromhex(fields["r"])
        burn_in = int(fields["burn_in"], 10)
    except ValueError as exc:
        raise InvalidKeyError(f"malformed key file: {exc}") from exc
    return ChaoticKey(x0, r, burn_in)


def write_key(key: ChaoticKey, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_key(key))


def read_key(path) -> ChaoticKey:
    with open(path, encoding="ascii") as fh:
        return parse_key(fh.read())
