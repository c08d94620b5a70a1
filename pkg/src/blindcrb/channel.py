"""FIR multichannel representation and its structural operators.

A channel is an ``m x N`` tap array: ``m`` subchannels observing the same
scalar symbol stream through length-``N`` impulse responses. The stacked
coefficient vector ``h`` concatenates the per-tap vectors,
``h = [h(0); h(1); ...; h(N-1)]`` with ``h(i)`` of length ``m``.

Polynomial convention, used everywhere in the package: subchannel ``l`` has
transfer function ``H_l(z) = sum_i coeffs[l, i] z^{-i}`` and roots are
reported in the z-plane (the roots of ``z^{N-1} H_l(z)`` after trimming
exactly-zero leading/trailing taps).

Time ordering: observation and symbol vectors are stacked newest-first, so
the block-Toeplitz channel matrix has ``[H 0]`` as its first block row and
the symbol Hankel matrix reads ``A'[r, c] = A[r + c]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from importlib import resources

import numpy as np

__all__ = [
    "REAL",
    "COMPLEX",
    "Channel",
    "SymbolBurst",
    "ReducibleDecomposition",
    "RootPairing",
    "DecompositionError",
    "block_toeplitz",
    "toeplitz_op",
    "taps_from_stacked",
    "symbol_hankel",
    "commutativity_op",
    "realify_channel",
    "poly_roots",
    "poly_from_roots",
    "subchannel_zeros",
    "common_zeros",
    "reducible_decompose",
    "tc_matrix",
    "ti_matrix",
    "conjugate_reciprocal_pairs",
    "channel_from_json",
    "channel_to_json",
    "load_channel",
    "example_channel",
]

REAL = "real"
COMPLEX = "complex"


class DecompositionError(ValueError):
    """Raised when a channel cannot be factored to the requested accuracy."""


def _validate_field(field):
    if field not in (REAL, COMPLEX):
        raise ValueError(f"field must be {REAL!r} or {COMPLEX!r}, got {field!r}")


@dataclass(frozen=True)
class Channel:
    """FIR multichannel impulse response.

    Parameters
    ----------
    coeffs : (m, N) array_like
        Tap matrix; row ``l`` is subchannel ``l``.
    field : {"real", "complex"}
        Scalar field tag. A real channel stores a float array; constructing
        one from coefficients with nonzero imaginary parts is an error.
    name : str
        Free-form label carried through reports and CSV output.
    """

    coeffs: np.ndarray
    field: str = COMPLEX
    name: str = "channel"

    def __post_init__(self):
        _validate_field(self.field)
        C = np.atleast_2d(np.asarray(self.coeffs))
        if C.ndim != 2 or C.shape[0] < 1 or C.shape[1] < 1:
            raise ValueError(f"coeffs must be m x N with m, N >= 1, got shape {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValueError("channel coefficients must be finite")
        if self.field == REAL:
            if np.iscomplexobj(C):
                if np.any(C.imag != 0.0):
                    raise ValueError("real-field channel has nonzero imaginary parts")
                C = C.real
            C = C.astype(np.float64)
        else:
            C = C.astype(np.complex128)
        if not np.any(C != 0.0):
            raise ValueError("channel must not be identically zero")
        C.flags.writeable = False
        object.__setattr__(self, "coeffs", C)

    @property
    def m(self):
        """Number of subchannels."""
        return self.coeffs.shape[0]

    @property
    def N(self):
        """Channel length in taps."""
        return self.coeffs.shape[1]

    @property
    def h(self):
        """Stacked coefficient vector ``[h(0); ...; h(N-1)]`` of length ``m N``."""
        return self.coeffs.T.reshape(-1)

    def toeplitz(self, M):
        """Convolution operator ``T_M(h)`` for a burst of ``M`` output samples."""
        return block_toeplitz(self.coeffs, M)


@dataclass(frozen=True)
class SymbolBurst:
    """Symbol vector paired with the burst length it feeds.

    ``values`` has length ``M + N - 1`` and is stacked newest-first, matching
    the observation stacking of the convolution operator.
    """

    values: np.ndarray
    M: int
    N: int

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size != self.M + self.N - 1:
            raise ValueError(
                f"burst of length M+N-1={self.M + self.N - 1} required, got {v.size}"
            )
        v = v.astype(np.complex128 if np.iscomplexobj(v) else np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def field(self):
        return COMPLEX if np.iscomplexobj(self.values) else REAL


def taps_from_stacked(h, m):
    """Reshape a stacked coefficient vector back into an ``m x N`` tap matrix."""
    h = np.asarray(h)
    if h.size % m:
        raise ValueError(f"stacked length {h.size} is not a multiple of m={m}")
    return h.reshape(-1, m).T


def block_toeplitz(taps, M):
    """Block-Toeplitz convolution operator from an ``m x N`` tap matrix.

    Returns the ``M m x (M + N - 1)`` matrix with ``[H 0]`` as first block
    row and one block-column shift per block row, so that multiplying a
    newest-first symbol vector performs the multichannel convolution.
    """
    taps = np.atleast_2d(np.asarray(taps))
    m, N = taps.shape
    if M < 1:
        raise ValueError("burst length M must be >= 1")
    T = np.zeros((M * m, M + N - 1), dtype=taps.dtype)
    for r in range(M):
        T[r * m:(r + 1) * m, r:r + N] = taps
    return T


def toeplitz_op(ch: Channel, M):
    """``T_M(h)`` for a :class:`Channel` (see :func:`block_toeplitz`)."""
    return ch.toeplitz(M)


def symbol_hankel(A, N, M=None):
    """Hankel matrix ``A'`` with ``A'[r, c] = A[r + c]`` from a symbol vector.

    ``A`` has length ``M + N - 1`` (newest-first); the result is ``M x N``.
    """
    A = np.asarray(A).ravel()
    if M is None:
        M = A.size - N + 1
    if A.size != M + N - 1:
        raise ValueError(f"symbol vector length {A.size} != M+N-1 = {M + N - 1}")
    idx = np.arange(M)[:, None] + np.arange(N)[None, :]
    return A[idx]


def commutativity_op(A, m, N, M=None):
    """Operator ``A_op = A' (x) I_m`` satisfying ``T(h) A = A_op h`` for all h.

    ``A`` may be a :class:`SymbolBurst` or a plain vector of length
    ``M + N - 1``.
    """
    if isinstance(A, SymbolBurst):
        if A.N != N:
            raise ValueError(f"burst was built for N={A.N}, requested N={N}")
        M = A.M
        A = A.values
    Ap = symbol_hankel(A, N, M)
    return np.kron(Ap, np.eye(m))


def realify_channel(ch: Channel) -> Channel:
    """Real representation of a complex channel: subchannel count doubles.

    Each complex subchannel splits into a (Re, Im) pair of real subchannels,
    interleaved in that order, so that driving the result with a real symbol
    stream reproduces the real and imaginary parts of the complex output.
    A channel whose coefficients are already real is returned unchanged up to
    the field tag (no doubling; the imaginary rows would be identically zero).
    """
    C = ch.coeffs
    if ch.field == REAL:
        return ch
    if not np.any(C.imag != 0.0):
        return Channel(C.real, field=REAL, name=ch.name)
    out = np.empty((2 * ch.m, ch.N), dtype=np.float64)
    out[0::2] = C.real
    out[1::2] = C.imag
    return Channel(out, field=REAL, name=f"{ch.name}-real")


def _trimmed(c):
    """Coefficients with exactly-zero leading/trailing taps removed."""
    c = np.asarray(c).ravel()
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return c[:0]
    return c[nz[0]:nz[-1] + 1]


def poly_roots(c):
    """z-plane roots of ``H(z) = sum_i c[i] z^{-i}`` after degree reduction."""
    c = _trimmed(c)
    if c.size <= 1:
        return np.array([], dtype=complex)
    return np.roots(c)


def poly_from_roots(roots, real_field=False):
    """Monic coefficient vector (z^{-1} convention) with the given z-plane roots."""
    c = np.atleast_1d(np.poly(np.asarray(roots, dtype=complex)))
    if real_field:
        if np.abs(c.imag).max(initial=0.0) > 1e-9 * max(1.0, np.abs(c).max()):
            raise ValueError("roots do not describe a real-coefficient polynomial")
        c = c.real
    return c


def subchannel_zeros(ch: Channel):
    """List of z-plane root arrays, one per subchannel."""
    return [poly_roots(ch.coeffs[l]) for l in range(ch.m)]


def common_zeros(ch: Channel, tol=1e-6):
    """Roots shared by every subchannel, clustered at absolute tolerance ``tol``.

    Multiplicities are respected: a double common root must appear (within
    ``tol``) twice in every subchannel. For a monochannel every root is
    common. Returned values average the matched cluster.
    """
    per = subchannel_zeros(ch)
    if ch.m == 1:
        return per[0]
    out = []
    pools = [list(r) for r in per[1:]]
    for r in per[0]:
        cluster = [r]
        ok = True
        for pool in pools:
            if not pool:
                ok = False
                break
            dist = [abs(p - r) for p in pool]
            j = int(np.argmin(dist))
            if dist[j] > tol:
                ok = False
                break
            cluster.append(pool[j])
        if ok:
            for pool in pools:
                dist = [abs(p - r) for p in pool]
                pool.pop(int(np.argmin(dist)))
            out.append(np.mean(cluster))
    return np.array(out, dtype=complex)


@dataclass(frozen=True)
class ReducibleDecomposition:
    """Factorization ``H(z) = H_I(z) H_c(z)`` with monic scalar ``H_c``.

    ``irreducible_part`` has length ``N_I = N - N_c + 1``; ``monic`` holds the
    ``N_c`` coefficients of ``H_c`` (first coefficient 1); ``residual`` is the
    relative error of reconvolving the factors against the original taps.
    """

    irreducible_part: Channel
    monic: np.ndarray
    residual: float
    roots: np.ndarray = dc_field(default_factory=lambda: np.array([], dtype=complex))

    @property
    def N_c(self):
        return len(self.monic)

    @property
    def N_I(self):
        return self.irreducible_part.N

    @property
    def m(self):
        return self.irreducible_part.m


def reducible_decompose(ch: Channel, tol=1e-6, residual_tol=1e-8):
    """Factor a channel into an irreducible part and a monic common factor.

    The common factor is built from the clustered common zeros; the
    irreducible part is recovered by per-subchannel least-squares
    deconvolution, which is far better conditioned than synthetic division
    when roots are clustered. Irreducible channels return ``H_c = [1]``.

    Raises
    ------
    DecompositionError
        If the relative reconvolution residual exceeds ``residual_tol``.
    """
    roots = common_zeros(ch, tol=tol)
    if roots.size == 0:
        one = np.array([1.0]) if ch.field == REAL else np.array([1.0 + 0.0j])
        return ReducibleDecomposition(ch, one, 0.0, roots)
    hc = poly_from_roots(roots, real_field=(ch.field == REAL))
    Nc = hc.size
    NI = ch.N - Nc + 1
    if NI < 1:
        raise DecompositionError("common factor longer than the channel itself")
    conv = block_toeplitz(hc[None, :], NI).T        # (N, N_I) scalar convolution map
    HI = np.empty((ch.m, NI), dtype=ch.coeffs.dtype)
    res2 = 0.0
    for l in range(ch.m):
        sol, _, _, _ = np.linalg.lstsq(conv, ch.coeffs[l], rcond=None)
        HI[l] = sol
        res2 += float(np.linalg.norm(conv @ sol - ch.coeffs[l]) ** 2)
    residual = np.sqrt(res2) / np.linalg.norm(ch.coeffs)
    if residual > residual_tol:
        raise DecompositionError(
            f"deconvolution residual {residual:.3e} exceeds {residual_tol:.3e}"
        )
    part = Channel(HI, field=ch.field, name=f"{ch.name}-irreducible")
    return ReducibleDecomposition(part, hc, float(residual), roots)


def tc_matrix(dec: ReducibleDecomposition):
    """``T_c`` with ``h = T_c h_I``: convolution by the common factor.

    Equals the transposed scalar Toeplitz operator of ``H_c`` Kronecker the
    subchannel identity, an ``m N x m N_I`` matrix.
    """
    T = block_toeplitz(dec.monic[None, :], dec.N_I)  # (N_I, N)
    return np.kron(T.T, np.eye(dec.m))


def ti_matrix(dec: ReducibleDecomposition):
    """``T_I`` with ``h = T_I h_c``: block Toeplitz in the irreducible taps.

    First column is ``[h_I; 0]``; shape ``m N x N_c``.
    """
    m, NI, Nc = dec.m, dec.N_I, dec.N_c
    N = NI + Nc - 1
    hI = dec.irreducible_part.h
    TI = np.zeros((m * N, Nc), dtype=hI.dtype)
    for k in range(Nc):
        TI[k * m:k * m + NI * m, k] = hI
    return TI


@dataclass(frozen=True)
class RootPairing:
    """Conjugate-reciprocal structure of a polynomial's z-plane roots.

    ``pairs`` holds ``(z0, z1)`` with ``z1 ~ 1/conj(z0)``; ``unit_selfpaired``
    holds roots at +1 or -1 (each its own conjugate reciprocal);
    ``unit_circle`` holds other unit-modulus roots (also self-paired, but not
    covered by the simple singularity census); ``unpaired`` is the rest.
    """

    pairs: tuple
    unit_selfpaired: tuple
    unit_circle: tuple
    unpaired: tuple

    @property
    def counts(self):
        return {
            "pairs": len(self.pairs),
            "unit_selfpaired": len(self.unit_selfpaired),
            "unit_circle": len(self.unit_circle),
            "unpaired": len(self.unpaired),
        }


def conjugate_reciprocal_pairs(poly, field=COMPLEX, tol=1e-6):
    """Detect conjugate-reciprocal root pairs ``(z0, 1/z0^*)`` of a polynomial.

    Roots within ``tol`` of +1 or -1 are reported separately (self-paired);
    remaining unit-modulus roots land in ``unit_circle``. Matching is greedy
    over root pairs at absolute tolerance ``tol``.
    """
    _validate_field(field)
    roots = list(poly_roots(poly))
    unit_self, unit_circle, rest = [], [], []
    for r in roots:
        if abs(r - 1.0) <= tol or abs(r + 1.0) <= tol:
            unit_self.append(r)
        elif abs(abs(r) - 1.0) <= tol:
            unit_circle.append(r)
        else:
            rest.append(r)
    pairs = []
    used = [False] * len(rest)
    for i, r in enumerate(rest):
        if used[i]:
            continue
        target = 1.0 / np.conj(r)
        for j in range(i + 1, len(rest)):
            if used[j]:
                continue
            if abs(rest[j] - target) <= tol:
                used[i] = used[j] = True
                pairs.append((r, rest[j]))
                break
    unpaired = [r for i, r in enumerate(rest) if not used[i]]
    return RootPairing(tuple(pairs), tuple(unit_self), tuple(unit_circle), tuple(unpaired))


# ---------------------------------------------------------------------------
# JSON channel format
# ---------------------------------------------------------------------------
#
# {"name": str, "field": "real"|"complex", "m": int, "N": int,
#  "coeffs": [[entry x N] x m]}   entry = number | [re, im]


def _entry_to_scalar(e):
    if isinstance(e, (int, float)):
        return complex(e)
    if isinstance(e, (list, tuple)) and len(e) == 2:
        return complex(e[0], e[1])
    raise ValueError(f"bad coefficient entry {e!r}; expected number or [re, im]")


def channel_from_json(obj) -> Channel:
    """Build a :class:`Channel` from a parsed JSON object (see module docs)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        field = obj["field"]
        m, N = int(obj["m"]), int(obj["N"])
        rows = obj["coeffs"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"channel JSON missing required key: {exc}") from exc
    _validate_field(field)
    if len(rows) != m or any(len(r) != N for r in rows):
        raise ValueError(f"coeffs must be {m} rows of {N} entries")
    C = np.array([[_entry_to_scalar(e) for e in row] for row in rows])
    if field == REAL:
        C = C.real
    return Channel(C, field=field, name=obj.get("name", "channel"))


def channel_to_json(ch: Channel) -> dict:
    """JSON-serializable dict for a channel (inverse of :func:`channel_from_json`)."""
    if ch.field == REAL:
        rows = [[float(x) for x in row] for row in ch.coeffs]
    else:
        rows = [[[float(x.real), float(x.imag)] for x in row] for row in ch.coeffs]
    return {"name": ch.name, "field": ch.field, "m": ch.m, "N": ch.N, "coeffs": rows}


def load_channel(path) -> Channel:
    """Load a channel from a JSON file, with file/line context on parse errors."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    try:
        return channel_from_json(obj)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def example_channel(name) -> Channel:
    """Bundled test channels: ``"random"`` (2x4) and ``"decaying"`` (2x4)."""
    fname = {"random": "chan_random.json", "decaying": "chan_decaying.json"}.get(name)
    if fname is None:
        raise ValueError(f"unknown example channel {name!r}; use 'random' or 'decaying'")
    ref = resources.files("blindcrb.data").joinpath(fname)
    return channel_from_json(json.loads(ref.read_text(encoding="utf-8")))
