"""Periodic grid substrate: sampled fields, discrete Fourier analysis, Lp norms.

Functions on the plane are modelled by band-limited periodic fields sampled on
an N x N grid over [0,1)^2 with N = 2**n_log2.  The forward transform uses the
e^{-2pi i (x xi + y eta)} sign convention and divides by N^2, so a constant
field maps to a unit delta at frequency (0,0) and ``lp_norm`` is a mean.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

HXF1_MAGIC = b"HXF1"


class GridMismatchError(ValueError):
    """Raised when two grid objects of different resolution are combined."""


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SampledField:
    """Complex samples of a function at the points (i/N, j/N).

    ``samples[i, j]`` is the value at ``x = i/N``, ``y = j/N``; the first index
    is the x coordinate throughout the package.
    """

    n_log2: int
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.n_log2 < 3:
            raise ValueError(f"grid must be at least 8x8 (n_log2 >= 3), got n_log2={self.n_log2}")
        n = 1 << self.n_log2
        arr = np.asarray(self.samples)
        if arr.shape != (n, n):
            raise ValueError(f"samples shape {arr.shape} does not match N={n}")
        object.__setattr__(self, "samples", _frozen_array(arr, np.complex128))

    @property
    def n(self) -> int:
        return 1 << self.n_log2


@dataclass(frozen=True)
class SpectralField:
    """DFT coefficients indexed by integer frequencies in {-N/2 .. N/2-1}^2.

    Coefficients are stored in standard FFT order; ``frequencies`` gives the
    integer frequency along one axis for each array index.
    """

    n_log2: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        if self.n_log2 < 3:
            raise ValueError(f"grid must be at least 8x8 (n_log2 >= 3), got n_log2={self.n_log2}")
        n = 1 << self.n_log2
        arr = np.asarray(self.coeffs)
        if arr.shape != (n, n):
            raise ValueError(f"coeffs shape {arr.shape} does not match N={n}")
        object.__setattr__(self, "coeffs", _frozen_array(arr, np.complex128))

    @property
    def n(self) -> int:
        return 1 << self.n_log2

    def coeff_at(self, xi: int, eta: int) -> complex:
        """Coefficient at integer frequency (xi, eta)."""
        n = self.n
        if not (-n // 2 <= xi < n // 2 and -n // 2 <= eta < n // 2):
            raise ValueError(f"frequency ({xi}, {eta}) outside grid band")
        return complex(self.coeffs[xi % n, eta % n])


def frequencies(n_log2: int) -> np.ndarray:
    """Integer frequencies along one axis, in FFT storage order."""
    n = 1 << n_log2
    return np.rint(np.fft.fftfreq(n) * n).astype(np.int64)


def frequency_grids(n_log2: int) -> tuple[np.ndarray, np.ndarray]:
    """Meshgrid (xi, eta) of integer frequencies in FFT storage order."""
    f = frequencies(n_log2)
    return np.meshgrid(f, f, indexing="ij")


def forward_transform(f: SampledField) -> SpectralField:
    """DFT with the e^{-2pi i(x xi + y eta)} convention, normalized by 1/N^2."""
    n2 = f.n * f.n
    return SpectralField(f.n_log2, np.fft.fft2(f.samples) / n2)


def inverse_transform(F: SpectralField) -> SampledField:
    """Inverse of :func:`forward_transform`."""
    n2 = F.n * F.n
    return SampledField(F.n_log2, np.fft.ifft2(F.coeffs) * n2)


def lp_norm(f: SampledField, p: float) -> float:
    """Normalized lp mean (N^{-2} sum |f|^p)^{1/p} for p in (1, inf)."""
    if not np.isfinite(p) or p <= 1.0:
        raise ValueError(f"p must be finite and > 1, got {p}")
    mags = np.abs(f.samples)
    return float(np.mean(mags**p) ** (1.0 / p))


def apply_fixed_multiplier(f: SampledField, symbol) -> SampledField:
    """Apply an x-independent multiplier: output spectrum = symbol * spectrum.

    ``symbol`` must expose ``n_log2`` and real ``values`` aligned with the FFT
    frequency order (any SymbolGrid-shaped object works).
    """
    if symbol.n_log2 != f.n_log2:
        raise GridMismatchError(
            f"symbol grid n_log2={symbol.n_log2} does not match field n_log2={f.n_log2}"
        )
    spec = forward_transform(f)
    return inverse_transform(SpectralField(f.n_log2, spec.coeffs * symbol.values))


# ---------------------------------------------------------------------------
# Serialization: HXF1 flat binary and CSV interchange.
# ---------------------------------------------------------------------------

def write_hxf1(path, n_log2: int, values: np.ndarray) -> None:
    """Write a complex N x N array: magic 'HXF1', u32-LE n_log2, row-major
    complex values as little-endian float64 (re, im) pairs."""
    n = 1 << n_log2
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.complex128))
    if arr.shape != (n, n):
        raise ValueError(f"array shape {arr.shape} does not match n_log2={n_log2}")
    flat = np.empty((n * n, 2), dtype="<f8")
    flat[:, 0] = arr.real.ravel()
    flat[:, 1] = arr.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(HXF1_MAGIC)
        fh.write(struct.pack("<I", n_log2))
        fh.write(flat.tobytes())


def read_hxf1(path) -> tuple[int, np.ndarray]:
    """Read an HXF1 file; returns (n_log2, complex array)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != HXF1_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {HXF1_MAGIC!r}")
        (n_log2,) = struct.unpack("<I", fh.read(4))
        n = 1 << n_log2
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * n * n:
        raise ValueError(f"payload has {raw.size} doubles, expected {2 * n * n}")
    pairs = raw.reshape(n * n, 2)
    return int(n_log2), (pairs[:, 0] + 1j * pairs[:, 1]).reshape(n, n)


def write_field_csv(path, field: SampledField) -> None:
    """CSV interchange with columns i, j, re, im."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "re", "im"])
        for i in range(field.n):
            row = field.samples[i]
            for j in range(field.n):
                writer.writerow([i, j, repr(float(row[j].real)), repr(float(row[j].imag))])


def read_field_csv(path, n_log2: int) -> SampledField:
    n = 1 << n_log2
    samples = np.zeros((n, n), dtype=np.complex128)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["i", "j", "re", "im"]:
            raise ValueError(f"unexpected CSV header {header}")
        for i_s, j_s, re_s, im_s in reader:
            samples[int(i_s), int(j_s)] = float(re_s) + 1j * float(im_s)
    return SampledField(n_log2, samples)


def random_field(n_log2: int, seed: int, *, real: bool = False, band_limit: int | None = None) -> SampledField:
    """Deterministic pseudo-random field, optionally real and band-limited."""
    rng = np.random.default_rng(seed)
    n = 1 << n_log2
    samples = rng.standard_normal((n, n)) + (0 if real else 1j * rng.standard_normal((n, n)))
    if band_limit is not None:
        spec = np.fft.fft2(samples) / (n * n)
        xi, eta = frequency_grids(n_log2)
        spec = np.where((np.abs(xi) <= band_limit) & (np.abs(eta) <= band_limit), spec, 0.0)
        samples = np.fft.ifft2(spec) * (n * n)
        if real:
            samples = samples.real
    return SampledField(n_log2, samples)
