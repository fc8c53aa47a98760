"""Random-excitation response simulation and FRF estimation.

The measurement chain mirrors a shaker test: Gaussian white-noise force
records drive the structure, per-channel responses are synthesized through
the frequency response matrix (exact for a linear time-invariant system),
optional measurement noise is added at a prescribed SNR, and the FRF is
recovered from the record ensemble with the H1 cross/auto spectrum
estimator.

Frequency bookkeeping: a grid of ``n_bins`` lines spans ``[0, f_max)`` at
spacing ``f_max / n_bins``. Time records compatible with that grid have
``2 * n_bins`` samples at ``dt = 1 / (2 * f_max)``, so DFT bins land
exactly on the grid lines and the Nyquist bin is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SignalError(ValueError):
    """Contract violation in the signal-processing stage."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TimeSignal:
    """Uniformly sampled real record. ``samples`` in N for forces,
    response units (m/s^2 or strain) otherwise."""
    samples: np.ndarray
    dt: float
    seed: int | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or not _is_pow2(samples.size):
            raise SignalError(
                f"record length must be a power of two, got {samples.shape}")
        if not self.dt > 0:
            raise SignalError(f"dt must be positive, got {self.dt}")

    @property
    def n_samples(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class FrequencyGrid:
    """``n_bins`` uniform lines at k * f_max / n_bins, k = 0..n_bins-1."""
    f_max: float = 1000.0
    n_bins: int = 2048

    def __post_init__(self):
        if not self.f_max > 0:
            raise SignalError(f"f_max must be positive, got {self.f_max}")
        if self.n_bins < 2:
            raise SignalError(f"n_bins must be >= 2, got {self.n_bins}")

    @property
    def df(self) -> float:
        return self.f_max / self.n_bins

    @property
    def freq_bins(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.df

    @property
    def record_length(self) -> int:
        return 2 * self.n_bins

    @property
    def dt(self) -> float:
        return 1.0 / (2.0 * self.f_max)


ACCELERANCE = "accelerance"
STRAIN = "strain"


@dataclass(frozen=True)
class FrfMatrix:
    """Complex FRF samples, channels x frequency bins.

    Channel ordering is fixed: all accelerance channels first, then all
    strain channels. The standard sensor set carries 12 + 4 = 16 channels;
    reduced channel counts are accepted for single-dof studies.
    """
    values: np.ndarray
    freq_bins: np.ndarray
    channel_kinds: tuple[str, ...]
    n_averages: int = 1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        freq = np.asarray(self.freq_bins, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "freq_bins", freq)
        object.__setattr__(self, "channel_kinds", tuple(self.channel_kinds))
        if values.ndim != 2:
            raise SignalError(f"values must be 2-D, got shape {values.shape}")
        n_ch, n_bins = values.shape
        if n_bins < 2:
            raise SignalError(f"need at least 2 frequency bins, got {n_bins}")
        if freq.shape != (n_bins,):
            raise SignalError("freq_bins length must match values columns")
        steps = np.diff(freq)
        if steps.size and (np.any(steps <= 0)
                           or np.max(np.abs(steps - steps[0])) > 1e-12 * max(steps[0], 1.0)):
            raise SignalError("freq_bins must be ascending and uniform")
        if len(self.channel_kinds) != n_ch:
            raise SignalError("channel_kinds length must match channel count")
        bad = [k for k in self.channel_kinds if k not in (ACCELERANCE, STRAIN)]
        if bad:
            raise SignalError(f"unknown channel kinds: {bad}")
        # accelerance block strictly before strain block
        seen_strain = False
        for kind in self.channel_kinds:
            if kind == STRAIN:
                seen_strain = True
            elif seen_strain:
                raise SignalError("accelerance channels must precede strain channels")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    @property
    def df(self) -> float:
        return float(self.freq_bins[1] - self.freq_bins[0])


# ---------------------------------------------------------------------------
# radix-2 FFT
# ---------------------------------------------------------------------------

_BITREV_CACHE: dict[int, np.ndarray] = {}


def _bitrev_indices(n: int) -> np.ndarray:
    idx = _BITREV_CACHE.get(n)
    if idx is None:
        bits = n.bit_length() - 1
        idx = np.zeros(n, dtype=np.intp)
        for b in range(bits):
            idx[1 << b: 1 << (b + 1)] = idx[: 1 << b] + (n >> (b + 1))
        _BITREV_CACHE[n] = idx
    return idx


def _fft_core(x: np.ndarray, sign: float) -> np.ndarray:
    """Iterative decimation-in-time radix-2 transform along the last axis.

    ``sign`` -1 gives the forward DFT, +1 the unscaled inverse. Works on
    any leading batch shape; length must be a power of two.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise SignalError(f"transform length must be a power of two, got {n}")
    out = np.ascontiguousarray(x[..., _bitrev_indices(n)])
    m = 2
    while m <= n:
        h = m // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(h) / m)
        blocks = out.reshape(out.shape[:-1] + (n // m, m))
        odd = blocks[..., h:] * tw
        top = blocks[..., :h] + odd
        blocks[..., h:] = blocks[..., :h] - odd
        blocks[..., :h] = top
        m *= 2
    return out


def fft_forward(signal: TimeSignal) -> np.ndarray:
    """Unnormalized forward DFT of a record: X[k] = sum_j x[j] e^{-2pi i jk/n}."""
    return _fft_core(signal.samples, -1.0)


def fft_inverse(spectrum: np.ndarray, dt: float, seed: int | None = None) -> TimeSignal:
    """Inverse of :func:`fft_forward` (scaled by 1/n). The spectrum must be
    Hermitian-symmetric so the reconstruction is real."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    x = _fft_core(spectrum, +1.0) / spectrum.shape[-1]
    scale = np.max(np.abs(x)) if x.size else 0.0
    if np.max(np.abs(x.imag)) > 1e-9 * max(scale, 1e-300):
        raise SignalError("spectrum is not Hermitian-symmetric; inverse is not real")
    return TimeSignal(samples=x.real, dt=dt, seed=seed)


# ---------------------------------------------------------------------------
# excitation
# ---------------------------------------------------------------------------

def gen_white_noise(n_samples: int, sigma: float, seed: int,
                    dt: float = 1.0 / 2000.0) -> TimeSignal:
    """Zero-mean Gaussian force record with standard deviation ``sigma`` N."""
    if not _is_pow2(n_samples):
        raise SignalError(f"n_samples must be a power of two, got {n_samples}")
    if not sigma > 0:
        raise SignalError(f"sigma must be positive, got {sigma}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return TimeSignal(samples=rng.normal(0.0, sigma, n_samples), dt=dt, seed=seed)


def white_noise_records(n_records: int, n_samples: int, sigma: float,
                        seed: int, dt: float) -> list[TimeSignal]:
    """Independent excitation records; record ``j`` uses seed ``seed + j``.

    Ten records is the working default for ensemble averaging.
    """
    if n_records < 1:
        raise SignalError("need at least one record")
    return [gen_white_noise(n_samples, sigma, seed + j, dt) for j in range(n_records)]


# ---------------------------------------------------------------------------
# response synthesis and FRF estimation
# ---------------------------------------------------------------------------

def _check_grid_compat(frf: FrfMatrix, signal: TimeSignal) -> None:
    n = signal.n_samples
    if n != 2 * frf.n_bins:
        raise SignalError(
            f"record length {n} incompatible with {frf.n_bins} FRF bins "
            f"(need {2 * frf.n_bins} samples)")
    df_record = 1.0 / (n * signal.dt)
    if abs(df_record - frf.df) > 1e-9 * frf.df:
        raise SignalError(
            f"record bin spacing {df_record} Hz does not match FRF spacing {frf.df} Hz")


def simulate_response(frf: FrfMatrix, excitation: TimeSignal,
                      noise_snr_db: float | None = None,
                      noise_seed: int | None = None) -> list[TimeSignal]:
    """Per-channel response records to one excitation record.

    The response spectrum is H(w) * X(w) channel by channel (circular
    convolution, exact on the shared bin grid); the Nyquist line, which is
    outside the FRF grid, is zeroed. With ``noise_snr_db`` set, Gaussian
    measurement noise is added per channel with power = signal power /
    10^(SNR/10).
    """
    _check_grid_compat(frf, excitation)
    n = excitation.n_samples
    nb = frf.n_bins
    spectrum = _fft_core(excitation.samples, -1.0)
    resp = np.zeros((frf.n_channels, n), dtype=np.complex128)
    resp[:, :nb] = frf.values * spectrum[:nb]
    resp[:, 0] = resp[:, 0].real  # keep DC real so time records stay real
    resp[:, nb + 1:] = np.conj(resp[:, 1:nb][:, ::-1])
    y = (_fft_core(resp, +1.0) / n).real

    if noise_snr_db is not None:
        if noise_seed is None:
            raise SignalError("noise_seed is required when noise_snr_db is set")
        power = np.mean(y ** 2, axis=1)
        std = np.sqrt(power / 10.0 ** (noise_snr_db / 10.0))
        rng = np.random.Generator(np.random.PCG64(noise_seed))
        y = y + rng.normal(0.0, 1.0, y.shape) * std[:, None]

    return [TimeSignal(samples=y[c], dt=excitation.dt, seed=noise_seed)
            for c in range(frf.n_channels)]


def estimate_frf(inputs: list[TimeSignal], outputs: list[list[TimeSignal]],
                 channel_kinds: tuple[str, ...] | None = None) -> FrfMatrix:
    """H1 FRF estimate from an ensemble of excitation/response records.

    H1 = sum_r conj(X_r) Y_r / sum_r |X_r|^2 per channel and bin, summed
    over records in their given (fixed) order. Bins 0..n/2-1 are retained.
    Raises SignalError naming the first dead bin if the pooled input
    autospectrum vanishes anywhere on the retained grid.
    """
    if len(inputs) < 1 or len(outputs) != len(inputs):
        raise SignalError("need >= 1 record pair with matching counts")
    n = inputs[0].n_samples
    dt = inputs[0].dt
    n_ch = len(outputs[0])
    for x, ys in zip(inputs, outputs):
        if x.n_samples != n or abs(x.dt - dt) > 1e-15 * dt:
            raise SignalError("all records must share length and dt")
        if len(ys) != n_ch:
            raise SignalError("channel count differs between records")
        for y in ys:
            if y.n_samples != n or abs(y.dt - dt) > 1e-15 * dt:
                raise SignalError("all records must share length and dt")

    nb = n // 2
    # one batched transform per side, then a fixed-order reduction over
    # records keeps the estimate bit-deterministic
    spec_x = _fft_core(np.stack([x.samples for x in inputs]), -1.0)[:, :nb]
    ymat = np.stack([[y.samples for y in ys] for ys in outputs])
    spec_y = _fft_core(ymat, -1.0)[..., :nb]
    s_xx = np.zeros(nb)
    s_xy = np.zeros((n_ch, nb), dtype=np.complex128)
    for r in range(len(inputs)):
        s_xx += (spec_x[r] * np.conj(spec_x[r])).real
        s_xy += np.conj(spec_x[r]) * spec_y[r]

    dead = np.flatnonzero(s_xx == 0.0)
    if dead.size:
        raise SignalError(f"zero input autospectrum at bin {int(dead[0])}")

    if channel_kinds is None:
        if n_ch == 16:
            channel_kinds = (ACCELERANCE,) * 12 + (STRAIN,) * 4
        else:
            channel_kinds = (ACCELERANCE,) * n_ch
    freq = np.arange(nb) / (n * dt)
    return FrfMatrix(values=s_xy / s_xx, freq_bins=freq,
                     channel_kinds=channel_kinds, n_averages=len(inputs))
