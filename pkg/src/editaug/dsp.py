"""Log-mel feature extraction, Griffin-Lim vocoding, and mel/WAV file I/O.

Front end: 80-dim log-mel filterbanks at 16 kHz with 50 ms frames, 12.5 ms
hop, periodic Hann window, 1024-point FFT, HTK mel scale, power spectrum,
natural log floored at 1e-10.  No dithering, no pre-emphasis, no frame
centering: frame t covers samples [t*hop, t*hop + frame_size) and trailing
partial frames are dropped, so

    n_frames == 1 + (n_samples - frame_size) // hop

holds exactly for every input.  The vocoder estimates a linear spectrogram
from the mel via a non-negative pseudo-inverse of the filterbank and runs
classic Griffin-Lim phase recovery (zero phase init, no momentum).
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MEL_MAGIC = b"MELF"


@dataclass(frozen=True)
class FbankConfig:
    """Filterbank front-end parameters. Defaults are the toolkit contract."""

    sample_rate: int = 16000
    n_mels: int = 80
    frame_size: int = 800
    hop: int = 200
    window: str = "hann"
    n_fft: int = 1024
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    def validate(self) -> None:
        if self.frame_size > self.n_fft:
            raise ValueError(f"frame_size {self.frame_size} exceeds n_fft {self.n_fft}")
        if self.hop > self.frame_size:
            raise ValueError(f"hop {self.hop} exceeds frame_size {self.frame_size}")
        if self.window != "hann":
            raise ValueError(f"only the Hann window is supported, got {self.window!r}")
        if self.fmax > self.sample_rate / 2:
            raise ValueError(f"fmax {self.fmax} exceeds Nyquist {self.sample_rate / 2}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


@dataclass
class MelSpectrogram:
    """Frames x n_mels matrix of natural-log mel energies at the 12.5 ms hop."""

    data: np.ndarray
    normalized: bool = False
    hop_ms: float = 12.5

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "MelSpectrogram":
        return MelSpectrogram(self.data.copy(), self.normalized, self.hop_ms)


@dataclass
class Waveform:
    """Mono audio in [-1, 1] at 16 kHz."""

    samples: np.ndarray
    sample_rate: int = 16000


@dataclass
class MelStats:
    """Per-bin mean/stddev used for feature normalization."""

    mean: np.ndarray
    std: np.ndarray


def hz_to_mel(hz):
    """HTK mel scale: mel(f) = 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@lru_cache(maxsize=8)
def _filterbank_cached(config: FbankConfig) -> np.ndarray:
    config.validate()
    n_bins = config.n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * config.sample_rate / config.n_fft
    bin_mel = hz_to_mel(bin_hz)
    mel_pts = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)

    weights = np.zeros((config.n_mels, n_bins))
    for i in range(config.n_mels):
        left, center, right = mel_pts[i], mel_pts[i + 1], mel_pts[i + 2]
        rising = (bin_mel - left) / (center - left)
        falling = (right - bin_mel) / (right - center)
        weights[i] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def build_mel_filterbank(config: FbankConfig) -> np.ndarray:
    """Triangular mel filters, [n_mels x (n_fft//2 + 1)].

    Filter corners are equally spaced on the HTK mel scale between fmin and
    fmax; responses are triangular in the mel domain, un-normalized.
    """
    return _filterbank_cached(config).copy()


@lru_cache(maxsize=8)
def _filterbank_pinv_cached(config: FbankConfig) -> np.ndarray:
    return np.linalg.pinv(_filterbank_cached(config))


def frame_count(n_samples: int, config: FbankConfig = FbankConfig()) -> int:
    if n_samples < config.frame_size:
        raise ValueError(f"waveform of {n_samples} samples shorter than one frame ({config.frame_size})")
    return 1 + (n_samples - config.frame_size) // config.hop


def _frame_signal(samples: np.ndarray, config: FbankConfig) -> np.ndarray:
    n = frame_count(len(samples), config)
    frames = np.lib.stride_tricks.sliding_window_view(samples, config.frame_size)[:: config.hop]
    return frames[:n]


def _stft(samples: np.ndarray, config: FbankConfig) -> np.ndarray:
    frames = _frame_signal(samples, config) * hann_window(config.frame_size)
    return np.fft.rfft(frames, n=config.n_fft, axis=1)


def extract_fbank(wave_in: Waveform, config: FbankConfig = FbankConfig()) -> MelSpectrogram:
    """Extract raw (unnormalized) log-mel features from a waveform.

    Deterministic: identical input yields bit-identical output.
    """
    config.validate()
    if wave_in.sample_rate != config.sample_rate:
        raise ValueError(f"expected {config.sample_rate} Hz input, got {wave_in.sample_rate}")
    samples = np.asarray(wave_in.samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("waveform must be mono")
    spec = _stft(samples, config)
    power = spec.real**2 + spec.imag**2
    mel_energy = power @ _filterbank_cached(config).T
    data = np.log(np.maximum(mel_energy, config.log_floor))
    return MelSpectrogram(data=data, normalized=False)


def _istft(spec: np.ndarray, config: FbankConfig) -> np.ndarray:
    """Least-squares inverse STFT (weighted overlap-add, Hann synthesis).

    The window-sum-square denominator is floored at a fraction of its peak
    so the handful of edge samples with near-zero window coverage cannot
    blow up when the spectrogram is inconsistent.
    """
    n_frames = spec.shape[0]
    window = hann_window(config.frame_size)
    frames = np.fft.irfft(spec, n=config.n_fft, axis=1)[:, : config.frame_size]
    n_out = (n_frames - 1) * config.hop + config.frame_size
    num = np.zeros(n_out)
    den = np.zeros(n_out)
    for t in range(n_frames):
        off = t * config.hop
        num[off : off + config.frame_size] += window * frames[t]
        den[off : off + config.frame_size] += window * window
    floor = 1e-3 * den.max()
    if floor == 0.0:
        return num
    return num / np.maximum(den, floor)


def mel_to_linear_spectrogram(mel: MelSpectrogram, config: FbankConfig) -> np.ndarray:
    """Estimate the linear spectrogram from raw log-mel energies.

    The filterbank pseudo-inverse is applied to the mel energies and clipped
    at 0 so energies stay non-negative.  The result keeps the pseudo-inverse
    estimate's spectral shape (power-domain sharpness, which phase recovery
    needs to lock onto tonal peaks) and is globally rescaled to
    magnitude-compatible units.  This is exactly the spectrogram that
    griffin_lim_vocode enforces.
    """
    if mel.normalized:
        raise ValueError("mel must be denormalized before inversion")
    energy = np.exp(mel.data)
    power = np.maximum(energy @ _filterbank_pinv_cached(config).T, 0.0)
    peak = power.max()
    if peak == 0.0:
        return power
    return power * (np.sqrt(peak) / peak)


def griffin_lim_vocode(
    mel: MelSpectrogram,
    config: FbankConfig = FbankConfig(),
    iterations: int = 60,
    callback=None,
) -> Waveform:
    """Reconstruct a waveform from a raw mel spectrogram via Griffin-Lim.

    Phase starts at zero and `iterations` analysis/synthesis rounds enforce
    the target spectrogram.  `callback(iteration, samples)`, when given, is
    invoked with the current estimate after every synthesis (iteration 0 is
    the zero-phase reconstruction).  Output length is
    (n_frames - 1) * hop + frame_size samples; a reconstruction that would
    clip is peak-normalized to 0.99 first.
    """
    if mel.normalized:
        raise ValueError("griffin_lim_vocode requires a raw mel; denormalize first")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    magnitude = mel_to_linear_spectrogram(mel, config)
    samples = _istft(magnitude.astype(np.complex128), config)
    if callback is not None:
        callback(0, samples)
    for it in range(1, iterations + 1):
        spec = _stft(samples, config)
        mag = np.abs(spec)
        phase = np.where(mag > 0, spec / np.maximum(mag, 1e-300), 1.0)
        samples = _istft(magnitude * phase, config)
        if callback is not None:
            callback(it, samples)
    peak = np.max(np.abs(samples), initial=0.0)
    if peak > 1.0:
        samples = samples * (0.99 / peak)
    return Waveform(samples=samples, sample_rate=config.sample_rate)


def compute_mel_stats(mels, std_floor: float = 1e-8) -> MelStats:
    """Per-bin mean/stddev over an iterable of raw mel spectrograms.

    Stddev is floored at `std_floor` so constant bins stay normalizable.
    """
    count = 0
    total = None
    total_sq = None
    for mel in mels:
        if mel.normalized:
            raise ValueError("stats must be computed on raw mels")
        x = mel.data
        if total is None:
            total = x.sum(axis=0)
            total_sq = (x * x).sum(axis=0)
        else:
            total += x.sum(axis=0)
            total_sq += (x * x).sum(axis=0)
        count += x.shape[0]
    if count == 0:
        raise ValueError("no frames to compute stats over")
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    return MelStats(mean=mean, std=np.maximum(np.sqrt(var), std_floor))


def normalize_mel(mel: MelSpectrogram, stats: MelStats) -> MelSpectrogram:
    """Per-bin (x - mean) / std. Input must be raw."""
    if mel.normalized:
        raise ValueError("mel is already normalized")
    if np.any(stats.std <= 0):
        raise ValueError("zero stddev in normalization stats")
    return MelSpectrogram((mel.data - stats.mean) / stats.std, normalized=True)


def denormalize_mel(mel: MelSpectrogram, stats: MelStats) -> MelSpectrogram:
    """Inverse of normalize_mel. Input must be normalized."""
    if not mel.normalized:
        raise ValueError("mel is not normalized")
    if np.any(stats.std <= 0):
        raise ValueError("zero stddev in normalization stats")
    return MelSpectrogram(mel.data * stats.std + stats.mean, normalized=False)


def write_mel(path, mel: MelSpectrogram) -> None:
    """Write the binary mel format: b"MELF", u32 frames, u32 bins, u8
    normalized flag, then little-endian f32 row-major data."""
    data = np.ascontiguousarray(mel.data, dtype="<f4")
    header = struct.pack("<4sIIB", MEL_MAGIC, mel.n_frames, mel.n_bins, int(mel.normalized))
    with open(path, "wb") as f:
        f.write(header)
        f.write(data.tobytes())


def read_mel(path) -> MelSpectrogram:
    with open(path, "rb") as f:
        header = f.read(13)
        if len(header) != 13:
            raise ValueError(f"truncated mel file: {path}")
        magic, frames, bins, flag = struct.unpack("<4sIIB", header)
        if magic != MEL_MAGIC:
            raise ValueError(f"not a mel file (bad magic): {path}")
        payload = f.read(frames * bins * 4)
    if len(payload) != frames * bins * 4:
        raise ValueError(f"truncated mel payload: {path}")
    data = np.frombuffer(payload, dtype="<f4").reshape(frames, bins).astype(np.float64)
    return MelSpectrogram(data=data, normalized=bool(flag))


def read_mel_header(path) -> tuple[int, int, bool]:
    """Return (n_frames, n_bins, normalized) without loading the payload."""
    with open(path, "rb") as f:
        header = f.read(13)
    if len(header) != 13:
        raise ValueError(f"truncated mel file: {path}")
    magic, frames, bins, flag = struct.unpack("<4sIIB", header)
    if magic != MEL_MAGIC:
        raise ValueError(f"not a mel file (bad magic): {path}")
    return frames, bins, bool(flag)


def write_wav(path, wave_out: Waveform) -> None:
    """Write mono 16-bit PCM."""
    pcm = np.round(np.clip(wave_out.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(wave_out.sample_rate)
        wf.writeframes(pcm.tobytes())


def read_wav(path) -> Waveform:
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"expected mono WAV: {path}")
        if wf.getsampwidth() != 2:
            raise ValueError(f"expected 16-bit PCM WAV: {path}")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate=rate)
