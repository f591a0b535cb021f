"""Audio ingestion, synthetic corpus generation, SNR mixing, log-mel features,
augmentation, and windowed example construction."""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
N_FFT = 400
HOP = 160
MEL_BINS = 80
FMIN = 0.0
FMAX = 8000.0
LOG_FLOOR_EPS = 1e-6
LOG_FLOOR = float(np.log(LOG_FLOOR_EPS))
# Frames below this mean-square energy (-60 dBFS) are treated as inactive.
ACTIVE_THRESHOLD = 1e-6
SNR_RANGE_DB = (-40.0, 40.0)
NOISE_KINDS = ("white", "pink", "tonal")


class AudioFormatError(ValueError):
    pass


@dataclass
class AudioClip:
    samples: np.ndarray  # float in [-1, 1]
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.size == 0:
            raise ValueError("empty audio clip")


@dataclass
class LabelTrack:
    labels: np.ndarray  # binary, one per feature frame
    frame_hop: int = HOP

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)


@dataclass
class SpectrogramFeature:
    values: np.ndarray  # (time_frames, mel_bins) log-mel energies
    labels: LabelTrack


def num_frames(n_samples: int, hop: int = HOP) -> int:
    return n_samples // hop + 1


def frame_energies(samples: np.ndarray, hop: int = HOP) -> np.ndarray:
    """Mean-square energy of consecutive hop-sized frames (last may be short)."""
    n = num_frames(len(samples), hop)
    out = np.empty(n)
    for f in range(n):
        seg = samples[f * hop:(f + 1) * hop]
        out[f] = float(np.mean(seg ** 2)) if seg.size else 0.0
    return out


def read_wav(path) -> AudioClip:
    with wave.open(str(path), "rb") as wf:
        if wf.getframerate() != SAMPLE_RATE:
            raise AudioFormatError(
                f"unsupported sample rate {wf.getframerate()} (need {SAMPLE_RATE})")
        if wf.getnchannels() != 1:
            raise AudioFormatError(f"unsupported channel count {wf.getnchannels()}")
        if wf.getsampwidth() != 2:
            raise AudioFormatError(
                f"unsupported sample width {8 * wf.getsampwidth()} bit (need 16)")
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples=samples)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def read_labels(path, frame_hop: int, n_frames: int) -> LabelTrack:
    """Label file: one "start_seconds end_seconds" speech segment per line.
    A frame is speech iff its center time falls inside any segment."""
    segments = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        try:
            start, end = float(parts[0]), float(parts[1])
            if len(parts) != 2 or end < start:
                raise ValueError
        except (ValueError, IndexError):
            raise ValueError(f"{path}: malformed label line {lineno}: {line!r}") from None
        segments.append((start, end))
    centers = (np.arange(n_frames) + 0.5) * frame_hop / SAMPLE_RATE
    labels = np.zeros(n_frames, dtype=np.int8)
    for start, end in segments:
        labels |= ((centers >= start) & (centers < end)).astype(np.int8)
    return LabelTrack(labels=labels, frame_hop=frame_hop)


def synth_speech(rng_seed: int, duration_s: float) -> tuple[AudioClip, LabelTrack]:
    """Speech surrogate: amplitude-modulated harmonic bursts with exact labels."""
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rng = np.random.default_rng(rng_seed)
    n = int(duration_s * SAMPLE_RATE)
    samples = np.zeros(n)
    bursts = []
    t_cursor = rng.uniform(0.1, 0.4)
    while t_cursor < duration_s:
        burst_dur = rng.uniform(0.3, 0.8)
        start, end = t_cursor, min(t_cursor + burst_dur, duration_s)
        if end - start > 0.05:
            bursts.append((start, end))
            i0, i1 = int(start * SAMPLE_RATE), int(end * SAMPLE_RATE)
            t = np.arange(i1 - i0) / SAMPLE_RATE
            f0 = rng.uniform(100.0, 300.0)
            sig = np.zeros_like(t)
            for k in range(1, 9):
                sig += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
            am = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(2.0, 6.0) * t)
            ramp = np.minimum(1.0, np.minimum(t, t[::-1]) / 0.01)
            sig *= am * ramp
            samples[i0:i1] += 0.25 * sig / max(np.max(np.abs(sig)), 1e-9)
        t_cursor = end + rng.uniform(0.2, 0.6)
    clip = AudioClip(samples=np.clip(samples, -1.0, 1.0))
    centers = (np.arange(num_frames(n)) + 0.5) * HOP / SAMPLE_RATE
    labels = np.zeros(len(centers), dtype=np.int8)
    for start, end in bursts:
        labels |= ((centers >= start) & (centers < end)).astype(np.int8)
    return clip, LabelTrack(labels=labels)


def synth_noise(rng_seed: int, duration_s: float, kind: str = "white") -> AudioClip:
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rng = np.random.default_rng(rng_seed)
    n = int(duration_s * SAMPLE_RATE)
    if kind == "white":
        samples = 0.1 * rng.standard_normal(n)
    elif kind == "pink":
        white = rng.standard_normal(n)
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
        spectrum /= np.sqrt(np.maximum(freqs, 1.0))
        samples = np.fft.irfft(spectrum, n=n)
        samples *= 0.1 / max(np.std(samples), 1e-9)
    elif kind == "tonal":
        t = np.arange(n) / SAMPLE_RATE
        samples = 0.02 * rng.standard_normal(n)
        for _ in range(rng.integers(2, 5)):
            samples += 0.05 * np.sin(2 * np.pi * rng.uniform(50.0, 6000.0) * t
                                     + rng.uniform(0, 2 * np.pi))
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return AudioClip(samples=np.clip(samples, -1.0, 1.0))


def pad_balance(speech: AudioClip, labels: LabelTrack,
                rng_seed: int) -> tuple[AudioClip, LabelTrack]:
    """Append silence, split randomly between head and tail, until non-speech
    frames match speech frames. No-op when non-speech already dominates."""
    lab = labels.labels
    n_speech = int(np.sum(lab == 1))
    n_nonspeech = len(lab) - n_speech
    if n_nonspeech >= n_speech:
        return speech, labels
    pad_frames = n_speech - n_nonspeech
    rng = np.random.default_rng(rng_seed)
    head = int(rng.integers(0, pad_frames + 1))
    tail = pad_frames - head
    hop = labels.frame_hop
    samples = np.concatenate([np.zeros(head * hop), speech.samples,
                              np.zeros(tail * hop)])
    new_labels = np.concatenate([np.zeros(head, dtype=np.int8), lab,
                                 np.zeros(tail, dtype=np.int8)])
    return AudioClip(samples=samples), LabelTrack(labels=new_labels, frame_hop=hop)


def mix_at_snr(speech: AudioClip, labels: LabelTrack, noise: AudioClip,
               snr_db: float, rng_seed: int = 0) -> AudioClip:
    """Mix noise into speech at the requested active-region SNR.

    Speech power is measured over speech-labeled frames; noise power over its
    frames above the activity threshold. Noise is tiled/cropped to length.
    """
    if not SNR_RANGE_DB[0] <= snr_db <= SNR_RANGE_DB[1]:
        raise ValueError(f"snr_db {snr_db} outside supported range {SNR_RANGE_DB}")
    n = len(speech.samples)
    noise_samples = noise.samples
    if len(noise_samples) < n:
        reps = -(-n // len(noise_samples))
        noise_samples = np.tile(noise_samples, reps)
    if len(noise_samples) > n:
        rng = np.random.default_rng(rng_seed)
        off = int(rng.integers(0, len(noise_samples) - n + 1))
        noise_samples = noise_samples[off:off + n]
    speech_frames = labels.labels == 1
    energies = frame_energies(speech.samples, labels.frame_hop)
    k = min(len(energies), len(speech_frames))
    p_s = float(np.mean(energies[:k][speech_frames[:k]])) if speech_frames[:k].any() else 0.0
    noise_energies = frame_energies(noise_samples, labels.frame_hop)
    active = noise_energies > ACTIVE_THRESHOLD
    p_n = float(np.mean(noise_energies[active])) if active.any() else 0.0
    if p_s <= 0.0 or p_n <= 0.0:
        raise ValueError("silent source: cannot set SNR")
    gain = np.sqrt(p_s / (p_n * 10.0 ** (snr_db / 10.0)))
    mixed = speech.samples + gain * noise_samples
    clipped = int(np.sum(np.abs(mixed) > 1.0))
    if clipped:
        import logging
        logging.getLogger(__name__).info("mix clipped %d samples", clipped)
    return AudioClip(samples=np.clip(mixed, -1.0, 1.0))


def _mel_filterbank(n_fft: int, mel_bins: int, fmin: float, fmax: float) -> np.ndarray:
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    mel_points = np.linspace(to_mel(fmin), to_mel(fmax), mel_bins + 2)
    hz_points = from_mel(mel_points)
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / SAMPLE_RATE)
    fb = np.zeros((mel_bins, len(fft_freqs)))
    for m in range(mel_bins):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (fft_freqs - lo) / max(center - lo, 1e-9)
        down = (hi - fft_freqs) / max(hi - center, 1e-9)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_center_freqs(mel_bins: int = MEL_BINS, fmin: float = FMIN,
                     fmax: float = FMAX) -> np.ndarray:
    mel = 2595.0 * np.log10(1.0 + np.array([fmin, fmax]) / 700.0)
    pts = np.linspace(mel[0], mel[1], mel_bins + 2)
    return 700.0 * (10.0 ** (pts[1:-1] / 2595.0) - 1.0)


def logmel(clip: AudioClip, n_fft: int = N_FFT, hop: int = HOP,
           mel_bins: int = MEL_BINS, fmin: float = FMIN, fmax: float = FMAX,
           labels: LabelTrack | None = None) -> SpectrogramFeature:
    samples = clip.samples
    if len(samples) < n_fft:
        raise ValueError(f"clip too short: {len(samples)} < {n_fft} samples")
    frames = num_frames(len(samples), hop)
    padded = np.pad(samples, n_fft // 2, mode="reflect")
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    idx = np.arange(n_fft)[None, :] + hop * np.arange(frames)[:, None]
    power = np.abs(np.fft.rfft(padded[idx] * window[None, :], axis=1)) ** 2
    mel = power @ _mel_filterbank(n_fft, mel_bins, fmin, fmax).T
    values = np.log(mel + LOG_FLOOR_EPS)
    if labels is None:
        labels = LabelTrack(labels=np.zeros(frames, dtype=np.int8), frame_hop=hop)
    if len(labels.labels) != frames:
        raise ValueError(f"label length {len(labels.labels)} != frame count {frames}")
    return SpectrogramFeature(values=values, labels=labels)


def augment(spec: SpectrogramFeature, rng_seed: int,
            max_mask_bins: int = 10) -> SpectrogramFeature:
    """Random volume scaling (uniform log offset) plus one frequency mask."""
    rng = np.random.default_rng(rng_seed)
    delta = rng.uniform(np.log(0.25), np.log(4.0))
    values = spec.values + delta
    width = int(rng.integers(0, max_mask_bins + 1))
    if width > 0:
        start = int(rng.integers(0, spec.values.shape[1] - width + 1))
        values[:, start:start + width] = LOG_FLOOR
    return SpectrogramFeature(values=values, labels=spec.labels)


def make_examples(spec: SpectrogramFeature, window_frames: int,
                  target_offsets) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Tile non-overlapping windows; per-row labels are the clip labels at the
    row's absolute time plus each target offset, masked when out of range.

    Returns (inputs (N,1,W,F), labels (N,W,J), masks (N,W,J), starts (N,)).
    """
    offsets = np.asarray(target_offsets, dtype=int)
    values = spec.values
    clip_labels = spec.labels.labels
    t_total, n_mel = values.shape
    n_windows = -(-t_total // window_frames)
    padded = np.full((n_windows * window_frames, n_mel), LOG_FLOOR)
    padded[:t_total] = values
    inputs = padded.reshape(n_windows, 1, window_frames, n_mel).astype(np.float32)
    starts = np.arange(n_windows) * window_frames
    t_abs = starts[:, None, None] + np.arange(window_frames)[None, :, None]
    targets = t_abs + offsets[None, None, :]
    in_range = (targets >= 0) & (targets < t_total) & (t_abs < t_total)
    labels = np.zeros((n_windows, window_frames, len(offsets)), dtype=np.float32)
    labels[in_range] = clip_labels[targets[in_range]]
    return inputs, labels, in_range.astype(np.float32), starts


def split_dataset(items, seed: int, ratios=(8, 1, 1)) -> tuple[list, list, list]:
    items = list(items)
    if len(items) < 3:
        raise ValueError("need at least 3 items to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(items))
    total = sum(ratios)
    n_val = max(1, round(len(items) * ratios[1] / total))
    n_test = max(1, round(len(items) * ratios[2] / total))
    n_train = len(items) - n_val - n_test
    if n_train < 1:
        raise ValueError("split leaves no training items")
    picked = [items[i] for i in order]
    return (picked[:n_train], picked[n_train:n_train + n_val],
            picked[n_train + n_val:])


MANIFEST_NAME = "manifest.json"


def make_corpus(out_dir, n_clips: int, seed: int, snr_low_db: float = -10.0,
                snr_high_db: float = 10.0, duration_s: float = 4.0) -> dict:
    """Generate a synthetic noisy-speech corpus with exact labels.

    Each clip: synthetic speech -> silence-padded to frame balance -> mixed
    with synthetic noise at a uniformly drawn SNR -> log-mel features. Stored
    as one .npz per clip plus a manifest recording seeds, SNRs, and splits.
    """
    if snr_low_db > snr_high_db:
        raise ValueError("snr_low_db must be <= snr_high_db")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = np.random.default_rng(seed)
    records = []
    for i in range(n_clips):
        clip_seed = int(master.integers(0, 2**31))
        noise_seed = int(master.integers(0, 2**31))
        mix_seed = int(master.integers(0, 2**31))
        snr_db = float(master.uniform(snr_low_db, snr_high_db))
        kind = NOISE_KINDS[i % len(NOISE_KINDS)]
        speech, labels = synth_speech(clip_seed, duration_s)
        speech, labels = pad_balance(speech, labels, rng_seed=clip_seed + 1)
        noise = synth_noise(noise_seed, len(speech.samples) / SAMPLE_RATE + 1.0, kind)
        mixed = mix_at_snr(speech, labels, noise, snr_db, rng_seed=mix_seed)
        spec = logmel(mixed, labels=labels)
        fname = f"clip_{i:04d}.npz"
        np.savez(out_dir / fname,
                 features=spec.values.astype(np.float32),
                 labels=spec.labels.labels)
        records.append({"file": fname, "clip_seed": clip_seed,
                        "noise_seed": noise_seed, "mix_seed": mix_seed,
                        "noise_kind": kind, "snr_db": snr_db,
                        "frames": int(spec.values.shape[0])})
    idx = list(range(n_clips))
    if n_clips >= 3:
        train, val, test = split_dataset(idx, seed=seed)
    else:
        train, val, test = idx, idx, idx
    manifest = {
        "format_version": 1,
        "sample_rate": SAMPLE_RATE,
        "mel_bins": MEL_BINS,
        "n_fft": N_FFT,
        "hop": HOP,
        "seed": seed,
        "snr_low_db": snr_low_db,
        "snr_high_db": snr_high_db,
        "duration_s": duration_s,
        "records": records,
        "splits": {"train": train, "val": val, "test": test},
    }
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(corpus_dir) -> dict:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    return json.loads(path.read_text())


def load_clip(corpus_dir, record: dict) -> SpectrogramFeature:
    with np.load(Path(corpus_dir) / record["file"]) as npz:
        values = npz["features"].astype(np.float64)
        labels = npz["labels"]
    return SpectrogramFeature(values=values,
                              labels=LabelTrack(labels=labels))


def load_split(corpus_dir, split: str, window_frames: int, target_offsets,
               augment_seed: int | None = None) -> list[dict]:
    """Per-clip windowed examples for one split.

    Returns a list of dicts with inputs/labels/masks/starts/frame_labels,
    suitable both for training (concatenate) and boosted evaluation (per clip).
    """
    manifest = load_manifest(corpus_dir)
    clips = []
    for j, idx in enumerate(manifest["splits"][split]):
        record = manifest["records"][idx]
        spec = load_clip(corpus_dir, record)
        if augment_seed is not None:
            spec = augment(spec, rng_seed=augment_seed + j)
        inputs, labels, masks, starts = make_examples(
            spec, window_frames, target_offsets)
        clips.append({"inputs": inputs, "labels": labels, "masks": masks,
                      "starts": starts, "frame_labels": spec.labels.labels,
                      "file": record["file"]})
    return clips


def stack_split(clips: list[dict]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    inputs = np.concatenate([c["inputs"] for c in clips])
    labels = np.concatenate([c["labels"] for c in clips])
    masks = np.concatenate([c["masks"] for c in clips])
    return inputs, labels, masks
