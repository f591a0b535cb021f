import numpy as np
import pytest
import torch

from vadsearch import data as vad_data
from vadsearch.arch import discovered_arch

OFFSETS = (-19, -10, -1, 0, 1, 10, 19)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """12-clip synthetic corpus shared across tests."""
    out = tmp_path_factory.mktemp("corpus")
    vad_data.make_corpus(out, n_clips=12, seed=11, duration_s=2.0)
    return out


@pytest.fixture(scope="session")
def small_arch():
    return discovered_arch(base_channels=8)


def balanced_examples(n_examples: int, seed: int, window: int = 64,
                      offsets=OFFSETS):
    """Stacked (inputs, labels, masks) windows from synthetic noisy clips."""
    rng = np.random.default_rng(seed)
    chunks = []
    while sum(len(c[0]) for c in chunks) < n_examples:
        s = int(rng.integers(0, 2**31))
        speech, labels = vad_data.synth_speech(s, 3.0)
        speech, labels = vad_data.pad_balance(speech, labels, s + 1)
        noise = vad_data.synth_noise(s + 2, len(speech.samples) / 16000 + 1, "white")
        mixed = vad_data.mix_at_snr(speech, labels, noise, 5.0, rng_seed=s)
        spec = vad_data.logmel(mixed, labels=labels)
        x, y, m, _ = vad_data.make_examples(spec, window, offsets)
        chunks.append((x, y, m))
    xs = np.concatenate([c[0] for c in chunks])[:n_examples]
    ys = np.concatenate([c[1] for c in chunks])[:n_examples]
    ms = np.concatenate([c[2] for c in chunks])[:n_examples]
    return xs, ys, ms
