import json

import numpy as np
import pytest
import torch

from editaug import corpus, dsp, editmodel, textgen

torch.set_num_threads(4)

TOY50_SEED = 5
TOY50_VOCAB = 10
EDITOR_SEED = 3


@pytest.fixture(scope="session")
def toy50(tmp_path_factory):
    """The 50-utterance tone corpus used by the acceptance suite."""
    out = tmp_path_factory.mktemp("toy50")
    manifest = corpus.generate_toy_corpus(TOY50_SEED, 50, TOY50_VOCAB, out)
    return out, manifest


@pytest.fixture(scope="session")
def toy10(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy10")
    manifest = corpus.generate_toy_corpus(11, 10, 8, out)
    return out, manifest


@pytest.fixture(scope="session")
def toy50_alignments(toy50):
    out, manifest = toy50
    return corpus.ingest_alignment(out / "alignment.txt", manifest)


@pytest.fixture(scope="session")
def toy10_alignments(toy10):
    out, manifest = toy10
    return corpus.ingest_alignment(out / "alignment.txt", manifest)


@pytest.fixture(scope="session")
def toy50_lexicon(toy50):
    out, _ = toy50
    return textgen.load_lexicon(out / "lexicon.txt")


@pytest.fixture(scope="session")
def toy10_lexicon(toy10):
    out, _ = toy10
    return textgen.load_lexicon(out / "lexicon.txt")


@pytest.fixture(scope="session")
def trained_editor(toy50, toy50_alignments, toy50_lexicon):
    """The overfit editor for the fidelity criteria: 2000 steps, ~6 min CPU."""
    _, manifest = toy50
    editor, losses = editmodel.train_editor(
        manifest,
        toy50_alignments,
        config=editmodel.EditModelConfig(seed=EDITOR_SEED),
        steps=2000,
        batch_size=8,
        lexicon=toy50_lexicon,
        early_stop_l1=0.04,
        eval_every=100,
    )
    return editor, losses


@pytest.fixture(scope="session")
def small_editor(toy10, toy10_alignments, toy10_lexicon):
    """A quickly trained editor; enough for pipeline plumbing tests."""
    _, manifest = toy10
    editor, _ = editmodel.train_editor(
        manifest,
        toy10_alignments,
        config=editmodel.EditModelConfig(seed=7),
        steps=80,
        batch_size=8,
        lexicon=toy10_lexicon,
    )
    return editor


@pytest.fixture(scope="session")
def toy10_specs(toy10):
    """One REPLACE spec per toy10 utterance, middle token swapped."""
    out, manifest = toy10
    path = out / "specs.jsonl"
    with open(path, "w", encoding="utf-8") as f:
        for utt in manifest.entries:
            pos = len(utt.tokens) // 2
            k = (corpus.toy_surface_to_id(utt.tokens[pos].surface) + 3) % 8
            record = {
                "utt": utt.id,
                "ops": [
                    {
                        "kind": "REPLACE",
                        "position": pos,
                        "length": 1,
                        "tokens": [
                            {
                                "surface": corpus.toy_token_surface(k),
                                "lang": "ENGLISH",
                                "entity": "NONE",
                            }
                        ],
                    }
                ],
            }
            f.write(json.dumps(record) + "\n")
    return path


def independent_tone_bin(k: int, config: dsp.FbankConfig | None = None) -> int:
    """Independent DFT oracle: which mel bin a toy phone's sine peaks in.

    Rebuilds the windowed spectrum with an explicit DFT matrix and the
    closed-form mel triangle weights, without calling extract_fbank.
    """
    config = config or dsp.FbankConfig()
    f = 300.0 + 100.0 * k
    n = np.arange(config.frame_size)
    frame = 0.3 * np.sin(2 * np.pi * f * n / config.sample_rate)
    window = 0.5 - 0.5 * np.cos(2 * np.pi * n / config.frame_size)
    padded = np.zeros(config.n_fft)
    padded[: config.frame_size] = frame * window
    bins = np.arange(config.n_fft // 2 + 1)
    dft = np.exp(-2j * np.pi * np.outer(bins, np.arange(config.n_fft)) / config.n_fft)
    power = np.abs(dft @ padded) ** 2

    def mel(hz):
        return 2595.0 * np.log10(1.0 + hz / 700.0)

    pts = np.linspace(mel(config.fmin), mel(config.fmax), config.n_mels + 2)
    bin_mel = mel(bins * config.sample_rate / config.n_fft)
    energies = np.zeros(config.n_mels)
    for i in range(config.n_mels):
        rising = (bin_mel - pts[i]) / (pts[i + 1] - pts[i])
        falling = (pts[i + 2] - bin_mel) / (pts[i + 2] - pts[i + 1])
        weights = np.maximum(0.0, np.minimum(rising, falling))
        energies[i] = weights @ power
    return int(energies.argmax())
