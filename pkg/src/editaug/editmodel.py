"""The mel editing network and its training/inference machinery.

Architecture (all sizes configurable, defaults sized for CPU toy runs):

* text encoder: phone embeddings + sinusoidal positions through
  bidirectional self-attention blocks;
* duration predictor: 2-layer feed-forward on the text encodings, emitting
  natural-log durations of ``frames + duration_offset``;
* length regulator: repeats each phone encoding ``durations[i]`` times so
  the text stream is frame-aligned;
* speech encoder: the masked mel projected to d_model, with a learned mask
  embedding added on masked frames, plus sinusoidal positions, through
  self-attention blocks;
* joint net: sum of the two frame-aligned streams through self-attention
  blocks and a linear projection back to 80 mel bins.

Training masks one contiguous whole-token span covering 15-50% of the
frames per utterance and minimizes weighted L1 reconstruction (weight
``masked_loss_weight`` inside the mask, 1 outside, averaged over all
cells) plus the MSE of log-durations.  A fixed seed makes initialization,
batch order and mask sampling reproducible.

Checkpoint format (``SpeechEditor.save``): magic ``EDCK``, u32 version (1),
u32 metadata length, metadata JSON (config, phone vocabulary, tensor names
and shapes in order), then the tensors as raw little-endian f32, row-major,
concatenated in metadata order.  The first two tensors are the per-bin
normalization mean and stddev; the rest are the model parameters.
Round-tripping a checkpoint through load/save is bit-exact.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import corpus as corpus_mod
from . import dsp
from .corpus import AlignmentEntry, CorpusManifest, Token
from .melsurgery import DEFAULT_MASK_FILL, EditRegion, edit_region_from_alignment, stitch_mel
from .textgen import EditScript, Lexicon, phonemize

CHECKPOINT_MAGIC = b"EDCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EditModelConfig:
    phone_vocab: int = 0
    d_model: int = 64
    n_text_blocks: int = 2
    n_speech_blocks: int = 2
    n_joint_blocks: int = 2
    n_heads: int = 2
    ff_width: int = 128
    dropout: float = 0.0
    mel_bins: int = 80
    duration_offset: float = 1.0
    masked_loss_weight: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        if self.phone_vocab < 1:
            raise ValueError("phone_vocab must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.mel_bins != 80:
            raise ValueError(f"mel_bins must be 80, got {self.mel_bins}")


@dataclass
class DurationPrediction:
    """Predicted log-durations and their realized integer frame counts."""

    log_durations: np.ndarray
    realized: np.ndarray


def sinusoidal_positions(length: int, d_model: int, dtype=torch.float32) -> torch.Tensor:
    position = torch.arange(length, dtype=dtype).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=dtype) * (-math.log(10000.0) / d_model))
    pe = torch.zeros(length, d_model, dtype=dtype)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div)
    return pe


class TransformerBlock(nn.Module):
    """Pre-LN bidirectional self-attention block."""

    def __init__(self, d_model: int, n_heads: int, ff_width: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = nn.MultiheadAttention(d_model, n_heads, dropout=dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, ff_width),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(ff_width, d_model),
        )
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        x = x + self.drop(attn_out)
        x = x + self.drop(self.ff(self.norm2(x)))
        return x


def length_regulate(encodings: torch.Tensor, durations) -> torch.Tensor:
    """Repeat row i of [P, d] encodings durations[i] times -> [sum, d]."""
    durations = torch.as_tensor(durations, dtype=torch.long)
    if durations.numel() != encodings.shape[0]:
        raise ValueError(f"{durations.numel()} durations for {encodings.shape[0]} encodings")
    if (durations < 1).any():
        raise ValueError("durations must all be >= 1")
    return torch.repeat_interleave(encodings, durations, dim=0)


class EditModel(nn.Module):
    """Text encoder + speech encoder + duration predictor + joint net.

    ``forward`` is the full editing pass: given the edited phone sequence,
    per-phone durations, and the masked (normalized) mel, it returns the
    predicted mel over all frames plus per-phone log-durations.
    """

    def __init__(self, config: EditModelConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        config.validate()
        self.config = config
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            self.phone_embedding = nn.Embedding(config.phone_vocab, config.d_model)
            self.text_blocks = nn.ModuleList(
                TransformerBlock(config.d_model, config.n_heads, config.ff_width, config.dropout)
                for _ in range(config.n_text_blocks)
            )
            self.duration_predictor = nn.Sequential(
                nn.Linear(config.d_model, config.ff_width),
                nn.ReLU(),
                nn.Linear(config.ff_width, 1),
            )
            self.mel_in = nn.Linear(config.mel_bins, config.d_model)
            self.mask_embedding = nn.Parameter(torch.randn(config.d_model) * 0.02)
            self.speech_blocks = nn.ModuleList(
                TransformerBlock(config.d_model, config.n_heads, config.ff_width, config.dropout)
                for _ in range(config.n_speech_blocks)
            )
            self.joint_blocks = nn.ModuleList(
                TransformerBlock(config.d_model, config.n_heads, config.ff_width, config.dropout)
                for _ in range(config.n_joint_blocks)
            )
            self.mel_out = nn.Linear(config.d_model, config.mel_bins)
        if dtype != torch.float32:
            self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.phone_embedding.weight.dtype

    def encode_text(self, phones: torch.Tensor) -> torch.Tensor:
        """[P] phone ids -> [P, d] contextual encodings."""
        if phones.numel() == 0:
            raise ValueError("phone sequence must be non-empty")
        x = self.phone_embedding(phones).unsqueeze(0)
        x = x + sinusoidal_positions(x.shape[1], self.config.d_model, self.dtype)
        for block in self.text_blocks:
            x = block(x)
        return x.squeeze(0)

    def predict_log_durations(self, text_enc: torch.Tensor) -> torch.Tensor:
        return self.duration_predictor(text_enc).squeeze(-1)

    def encode_speech(self, masked_mel: torch.Tensor, mask_spans) -> torch.Tensor:
        x = self.mel_in(masked_mel)
        for start, end in mask_spans:
            x[start:end] = x[start:end] + self.mask_embedding
        x = x.unsqueeze(0)
        x = x + sinusoidal_positions(x.shape[1], self.config.d_model, self.dtype)
        for block in self.speech_blocks:
            x = block(x)
        return x.squeeze(0)

    def forward(self, phones, durations, masked_mel, mask_spans=()):
        phones = torch.as_tensor(phones, dtype=torch.long)
        durations = torch.as_tensor(durations, dtype=torch.long)
        masked_mel = torch.as_tensor(masked_mel).to(self.dtype)
        mask_spans = _as_span_list(mask_spans)
        if phones.numel() == 0:
            raise ValueError("phone sequence must be non-empty")
        total = int(durations.sum())
        if total != masked_mel.shape[0]:
            raise ValueError(
                f"durations sum to {total} but masked mel has {masked_mel.shape[0]} frames"
            )
        text_enc = self.encode_text(phones)
        log_dur = self.predict_log_durations(text_enc)
        frame_text = length_regulate(text_enc, durations)
        speech_enc = self.encode_speech(masked_mel, mask_spans)
        x = (frame_text + speech_enc).unsqueeze(0)
        for block in self.joint_blocks:
            x = block(x)
        return self.mel_out(x.squeeze(0)), log_dur


def _as_span_list(mask_spans) -> list[tuple[int, int]]:
    if mask_spans is None:
        return []
    if isinstance(mask_spans, tuple) and len(mask_spans) == 2 and isinstance(mask_spans[0], int):
        return [mask_spans]
    return [(int(s), int(e)) for s, e in mask_spans]


def realize_durations(log_durations: np.ndarray, offset: float) -> np.ndarray:
    """max(1, round(exp(pred) - offset)) per phone."""
    raw = np.exp(np.asarray(log_durations, dtype=np.float64)) - offset
    return np.maximum(1, np.rint(raw)).astype(np.int64)


def predict_durations(model: EditModel, phone_ids) -> DurationPrediction:
    phones = torch.as_tensor(phone_ids, dtype=torch.long)
    with torch.no_grad():
        log_dur = model.predict_log_durations(model.encode_text(phones))
    log_np = log_dur.detach().cpu().numpy().astype(np.float64)
    return DurationPrediction(
        log_durations=log_np,
        realized=realize_durations(log_np, model.config.duration_offset),
    )


def target_log_durations(durations, offset: float, dtype=torch.float32) -> torch.Tensor:
    return torch.log(torch.as_tensor(durations, dtype=dtype) + offset)


def training_loss(
    pred_mel: torch.Tensor,
    target_mel: torch.Tensor,
    mask_spans,
    pred_logdur: torch.Tensor,
    target_logdur: torch.Tensor,
    masked_weight: float,
    duration_phone_mask=None,
) -> torch.Tensor:
    """Weighted-L1 reconstruction plus log-duration MSE.

    Reconstruction is the mean over all cells of w_f * |pred - target| with
    w_f = masked_weight inside the mask spans and 1 outside, so the masked
    term scales linearly in the weight.  The duration term restricts to
    ``duration_phone_mask`` when given (edited phones at inference time; all
    phones during training).
    """
    if pred_mel.shape != target_mel.shape:
        raise ValueError(f"shape mismatch: {tuple(pred_mel.shape)} vs {tuple(target_mel.shape)}")
    if pred_logdur.shape != target_logdur.shape:
        raise ValueError(
            f"duration shape mismatch: {tuple(pred_logdur.shape)} vs {tuple(target_logdur.shape)}"
        )
    weights = torch.ones(pred_mel.shape[0], dtype=pred_mel.dtype)
    for start, end in _as_span_list(mask_spans):
        weights[start:end] = masked_weight
    recon = (weights.unsqueeze(1) * (pred_mel - target_mel).abs()).mean()
    sq_err = (pred_logdur - target_logdur) ** 2
    if duration_phone_mask is not None:
        sel = torch.as_tensor(duration_phone_mask, dtype=torch.bool)
        sq_err = sq_err[sel]
    dur = sq_err.mean() if sq_err.numel() else torch.zeros((), dtype=pred_mel.dtype)
    return recon + dur


@dataclass
class TrainItem:
    utt_id: str
    phone_ids: np.ndarray
    durations: np.ndarray
    mel: np.ndarray  # normalized, [T, 80]
    token_spans: list[tuple[int, int]]


@dataclass
class TrainState:
    model: EditModel
    optimizer: torch.optim.Optimizer
    step: int
    stats: dsp.MelStats
    rng: np.random.Generator
    config: EditModelConfig


def init_train_state(config: EditModelConfig, stats: dsp.MelStats) -> TrainState:
    model = EditModel(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3, betas=(0.9, 0.98))
    return TrainState(
        model=model,
        optimizer=optimizer,
        step=0,
        stats=stats,
        rng=np.random.default_rng(config.seed),
        config=config,
    )


def sample_mask_span(token_spans, n_frames: int, rng: np.random.Generator) -> tuple[int, int]:
    """One contiguous whole-token span targeting 15-50% frame coverage.

    Grows token by token from a random start until the drawn target
    fraction is reached (rightward first, then leftward), so coverage is
    whole-token granular and always at least one token.
    """
    target = rng.uniform(0.15, 0.5) * n_frames
    i = j = int(rng.integers(0, len(token_spans)))
    while token_spans[j][1] - token_spans[i][0] < target:
        if j + 1 < len(token_spans):
            j += 1
        elif i > 0:
            i -= 1
        else:
            break
    return token_spans[i][0], token_spans[j][1]


def train_step(state: TrainState, batch: list[TrainItem]) -> float:
    """One Adam update over a batch; deterministic for a fixed seed and
    batch order. Raises on non-finite loss."""
    state.optimizer.zero_grad()
    losses = []
    for item in batch:
        start, end = sample_mask_span(item.token_spans, item.mel.shape[0], state.rng)
        target = torch.from_numpy(item.mel).to(torch.float32)
        masked = target.clone()
        masked[start:end] = DEFAULT_MASK_FILL
        pred, log_dur = state.model(item.phone_ids, item.durations, masked, [(start, end)])
        tgt_dur = target_log_durations(item.durations, state.config.duration_offset)
        losses.append(
            training_loss(
                pred, target, [(start, end)], log_dur, tgt_dur, state.config.masked_loss_weight
            )
        )
    loss = torch.stack(losses).mean()
    if not torch.isfinite(loss):
        ids = [item.utt_id for item in batch]
        raise RuntimeError(f"non-finite loss {loss.item()} at step {state.step} on batch {ids}")
    loss.backward()
    state.optimizer.step()
    state.step += 1
    return float(loss.detach())


def build_training_data(
    manifest: CorpusManifest,
    alignments: dict[str, list[AlignmentEntry]],
    fbank: dsp.FbankConfig | None = None,
    lexicon: Lexicon | None = None,
):
    """Assemble (items, stats, phone_vocab) from a manifest and alignments.

    Every manifest entry must be aligned; mels are loaded (or extracted),
    checked against the alignment frame count, and normalized with stats
    computed over the whole corpus.  The phone vocabulary is the sorted
    union of alignment phones and lexicon phones.
    """
    fbank = fbank or dsp.FbankConfig()
    raw_mels: dict[str, dsp.MelSpectrogram] = {}
    for utt in manifest.entries:
        if utt.id not in alignments:
            raise ValueError(f"utterance {utt.id} has no alignment")
        mel = corpus_mod.load_utterance_mel(manifest, utt, fbank)
        aligned = corpus_mod.total_frames(alignments[utt.id])
        if mel.n_frames != aligned:
            raise ValueError(
                f"utterance {utt.id}: mel has {mel.n_frames} frames, alignment covers {aligned}"
            )
        raw_mels[utt.id] = mel
    stats = dsp.compute_mel_stats(raw_mels.values())

    phones: set[str] = {e.phone for entries in alignments.values() for e in entries}
    if lexicon is not None:
        phones |= lexicon.phones()
    phone_vocab = sorted(phones)
    phone_to_id = {p: i for i, p in enumerate(phone_vocab)}

    items = []
    for utt in manifest.entries:
        entries = alignments[utt.id]
        norm = dsp.normalize_mel(raw_mels[utt.id], stats)
        items.append(
            TrainItem(
                utt_id=utt.id,
                phone_ids=np.array([phone_to_id[e.phone] for e in entries], dtype=np.int64),
                durations=np.array([e.end_frame - e.start_frame for e in entries], dtype=np.int64),
                mel=norm.data.astype(np.float32),
                token_spans=corpus_mod.token_spans(entries, len(utt.tokens)),
            )
        )
    return items, stats, phone_vocab


def evaluate_masked_l1(model: EditModel, items: list[TrainItem], seed: int = 0) -> float:
    """Mean L1 over masked frames with a fixed probe masking; the training
    fidelity measure."""
    rng = np.random.default_rng(seed)
    model.eval()
    totals = []
    with torch.no_grad():
        for item in items:
            start, end = sample_mask_span(item.token_spans, item.mel.shape[0], rng)
            target = torch.from_numpy(item.mel).to(torch.float32)
            masked = target.clone()
            masked[start:end] = DEFAULT_MASK_FILL
            pred, _ = model(item.phone_ids, item.durations, masked, [(start, end)])
            totals.append(float((pred[start:end] - target[start:end]).abs().mean()))
    model.train()
    return float(np.mean(totals))


class SpeechEditor:
    """A trained editing model bundled with its normalization stats and
    phone vocabulary; the unit that is checkpointed and used for inference."""

    def __init__(self, config: EditModelConfig, model: EditModel, stats: dsp.MelStats, phone_vocab: list[str]):
        self.config = config
        self.model = model
        self.stats = stats
        self.phone_vocab = list(phone_vocab)
        self.phone_to_id = {p: i for i, p in enumerate(self.phone_vocab)}
        self.model.eval()

    def phone_ids(self, phones: list[str]) -> np.ndarray:
        try:
            return np.array([self.phone_to_id[p] for p in phones], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"phone {exc.args[0]!r} not in the model vocabulary") from exc

    def predict_durations(self, phones: list[str]) -> DurationPrediction:
        return predict_durations(self.model, self.phone_ids(phones))

    def infer_edit(
        self,
        tokens: list[Token],
        mel: dsp.MelSpectrogram,
        alignment: list[AlignmentEntry],
        script: EditScript,
        lexicon: Lexicon,
    ) -> tuple[dsp.MelSpectrogram, list[EditRegion]]:
        """Regenerate the edited regions of one utterance.

        Keeps aligner durations for unedited phones, realizes predicted
        durations for new phones, masks the edit regions at the new length,
        runs the model, and stitches the generated frames back into the
        original (normalized) mel.  Frames outside the regions are the
        original frames bit-exactly.  Returns the edited normalized mel and
        the regions (in original-mel coordinates, with new_length filled).
        """
        if not alignment:
            raise ValueError("infer_edit requires a forced alignment for the utterance")
        if mel.normalized:
            raise ValueError("pass the raw utterance mel; it is normalized internally")
        script.validate(len(tokens))
        norm = dsp.normalize_mel(mel, self.stats)

        ops = script.sorted_ops()
        stream: list[tuple[str, object]] = []
        cursor = 0
        for op in ops:
            stream.extend(("orig", i) for i in range(cursor, op.position))
            stream.append(("new", op))
            cursor = op.position + op.length
        stream.extend(("orig", i) for i in range(cursor, len(tokens)))

        per_token: dict[int, list[AlignmentEntry]] = {}
        for e in alignment:
            per_token.setdefault(e.token_index, []).append(e)

        phones: list[str] = []
        durations: list[int | None] = []
        op_phone_ranges: list[tuple[int, int]] = []
        for kind, payload in stream:
            if kind == "orig":
                for e in per_token[payload]:
                    phones.append(e.phone)
                    durations.append(e.end_frame - e.start_frame)
            else:
                first = len(phones)
                for token in payload.new_tokens:
                    result = phonemize(token, lexicon)
                    phones.extend(result.phones)
                    durations.extend([None] * len(result.phones))
                op_phone_ranges.append((first, len(phones)))

        phone_ids = self.phone_ids(phones)
        prediction = predict_durations(self.model, phone_ids)
        realized = [
            int(prediction.realized[i]) if durations[i] is None else int(durations[i])
            for i in range(len(phones))
        ]

        base_regions = edit_region_from_alignment(alignment, script)
        regions = [
            dataclasses.replace(r, new_length=sum(realized[a:b]))
            for r, (a, b) in zip(base_regions, op_phone_ranges)
        ]

        fill = [
            np.full((r.new_length, norm.n_bins), DEFAULT_MASK_FILL, dtype=norm.data.dtype)
            for r in regions
        ]
        masked = stitch_mel(norm, regions, fill)
        spans = []
        shift = 0
        for r in regions:
            start = r.start_frame + shift
            spans.append((start, start + r.new_length))
            shift += r.new_length - r.old_length

        with torch.no_grad():
            pred, _ = self.model(phone_ids, realized, masked.data.astype(np.float32), spans)
        pred = pred.detach().cpu().numpy().astype(np.float64)
        generated = [pred[s:e] for s, e in spans]
        edited = stitch_mel(norm, regions, generated)
        return edited, regions

    def synth_full(self, phones: list[str]) -> dsp.MelSpectrogram:
        """Full-mask synthesis: every frame masked, all durations predicted.
        Serves the TTS role with the same model."""
        if not phones:
            raise ValueError("phone sequence must be non-empty")
        ids = self.phone_ids(phones)
        prediction = predict_durations(self.model, ids)
        realized = prediction.realized
        total = int(realized.sum())
        masked = np.full((total, self.config.mel_bins), DEFAULT_MASK_FILL, dtype=np.float32)
        with torch.no_grad():
            pred, _ = self.model(ids, realized, masked, [(0, total)])
        return dsp.MelSpectrogram(pred.detach().cpu().numpy().astype(np.float64), normalized=True)

    def save(self, path) -> None:
        tensors: list[tuple[str, np.ndarray]] = [
            ("norm.mean", self.stats.mean.astype("<f4")),
            ("norm.std", self.stats.std.astype("<f4")),
        ]
        for name, param in self.model.state_dict().items():
            tensors.append((name, param.detach().cpu().numpy().astype("<f4")))
        meta = {
            "config": dataclasses.asdict(self.config),
            "phone_vocab": self.phone_vocab,
            "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
        }
        meta_bytes = json.dumps(meta, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as f:
            f.write(struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(meta_bytes)))
            f.write(meta_bytes)
            for _, array in tensors:
                f.write(np.ascontiguousarray(array, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "SpeechEditor":
        path = Path(path)
        with open(path, "rb") as f:
            header = f.read(12)
            if len(header) != 12:
                raise ValueError(f"truncated checkpoint: {path}")
            magic, version, meta_len = struct.unpack("<4sII", header)
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"not an editor checkpoint (bad magic): {path}")
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            meta = json.loads(f.read(meta_len).decode("utf-8"))
            arrays: dict[str, np.ndarray] = {}
            for spec in meta["tensors"]:
                shape = tuple(spec["shape"])
                count = int(np.prod(shape)) if shape else 1
                payload = f.read(count * 4)
                if len(payload) != count * 4:
                    raise ValueError(f"truncated tensor {spec['name']} in {path}")
                arrays[spec["name"]] = np.frombuffer(payload, dtype="<f4").reshape(shape)
        config = EditModelConfig(**meta["config"])
        stats = dsp.MelStats(
            mean=arrays.pop("norm.mean").astype(np.float64),
            std=arrays.pop("norm.std").astype(np.float64),
        )
        model = EditModel(config)
        state = {name: torch.from_numpy(arr.copy()) for name, arr in arrays.items()}
        model.load_state_dict(state)
        return cls(config=config, model=model, stats=stats, phone_vocab=meta["phone_vocab"])


def train_editor(
    manifest: CorpusManifest,
    alignments: dict[str, list[AlignmentEntry]],
    config: EditModelConfig | None = None,
    steps: int = 2000,
    batch_size: int = 8,
    fbank: dsp.FbankConfig | None = None,
    lexicon: Lexicon | None = None,
    early_stop_l1: float | None = None,
    eval_every: int = 100,
    log_fn=None,
) -> tuple[SpeechEditor, list[float]]:
    """Train an editor on an aligned corpus; returns (editor, loss history).

    When ``early_stop_l1`` is set, masked-region L1 on the training data is
    probed every ``eval_every`` steps and training stops once it drops
    below the threshold.  Fully deterministic for a fixed config seed.
    """
    items, stats, phone_vocab = build_training_data(manifest, alignments, fbank, lexicon)
    config = config or EditModelConfig()
    config = dataclasses.replace(config, phone_vocab=len(phone_vocab))
    state = init_train_state(config, stats)
    losses: list[float] = []
    for step in range(steps):
        idx = state.rng.choice(len(items), size=min(batch_size, len(items)), replace=False)
        batch = [items[i] for i in idx]
        losses.append(train_step(state, batch))
        if log_fn is not None and (step + 1) % eval_every == 0:
            log_fn(step + 1, losses[-1])
        if early_stop_l1 is not None and (step + 1) % eval_every == 0:
            if evaluate_masked_l1(state.model, items) < early_stop_l1:
                break
    return SpeechEditor(config, state.model, stats, phone_vocab), losses
