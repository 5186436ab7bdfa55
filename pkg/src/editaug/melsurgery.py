"""Frame-level mel editing: masking, stitching, edit regions, splicing.

Masking writes a fixed fill value (0.1 by default) into whole frames of a
mean/variance normalized mel; the fill is only meaningful on the
zero-centered scale, so raw input is rejected.  Stitching replaces frame
regions with generated material of possibly different length and leaves
every untouched frame bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AlignmentEntry, token_frame_span, total_frames
from .dsp import MelSpectrogram, Waveform
from .textgen import EditKind, EditScript

DEFAULT_MASK_FILL = 0.1


@dataclass(frozen=True)
class MaskSpec:
    start_frame: int
    end_frame: int
    fill_value: float = DEFAULT_MASK_FILL

    def __post_init__(self):
        if not (0 <= self.start_frame <= self.end_frame):
            raise ValueError(f"bad mask span [{self.start_frame}, {self.end_frame})")


@dataclass(frozen=True)
class EditRegion:
    """Original-mel frame span to replace; INSERT is start == end.

    new_length is the number of generated frames that will take the
    region's place (0 for pure deletion).
    """

    start_frame: int
    end_frame: int
    new_length: int = 0

    def __post_init__(self):
        if not (0 <= self.start_frame <= self.end_frame):
            raise ValueError(f"bad region span [{self.start_frame}, {self.end_frame})")
        if self.new_length < 0:
            raise ValueError("new_length must be >= 0")

    @property
    def old_length(self) -> int:
        return self.end_frame - self.start_frame


def edit_region_from_alignment(entries: list[AlignmentEntry], script: EditScript) -> list[EditRegion]:
    """Map a token edit script onto mel frame regions via the alignment.

    REPLACE/DELETE of tokens [i, i+len) spans the union of their frames;
    INSERT before token i is a zero-width region at token i's start frame
    (at the utterance end: at the total frame count).  Regions come back
    sorted and disjoint; new_length is left at 0 for the caller to fill.
    """
    n_frames = total_frames(entries)
    max_token = max((e.token_index for e in entries), default=-1)
    regions: list[EditRegion] = []
    for op in script.sorted_ops():
        if op.kind is EditKind.INSERT:
            if op.position > max_token + 1:
                raise ValueError(f"INSERT position {op.position} beyond aligned tokens")
            if op.position == max_token + 1:
                at = n_frames
            else:
                at, _ = token_frame_span(entries, op.position)
            regions.append(EditRegion(start_frame=at, end_frame=at))
        else:
            start, _ = token_frame_span(entries, op.position)
            _, end = token_frame_span(entries, op.position + op.length - 1)
            regions.append(EditRegion(start_frame=start, end_frame=end))
    regions.sort(key=lambda r: (r.start_frame, r.end_frame))
    for a, b in zip(regions, regions[1:]):
        if b.start_frame < a.end_frame:
            raise ValueError(f"edit regions overlap: {a} and {b}")
    return regions


def mask_mel(mel: MelSpectrogram, spec: MaskSpec) -> MelSpectrogram:
    """Set frames [start, end) of every bin to the fill value exactly;
    all other cells are bit-identical to the input."""
    if not mel.normalized:
        raise ValueError("mask_mel requires a normalized mel")
    if spec.end_frame > mel.n_frames:
        raise ValueError(f"mask span [{spec.start_frame}, {spec.end_frame}) exceeds {mel.n_frames} frames")
    out = mel.data.copy()
    out[spec.start_frame : spec.end_frame, :] = spec.fill_value
    return MelSpectrogram(out, normalized=True)


def stitch_mel(
    original: MelSpectrogram,
    regions: list[EditRegion],
    generated: list[MelSpectrogram | np.ndarray],
) -> MelSpectrogram:
    """Replace each region's frames with the corresponding generated block.

    Regions must be sorted and disjoint; generated[i] must have exactly
    regions[i].new_length frames.  Output frame count is
    original - sum(old lengths) + sum(new lengths).
    """
    if len(regions) != len(generated):
        raise ValueError(f"{len(regions)} regions but {len(generated)} generated blocks")
    prev_end = 0
    pieces: list[np.ndarray] = []
    for region, block in zip(regions, generated):
        if region.start_frame < prev_end:
            raise ValueError(f"regions must be sorted and disjoint (bad start {region.start_frame})")
        if region.end_frame > original.n_frames:
            raise ValueError(f"region [{region.start_frame}, {region.end_frame}) exceeds original mel")
        data = block.data if isinstance(block, MelSpectrogram) else np.asarray(block)
        if data.shape[0] != region.new_length:
            raise ValueError(
                f"generated block has {data.shape[0]} frames, region expects {region.new_length}"
            )
        if data.shape[0] and data.shape[1] != original.n_bins:
            raise ValueError(f"generated block has {data.shape[1]} bins, expected {original.n_bins}")
        pieces.append(original.data[prev_end : region.start_frame])
        if data.shape[0]:
            pieces.append(data)
        prev_end = region.end_frame
    pieces.append(original.data[prev_end:])
    out = np.concatenate(pieces, axis=0) if pieces else original.data[:0]
    return MelSpectrogram(out, normalized=original.normalized)


def splice_waveform(original: Waveform, cut: tuple[int, int], insert: Waveform) -> Waveform:
    """original[:cut_start] ++ insert ++ original[cut_end:], bit-exact
    outside the splice. No crossfade: the splicing baseline is deliberately
    naive."""
    start, end = cut
    if not (0 <= start <= end <= len(original.samples)):
        raise ValueError(f"cut ({start}, {end}) out of bounds for {len(original.samples)} samples")
    if insert.sample_rate != original.sample_rate:
        raise ValueError(f"sample-rate mismatch: {insert.sample_rate} != {original.sample_rate}")
    samples = np.concatenate([original.samples[:start], insert.samples, original.samples[end:]])
    return Waveform(samples=samples, sample_rate=original.sample_rate)
