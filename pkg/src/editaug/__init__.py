"""editaug: text-based speech editing for ASR data augmentation.

Edits real utterances by masking mel-spectrogram regions and regenerating
them from edited text, builds the splice / tts / edit / edit-feats /
edit-feats+tts augmentation sets, and scores ASR output with CER, WER,
MER and name recall/precision.
"""

__version__ = "0.1.0"
