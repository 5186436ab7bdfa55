"""Edited text generation: edit scripts, code-switch phrase placement,
name-template filling and lexicon phonemization.

Edit positions are always interpreted against the original token
sequence, never rebased, so scripts with several ops stay order
independent.  Placement policy (where an English phrase or a name goes)
is the caller's job; this module only applies the mechanics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

from .corpus import Entity, Lang, Token

NAME_PLACEHOLDER = "<NAME>"


class EditKind(Enum):
    INSERT = "INSERT"
    REPLACE = "REPLACE"
    DELETE = "DELETE"


@dataclass(frozen=True)
class EditOp:
    """One edit against the original sequence.

    INSERT places new_tokens before `position` (length must be 0);
    REPLACE/DELETE consume `length` tokens starting at `position`.
    """

    kind: EditKind
    position: int
    length: int = 0
    new_tokens: tuple[Token, ...] = ()

    def __post_init__(self):
        if self.position < 0 or self.length < 0:
            raise ValueError("position and length must be non-negative")
        if self.kind is EditKind.INSERT and self.length != 0:
            raise ValueError("INSERT must have length 0")
        if self.kind in (EditKind.INSERT, EditKind.REPLACE) and not self.new_tokens:
            raise ValueError(f"{self.kind.value} requires new_tokens")
        if self.kind is EditKind.DELETE and self.new_tokens:
            raise ValueError("DELETE must have empty new_tokens")
        if self.kind in (EditKind.REPLACE, EditKind.DELETE) and self.length == 0:
            raise ValueError(f"{self.kind.value} must consume at least one token")


@dataclass
class EditScript:
    ops: list[EditOp] = field(default_factory=list)

    def sorted_ops(self) -> list[EditOp]:
        return sorted(self.ops, key=lambda op: (op.position, op.length))

    def validate(self, n_tokens: int) -> None:
        prev_end = -1
        for op in self.sorted_ops():
            if op.position > n_tokens:
                raise ValueError(f"op position {op.position} beyond sequence of {n_tokens} tokens")
            if op.position + op.length > n_tokens:
                raise ValueError(
                    f"op at {op.position} consumes past the end ({op.position + op.length} > {n_tokens})"
                )
            # zero-width inserts may share a boundary; consuming ops may not overlap
            if op.position < prev_end:
                raise ValueError(f"overlapping ops at position {op.position}")
            prev_end = max(prev_end, op.position + op.length)


@dataclass
class Template:
    """Token sequence containing at least one <NAME> placeholder."""

    tokens: list[Token]

    def placeholder_positions(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if t.surface == NAME_PLACEHOLDER]


class Lexicon:
    """Case-folded word -> phone sequence map."""

    def __init__(self, entries: dict[str, list[str]] | None = None):
        self._entries: dict[str, list[str]] = {}
        for word, phones in (entries or {}).items():
            self.add(word, phones)

    def add(self, word: str, phones: list[str]) -> None:
        if not phones:
            raise ValueError(f"lexicon entry {word!r} has an empty phone sequence")
        self._entries[word.casefold()] = list(phones)

    def get(self, word: str) -> list[str] | None:
        return self._entries.get(word.casefold())

    def __contains__(self, word: str) -> bool:
        return word.casefold() in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def phones(self) -> set[str]:
        out: set[str] = set()
        for seq in self._entries.values():
            out.update(seq)
        return out


class Phonemization(NamedTuple):
    phones: list[str]
    fallback: bool


def apply_edit_script(tokens: list[Token], script: EditScript) -> tuple[list[Token], list[tuple[int, int]]]:
    """Apply a script; returns (new tokens, ranges of newly inserted tokens).

    Positions refer to the original sequence.  Tokens outside the edited
    ranges are the same objects as the input's.
    """
    script.validate(len(tokens))
    ops = script.sorted_ops()
    out: list[Token] = []
    new_ranges: list[tuple[int, int]] = []
    cursor = 0
    for op in ops:
        out.extend(tokens[cursor : op.position])
        if op.new_tokens:
            start = len(out)
            out.extend(op.new_tokens)
            new_ranges.append((start, len(out)))
        cursor = op.position + op.length
    out.extend(tokens[cursor:])
    return out, new_ranges


def make_codeswitch_edit(
    tokens: list[Token],
    phrase: list[Token],
    mode: EditKind,
    position: int,
    length: int = 0,
) -> EditScript:
    """Single-op script inserting or replacing an English phrase in a
    Mandarin-majority sentence."""
    if mode not in (EditKind.INSERT, EditKind.REPLACE):
        raise ValueError(f"mode must be INSERT or REPLACE, got {mode}")
    if any(t.lang is not Lang.ENGLISH for t in phrase):
        raise ValueError("code-switch phrase must be all English tokens")
    if position > len(tokens):
        raise ValueError(f"position {position} beyond sequence of {len(tokens)} tokens")
    if mode is EditKind.REPLACE and length == 0:
        raise ValueError("REPLACE must consume at least one token")
    op = EditOp(
        kind=mode,
        position=position,
        length=length if mode is EditKind.REPLACE else 0,
        new_tokens=tuple(phrase),
    )
    script = EditScript(ops=[op])
    script.validate(len(tokens))
    return script


def fill_name_template(template: Template, name: list[Token]) -> tuple[list[Token], list[tuple[int, int]]]:
    """Replace every <NAME> placeholder with the full name.

    Returns the filled sequence and the output index range of each inserted
    name span.
    """
    if not name:
        raise ValueError("name must be non-empty")
    if any(t.entity is not Entity.PERSON_NAME for t in name):
        raise ValueError("name tokens must be tagged PERSON_NAME")
    positions = template.placeholder_positions()
    if not positions:
        raise ValueError(f"template has no {NAME_PLACEHOLDER} placeholder")
    out: list[Token] = []
    ranges: list[tuple[int, int]] = []
    for token in template.tokens:
        if token.surface == NAME_PLACEHOLDER:
            start = len(out)
            out.extend(name)
            ranges.append((start, len(out)))
        else:
            out.append(token)
    return out, ranges


def phonemize(token: Token, lexicon: Lexicon) -> Phonemization:
    """Look a token up in the lexicon; on a miss fall back to one pseudo-phone
    per character and flag it."""
    if not token.surface:
        raise ValueError("cannot phonemize an empty token")
    hit = lexicon.get(token.surface)
    if hit is not None:
        return Phonemization(phones=list(hit), fallback=False)
    return Phonemization(phones=[c.upper() for c in token.surface], fallback=True)


def phonemize_tokens(tokens: list[Token], lexicon: Lexicon) -> list[Phonemization]:
    return [phonemize(t, lexicon) for t in tokens]


def load_lexicon(path) -> Lexicon:
    """Plain text lexicon: `word ph1 ph2 ...`, one entry per line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"lexicon not found: {path}")
    lexicon = Lexicon()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ValueError(f"lexicon line {lineno}: entry {parts[0]!r} has no phones")
            lexicon.add(parts[0], parts[1:])
    return lexicon


def parse_text_tokens(text: str) -> list[Token]:
    """Split free text into tokens for synthesis: CJK ideographs become
    single-character Mandarin tokens, any other whitespace-separated chunk
    becomes one English token (digits and punctuation kept)."""
    tokens: list[Token] = []
    word: list[str] = []

    def flush():
        if word:
            tokens.append(Token("".join(word), Lang.ENGLISH))
            word.clear()

    for ch in text:
        if 0x4E00 <= ord(ch) <= 0x9FFF or 0x3400 <= ord(ch) <= 0x4DBF:
            flush()
            tokens.append(Token(ch, Lang.MANDARIN))
        elif ch.isspace():
            flush()
        else:
            word.append(ch)
    flush()
    return tokens


def load_name_list(path) -> list[list[Token]]:
    """One name per line, tokens space-separated; tokens come back tagged
    ENGLISH / PERSON_NAME."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"name list not found: {path}")
    names: list[list[Token]] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            names.append([Token(p, Lang.ENGLISH, Entity.PERSON_NAME) for p in parts])
    return names


def load_templates(path) -> list[Template]:
    """Template database: manifest-format lines whose token arrays contain
    <NAME> placeholders."""
    from .corpus import parse_manifest_line

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"template database not found: {path}")
    templates: list[Template] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            utt = parse_manifest_line(line, lineno)
            template = Template(tokens=list(utt.tokens))
            if not template.placeholder_positions():
                raise ValueError(
                    f"template line {lineno}: no {NAME_PLACEHOLDER} placeholder in {utt.id!r}"
                )
            templates.append(template)
    return templates
