"""Prompt-to-token-id assembly shared by all masked-LM backends.

A rendered prompt sequence becomes [CLS] ... [SEP] with literals expanded to
word pieces and virtual tokens emitted as their single registered ids. When
the result exceeds the length budget, tokens are dropped from the oldest
(leftmost) history entries first; the mask, candidate span and template
literals always survive. If the sequence cannot fit even with the whole
history dropped, encoding fails rather than silently corrupting the prompt.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..templates import PromptSequence


class EncodingOverflowError(Exception):
    """The prompt cannot fit in the length budget even without any history."""


@dataclass(frozen=True)
class TruncationReport:
    dropped_history_tokens: int = 0

    @property
    def truncated(self) -> bool:
        return self.dropped_history_tokens > 0


@dataclass(frozen=True)
class TokenizedInput:
    ids: tuple[int, ...]
    mask_position: int
    attention_mask: tuple[int, ...]
    truncation: TruncationReport = field(default_factory=TruncationReport)

    def __len__(self) -> int:
        return len(self.ids)


def assemble_token_ids(prompt: PromptSequence, piece_ids, virtual_id,
                       cls_id: int, sep_id: int, mask_id: int,
                       max_len: int) -> TokenizedInput:
    """Turn a rendered prompt into token ids under ``max_len``.

    ``piece_ids(words)`` subword-tokenizes a word span; ``virtual_id(name)``
    resolves a registered virtual-token name (raises KeyError when the name
    was never registered).
    """
    mask_slots = sum(1 for c in prompt.chunks if c.kind == "mask")
    if mask_slots != 1:
        raise ValueError(f"prompt must contain exactly one mask slot, "
                         f"found {mask_slots}")

    # (token id, droppable, is_mask) triples in order, wrapped in cls/sep.
    items: list[tuple[int, bool, bool]] = [(cls_id, False, False)]
    for chunk in prompt.chunks:
        droppable = chunk.history_index is not None
        if chunk.kind == "words":
            for tid in piece_ids(chunk.words):
                items.append((tid, droppable, False))
        elif chunk.kind in ("marker", "virtual"):
            items.append((virtual_id(chunk.name), droppable, False))
        elif chunk.kind == "sep":
            items.append((sep_id, False, False))
        elif chunk.kind == "mask":
            items.append((mask_id, False, True))
        else:
            raise ValueError(f"unknown chunk kind {chunk.kind!r}")
    items.append((sep_id, False, False))

    dropped = 0
    if len(items) > max_len:
        need = len(items) - max_len
        n_droppable = sum(1 for _, d, _ in items if d)
        if need > n_droppable:
            raise EncodingOverflowError(
                f"prompt needs {len(items)} tokens but only "
                f"{n_droppable} history tokens are droppable under "
                f"max_len={max_len}")
        kept: list[tuple[int, bool, bool]] = []
        for item in items:
            if item[1] and dropped < need:
                dropped += 1
                continue
            kept.append(item)
        items = kept

    ids = tuple(tid for tid, _, _ in items)
    mask_position = next(i for i, (_, _, m) in enumerate(items) if m)
    return TokenizedInput(
        ids=ids,
        mask_position=mask_position,
        attention_mask=tuple(1 for _ in ids),
        truncation=TruncationReport(dropped_history_tokens=dropped),
    )
