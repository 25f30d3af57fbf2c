"""Prompt templates: declarative segment patterns wrapping a user history and
a candidate title around a single mask slot, plus the label-to-answer-word
verbalizer.

Twelve templates are built in, one per (kind, perspective) pair with
kind in {discrete, continuous, hybrid} and perspective in {relevance,
emotion, action, utility}. Continuous and hybrid templates carry trainable
virtual tokens ([P_i] before the user text, [Q_j] before the candidate,
[M_k] before the mask; hybrid has no M group). Templates are data: they can
be exported to and loaded from a JSON config, so new ones can be added
without touching code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Union

from .corpus import NCLS_MARKER, CandidateText, UserText

KINDS = ("discrete", "continuous", "hybrid")
PERSPECTIVES = ("relevance", "emotion", "action", "utility")

DEFAULT_N_VIRTUAL = 3


class TemplateError(Exception):
    """A template violates its structural invariants."""


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class UserSlot:
    pass


@dataclass(frozen=True)
class CandidateSlot:
    pass


@dataclass(frozen=True)
class MaskSlot:
    pass


@dataclass(frozen=True)
class SepMarker:
    pass


@dataclass(frozen=True)
class VirtualToken:
    group: str
    index: int

    @property
    def name(self) -> str:
        return f"[{self.group}_{self.index}]"


Segment = Union[Literal, UserSlot, CandidateSlot, MaskSlot, SepMarker, VirtualToken]


@dataclass(frozen=True)
class AnswerSpace:
    w_pos: str
    w_neg: str

    def __post_init__(self):
        if self.w_pos == self.w_neg:
            raise TemplateError(
                f"answer words must differ, got {self.w_pos!r} twice")


def verbalize(label: int, answer_space: AnswerSpace) -> str:
    """Map a click label to its answer word: 1 -> w_pos, 0 -> w_neg."""
    if label == 1:
        return answer_space.w_pos
    if label == 0:
        return answer_space.w_neg
    raise ValueError(f"label must be 0 or 1, got {label!r}")


@dataclass(frozen=True)
class TemplateSpec:
    template_id: str
    kind: str
    perspective: str
    segments: tuple[Segment, ...]
    answer_space: AnswerSpace
    n1: int = 0
    n2: int = 0
    n3: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise TemplateError(f"unknown kind {self.kind!r}")
        if self.perspective not in PERSPECTIVES:
            raise TemplateError(f"unknown perspective {self.perspective!r}")
        if min(self.n1, self.n2, self.n3) < 0:
            raise TemplateError("virtual-token counts must be non-negative")
        n_mask = sum(isinstance(s, MaskSlot) for s in self.segments)
        if n_mask != 1:
            raise TemplateError(
                f"{self.template_id}: expected exactly one mask slot, "
                f"found {n_mask}")
        if sum(isinstance(s, UserSlot) for s in self.segments) != 1:
            raise TemplateError(f"{self.template_id}: expected one user slot")
        if sum(isinstance(s, CandidateSlot) for s in self.segments) != 1:
            raise TemplateError(
                f"{self.template_id}: expected one candidate slot")
        virtuals = [s for s in self.segments if isinstance(s, VirtualToken)]
        keys = [(v.group, v.index) for v in virtuals]
        if len(keys) != len(set(keys)):
            raise TemplateError(
                f"{self.template_id}: duplicate virtual tokens")
        counts = {"P": 0, "Q": 0, "M": 0}
        for v in virtuals:
            if v.group not in counts:
                raise TemplateError(
                    f"{self.template_id}: unknown virtual group {v.group!r}")
            counts[v.group] += 1
        expected = {
            "discrete": (0, 0, 0),
            "continuous": (self.n1, self.n2, self.n3),
            "hybrid": (self.n1, self.n2, 0),
        }[self.kind]
        if (counts["P"], counts["Q"], counts["M"]) != expected:
            raise TemplateError(
                f"{self.template_id}: virtual-token counts "
                f"{(counts['P'], counts['Q'], counts['M'])} do not match "
                f"declared {expected} for kind {self.kind}")

    @property
    def virtual_token_names(self) -> list[str]:
        return [s.name for s in self.segments if isinstance(s, VirtualToken)]

    def signature(self) -> str:
        """Human-readable one-line form with <USER>/<CANDIDATE>/[MASK] markers."""
        parts = []
        for seg in self.segments:
            if isinstance(seg, Literal):
                parts.append(seg.text)
            elif isinstance(seg, UserSlot):
                parts.append("<USER>")
            elif isinstance(seg, CandidateSlot):
                parts.append("<CANDIDATE>")
            elif isinstance(seg, MaskSlot):
                parts.append("[MASK]")
            elif isinstance(seg, SepMarker):
                parts.append("[SEP]")
            elif isinstance(seg, VirtualToken):
                parts.append(seg.name)
        return " ".join(parts)


@dataclass(frozen=True)
class RenderedChunk:
    """One resolved piece of a prompt sequence.

    kind: "words" | "marker" | "virtual" | "sep" | "mask".
    ``history_index`` is set on chunks coming from the user history (the
    per-click [NCLS] marker and title span), which makes them droppable
    during length truncation; everything else must survive encoding.
    """

    kind: str
    words: tuple[str, ...] = ()
    name: str = ""
    history_index: int | None = None


@dataclass(frozen=True)
class PromptSequence:
    chunks: tuple[RenderedChunk, ...]
    mask_index: int

    def text(self) -> str:
        """Plain-text form (virtual tokens and markers by name)."""
        parts = []
        for chunk in self.chunks:
            if chunk.kind == "words":
                parts.extend(chunk.words)
            elif chunk.kind == "mask":
                parts.append("[MASK]")
            elif chunk.kind == "sep":
                parts.append("[SEP]")
            else:
                parts.append(chunk.name)
        return " ".join(parts)


def render(template: TemplateSpec, user: UserText,
           candidate: CandidateText) -> PromptSequence:
    """Substitute the user and candidate slots; no reordering, nothing else
    touched. Deterministic and injective for a fixed template."""
    template.validate()
    chunks: list[RenderedChunk] = []
    mask_index = -1
    for seg in template.segments:
        if isinstance(seg, Literal):
            chunks.append(RenderedChunk(kind="words",
                                        words=tuple(seg.text.split())))
        elif isinstance(seg, UserSlot):
            for i, span in enumerate(user.title_spans):
                chunks.append(RenderedChunk(kind="marker", name=NCLS_MARKER,
                                            history_index=i))
                chunks.append(RenderedChunk(kind="words", words=span,
                                            history_index=i))
        elif isinstance(seg, CandidateSlot):
            chunks.append(RenderedChunk(kind="words", words=candidate.words))
        elif isinstance(seg, MaskSlot):
            mask_index = len(chunks)
            chunks.append(RenderedChunk(kind="mask"))
        elif isinstance(seg, SepMarker):
            chunks.append(RenderedChunk(kind="sep"))
        elif isinstance(seg, VirtualToken):
            chunks.append(RenderedChunk(kind="virtual", name=seg.name))
    return PromptSequence(chunks=tuple(chunks), mask_index=mask_index)


def _virtuals(group: str, n: int) -> list[Segment]:
    return [VirtualToken(group, i) for i in range(1, n + 1)]


ANSWER_WORDS = {
    "relevance": AnswerSpace("related", "unrelated"),
    "emotion": AnswerSpace("interesting", "boring"),
    "action": AnswerSpace("yes", "no"),
    "utility": AnswerSpace("good", "bad"),
}


def _discrete_segments(perspective: str) -> list[Segment]:
    if perspective == "relevance":
        return [CandidateSlot(), Literal("is"), MaskSlot(), Literal("to"),
                UserSlot()]
    if perspective == "emotion":
        return [Literal("The user feels"), MaskSlot(), Literal("about"),
                CandidateSlot(),
                Literal("according to his area of interest"), UserSlot()]
    if perspective == "action":
        return [Literal("User:"), UserSlot(), SepMarker(), Literal("News:"),
                CandidateSlot(), SepMarker(),
                Literal("Does the user click the news?"), MaskSlot()]
    if perspective == "utility":
        return [Literal("Recommending"), CandidateSlot(),
                Literal("to the user is a"), MaskSlot(),
                Literal("choice according to"), UserSlot()]
    raise TemplateError(f"unknown perspective {perspective!r}")


def _continuous_segments(perspective: str, n: int) -> list[Segment]:
    p, q, m = _virtuals("P", n), _virtuals("Q", n), _virtuals("M", n)
    if perspective in ("relevance", "utility"):
        return [*q, CandidateSlot(), *m, MaskSlot(), *p, UserSlot()]
    if perspective == "emotion":
        return [*m, MaskSlot(), *q, CandidateSlot(), *p, UserSlot()]
    if perspective == "action":
        return [*p, UserSlot(), SepMarker(), *q, CandidateSlot(), SepMarker(),
                *m, MaskSlot()]
    raise TemplateError(f"unknown perspective {perspective!r}")


_HYBRID_TAILS = {
    "relevance": ([Literal("This news is"), MaskSlot(),
                   Literal("to the user's area of interest")]),
    "emotion": ([Literal("The user feels"), MaskSlot(),
                 Literal("about the news")]),
    "action": ([Literal("Does the user click the news?"), MaskSlot()]),
    "utility": ([Literal("Recommending the news to the user is a"),
                 MaskSlot(), Literal("choice")]),
}


def _hybrid_segments(perspective: str, n: int) -> list[Segment]:
    p, q = _virtuals("P", n), _virtuals("Q", n)
    return [*p, UserSlot(), SepMarker(), *q, CandidateSlot(), SepMarker(),
            *_HYBRID_TAILS[perspective]]


def make_builtin_template(kind: str, perspective: str,
                          n_virtual: int = DEFAULT_N_VIRTUAL) -> TemplateSpec:
    """Construct one built-in template, with configurable virtual-token count
    for continuous/hybrid kinds (n applies to every group; n=0 gives the
    NullPrompt variant)."""
    answer = ANSWER_WORDS[perspective]
    if kind == "discrete":
        return TemplateSpec(
            template_id=f"discrete-{perspective}", kind=kind,
            perspective=perspective,
            segments=tuple(_discrete_segments(perspective)),
            answer_space=answer)
    if kind == "continuous":
        return TemplateSpec(
            template_id=f"continuous-{perspective}", kind=kind,
            perspective=perspective,
            segments=tuple(_continuous_segments(perspective, n_virtual)),
            answer_space=answer, n1=n_virtual, n2=n_virtual, n3=n_virtual)
    if kind == "hybrid":
        return TemplateSpec(
            template_id=f"hybrid-{perspective}", kind=kind,
            perspective=perspective,
            segments=tuple(_hybrid_segments(perspective, n_virtual)),
            answer_space=answer, n1=n_virtual, n2=n_virtual, n3=0)
    raise TemplateError(f"unknown kind {kind!r}")


def builtin_templates(n_virtual: int = DEFAULT_N_VIRTUAL) -> list[TemplateSpec]:
    """All 12 built-in templates (3 kinds x 4 perspectives)."""
    return [make_builtin_template(kind, perspective, n_virtual)
            for kind in KINDS for perspective in PERSPECTIVES]


def get_template(template_id: str,
                 n_virtual: int = DEFAULT_N_VIRTUAL) -> TemplateSpec:
    """Resolve a built-in template by id like ``discrete-utility``."""
    for spec in builtin_templates(n_virtual):
        if spec.template_id == template_id:
            return spec
    known = ", ".join(t.template_id for t in builtin_templates())
    raise KeyError(f"unknown template {template_id!r}; built-ins: {known}")


def _segment_to_config(seg: Segment) -> dict:
    if isinstance(seg, Literal):
        return {"type": "literal", "text": seg.text}
    if isinstance(seg, UserSlot):
        return {"type": "user"}
    if isinstance(seg, CandidateSlot):
        return {"type": "candidate"}
    if isinstance(seg, MaskSlot):
        return {"type": "mask"}
    if isinstance(seg, SepMarker):
        return {"type": "sep"}
    if isinstance(seg, VirtualToken):
        return {"type": "virtual", "group": seg.group, "index": seg.index}
    raise TemplateError(f"unknown segment {seg!r}")


def _segment_from_config(cfg: dict) -> Segment:
    kind = cfg["type"]
    if kind == "literal":
        return Literal(cfg["text"])
    if kind == "user":
        return UserSlot()
    if kind == "candidate":
        return CandidateSlot()
    if kind == "mask":
        return MaskSlot()
    if kind == "sep":
        return SepMarker()
    if kind == "virtual":
        return VirtualToken(cfg["group"], int(cfg["index"]))
    raise TemplateError(f"unknown segment type {kind!r}")


def template_to_config(spec: TemplateSpec) -> dict:
    return {
        "template_id": spec.template_id,
        "kind": spec.kind,
        "perspective": spec.perspective,
        "answer": {"pos": spec.answer_space.w_pos,
                   "neg": spec.answer_space.w_neg},
        "n1": spec.n1, "n2": spec.n2, "n3": spec.n3,
        "segments": [_segment_to_config(s) for s in spec.segments],
    }


def template_from_config(cfg: dict) -> TemplateSpec:
    return TemplateSpec(
        template_id=cfg["template_id"],
        kind=cfg["kind"],
        perspective=cfg["perspective"],
        segments=tuple(_segment_from_config(s) for s in cfg["segments"]),
        answer_space=AnswerSpace(cfg["answer"]["pos"], cfg["answer"]["neg"]),
        n1=int(cfg.get("n1", 0)), n2=int(cfg.get("n2", 0)),
        n3=int(cfg.get("n3", 0)),
    )


def save_templates(specs: Iterable[TemplateSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([template_to_config(s) for s in specs], fh, indent=2,
                  sort_keys=True)
        fh.write("\n")


def load_templates(path) -> list[TemplateSpec]:
    with open(path, encoding="utf-8") as fh:
        return [template_from_config(cfg) for cfg in json.load(fh)]
