"""Dataset construction: similarity grouping, pair extraction, modification
categories, generation-prompt assembly, response parsing, and the biometric
text filter. No model is called here; responses arrive as raw text.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from . import kernels
from .embedding import as_embedding
from .errors import DataError, MalformedResponse

CATEGORY_DEFINITIONS = {
    "attribute_change": (
        "The same object is present in both images, but the attributes of the "
        "object have changed, not including the quantity or number."
    ),
    "added_object": (
        "An object or objects is present in the second image that is not "
        "present in the first image."
    ),
    "removed_object": (
        "An object or objects is present in the first image that is not "
        "present in the second image."
    ),
    "relationship_change": (
        "If the objects in the images are the same, but the relationship "
        "between the objects has changed."
    ),
    "viewpoint_change": (
        "The viewpoint from which the image is taken has changed between the "
        "two images."
    ),
    "number_change": (
        "The same object is present in both images, but the number of the "
        "object has changed."
    ),
}

CATEGORIES = tuple(CATEGORY_DEFINITIONS)

MAX_MOD_TEXT_WORDS = 20

DEFAULT_BIOMETRIC_KEYWORDS = ("skin", "hair", "gender", "age", "race")

GENERATION_SYSTEM_PROMPT = (
    "You are a language assistant that helps to generate the modification "
    "text between two image captions."
)


@dataclass(frozen=True)
class ImageRecord:
    id: str
    embedding: np.ndarray
    caption: str = ""
    detailed_caption: str = ""

    def __post_init__(self):
        if not self.id:
            raise DataError("image id must be non-empty")
        object.__setattr__(self, "embedding", as_embedding(self.embedding))


@dataclass(frozen=True)
class PairGroup:
    """Ordered member ids; the first member is the seed."""

    member_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "member_ids", tuple(self.member_ids))
        if len(set(self.member_ids)) != len(self.member_ids):
            raise DataError("group members must be unique")

    @property
    def seed_id(self):
        return self.member_ids[0]


@dataclass(frozen=True)
class ModificationRecord:
    ref_id: str
    tgt_id: str
    direction: str  # "forward": image 1 -> image 2; "backward": the reverse
    category: str
    text: str


@dataclass(frozen=True)
class RejectedEntry:
    direction: str
    category: str
    text: str
    reason: str  # "unknown_category" | "overlong_text"


def build_groups(records, low=0.5, high=0.95, interval=0.03, group_size=6):
    """Greedy similarity grouping.

    Seeds are visited in id order; every image joins at most one group per
    run. For a seed, remaining candidates are scanned by descending
    similarity (ties by id) and accepted when their similarity to the seed
    is inside [low, high] and at least `interval` away from every already
    accepted member's similarity. Groups that cannot reach group_size are
    discarded and their members stay available.
    """
    if group_size < 2:
        raise DataError(f"group_size must be >= 2, got {group_size}")
    records = sorted(records, key=lambda r: r.id)
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("record ids must be unique")
    matrix = np.stack([r.embedding for r in records]).astype(np.float64)

    used = np.zeros(len(records), dtype=bool)
    groups = []
    for seed_pos in range(len(records)):
        if used[seed_pos]:
            continue
        free = np.nonzero(~used)[0]
        free = free[free != seed_pos]
        if free.size < group_size - 1:
            continue
        sims = matrix[free] @ matrix[seed_pos]
        # descending similarity, ties by id ascending
        order = np.lexsort((np.asarray([ids[i] for i in free]), -sims))
        sorted_sims = np.ascontiguousarray(sims[order])
        picked = kernels.greedy_spaced_select(
            sorted_sims, float(low), float(high), float(interval), group_size - 1
        )
        if picked.shape[0] < group_size - 1:
            continue
        member_pos = [int(free[order[p]]) for p in picked]
        groups.append(PairGroup(tuple([ids[seed_pos]] + [ids[p] for p in member_pos])))
        used[seed_pos] = True
        for p in member_pos:
            used[p] = True
    return groups


def pairs_from_group(group: PairGroup):
    """Ordered pairs from consecutive members plus seed-to-all, deduplicated.

    A group of six yields exactly nine unique ordered pairs.
    """
    members = group.member_ids
    seen = set()
    pairs = []
    for a, b in zip(members, members[1:]):
        if (a, b) not in seen:
            seen.add((a, b))
            pairs.append((a, b))
    for b in members[1:]:
        pair = (members[0], b)
        if pair not in seen:
            seen.add(pair)
            pairs.append(pair)
    return pairs


def assemble_generation_prompt(
    cap1,
    cap2,
    category_defs=None,
    good_examples=None,
    bad_examples=None,
):
    """Fill the modification-text generation prompt.

    category_defs must cover all six categories. good_examples maps a
    category id to {"caption_1", "caption_2", "forward", "backward"}; its
    example block is emitted under that category. The bad-example block is
    omitted when bad_examples is empty.
    """
    category_defs = dict(CATEGORY_DEFINITIONS if category_defs is None else category_defs)
    missing = set(CATEGORIES) - set(category_defs)
    if missing:
        raise DataError(f"category definitions missing: {sorted(missing)}")
    good_examples = good_examples or {}
    bad_examples = bad_examples or []

    lines = [
        "Generate the modified text for the following pair of image captions:",
        f"Caption 1: {cap1}",
        f"Caption 2: {cap2}",
        "<instruction>",
        "You need to answer in both forward, changes from image 1 to image 2, "
        "and backward, changes from image 2 to image 1, directions. The "
        "definition of each category and examples are as follows:",
    ]
    for i, category in enumerate(CATEGORIES, start=1):
        lines.append(f"{i}. {category}: {category_defs[category]}")
        example = good_examples.get(category)
        if example:
            lines.append("<example>")
            lines.append(f"Caption 1: {example['caption_1']}")
            lines.append(f"Caption 2: {example['caption_2']}")
            lines.append(f"Forward: {example['forward']}")
            lines.append(f"Backward: {example['backward']}")
            lines.append("</example>")
    concise = (
        "The text needs to be concise and details as you can see the images, "
        "not as you are reading the text. You should not add words "
        '"details, specific, description" to the text.'
    )
    if bad_examples:
        lines.append(concise + " Here are some bad examples:")
        lines.append("<example>")
        lines.extend(bad_examples)
        lines.append("</example>")
    else:
        lines.append(concise)
    lines.append("</instruction>")
    lines.append(
        "One category can has multiple changes. For each change, you need to "
        "write one short sentence less than 20 words to describe the change. "
        "You need to answer all changes in the json format. Here is an "
        "example of the correct format:"
    )
    lines.append(
        '{"forward": [{"category": "number_change", "text": "modified text"},...],'
        '"backward": [{"category": "number_change","text": "modified text"},...]}'
    )
    return "\n".join(lines)


def parse_generation_response(raw, ref_id, tgt_id):
    """Parse a {"forward": [...], "backward": [...]} response.

    Returns (records, rejections): entries with an unknown category or more
    than 20 words are rejected individually; structural problems raise
    MalformedResponse.
    """
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"response is not JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedResponse(f"expected a JSON object, got {type(payload).__name__}")

    records = []
    rejections = []
    for direction in ("forward", "backward"):
        entries = payload.get(direction, [])
        if not isinstance(entries, list):
            raise MalformedResponse(f"{direction!r} must be a list")
        for entry in entries:
            if (
                not isinstance(entry, dict)
                or not isinstance(entry.get("category"), str)
                or not isinstance(entry.get("text"), str)
            ):
                raise MalformedResponse(
                    f"{direction!r} entries need string 'category' and 'text'"
                )
            category = entry["category"]
            text = entry["text"]
            if category not in CATEGORIES:
                rejections.append(
                    RejectedEntry(direction, category, text, "unknown_category")
                )
                continue
            if len(text.split()) > MAX_MOD_TEXT_WORDS:
                rejections.append(
                    RejectedEntry(direction, category, text, "overlong_text")
                )
                continue
            records.append(ModificationRecord(ref_id, tgt_id, direction, category, text))
    return records, rejections


def biometric_filter(records, keywords=DEFAULT_BIOMETRIC_KEYWORDS):
    """Split records into (kept, removed) by case-insensitive whole-word
    keyword match on their text."""
    keywords = tuple(keywords)
    if not keywords:
        return list(records), []
    pattern = re.compile(
        r"\b(?:" + "|".join(re.escape(k) for k in keywords) + r")\b", re.IGNORECASE
    )
    kept, removed = [], []
    for record in records:
        (removed if pattern.search(record.text) else kept).append(record)
    return kept, removed
