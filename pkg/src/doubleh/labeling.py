"""Weak supervision from hashtags: tweet labels, per-user ratios, user labels.

A tweet gets a stance label only when every lexicon hashtag it carries backs
the same candidate; hashtags outside the lexicon are ignored. A user's label
comes from thresholding the fraction of their positive-labeled tweets.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import DataError


def normalize_hashtag(tag: str) -> str:
    """Strip a leading '#', casefold, and NFC-normalize."""
    return unicodedata.normalize("NFC", tag.lstrip("#").casefold())


@dataclass(frozen=True)
class HashtagLexicon:
    """Normalized hashtag -> candidate map, plus which candidate is class 1."""

    positive_candidate: str
    entries: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        normalized = {}
        candidates = set()
        for tag, candidate in self.entries.items():
            norm = normalize_hashtag(tag)
            if norm in normalized and normalized[norm] != candidate:
                raise DataError(f"hashtag {norm!r} mapped to conflicting candidates")
            normalized[norm] = candidate
            candidates.add(candidate)
        if not normalized:
            raise DataError("lexicon has no entries")
        if self.positive_candidate not in candidates:
            raise DataError(
                f"positive candidate {self.positive_candidate!r} has no hashtags"
            )
        object.__setattr__(self, "entries", normalized)

    def candidate_of(self, tag: str) -> Optional[str]:
        return self.entries.get(normalize_hashtag(tag))

    @classmethod
    def from_json(cls, path) -> "HashtagLexicon":
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"bad lexicon file {path}: {exc}") from exc
        if not isinstance(raw, dict) or "positive_candidate" not in raw or "entries" not in raw:
            raise DataError(f"lexicon file {path} needs 'positive_candidate' and 'entries'")
        return cls(positive_candidate=raw["positive_candidate"], entries=raw["entries"])

    def to_json(self, path) -> None:
        payload = {"positive_candidate": self.positive_candidate, "entries": dict(self.entries)}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")


def label_tweet(hashtags: Iterable[str], lexicon: HashtagLexicon) -> Optional[int]:
    """1/0 when all lexicon-matched hashtags back one candidate, else None."""
    matched = {lexicon.entries[n] for n in map(normalize_hashtag, hashtags) if n in lexicon.entries}
    if len(matched) != 1:
        return None
    return 1 if matched.pop() == lexicon.positive_candidate else 0


def user_positive_ratio(labels: list[int]) -> float:
    """Fraction of positive tweet labels; empty input means an unlabelable user."""
    if not labels:
        raise ValueError("user has no labeled tweets")
    return sum(1 for l in labels if l == 1) / len(labels)


def label_user(ratio: float, threshold: float, tie_positive: bool = True) -> int:
    """Threshold the positive ratio; a ratio exactly at the threshold goes to 1."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    if ratio > threshold:
        return 1
    if ratio < threshold:
        return 0
    return 1 if tie_positive else 0


def ratio_histogram(ratios: Iterable[float], bins: int) -> list[int]:
    """Equal-width bin counts over [0, 1]; boundary values go to the higher bin."""
    if bins < 1:
        raise ValueError("need at least one bin")
    arr = np.asarray(list(ratios), dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("ratios must lie in [0, 1]")
    counts, _ = np.histogram(arr, bins=bins, range=(0.0, 1.0))
    return [int(c) for c in counts]


@dataclass(frozen=True)
class UserLabel:
    """Weak label record for one user (serialized with the 'f_u' ratio key)."""

    user_id: str
    positive_ratio: float
    label: int
    labeled_tweet_count: int

    def to_json_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "f_u": self.positive_ratio,
            "label": self.label,
            "labeled_tweet_count": self.labeled_tweet_count,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "UserLabel":
        return cls(
            user_id=obj["user_id"],
            positive_ratio=float(obj["f_u"]),
            label=int(obj["label"]),
            labeled_tweet_count=int(obj["labeled_tweet_count"]),
        )


def label_users(
    tweets_by_user: Mapping[str, list[list[str]]],
    lexicon: HashtagLexicon,
    threshold: float = 0.5,
    tie_positive: bool = True,
) -> list[UserLabel]:
    """Run the full weak-labeling pass: tweet labels -> ratio -> user label.

    ``tweets_by_user`` maps user id to the hashtag lists of their tweets.
    Users without any labelable tweet are dropped. Output order follows user
    id, for reproducible files.
    """
    out = []
    for user_id in sorted(tweets_by_user):
        tweet_labels = [
            lbl
            for lbl in (label_tweet(tags, lexicon) for tags in tweets_by_user[user_id])
            if lbl is not None
        ]
        if not tweet_labels:
            continue
        ratio = user_positive_ratio(tweet_labels)
        out.append(
            UserLabel(
                user_id=user_id,
                positive_ratio=ratio,
                label=label_user(ratio, threshold, tie_positive),
                labeled_tweet_count=len(tweet_labels),
            )
        )
    return out
