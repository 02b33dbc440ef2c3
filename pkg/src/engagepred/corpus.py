"""Ingestion of Pushshift-style dumps and per-community corpus assembly.

Submission and comment dumps are JSON-lines files using the Pushshift field
names (``subreddit``, ``selftext``, ``created_utc``, ...).  Records are
streamed, validated and grouped into one :class:`CommunityCorpus` per
community for a half-open time window ``[start, end)``.
"""
from __future__ import annotations

import csv
import gzip
import io
import json
import logging
import re
import string
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

log = logging.getLogger(__name__)

DELETED = "[deleted]"
REMOVED = "[removed]"

SUBMISSION = "submission"
COMMENT = "comment"


class FormatError(ValueError):
    """Raised when a dump is mostly unparseable."""


@dataclass(frozen=True, slots=True)
class SubmissionRecord:
    id: str
    community: str
    author: str
    title: str
    body: str
    score: int
    created: int
    comment_count: int = 0

    @property
    def text(self) -> str:
        body = "" if self.body in (DELETED, REMOVED) else self.body
        return f"{self.title} {body}".strip()


@dataclass(frozen=True, slots=True)
class CommentRecord:
    id: str
    community: str
    author: str
    body: str
    score: int
    created: int
    parent_id: str
    link_id: str = ""


@dataclass(frozen=True, slots=True)
class CommunityMeta:
    community: str
    subscribers: int
    created: int


@dataclass(frozen=True)
class CommunityCorpus:
    community: str
    submissions: tuple[SubmissionRecord, ...]
    comments: tuple[CommentRecord, ...]
    meta: CommunityMeta | None
    window: tuple[int, int]

    def __len__(self) -> int:
        return len(self.submissions) + len(self.comments)

    def to_dict(self) -> dict:
        return {
            "community": self.community,
            "window": list(self.window),
            "meta": None if self.meta is None else asdict(self.meta),
            "submissions": [asdict(s) for s in self.submissions],
            "comments": [asdict(c) for c in self.comments],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CommunityCorpus":
        return cls(
            community=d["community"],
            submissions=tuple(SubmissionRecord(**s) for s in d["submissions"]),
            comments=tuple(CommentRecord(**c) for c in d["comments"]),
            meta=None if d["meta"] is None else CommunityMeta(**d["meta"]),
            window=(int(d["window"][0]), int(d["window"][1])),
        )


def strip_kind_prefix(thing_id: str) -> str:
    """``t3_abc`` -> ``abc``; bare ids pass through."""
    if len(thing_id) > 3 and thing_id[0] == "t" and thing_id[1].isdigit() and thing_id[2] == "_":
        return thing_id[3:]
    return thing_id


# ---------------------------------------------------------------- loading

def _open_text(path: Path) -> io.TextIOBase:
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def _as_int(value) -> int:
    if isinstance(value, bool):
        raise TypeError("boolean is not a number")
    if isinstance(value, str):
        value = float(value)
    if isinstance(value, float):
        if value != value:
            raise ValueError("NaN")
        return int(value)
    if isinstance(value, int):
        return value
    raise TypeError(f"not a number: {value!r}")


def _as_str(value, default: str | None = None) -> str:
    if value is None:
        if default is None:
            raise ValueError("missing field")
        return default
    if not isinstance(value, str):
        raise TypeError(f"not a string: {value!r}")
    return value


def parse_submission(obj: Mapping) -> SubmissionRecord:
    rec = SubmissionRecord(
        id=_as_str(obj.get("id")),
        community=_as_str(obj.get("subreddit")),
        author=_as_str(obj.get("author"), DELETED),
        title=_as_str(obj.get("title"), ""),
        body=_as_str(obj.get("selftext"), ""),
        score=_as_int(obj.get("score", 0)),
        created=_as_int(obj["created_utc"]),
        comment_count=_as_int(obj.get("num_comments", 0)),
    )
    if not rec.id or not rec.community or rec.created <= 0:
        raise ValueError("invalid submission")
    return rec


def parse_comment(obj: Mapping) -> CommentRecord:
    rec = CommentRecord(
        id=_as_str(obj.get("id")),
        community=_as_str(obj.get("subreddit")),
        author=_as_str(obj.get("author"), DELETED),
        body=_as_str(obj.get("body"), ""),
        score=_as_int(obj.get("score", 0)),
        created=_as_int(obj["created_utc"]),
        parent_id=_as_str(obj.get("parent_id")),
        link_id=_as_str(obj.get("link_id"), ""),
    )
    if not rec.id or not rec.community or rec.created <= 0 or not rec.parent_id:
        raise ValueError("invalid comment")
    if strip_kind_prefix(rec.parent_id) == strip_kind_prefix(rec.id):
        raise ValueError("comment replies to itself")
    return rec


class RecordStream:
    """Iterable over the valid records of one dump file.

    ``skipped`` and ``parsed`` are final once iteration completes.  A file in
    which more than half of the non-blank lines fail to parse raises
    :class:`FormatError` at the end of iteration.
    """

    def __init__(self, path: str | Path, kind: str):
        if kind not in (SUBMISSION, COMMENT):
            raise ValueError(f"kind must be {SUBMISSION!r} or {COMMENT!r}, got {kind!r}")
        self.path = Path(path)
        self.kind = kind
        self.parsed = 0
        self.skipped = 0
        # fail early on unreadable files
        with _open_text(self.path):
            pass

    def __iter__(self) -> Iterator[SubmissionRecord | CommentRecord]:
        parse = parse_submission if self.kind == SUBMISSION else parse_comment
        self.parsed = self.skipped = 0
        seen: set[str] = set()
        with _open_text(self.path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    if not isinstance(obj, dict):
                        raise TypeError("not an object")
                    rec = parse(obj)
                except (ValueError, TypeError, KeyError):
                    self.skipped += 1
                    continue
                if rec.id in seen:
                    self.skipped += 1
                    continue
                seen.add(rec.id)
                self.parsed += 1
                yield rec
        total = self.parsed + self.skipped
        if total and self.skipped * 2 > total:
            raise FormatError(f"{self.path}: {self.skipped} of {total} lines malformed")
        if self.skipped:
            log.warning("%s: skipped %d malformed line(s)", self.path, self.skipped)


def load_records(path: str | Path, kind: str) -> RecordStream:
    return RecordStream(path, kind)


def load_meta(path: str | Path) -> dict[str, CommunityMeta]:
    """Read ``community,subscribers,created_utc`` (header required)."""
    out: dict[str, CommunityMeta] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"community", "subscribers", "created_utc"} - set(reader.fieldnames or ())
        if missing:
            raise FormatError(f"{path}: metadata header lacks {sorted(missing)}")
        for row in reader:
            name = row["community"].strip()
            if not name:
                continue
            out[name] = CommunityMeta(name, max(0, _as_int(row["subscribers"])), _as_int(row["created_utc"]))
    return out


def write_meta(path: str | Path, meta: Iterable[CommunityMeta]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["community", "subscribers", "created_utc"])
        for m in meta:
            w.writerow([m.community, m.subscribers, m.created])


# ---------------------------------------------------------- normalization

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})
_URL_RE = re.compile(r"(?:https?://|www\.)\S*")
_MENTION_RE = re.compile(r"(?<![a-z0-9_/])/?u/[a-z0-9_-]+")
_LABEL = r"[a-z0-9](?:[a-z0-9-]*[a-z0-9])?"
_BARE_DOMAIN_RE = re.compile(rf"(?:{_LABEL}\.)+[a-z]{{2,}}")
_HOST_END_RE = re.compile(r"[/?#]")


def _plain(segment: str) -> list[str]:
    return segment.translate(_PUNCT_TABLE).split()


def url_domain(url: str) -> str:
    """Host part of a URL: scheme, path, credentials and port dropped.

    A leading ``www.`` is kept.
    """
    host = re.sub(r"^https?://", "", url)
    host = _HOST_END_RE.split(host, maxsplit=1)[0]
    host = host.rsplit("@", 1)[-1].split(":", 1)[0]
    return host.strip(string.punctuation)


def _domain_tokens(url: str) -> list[str]:
    host = url_domain(url)
    # only keep hosts that are recognised as URLs again, so normalization stays idempotent
    if host.startswith("www.") or _BARE_DOMAIN_RE.fullmatch(host):
        return [host]
    return _plain(host)


def _mention_split(segment: str) -> list[str]:
    out: list[str] = []
    pos = 0
    for m in _MENTION_RE.finditer(segment):
        out.extend(_plain(segment[pos:m.start()]))
        name = m.group(0)
        out.append(name if name.startswith("/") else "/" + name)
        pos = m.end()
    out.extend(_plain(segment[pos:]))
    return out


def _token_pieces(raw: str) -> list[str]:
    m = _URL_RE.search(raw)
    if m is not None:
        return _token_pieces(raw[:m.start()]) + _domain_tokens(m.group(0))
    core = raw.strip(string.punctuation)
    bare = _HOST_END_RE.split(core, maxsplit=1)[0]
    if _BARE_DOMAIN_RE.fullmatch(bare):
        return [bare]
    return _mention_split(raw)


def normalize_text(raw: str) -> list[str]:
    """Lower-case, strip ASCII punctuation, collapse URLs to their domain.

    User mentions (``/u/name`` or ``u/name``) survive as one ``/u/name``
    token.

    >>> normalize_text("www.youtube.com/XYZ")
    ['www.youtube.com']
    >>> normalize_text("Hello, HELLO!")
    ['hello', 'hello']
    """
    tokens: list[str] = []
    for raw_tok in raw.lower().split():
        tokens.extend(_token_pieces(raw_tok))
    return tokens


# --------------------------------------------------------------- assembly

@dataclass
class _Bucket:
    submissions: list = field(default_factory=list)
    comments: list = field(default_factory=list)


def build_corpora(
    submissions: Iterable[SubmissionRecord],
    comments: Iterable[CommentRecord],
    meta: Mapping[str, CommunityMeta] | None,
    window: tuple[int, int],
) -> dict[str, CommunityCorpus]:
    """Partition in-window records by community (``start <= created < end``).

    Output is keyed and ordered by community name; records inside a corpus
    are ordered by ``(created, id)`` so the result does not depend on the
    order in which shards were read.
    """
    start, end = int(window[0]), int(window[1])
    if not start < end:
        raise ValueError(f"window start {start} must precede end {end}")
    meta = meta or {}
    buckets: dict[str, _Bucket] = defaultdict(_Bucket)
    for s in submissions:
        if start <= s.created < end:
            buckets[s.community].submissions.append(s)
    for c in comments:
        if start <= c.created < end:
            buckets[c.community].comments.append(c)

    key = lambda r: (r.created, r.id)  # noqa: E731
    out: dict[str, CommunityCorpus] = {}
    for name in sorted(buckets):
        b = buckets[name]
        out[name] = CommunityCorpus(
            community=name,
            submissions=tuple(sorted(b.submissions, key=key)),
            comments=tuple(sorted(b.comments, key=key)),
            meta=meta.get(name),
            window=(start, end),
        )
    return out


def write_corpora(path: str | Path, corpora: Mapping[str, CommunityCorpus]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in sorted(corpora):
            fh.write(json.dumps(corpora[name].to_dict(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def read_corpora(path: str | Path) -> dict[str, CommunityCorpus]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                c = CommunityCorpus.from_dict(json.loads(line))
                out[c.community] = c
    return out
