"""Corpus ingestion: tweet parsing, user filtering, interaction counting.

Input is a JSON-lines tweet corpus plus tab-separated follow edges and an
optional list of news-outlet account ids. Output is an InteractionCounts
bundle: the user-hashtag count matrices and the user-user relation matrices
everything downstream is built from.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateHashtag, EmptyCorpus, RecordError

LOGGER = logging.getLogger(__name__)

KINDS = ("original", "retweet", "reply")

SECONDS_PER_DAY = 86400.0

URL_RE = re.compile(r"\b\w+://\S+")
EMAIL_RE = re.compile(r"\S+@\S+\.\S+")
MENTION_RE = re.compile(r"@\w+")
HASHTAG_RE = re.compile(r"#(\w+)")
TOKEN_RE = re.compile(r"\w+")
# Pragmatic emoji coverage: pictographs, symbols, dingbats, arrows.
EMOJI_RE = re.compile(
    "["
    "\U0001f000-\U0001faff"
    "☀-➿"
    "⬀-⯿"
    "←-⇿"
    "︎️"
    "]+"
)


def _fold_chars(s: str) -> str:
    # Compatibility-decompose, drop combining marks, then casefold.
    s = unicodedata.normalize("NFKD", s)
    s = "".join(c for c in s if not unicodedata.combining(c))
    return s.casefold()


def normalize_hashtag(raw: str) -> str:
    """Canonicalize a hashtag string.

    Leading '#' characters are removed, the text is compatibility-decomposed
    with combining marks stripped, and the result is casefolded. Folding is
    iterated to a fixpoint because casefolding can reintroduce decomposable
    characters. Raises DegenerateHashtag when nothing is left.
    """
    s = raw.strip().lstrip("#")
    prev = None
    while s != prev:
        prev = s
        s = _fold_chars(s)
    if not s:
        raise DegenerateHashtag(f"hashtag {raw!r} normalizes to empty")
    return s


def preprocess_text(text, stopwords=frozenset(), stemmer=None):
    """Tokenize tweet text for bag-of-words style consumers.

    URLs, email addresses, and @-mentions are removed before folding so
    their fragments never leak into tokens; emoji and punctuation are
    dropped afterwards. The optional stemmer is applied last.
    """
    s = URL_RE.sub(" ", text)
    s = EMAIL_RE.sub(" ", s)
    s = MENTION_RE.sub(" ", s)
    s = _fold_chars(s)
    s = EMOJI_RE.sub(" ", s)
    tokens = [t for t in TOKEN_RE.findall(s) if t not in stopwords]
    if stemmer is not None:
        tokens = [stemmer(t) for t in tokens]
        tokens = [t for t in tokens if t]
    return tokens


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    user_id: str
    timestamp: float  # UTC seconds
    text: str
    kind: str
    hashtags: tuple[str, ...] = ()
    ref_user_id: str | None = None
    mentions: tuple[str, ...] = ()


@dataclass(frozen=True)
class CorpusFilterConfig:
    """Thresholds for dropping bot-like or out-of-scope accounts."""

    max_outlets_followed: int = 10
    max_avg_daily_tweets: float = 3.0
    location_allowlist: frozenset[str] | None = None


@dataclass
class Corpus:
    tweets: list[TweetRecord]
    follows: set[tuple[str, str]] = field(default_factory=set)
    outlets: frozenset[str] = frozenset()
    locations: dict[str, str] = field(default_factory=dict)


def _parse_timestamp(value: str) -> float:
    # ISO-8601; a trailing Z is normalized, naive times are taken as UTC.
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _parse_tweet_line(line: str, line_no: int) -> tuple[TweetRecord, str | None]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"invalid JSON: {exc}", line_no) from exc
    if not isinstance(obj, dict):
        raise RecordError("record is not an object", line_no)
    try:
        tweet_id = str(obj["tweet_id"])
        user_id = str(obj["user_id"])
        timestamp = _parse_timestamp(str(obj["timestamp"]))
        text = str(obj["text"])
        kind = str(obj["kind"])
    except KeyError as exc:
        raise RecordError(f"missing key {exc.args[0]!r}", line_no) from exc
    except ValueError as exc:
        raise RecordError(f"bad timestamp: {exc}", line_no) from exc
    if kind not in KINDS:
        raise RecordError(f"unknown kind {kind!r}", line_no)

    raw_tags = obj.get("hashtags")
    if raw_tags is None:
        raw_tags = HASHTAG_RE.findall(text)
    tags = []
    for raw in raw_tags:
        try:
            tags.append(normalize_hashtag(str(raw)))
        except DegenerateHashtag as exc:
            raise RecordError(str(exc), line_no) from exc

    ref = obj.get("ref_user_id")
    mentions = tuple(str(m) for m in obj.get("mentions", ()) or ())
    record = TweetRecord(
        tweet_id=tweet_id,
        user_id=user_id,
        timestamp=timestamp,
        text=text,
        kind=kind,
        hashtags=tuple(tags),
        ref_user_id=None if ref is None else str(ref),
        mentions=mentions,
    )
    location = obj.get("location")
    return record, None if location is None else str(location)


def parse_corpus(tweet_lines, follow_lines=(), outlet_lines=(), strict=True) -> Corpus:
    """Parse raw input streams into a Corpus.

    Malformed lines raise RecordError with their line number when strict,
    and are skipped with a warning otherwise. A repeated tweet_id keeps the
    last record seen.
    """
    by_id: dict[str, TweetRecord] = {}
    locations: dict[str, str] = {}
    for line_no, line in enumerate(tweet_lines, 1):
        if not line.strip():
            continue
        try:
            record, location = _parse_tweet_line(line, line_no)
        except RecordError as exc:
            if strict:
                raise
            LOGGER.warning("skipping tweet record: %s", exc)
            continue
        if record.tweet_id in by_id:
            LOGGER.warning("duplicate tweet_id %s; keeping last record", record.tweet_id)
        by_id[record.tweet_id] = record
        if location is not None:
            locations[record.user_id] = location

    follows: set[tuple[str, str]] = set()
    for line_no, line in enumerate(follow_lines, 1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
            if strict:
                raise RecordError("expected 'follower<TAB>followee'", line_no)
            LOGGER.warning("skipping follow edge on line %d", line_no)
            continue
        follows.add((parts[0].strip(), parts[1].strip()))

    outlets = frozenset(line.strip() for line in outlet_lines if line.strip())
    return Corpus(tweets=list(by_id.values()), follows=follows, outlets=outlets, locations=locations)


def apply_filters(corpus: Corpus, cfg: CorpusFilterConfig) -> Corpus:
    """Drop users that exceed rate or outlet thresholds, or sit outside the
    location allowlist when one is set. Tweets of dropped users are removed;
    follow edges touching them are pruned."""
    first_ts: dict[str, float] = {}
    last_ts: dict[str, float] = {}
    n_tweets: dict[str, int] = {}
    for t in corpus.tweets:
        n_tweets[t.user_id] = n_tweets.get(t.user_id, 0) + 1
        first_ts[t.user_id] = min(first_ts.get(t.user_id, t.timestamp), t.timestamp)
        last_ts[t.user_id] = max(last_ts.get(t.user_id, t.timestamp), t.timestamp)

    outlets_followed: dict[str, int] = {}
    if corpus.outlets:
        for follower, followee in corpus.follows:
            if followee in corpus.outlets:
                outlets_followed[follower] = outlets_followed.get(follower, 0) + 1

    allow = None
    if cfg.location_allowlist is not None:
        allow = {_fold_chars(loc) for loc in cfg.location_allowlist}

    removed: set[str] = set()
    for user, count in n_tweets.items():
        # Activity span is clamped to one day so single-day users get a rate.
        span_days = max((last_ts[user] - first_ts[user]) / SECONDS_PER_DAY, 1.0)
        if count / span_days > cfg.max_avg_daily_tweets:
            removed.add(user)
            continue
        if outlets_followed.get(user, 0) > cfg.max_outlets_followed:
            removed.add(user)
            continue
        if allow is not None:
            loc = corpus.locations.get(user)
            if loc is None or _fold_chars(loc) not in allow:
                removed.add(user)

    if removed:
        LOGGER.info("filters removed %d of %d users", len(removed), len(n_tweets))
    tweets = [t for t in corpus.tweets if t.user_id not in removed]
    follows = {(a, b) for a, b in corpus.follows if a not in removed and b not in removed}
    locations = {u: loc for u, loc in corpus.locations.items() if u not in removed}
    return Corpus(tweets=tweets, follows=follows, outlets=corpus.outlets, locations=locations)


@dataclass
class InteractionCounts:
    """Count matrices extracted from a corpus.

    T splits by tweet kind: T = T_tweet + T_retweet + T_reply. The user-user
    matrices hold directed mention and reply counts and the symmetric 0/1
    mutual-follow indicator, all restricted to in-corpus users.
    """

    users: list[str]
    hashtags: list[str]
    T: sp.csr_matrix
    T_tweet: sp.csr_matrix
    T_retweet: sp.csr_matrix
    T_reply: sp.csr_matrix
    mention: sp.csr_matrix
    reply: sp.csr_matrix
    mutual_follow: sp.csr_matrix

    def relation(self, name: str) -> sp.csr_matrix:
        table = {"tweet": self.T_tweet, "retweet": self.T_retweet, "reply": self.T_reply}
        if name not in table:
            raise KeyError(f"unknown relation {name!r}")
        return table[name]

    def validate(self) -> None:
        n, m = len(self.users), len(self.hashtags)
        for mat in (self.T, self.T_tweet, self.T_retweet, self.T_reply):
            assert mat.shape == (n, m)
        for mat in (self.mention, self.reply, self.mutual_follow):
            assert mat.shape == (n, n)
        total = self.T_tweet + self.T_retweet + self.T_reply
        assert abs(self.T - total).sum() == 0.0
        assert (self.T.data >= 0).all()
        assert abs(self.mutual_follow - self.mutual_follow.T).sum() == 0.0


def _csr_from_counts(counter: dict[tuple[int, int], float], shape) -> sp.csr_matrix:
    if not counter:
        return sp.csr_matrix(shape, dtype=np.float64)
    keys = sorted(counter)
    rows = np.array([k[0] for k in keys], dtype=np.int64)
    cols = np.array([k[1] for k in keys], dtype=np.int64)
    data = np.array([counter[k] for k in keys], dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=shape)


def extract_interactions(corpus: Corpus) -> InteractionCounts:
    """Count hashtag usages per user and kind, plus user-user relations."""
    if not corpus.tweets:
        raise EmptyCorpus("no tweets to extract interactions from")
    users = sorted({t.user_id for t in corpus.tweets})
    tags = sorted({h for t in corpus.tweets for h in t.hashtags})
    if not tags:
        raise EmptyCorpus("no hashtags in corpus")
    uidx = {u: i for i, u in enumerate(users)}
    hidx = {h: j for j, h in enumerate(tags)}

    by_kind = {kind: {} for kind in KINDS}
    mention: dict[tuple[int, int], float] = {}
    reply_edges: dict[tuple[int, int], float] = {}
    for t in corpus.tweets:
        i = uidx[t.user_id]
        bucket = by_kind[t.kind]
        for h in t.hashtags:
            key = (i, hidx[h])
            bucket[key] = bucket.get(key, 0.0) + 1.0
        for m in t.mentions:
            if m in uidx:
                key = (i, uidx[m])
                mention[key] = mention.get(key, 0.0) + 1.0
        if t.kind == "reply" and t.ref_user_id in uidx:
            key = (i, uidx[t.ref_user_id])
            reply_edges[key] = reply_edges.get(key, 0.0) + 1.0

    mutual: dict[tuple[int, int], float] = {}
    for a, b in corpus.follows:
        if a in uidx and b in uidx and (b, a) in corpus.follows and a != b:
            mutual[(uidx[a], uidx[b])] = 1.0

    n, m = len(users), len(tags)
    t_tweet = _csr_from_counts(by_kind["original"], (n, m))
    t_retweet = _csr_from_counts(by_kind["retweet"], (n, m))
    t_reply = _csr_from_counts(by_kind["reply"], (n, m))
    counts = InteractionCounts(
        users=users,
        hashtags=tags,
        T=(t_tweet + t_retweet + t_reply).tocsr(),
        T_tweet=t_tweet,
        T_retweet=t_retweet,
        T_reply=t_reply,
        mention=_csr_from_counts(mention, (n, n)),
        reply=_csr_from_counts(reply_edges, (n, n)),
        mutual_follow=_csr_from_counts(mutual, (n, n)),
    )
    counts.validate()
    return counts


def _triples(mat: sp.csr_matrix) -> list[list]:
    coo = mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return [[int(coo.row[k]), int(coo.col[k]), float(coo.data[k])] for k in order]


def _from_triples(triples, shape) -> sp.csr_matrix:
    if not triples:
        return sp.csr_matrix(shape, dtype=np.float64)
    rows = np.array([t[0] for t in triples], dtype=np.int64)
    cols = np.array([t[1] for t in triples], dtype=np.int64)
    data = np.array([t[2] for t in triples], dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=shape)


def save_counts(counts: InteractionCounts, path) -> None:
    payload = {
        "users": counts.users,
        "hashtags": counts.hashtags,
        "T_tweet": _triples(counts.T_tweet),
        "T_retweet": _triples(counts.T_retweet),
        "T_reply": _triples(counts.T_reply),
        "mention": _triples(counts.mention),
        "reply": _triples(counts.reply),
        "mutual_follow": _triples(counts.mutual_follow),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, separators=(",", ":"))
        fh.write("\n")


def load_counts(path) -> InteractionCounts:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    users = [str(u) for u in payload["users"]]
    tags = [str(h) for h in payload["hashtags"]]
    n, m = len(users), len(tags)
    t_tweet = _from_triples(payload["T_tweet"], (n, m))
    t_retweet = _from_triples(payload["T_retweet"], (n, m))
    t_reply = _from_triples(payload["T_reply"], (n, m))
    counts = InteractionCounts(
        users=users,
        hashtags=tags,
        T=(t_tweet + t_retweet + t_reply).tocsr(),
        T_tweet=t_tweet,
        T_retweet=t_retweet,
        T_reply=t_reply,
        mention=_from_triples(payload["mention"], (n, n)),
        reply=_from_triples(payload["reply"], (n, n)),
        mutual_follow=_from_triples(payload["mutual_follow"], (n, n)),
    )
    counts.validate()
    return counts
