"""Tweet normalization, sub-word tokenization and task dataset ingestion."""
from __future__ import annotations

import csv
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

URL_TOKEN = "<url>"
USER_TOKEN = "<user>"
UNK_TOKEN = "<unk>"
SPECIAL_TOKENS = (URL_TOKEN, USER_TOKEN, UNK_TOKEN)
CONTINUATION_PREFIX = "##"
DEFAULT_MAX_TOKENS = 80

_URL_RE = re.compile(r"(?:https?://|(?<![\w.])www\.)\S*", re.IGNORECASE)
_HANDLE_RE = re.compile(r"@\w{1,15}(?!\w)")
_SPECIAL_SPLIT_RE = re.compile("(" + "|".join(re.escape(t) for t in (URL_TOKEN, USER_TOKEN)) + ")")


@dataclass(frozen=True)
class LabelSchema:
    name: str
    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError(f"schema {self.name!r} needs at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError(f"schema {self.name!r} has duplicate class labels")

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise ValueError(f"unknown label {label!r} for schema {self.name}") from None

    def __len__(self):
        return len(self.classes)


OFFENSEVAL_A = LabelSchema("offenseval-a", ("NOT", "OFF"))
OFFENSEVAL_B = LabelSchema("offenseval-b", ("TIN", "UNT"))
OFFENSEVAL_C = LabelSchema("offenseval-c", ("GRP", "IND", "OTH"))
HATEVAL_A = LabelSchema("hateval-a", ("NOT_HS", "HS"))

# (format, subtask) -> (schema, label column, raw value -> schema label)
_SUBTASKS = {
    ("olid", "a"): (OFFENSEVAL_A, "subtask_a", None),
    ("olid", "b"): (OFFENSEVAL_B, "subtask_b", None),
    ("olid", "c"): (OFFENSEVAL_C, "subtask_c", None),
    ("hateval", "a"): (HATEVAL_A, "HS", {"0": "NOT_HS", "1": "HS"}),
}
_COLUMNS = {
    "olid": ("id", "tweet", "subtask_a", "subtask_b", "subtask_c"),
    "hateval": ("id", "text", "HS", "TR", "AG"),
}
OLID_NULL = "NULL"


def get_schema(fmt: str, subtask: str) -> LabelSchema:
    try:
        return _SUBTASKS[fmt, subtask.lower()][0]
    except KeyError:
        raise ValueError(f"unsupported format/subtask: {fmt}/{subtask}") from None


@dataclass
class Example:
    id: str
    text: str
    label: int | None = None


@dataclass
class TokenSequence:
    """Sub-word tokens of one example; ``example_id`` travels along for id-keyed embeddings."""

    tokens: list[str]
    example_id: str | None = None

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass
class SubwordVocabulary:
    entries: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        self.entries = frozenset(self.entries) | frozenset(SPECIAL_TOKENS)

    def __contains__(self, token):
        return token in self.entries

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "SubwordVocabulary":
        seen = set()
        for tok in tokens:
            if tok in seen:
                raise ValueError(f"duplicate vocabulary entry {tok!r}")
            seen.add(tok)
        return cls(frozenset(seen))

    @classmethod
    def load(cls, path) -> "SubwordVocabulary":
        with open(path, encoding="utf-8") as fh:
            toks = [line.rstrip("\r\n") for line in fh]
        return cls.from_tokens(t for t in toks if t and t not in SPECIAL_TOKENS)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in sorted(self.entries):
                fh.write(tok + "\n")


def build_vocabulary(texts: Iterable[str], min_count: int = 1) -> SubwordVocabulary:
    """Whole-word vocabulary from normalized texts (every word becomes a first piece)."""
    counts: dict[str, int] = {}
    for text in texts:
        for word in normalize_text(text).split():
            for piece in _SPECIAL_SPLIT_RE.split(word):
                if piece and piece not in SPECIAL_TOKENS:
                    counts[piece] = counts.get(piece, 0) + 1
    return SubwordVocabulary(frozenset(w for w, c in counts.items() if c >= min_count))


def normalize_text(raw: str) -> str:
    text = raw.lower()
    text = _URL_RE.sub(URL_TOKEN, text)
    text = _HANDLE_RE.sub(USER_TOKEN, text)
    return " ".join(text.split())


def _wordpiece(word: str, vocab: SubwordVocabulary) -> list[str]:
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while end > start:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in vocab.entries:
                match = piece
                break
            end -= 1
        if match is None:
            return [UNK_TOKEN]
        pieces.append(match)
        start = end
    return pieces


def tokenize(text: str, vocab: SubwordVocabulary, max_tokens: int = DEFAULT_MAX_TOKENS) -> TokenSequence:
    out: list[str] = []
    for word in text.split():
        # "<user>!" -> "<user>", "!" so special tokens survive attached punctuation
        for part in _SPECIAL_SPLIT_RE.split(word):
            if not part:
                continue
            if part in (URL_TOKEN, USER_TOKEN):
                out.append(part)
            else:
                out.extend(_wordpiece(part, vocab))
        if len(out) >= max_tokens:
            break
    return TokenSequence(out[:max_tokens])


def load_dataset(path, format: str, subtask: str = "a", labeled: bool = True) -> list[Example]:
    """Read an OLID or HatEval tab-separated file.

    With ``labeled=False`` only the id and text columns are required, so
    unlabeled test files can be read for prediction.
    """
    if format not in _COLUMNS:
        raise ValueError(f"unknown dataset format {format!r}")
    schema, label_col, value_map = _SUBTASKS.get((format, subtask.lower()), (None, None, None))
    if schema is None:
        raise ValueError(f"unsupported format/subtask: {format}/{subtask}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    id_col, text_col = _COLUMNS[format][:2]

    examples = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        required = _COLUMNS[format] if labeled else (id_col, text_col)
        missing = [c for c in required if c not in header]
        if missing:
            raise ValueError(f"{path}: header missing columns {missing}")
        pos = {name: i for i, name in enumerate(header)}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(header)} columns, got {len(row)}"
                )
            label = None
            if labeled:
                raw = row[pos[label_col]].strip()
                if format == "olid" and raw == OLID_NULL:
                    continue
                if value_map is not None:
                    if raw not in value_map:
                        raise ValueError(f"{path}: line {lineno}: unknown label value {raw!r}")
                    raw = value_map[raw]
                if raw not in schema.classes:
                    raise ValueError(f"{path}: line {lineno}: unknown label value {raw!r}")
                label = schema.index(raw)
            examples.append(Example(row[pos[id_col]], row[pos[text_col]], label))
    return examples


def class_distribution(dataset: Sequence[Example], schema: LabelSchema) -> dict[str, int]:
    counts = dict.fromkeys(schema.classes, 0)
    for ex in dataset:
        if ex.label is None:
            raise ValueError(f"example {ex.id!r} is unlabeled")
        if not 0 <= ex.label < len(schema):
            raise ValueError(f"example {ex.id!r} has label {ex.label} outside schema {schema.name}")
        counts[schema.classes[ex.label]] += 1
    return counts


class TweetTokenizer(BaseEstimator, TransformerMixin):
    """Raw tweets (or :class:`Example` objects) -> :class:`TokenSequence` list.

    If no vocabulary is given, ``fit`` builds a whole-word vocabulary from the
    training texts.
    """

    def __init__(self, vocab=None, max_tokens=DEFAULT_MAX_TOKENS, min_count=1):
        self.vocab = vocab
        self.max_tokens = max_tokens
        self.min_count = min_count

    def fit(self, X, y=None):
        if self.vocab is None:
            self.vocab_ = build_vocabulary((_text_of(x) for x in X), self.min_count)
        elif isinstance(self.vocab, SubwordVocabulary):
            self.vocab_ = self.vocab
        else:
            self.vocab_ = SubwordVocabulary.load(self.vocab)
        return self

    def transform(self, X):
        check_is_fitted(self, "vocab_")
        out = []
        for x in X:
            seq = tokenize(normalize_text(_text_of(x)), self.vocab_, self.max_tokens)
            if isinstance(x, Example):
                seq.example_id = x.id
            out.append(seq)
        return out


def _text_of(x) -> str:
    return x.text if isinstance(x, Example) else x
