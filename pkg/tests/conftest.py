import numpy as np
import pytest

from mccnn.embeddings import HashedRandom

OFFENSIVE = ["idiot", "stupid", "trash", "loser", "pathetic", "moron"]
FRIENDLY = ["lovely", "great", "thanks", "happy", "awesome", "kind"]
FILLER = ["the", "day", "is", "so", "what", "a", "really", "today", "this", "you"]


def toy_olid_rows(n=40, seed=0):
    """Separable OLID-style rows: offensive tweets carry one insult word."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        off = i % 2 == 1
        words = list(rng.choice(FILLER, 4))
        words.insert(int(rng.integers(5)), str(rng.choice(OFFENSIVE if off else FRIENDLY)))
        if i % 5 == 0:
            words.append("@Someone")
        if i % 7 == 0:
            words.append("https://t.co/x%d" % i)
        text = " ".join(words)
        if off:
            b = "TIN" if i % 4 == 1 else "UNT"
            c = ("IND", "GRP", "OTH")[i % 3] if b == "TIN" else "NULL"
            rows.append((str(10000 + i), text, "OFF", b, c))
        else:
            rows.append((str(10000 + i), text, "NOT", "NULL", "NULL"))
    return rows


def write_olid(path, rows):
    lines = ["id\ttweet\tsubtask_a\tsubtask_b\tsubtask_c"]
    lines += ["\t".join(r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def olid_file(tmp_path):
    return write_olid(tmp_path / "olid.tsv", toy_olid_rows())


def toy_sequences(n=32, dim=32, seed=0):
    """``n`` hashed-random embedded sequences for a 2-class separable task."""
    rng = np.random.default_rng(seed)
    prov = HashedRandom(dim, seed=seed)
    pos = [f"pos{i}" for i in range(8)]
    neg = [f"neg{i}" for i in range(8)]
    fill = [f"fill{i}" for i in range(10)]
    X, y = [], []
    for i in range(n):
        c = i % 2
        words = list(rng.choice(fill, 4)) + [(pos if c == 0 else neg)[rng.integers(8)]]
        rng.shuffle(words)
        X.append(prov.embed(words))
        y.append(c)
    return X, np.array(y)
