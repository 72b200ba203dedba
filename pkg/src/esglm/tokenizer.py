"""WordPiece vocabulary training, text/id codecs, and fixed-length input prep.

Vocabulary training is frequency-based pair merging (BPE-style WordPiece)
rather than likelihood-based: deterministic and adequate at desk scale.
Encoding is uncased greedy longest-match-first over whitespace/punctuation
pre-tokens.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidId, InvalidInput

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
NUM_SPECIALS = len(SPECIAL_TOKENS)


@dataclass(frozen=True)
class Vocab:
    """Immutable token inventory; ids are dense 0..len-1, specials first.

    Safe to share across concurrent encode calls.
    """

    tokens: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    def __post_init__(self):
        if self.tokens[:NUM_SPECIALS] != SPECIAL_TOKENS:
            raise InvalidConfig(
                f"first {NUM_SPECIALS} tokens must be {SPECIAL_TOKENS}"
            )
        if len(self.index) != len(self.tokens):
            raise InvalidConfig("duplicate tokens in vocabulary")
        for tok in self.tokens[NUM_SPECIALS:]:
            if not tok or tok == "##":
                raise InvalidConfig(f"empty token {tok!r} in vocabulary")

    @classmethod
    def from_tokens(cls, tokens) -> Vocab:
        toks = tuple(tokens)
        return cls(tokens=toks, index={t: i for i, t in enumerate(toks)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index[token]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> Vocab:
        with open(path, "r", encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        while tokens and tokens[-1] == "":
            tokens.pop()
        if len(tokens) < NUM_SPECIALS:
            raise InvalidConfig(f"vocab file {path} has fewer than 5 lines")
        return cls.from_tokens(tokens)


@dataclass
class EncodedInput:
    """Fixed-length id sequence: [CLS] body [SEP] padding."""

    ids: np.ndarray
    attention_mask: np.ndarray
    real_len: int


def pretokenize(text: str) -> list[str]:
    """Lowercase and split into words, with punctuation split off.

    A word is a maximal run of alphanumerics (plus apostrophes); every
    other non-whitespace character becomes its own token, matching the
    uncased-BERT convention.
    """
    words: list[str] = []
    current: list[str] = []
    for ch in text.lower():
        if ch.isspace():
            if current:
                words.append("".join(current))
                current = []
        elif ch.isalnum() or ch == "'":
            current.append(ch)
        else:
            if current:
                words.append("".join(current))
                current = []
            words.append(ch)
    if current:
        words.append("".join(current))
    return words


def _word_symbols(word: str) -> list[str]:
    return [word[0]] + ["##" + c for c in word[1:]]


def _surface(symbol: str) -> str:
    return symbol[2:] if symbol.startswith("##") else symbol


def train_vocab(corpus, target_size: int, min_freq: int = 2) -> Vocab:
    """Build a WordPiece vocabulary by iterative pair merging.

    Starts from single characters ("##"-prefixed off word start) and
    repeatedly merges the most frequent adjacent pair until target_size is
    reached or no pair occurs at least min_freq times.  Pair counts pool the
    word-initial and continuation forms of the left symbol, so the count of
    ("a", "##a") is the number of "aa" character bigrams.  Ties break
    lexicographically, which makes the result independent of document order.
    """
    docs = list(corpus)
    if not docs or all(not d.strip() for d in docs):
        raise InvalidInput("empty corpus")

    word_freqs = Counter()
    for doc in docs:
        word_freqs.update(pretokenize(doc))

    alphabet = {c for word in word_freqs for c in word}
    if target_size < NUM_SPECIALS + len(alphabet):
        raise InvalidConfig(
            f"target_size {target_size} < {NUM_SPECIALS} specials "
            f"+ {len(alphabet)} characters"
        )

    segmented = {w: _word_symbols(w) for w in word_freqs}
    # Initial inventory: the positional character forms that actually occur.
    inventory = sorted({sym for syms in segmented.values() for sym in syms})
    tokens = list(SPECIAL_TOKENS) + inventory
    seen = set(tokens)
    while len(tokens) < target_size:
        pair_freqs = Counter()
        for word, syms in segmented.items():
            freq = word_freqs[word]
            for left, right in zip(syms, syms[1:]):
                pair_freqs[(_surface(left), right)] += freq
        if not pair_freqs:
            break
        best_freq = max(pair_freqs.values())
        if best_freq < min_freq:
            break
        best = min(p for p, f in pair_freqs.items() if f == best_freq)

        realized: set[str] = set()
        for word, syms in segmented.items():
            merged: list[str] = []
            i = 0
            while i < len(syms):
                if (
                    i + 1 < len(syms)
                    and (_surface(syms[i]), syms[i + 1]) == best
                ):
                    new_sym = syms[i] + _surface(syms[i + 1])
                    realized.add(new_sym)
                    merged.append(new_sym)
                    i += 2
                else:
                    merged.append(syms[i])
                    i += 1
            segmented[word] = merged
        for sym in sorted(realized):
            if sym not in seen and len(tokens) < target_size:
                tokens.append(sym)
                seen.add(sym)

    return Vocab.from_tokens(tokens)


def encode(text: str, vocab: Vocab) -> list[int]:
    """Greedy longest-match-first WordPiece encoding of lowercased text.

    A word in which some remainder has no matching piece collapses to a
    single UNK.  Pure: repeated calls return identical output.
    """
    ids: list[int] = []
    for word in pretokenize(text):
        ids.extend(_encode_word(word, vocab))
    return ids


def _encode_word(word: str, vocab: Vocab) -> list[int]:
    pieces: list[int] = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            sub = word[start:end]
            if start > 0:
                sub = "##" + sub
            if sub in vocab.index:
                match = vocab.index[sub]
                break
            end -= 1
        if match is None:
            return [UNK_ID]
        pieces.append(match)
        start = end
    return pieces


def decode(ids, vocab: Vocab) -> str:
    """Inverse of encode up to lowercasing and UNK loss.

    "##" pieces concatenate onto the previous piece; other pieces join with
    single spaces.  PAD/CLS/SEP/MASK are dropped; UNK keeps its surface form.
    """
    words: list[str] = []
    for i in ids:
        i = int(i)
        if i < 0 or i >= len(vocab):
            raise InvalidId(f"id {i} out of range for vocab of {len(vocab)}")
        if i in (PAD_ID, CLS_ID, SEP_ID, MASK_ID):
            continue
        tok = vocab.tokens[i]
        if tok.startswith("##") and words:
            words[-1] += tok[2:]
        else:
            words.append(tok)
    return " ".join(words)


def prepare_input(token_ids, max_seq_len: int = 512) -> EncodedInput:
    """Wrap ids as [CLS] + body + [SEP] and pad to exactly max_seq_len.

    The body keeps the head: ids beyond max_seq_len - 2 are dropped from
    the tail.
    """
    if max_seq_len < 3:
        raise InvalidConfig(f"max_seq_len {max_seq_len} < 3")
    body = list(token_ids)[: max_seq_len - 2]
    real = [CLS_ID] + body + [SEP_ID]
    ids = np.full(max_seq_len, PAD_ID, dtype=np.int64)
    ids[: len(real)] = real
    mask = np.zeros(max_seq_len, dtype=np.int64)
    mask[: len(real)] = 1
    return EncodedInput(ids=ids, attention_mask=mask, real_len=len(real))
