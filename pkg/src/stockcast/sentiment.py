"""Lexicon and rule based sentiment scoring in the style of VADER.

Implemented rules: lexicon lookup, negation within the three preceding
tokens, ALL-CAPS emphasis, booster/dampener words with distance decay, and
exclamation/question-mark emphasis. The "but" clause rule and the idiom
tables of the full VADER tool are not implemented.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from importlib import resources
from types import MappingProxyType
from typing import Mapping, NamedTuple

from .errors import EmptyLexicon, ValidationError

ALPHA = 15.0
NEGATION_SCALAR = -0.74
CAPS_INCREMENT = 0.733
BOOSTER_INCREMENT = 0.293
EXCLAMATION_INCREMENT = 0.292
MAX_EXCLAMATIONS = 4
# distance 1, 2, 3 before the scored token
BOOSTER_DECAY = (1.0, 0.95, 0.9)

NEGATORS = frozenset("""
aint arent cannot cant couldnt darent didnt doesnt ain't aren't can't couldn't
daren't didn't doesn't dont hadnt hasnt havent isnt mightnt mustnt neither
don't hadn't hasn't haven't isn't mightn't mustn't neednt needn't never none
nope nor not nothing nowhere oughtnt shant shouldnt uhuh wasnt werent oughtn't
shan't shouldn't uh-uh wasn't weren't without wont wouldnt won't wouldn't
rarely seldom despite
""".split())

_UP = """
absolutely amazingly awfully completely considerable considerably decidedly
deeply effing enormous enormously entirely especially exceptional exceptionally
extreme extremely fabulously flipping flippin frackin fracking fricking frickin
frigging friggin fully fuckin fucking fuggin fugging greatly hella highly
hugely incredible incredibly intensely major majorly more most particularly
purely quite really remarkably so substantially thoroughly total totally
tremendous tremendously uber unbelievably unusually utter utterly very
""".split()
_DOWN = """
almost barely hardly kinda kindof kind-of less little marginal marginally
occasional occasionally partly scarce scarcely slight slightly somewhat sorta
sortof sort-of
""".split()
BOOSTERS = MappingProxyType(
    {**{w: BOOSTER_INCREMENT for w in _UP}, **{w: -BOOSTER_INCREMENT for w in _DOWN}}
)


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, float]
    boosters: Mapping[str, float] = field(default_factory=lambda: BOOSTERS)
    negators: frozenset = NEGATORS

    def __post_init__(self):
        for token, valence in self.entries.items():
            if not token or any(c.isspace() for c in token):
                raise ValidationError(f"lexicon token contains whitespace: {token!r}")
            if not math.isfinite(valence):
                raise ValidationError(f"non-finite valence for {token!r}")
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def __len__(self):
        return len(self.entries)

    def negated(self) -> "Lexicon":
        """Copy with every valence sign-flipped."""
        return Lexicon({k: -v for k, v in self.entries.items()}, self.boosters, self.negators)


def parse_lexicon(text: str) -> Lexicon:
    """Parse ``token<TAB>valence`` lines. Extra tab-separated columns are ignored."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise ValidationError(f"lexicon line {lineno}: expected token<TAB>valence")
        try:
            entries[parts[0].lower()] = float(parts[1])
        except ValueError:
            raise ValidationError(f"lexicon line {lineno}: bad valence {parts[1]!r}") from None
    return Lexicon(entries)


def load_lexicon(path=None) -> Lexicon:
    """Load a lexicon file; with no path, the bundled VADER lexicon."""
    if path is None:
        text = resources.files("stockcast").joinpath("data/vader_lexicon.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_lexicon(text)


class Tokens(NamedTuple):
    tokens: list[str]
    exclamations: int
    questions: int


def _strip_token(token: str) -> str:
    # short remainders are emoticons like ":)" or ":-)"; keep them whole
    stripped = token.strip(string.punctuation)
    return token if len(stripped) <= 2 else stripped


def tokenize(text: str) -> Tokens:
    """Whitespace tokens with surrounding punctuation stripped.

    >>> tokenize("GOOD stock!!")
    Tokens(tokens=['GOOD', 'stock'], exclamations=2, questions=0)
    """
    return Tokens([_strip_token(t) for t in text.split()], text.count("!"), text.count("?"))


@dataclass(frozen=True)
class SentimentScore:
    compound: float
    pos: float
    neu: float
    neg: float


def normalize(raw: float, alpha: float = ALPHA) -> float:
    return raw / math.sqrt(raw * raw + alpha)


def _is_negator(word: str, lexicon: Lexicon) -> bool:
    return word in lexicon.negators or "n't" in word


def _booster(word: str, valence: float, cap_diff: bool, lexicon: Lexicon) -> float:
    scalar = lexicon.boosters.get(word.lower(), 0.0)
    if scalar == 0.0:
        return 0.0
    if valence < 0:
        scalar = -scalar
    if cap_diff and word.isupper():
        scalar += CAPS_INCREMENT if valence > 0 else -CAPS_INCREMENT
    return scalar


def token_valences(tokens: list[str], lexicon: Lexicon) -> list[float]:
    """Rule-adjusted valence of every token (0.0 for non-lexicon tokens)."""
    n_caps = sum(1 for t in tokens if t.isupper())
    cap_diff = 0 < len(tokens) - n_caps < len(tokens)
    lowered = [t.lower() for t in tokens]
    out = []
    for i, (token, low) in enumerate(zip(tokens, lowered)):
        if low in lexicon.boosters or low not in lexicon.entries:
            out.append(0.0)
            continue
        valence = lexicon.entries[low]
        if cap_diff and token.isupper():
            valence += CAPS_INCREMENT if valence > 0 else -CAPS_INCREMENT
        for dist in range(1, 4):
            j = i - dist
            if j < 0 or lowered[j] in lexicon.entries:
                continue
            s = _booster(tokens[j], valence, cap_diff, lexicon)
            valence += s * BOOSTER_DECAY[dist - 1]
            if _is_negator(lowered[j], lexicon):
                valence *= NEGATION_SCALAR
        out.append(valence)
    return out


def _punctuation_emphasis(exclamations: int, questions: int) -> float:
    amp = min(exclamations, MAX_EXCLAMATIONS) * EXCLAMATION_INCREMENT
    if questions > 3:
        amp += 0.96
    elif questions > 1:
        amp += questions * 0.18
    return amp


def score(text: str, lexicon: Lexicon) -> SentimentScore:
    """Score a text; ``compound`` is the normalized rule-adjusted valence sum."""
    if not lexicon.entries:
        raise EmptyLexicon("lexicon has no entries")
    tok = tokenize(text)
    valences = token_valences(tok.tokens, lexicon)
    if not valences:
        return SentimentScore(0.0, 0.0, 1.0, 0.0)

    raw = math.fsum(valences)
    amp = _punctuation_emphasis(tok.exclamations, tok.questions)
    if raw > 0:
        raw += amp
    elif raw < 0:
        raw -= amp
    compound = normalize(raw)

    pos = math.fsum(v + 1.0 for v in valences if v > 0)
    neg = math.fsum(v - 1.0 for v in valences if v < 0)
    neu = float(sum(1 for v in valences if v == 0))
    if pos > -neg:
        pos += amp
    elif pos < -neg:
        neg -= amp
    total = pos - neg + neu
    return SentimentScore(compound, pos / total, neu / total, -neg / total)


class Analyzer:
    """Scorer bound to one lexicon (bundled VADER lexicon by default)."""

    def __init__(self, lexicon: Lexicon | None = None):
        self.lexicon = lexicon if lexicon is not None else load_lexicon()

    def __call__(self, text: str) -> SentimentScore:
        return score(text, self.lexicon)

    def compound(self, text: str) -> float:
        return score(text, self.lexicon).compound
