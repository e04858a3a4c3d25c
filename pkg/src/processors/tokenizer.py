import re
from typing import Iterable, Iterator, List, TextIO

from src.core.errors import ArgumentError, TokenizationError
from src.core.models import TokenSequence

# Reaction-transformer SMILES pattern: bracket atoms first, Br/Cl before B/C,
# then %NN ring bonds before single-digit ones.
SMILES_TOKEN_PATTERN = (
    r"(\[[^\]]+]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p|\(|\)|\.|=|#|-|\+|\\|\/|:|~|@|\?|>|\*|\$|\%[0-9]{2}|[0-9])"
)
SMILES_TOKEN_REGEX = re.compile(SMILES_TOKEN_PATTERN)


class SmilesTokenizer:
    def __init__(self, regex: "re.Pattern[str]" = SMILES_TOKEN_REGEX):
        self.regex = regex

    def tokenize(self, smiles: str) -> TokenSequence:
        """Greedy left-to-right tokenization; fails on the first character the pattern cannot consume."""
        if not smiles:
            raise ArgumentError("Cannot tokenize an empty string")
        tokens: List[str] = []
        pos = 0
        while pos < len(smiles):
            match = self.regex.match(smiles, pos)
            if match is None:
                offset = len(smiles[:pos].encode("utf-8"))
                raise TokenizationError(smiles, offset, smiles[pos])
            tokens.append(match.group(0))
            pos = match.end()
        return TokenSequence(tuple(tokens), smiles)

    def tokenize_lines(self, lines: Iterable[str]) -> Iterator[str]:
        """Space-joined tokens per input line; blank lines pass through as blank."""
        for line in lines:
            smiles = line.rstrip("\r\n")
            yield str(self.tokenize(smiles)) if smiles else ""

    def tokenize_stream(self, source: TextIO, sink: TextIO) -> int:
        n = 0
        for out in self.tokenize_lines(source):
            sink.write(out + "\n")
            n += 1
        return n


_default = SmilesTokenizer()


def tokenize(smiles: str) -> TokenSequence:
    return _default.tokenize(smiles)
