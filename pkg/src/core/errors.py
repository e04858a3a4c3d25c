from typing import Optional


class RankFusionError(Exception):
    """Base error. Carries a process exit code and a human readable detail,
    the same way an HTTP exception carries status_code and detail."""

    exit_code = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ArgumentError(RankFusionError, ValueError):
    exit_code = 2


class ConfigurationError(RankFusionError):
    exit_code = 2


class DataError(RankFusionError, ValueError):
    exit_code = 3


class TokenizationError(DataError):
    def __init__(self, smiles: str, offset: int, char: str):
        super().__init__(f"Cannot tokenize character {char!r} at byte offset {offset} in {smiles!r}")
        self.smiles = smiles
        self.offset = offset
        self.char = char


class DegeneracyError(RankFusionError):
    exit_code = 4
