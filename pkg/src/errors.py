from dataclasses import dataclass, field
from typing import ClassVar, Iterable


class HboError(Exception):
    error_class: ClassVar[str] = "hbo-error"


class InvalidConfigError(HboError, ValueError):
    error_class = "invalid-config"


class InvalidExampleError(HboError, ValueError):
    error_class = "invalid-example"


class InvalidBatchError(HboError, ValueError):
    error_class = "invalid-batch"


class InvalidIndexError(HboError, IndexError):
    error_class = "invalid-index"


class InvalidRewardError(HboError, ValueError):
    error_class = "invalid-reward"


class InvalidStateError(HboError, RuntimeError):
    error_class = "invalid-state"


class DegenerateStateError(HboError, ValueError):
    error_class = "degenerate-state"


class ContractError(HboError, RuntimeError):
    error_class = "internal-contract"


class CorruptFileError(HboError, ValueError):
    error_class = "corrupt-file"

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class MismatchedCorporaError(HboError, ValueError):
    error_class = "mismatched-corpora"


@dataclass(frozen=True, order=True)
class ConfigIssue:
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


@dataclass
class ConfigIssues:
    issues: list[ConfigIssue] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.issues

    def add(self, field_name: str, message: str) -> "ConfigIssues":
        self.issues.append(ConfigIssue(field_name, message))
        return self

    def update(self, other: "ConfigIssues") -> "ConfigIssues":
        self.issues.extend(other.issues)
        return self

    def raise_if_invalid(self) -> None:
        if not self.valid:
            raise ConfigError(self.issues)


class ConfigError(InvalidConfigError):
    def __init__(self, issues: Iterable[ConfigIssue]):
        self.issues = sorted(issues)
        super().__init__("; ".join(map(str, self.issues)))
