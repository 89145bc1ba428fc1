import hashlib
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import chain
from pathlib import Path
from typing import Iterable, Literal, Optional, TextIO, get_args

from errors import ConfigIssues, CorruptFileError, InvalidConfigError
from jsonl import decode_line

CORPUS_FORMAT = "hbo-corpus"
CORPUS_VERSION = 1

GeneratorKind = Literal["markov-chain", "template-grammar"]


@dataclass(frozen=True)
class ExampleRecord:
    instruction: tuple[int, ...]
    response: tuple[int, ...]
    subset_id: int
    group_id: Optional[int] = None
    difficulty: Optional[float] = None
    index: int = field(default=0, compare=False)

    def tokens(self) -> Iterable[int]:
        return chain(self.instruction, self.response)

    def with_group(self, group_id: int, difficulty: float) -> "ExampleRecord":
        return replace(self, group_id=group_id, difficulty=float(difficulty))


@dataclass(frozen=True)
class SubsetSpec:
    generator_kind: GeneratorKind = "markov-chain"
    transition_entropy: float = 0.5
    size: int = 1000
    noise_spread: float = 0.3
    noise_floor: float = 0.0
    instruction_length: int = 4
    response_length: int = 8
    template_count: int = 16
    name: str = ""

    def validate(self, prefix: str = "subset") -> ConfigIssues:
        issues = ConfigIssues()
        if self.generator_kind not in get_args(GeneratorKind):
            issues.add(
                f"{prefix}.kind",
                f"unknown generator {self.generator_kind!r}, "
                f"expected one of {', '.join(get_args(GeneratorKind))}",
            )
        if not 0.0 < self.transition_entropy <= 1.0:
            issues.add(f"{prefix}.transition_entropy", "must lie in (0, 1]")
        if self.size < 1:
            issues.add(f"{prefix}.size", "must be at least 1")
        if self.noise_spread < 0.0:
            issues.add(f"{prefix}.noise_spread", "must be non-negative")
        if not 0.0 <= self.noise_floor <= 1.0:
            issues.add(f"{prefix}.noise_floor", "must lie in [0, 1]")
        if self.instruction_length < 1:
            issues.add(f"{prefix}.instruction_length", "must be at least 1")
        if self.response_length < 1:
            issues.add(f"{prefix}.response_length", "must be at least 1")
        if self.template_count < 1:
            issues.add(f"{prefix}.template_count", "must be at least 1")
        return issues


@dataclass(frozen=True)
class Subset:
    groups: tuple[tuple[ExampleRecord, ...], ...]

    @cached_property
    def examples(self) -> tuple[ExampleRecord, ...]:
        return tuple(chain.from_iterable(self.groups))

    @property
    def size(self) -> int:
        return len(self.examples)

    @property
    def group_sizes(self) -> list[int]:
        return [len(g) for g in self.groups]

    @property
    def partitioned(self) -> bool:
        return all(e.group_id is not None for e in self.examples)


@dataclass(frozen=True)
class MixtureCorpus:
    subsets: tuple[Subset, ...]
    vocab_size: int

    @classmethod
    def unpartitioned(
        cls, subsets: Iterable[Iterable[ExampleRecord]], vocab_size: int
    ) -> "MixtureCorpus":
        return cls(tuple(Subset((tuple(s),)) for s in subsets), vocab_size)

    @property
    def subset_count(self) -> int:
        return len(self.subsets)

    @property
    def sizes(self) -> list[int]:
        return [s.size for s in self.subsets]

    @property
    def partitioned(self) -> bool:
        return all(s.partitioned for s in self.subsets)

    @property
    def group_count(self) -> int:
        counts = {len(s.groups) for s in self.subsets}
        if len(counts) != 1:
            raise InvalidConfigError(f"Subsets have differing group counts {counts}")
        return counts.pop()

    def examples(self) -> Iterable[ExampleRecord]:
        return chain.from_iterable(s.examples for s in self.subsets)

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for line in _body_lines(self):
            digest.update(line.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()


def _body_lines(corpus: MixtureCorpus) -> Iterable[str]:
    # Field order: subset_id, group_id, difficulty, instruction, response
    for example in corpus.examples():
        yield json.dumps(
            [
                example.subset_id,
                example.group_id,
                example.difficulty,
                list(example.instruction),
                list(example.response),
            ],
            separators=(",", ":"),
        )


def write_corpus(corpus: MixtureCorpus, out: TextIO, provenance: dict = None) -> None:
    header = {
        "format": CORPUS_FORMAT,
        "version": CORPUS_VERSION,
        "vocab_size": corpus.vocab_size,
        "subsets": corpus.subset_count,
        "fields": ["subset_id", "group_id", "difficulty", "instruction", "response"],
    }
    if provenance:
        header["provenance"] = provenance
    out.write(json.dumps(header, sort_keys=True) + "\n")
    for line in _body_lines(corpus):
        out.write(line + "\n")


def save_corpus(corpus: MixtureCorpus, path: Path, provenance: dict = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as out:
        write_corpus(corpus, out, provenance)
    return path


def load_corpus(path: Path) -> MixtureCorpus:
    lines = [
        decode_line(path, number, raw)
        for number, raw in enumerate(path.read_bytes().splitlines(), start=1)
    ]
    if not lines:
        raise CorruptFileError(path, 1, "empty corpus file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptFileError(path, 1, f"unreadable header ({exc.msg})") from exc
    if not isinstance(header, dict) or header.get("format") != CORPUS_FORMAT:
        raise CorruptFileError(path, 1, "not a corpus file")
    if header.get("version") != CORPUS_VERSION:
        raise CorruptFileError(path, 1, f"unsupported version {header.get('version')}")
    if not all(isinstance(header.get(key), int) for key in ("vocab_size", "subsets")):
        raise CorruptFileError(path, 1, "header lacks vocab_size or subsets")
    vocab_size = header["vocab_size"]
    members: list[dict[Optional[int], list[ExampleRecord]]] = [
        {} for _ in range(header["subsets"])
    ]
    for number, line in enumerate(lines[1:], start=2):
        example = _parse_example(path, number, line, vocab_size, len(members))
        subset = members[example.subset_id]
        example = replace(example, index=sum(map(len, subset.values())))
        subset.setdefault(example.group_id, []).append(example)
    subsets = []
    for subset_id, groups in enumerate(members):
        if None in groups and len(groups) > 1:
            raise CorruptFileError(
                path, 1, f"subset {subset_id} mixes grouped and ungrouped examples"
            )
        subsets.append(Subset(tuple(tuple(groups[k]) for k in sorted(groups, key=_gk))))
    return MixtureCorpus(tuple(subsets), vocab_size)


def _gk(group_id: Optional[int]) -> int:
    return -1 if group_id is None else group_id


def _parse_example(
    path: Path, number: int, line: str, vocab_size: int, subset_count: int
) -> ExampleRecord:
    try:
        subset_id, group_id, difficulty, instruction, response = json.loads(line)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CorruptFileError(path, number, "malformed example record") from exc
    if not isinstance(subset_id, int) or not 0 <= subset_id < subset_count:
        raise CorruptFileError(path, number, f"subset id {subset_id!r} out of range")
    if group_id is not None and (not isinstance(group_id, int) or group_id < 0):
        raise CorruptFileError(path, number, f"invalid group id {group_id!r}")
    tokens = [*instruction, *response]
    if not instruction or not response:
        raise CorruptFileError(path, number, "empty instruction or response")
    if not all(isinstance(t, int) and 0 <= t < vocab_size for t in tokens):
        raise CorruptFileError(path, number, "token outside vocabulary")
    return ExampleRecord(
        instruction=tuple(instruction),
        response=tuple(response),
        subset_id=subset_id,
        group_id=group_id,
        difficulty=None if difficulty is None else float(difficulty),
    )
