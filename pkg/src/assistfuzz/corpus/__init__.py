"""Bundled challenge programs: assembler sources plus known-bug manifests.

Layout: one directory per program holding `program.hasm` and a key=value
`manifest.txt` (name, archetype, complexity/expertise tags, bug entries
with hex witness inputs).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..vm import Assembler, ProgramImage, execute, load_image

CORPUS_ROOT = Path(__file__).parent


@dataclass(frozen=True)
class KnownBug:
    kind: str
    block_label: str
    description: str
    witness: bytes

    def dedupe_key(self, labels: dict[str, int], block_of: tuple[int, ...]) -> tuple[str, int]:
        addr = labels[self.block_label]
        return (self.kind, block_of[addr // 8])


@dataclass(frozen=True)
class ChallengeManifest:
    name: str
    archetype: str
    semantic_complexity: str
    technical_expertise: str
    known_bugs: tuple[KnownBug, ...]
    shallow: bool = False

    @property
    def group(self) -> str:
        return f"{self.semantic_complexity}/{self.technical_expertise}"


@dataclass(frozen=True)
class ChallengeProgram:
    manifest: ChallengeManifest
    image: ProgramImage
    source: str
    labels: dict[str, int] = field(repr=False, default_factory=dict)

    def bug_blocks(self) -> dict[tuple[str, int], KnownBug]:
        return {
            bug.dedupe_key(self.labels, self.image.block_of): bug
            for bug in self.manifest.known_bugs
        }


class ManifestViolation(Exception):
    def __init__(self, program: str, bug: str, detail: str) -> None:
        self.program = program
        self.bug = bug
        super().__init__(f"{program}: bug {bug}: {detail}")


def parse_manifest(text: str) -> ChallengeManifest:
    kv: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#") and "=" in line:
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
    bugs = []
    i = 0
    while f"bug.{i}.kind" in kv:
        witness = kv.get(f"bug.{i}.witness", "hex:")
        if not witness.startswith("hex:"):
            raise ValueError(f"bug.{i}.witness must be hex-encoded")
        bugs.append(
            KnownBug(
                kind=kv[f"bug.{i}.kind"],
                block_label=kv[f"bug.{i}.block"],
                description=kv.get(f"bug.{i}.description", ""),
                witness=bytes.fromhex(witness[4:]),
            )
        )
        i += 1
    return ChallengeManifest(
        name=kv["name"],
        archetype=kv.get("archetype", ""),
        semantic_complexity=kv.get("semantic_complexity", "low"),
        technical_expertise=kv.get("technical_expertise", "low"),
        known_bugs=tuple(bugs),
        shallow=kv.get("shallow", "0") == "1",
    )


def program_names(root: Path | None = None) -> list[str]:
    root = root or CORPUS_ROOT
    return sorted(
        p.parent.name for p in root.glob("*/program.hasm")
    )


def load_program(name: str, root: Path | None = None) -> ChallengeProgram:
    root = root or CORPUS_ROOT
    source = (root / name / "program.hasm").read_text()
    manifest = parse_manifest((root / name / "manifest.txt").read_text())
    asm = Assembler()
    blob = asm.assemble(source)
    return ChallengeProgram(
        manifest=manifest, image=load_image(blob), source=source, labels=dict(asm.labels)
    )


def load_corpus(root: Path | None = None) -> list[ChallengeProgram]:
    return [load_program(name, root) for name in program_names(root)]


@dataclass
class CorpusReport:
    programs: list[dict] = field(default_factory=list)

    def __str__(self) -> str:
        lines = []
        for p in self.programs:
            lines.append(
                f"{p['name']}: {p['blocks']} blocks, "
                f"{p['bugs_checked']} bug witness(es) verified"
            )
        return "\n".join(lines) or "(empty corpus)"


def verify_corpus(root: Path | None = None) -> CorpusReport:
    """Execute every manifest witness and check it crashes with the stated
    kind at the stated block.  Raises ManifestViolation on any mismatch."""
    report = CorpusReport()
    for prog in load_corpus(root):
        name = prog.manifest.name
        for i, bug in enumerate(prog.manifest.known_bugs):
            if bug.block_label not in prog.labels:
                raise ManifestViolation(name, str(i), f"unknown label {bug.block_label!r}")
            result = execute(prog.image, bug.witness)
            if result.status != "crashed" or result.crash is None:
                raise ManifestViolation(name, str(i), f"witness did not crash ({result.status})")
            want_kind, want_block = bug.dedupe_key(prog.labels, prog.image.block_of)
            got = (result.crash.kind, result.crash.block)
            if got != (want_kind, want_block):
                raise ManifestViolation(
                    name, str(i),
                    f"expected {(want_kind, hex(want_block))}, got {(got[0], hex(got[1]))}",
                )
        report.programs.append(
            {
                "name": name,
                "blocks": prog.image.num_blocks,
                "bugs_checked": len(prog.manifest.known_bugs),
                "group": prog.manifest.group,
            }
        )
    return report
