"""Book preprocessing: expand quiz directives in markdown chapters.

A chapter embeds a quiz with a directive such as ``{{#quiz ../quizzes/my-quiz.toml}}``
(path relative to the chapter file). Expansion replaces the directive with a
placeholder element whose data attributes carry the quiz name, the book's
commit hash, and the full quiz schema as JSON, so the published site needs no
backend to render quizzes. Everything outside directives is left byte-identical.
"""

import html
import json
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .quiz import Question, Quiz, load_quiz, quiz_from_dict, quiz_to_dict
from .validate import CompileOracle, ValidationReport, validate_quiz

DIRECTIVE_RE = re.compile(r"\{\{#quiz\s+([^{}]+?)\s*\}\}")


class BuildError(Exception):
    """A chapter or quiz prevented the book from building."""


@dataclass(frozen=True)
class QuizDirective:
    source_chapter: str
    quiz_path: str
    span: tuple[int, int]


@dataclass(frozen=True)
class ChapterEntry:
    number: int
    title: str
    path: str


@dataclass
class BookManifest:
    commit_hash: str
    chapters: list[ChapterEntry] = field(default_factory=list)
    # quiz name -> (chapter number, quiz)
    quizzes: dict[str, tuple[int, Quiz]] = field(default_factory=dict)

    def question_chapter(self) -> dict[str, int]:
        """Map every question id to the chapter hosting its quiz."""
        out: dict[str, int] = {}
        for chapter, quiz in self.quizzes.values():
            for q in quiz.questions:
                out[q.id] = chapter
        return out

    def questions(self) -> dict[str, Question]:
        out: dict[str, Question] = {}
        for _, quiz in self.quizzes.values():
            for q in quiz.questions:
                out[q.id] = q
        return out

    def to_dict(self) -> dict:
        return {
            "commitHash": self.commit_hash,
            "chapters": [
                {"number": c.number, "title": c.title, "path": c.path} for c in self.chapters
            ],
            "quizzes": {
                name: {"chapter": chapter, "quiz": quiz_to_dict(quiz)}
                for name, (chapter, quiz) in sorted(self.quizzes.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BookManifest":
        manifest = cls(commit_hash=data["commitHash"])
        manifest.chapters = [
            ChapterEntry(c["number"], c["title"], c["path"]) for c in data["chapters"]
        ]
        manifest.quizzes = {
            name: (entry["chapter"], quiz_from_dict(entry["quiz"]))
            for name, entry in data["quizzes"].items()
        }
        return manifest

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BookManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_registry(manifests: Iterable[BookManifest]) -> dict[tuple[str, str], Question]:
    """Versioned grading keys: (commit hash, question id) -> question.

    Telemetry is regraded against the content version the reader actually
    saw, so patched questions do not corrupt older responses.
    """
    registry: dict[tuple[str, str], Question] = {}
    for manifest in manifests:
        for qid, question in manifest.questions().items():
            registry[(manifest.commit_hash, qid)] = question
    return registry


def placeholder_element(quiz_name: str, quiz: Quiz, commit_hash: str) -> str:
    schema = json.dumps(quiz_to_dict(quiz), ensure_ascii=False, separators=(",", ":"))
    return (
        '<div class="quiz-placeholder" '
        f'data-quiz-name="{html.escape(quiz_name, quote=True)}" '
        f'data-commit-hash="{html.escape(commit_hash, quote=True)}" '
        f'data-quiz="{html.escape(schema, quote=True)}"></div>'
    )


def expand_chapter(
    text: str,
    resolver: Callable[[str], tuple[str, Quiz]],
    commit_hash: str,
    source: str = "chapter",
) -> tuple[str, list[QuizDirective]]:
    """Replace each quiz directive with its placeholder element.

    ``resolver`` maps the directive's quiz path to (quiz name, quiz), raising
    FileNotFoundError or KeyError on an unresolvable path -- which becomes a
    BuildError naming the chapter and path. Chapters without directives come
    back unchanged, and expansion is idempotent.
    """
    directives: list[QuizDirective] = []

    def replace(m: re.Match) -> str:
        quiz_path = m.group(1)
        try:
            name, quiz = resolver(quiz_path)
        except (FileNotFoundError, KeyError) as exc:
            raise BuildError(f"{source}: cannot resolve quiz {quiz_path!r}: {exc}") from exc
        directives.append(QuizDirective(source, quiz_path, m.span()))
        return placeholder_element(name, quiz, commit_hash)

    return DIRECTIVE_RE.sub(replace, text), directives


@dataclass
class BuildConfig:
    book_root: Path
    quiz_dir: Path
    out_dir: Path
    commit_hash: str | None = None
    oracle: CompileOracle | None = None


def resolve_commit_hash(config: BuildConfig) -> str:
    if config.commit_hash:
        value = config.commit_hash.lower()
        if not re.fullmatch(r"[0-9a-f]{40}", value):
            raise BuildError(f"commit hash must be 40 hex characters, got {config.commit_hash!r}")
        return value
    try:
        proc = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=config.book_root,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except OSError as exc:
        raise BuildError(f"no commit hash given and git is unavailable: {exc}") from exc
    if proc.returncode != 0:
        raise BuildError("no commit hash given and the book root is not a git checkout")
    return proc.stdout.strip()


def _chapter_title(text: str, path: Path) -> str:
    for line in text.splitlines():
        if line.startswith("# "):
            return line[2:].strip()
    return path.stem


def build_book(config: BuildConfig) -> tuple[BookManifest, list[ValidationReport]]:
    """Validate every quiz, expand every chapter, and write the site tree.

    Chapters are the ``*.md`` files under the book root in lexical order;
    their position in that order is the chapter number used downstream for
    drop-off analysis. Any error-severity validation finding, unresolvable
    directive, or quiz referenced from two chapters aborts the build.
    """
    book_root = Path(config.book_root)
    quiz_dir = Path(config.quiz_dir)
    out_dir = Path(config.out_dir)
    commit_hash = resolve_commit_hash(config)

    chapter_paths = sorted(
        p for p in book_root.rglob("*.md") if out_dir not in p.parents and p != out_dir
    )
    if not chapter_paths:
        raise BuildError(f"no markdown chapters under {book_root}")

    reports: list[ValidationReport] = []
    quizzes: dict[str, Quiz] = {}
    for quiz_path in sorted(quiz_dir.rglob("*.toml")):
        quiz = load_quiz(quiz_path, quiz_root=quiz_dir)
        quizzes[quiz.name] = quiz
        report = validate_quiz(quiz, config.oracle)
        reports.append(report)
    bad = [r for r in reports if not r.ok]
    if bad:
        details = "\n".join(r.to_text() for r in bad)
        raise BuildError(f"quiz validation failed:\n{details}")

    manifest = BookManifest(commit_hash=commit_hash)
    out_dir.mkdir(parents=True, exist_ok=True)

    for number, chapter_path in enumerate(chapter_paths, start=1):
        rel = chapter_path.relative_to(book_root)
        text = chapter_path.read_text(encoding="utf-8")
        manifest.chapters.append(ChapterEntry(number, _chapter_title(text, chapter_path), rel.as_posix()))

        def resolver(directive_path: str, _chapter=chapter_path) -> tuple[str, Quiz]:
            resolved = (_chapter.parent / directive_path).resolve()
            try:
                name = resolved.relative_to(quiz_dir.resolve()).with_suffix("").as_posix()
            except ValueError:
                raise FileNotFoundError(f"{resolved} is outside the quiz directory") from None
            if name not in quizzes:
                raise FileNotFoundError(resolved)
            return name, quizzes[name]

        expanded, directives = expand_chapter(text, resolver, commit_hash, source=rel.as_posix())
        for directive in directives:
            resolved = (chapter_path.parent / directive.quiz_path).resolve()
            name = resolved.relative_to(quiz_dir.resolve()).with_suffix("").as_posix()
            if name in manifest.quizzes:
                raise BuildError(
                    f"quiz {name!r} is embedded more than once "
                    f"(chapters {manifest.quizzes[name][0]} and {number})")
            manifest.quizzes[name] = (number, quizzes[name])

        target = out_dir / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(expanded, encoding="utf-8")

    manifest.save(out_dir / "manifest.json")
    return manifest, reports
