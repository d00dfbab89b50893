"""Quiz validation: schema checks plus semantic checks for tracing questions.

Tracing questions claim whether a program compiles (and what it prints).
Those claims are checked against a pluggable *compile oracle*: an external
command that reads a program on stdin and writes a JSON verdict
``{"compiles": bool, "stdout": "..."}`` to stdout. This keeps the toolkit
language-agnostic; wire up rustc, a JS runner, or a stub for tests.
"""

import json
import re
import shlex
import subprocess
import uuid
from dataclasses import dataclass, field
from typing import Sequence

from .quiz import (
    ChoiceKey,
    MultiSelectKey,
    Question,
    QuestionKind,
    Quiz,
    ShortKey,
    TracingKey,
    normalize_text,
)

SEVERITY_ERROR = "error"
SEVERITY_WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    question_id: str | None
    severity: str
    code: str
    message: str

    def to_dict(self) -> dict:
        return {
            "questionId": self.question_id,
            "severity": self.severity,
            "code": self.code,
            "message": self.message,
        }


@dataclass
class ValidationReport:
    quiz_name: str
    findings: list[Finding] = field(default_factory=list)
    oracle_checked: bool = False

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == SEVERITY_ERROR]

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "quizName": self.quiz_name,
            "oracleChecked": self.oracle_checked,
            "findings": [f.to_dict() for f in self.findings],
        }

    def to_text(self) -> str:
        if not self.findings:
            return f"{self.quiz_name}: ok"
        lines = [f"{self.quiz_name}: {len(self.errors)} error(s), "
                 f"{len(self.findings) - len(self.errors)} warning(s)"]
        for f in self.findings:
            where = f" [{f.question_id}]" if f.question_id else ""
            lines.append(f"  {f.severity}{where} {f.code}: {f.message}")
        return "\n".join(lines)


class OracleError(Exception):
    """The compile oracle could not produce a verdict."""


@dataclass(frozen=True)
class OracleResult:
    compiles: bool
    stdout: str = ""


class CompileOracle:
    """Runs an external command mapping a program to a compile verdict.

    The command receives the program on stdin and must print
    ``{"compiles": bool, "stdout": str}`` as JSON on stdout.
    """

    def __init__(self, command: str | Sequence[str], timeout: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout

    def check(self, program: str) -> OracleResult:
        try:
            proc = subprocess.run(
                self.command,
                input=program,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise OracleError(f"oracle command failed: {exc}") from exc
        if proc.returncode != 0:
            raise OracleError(f"oracle exited with status {proc.returncode}: {proc.stderr.strip()}")
        try:
            verdict = json.loads(proc.stdout)
            return OracleResult(bool(verdict["compiles"]), str(verdict.get("stdout", "")))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise OracleError(f"oracle produced malformed verdict: {exc}") from exc


_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def extract_program(prompt: str) -> str | None:
    """The program under test: the first fenced code block in the prompt."""
    m = _FENCE_RE.search(prompt)
    return m.group(1) if m else None


def schema_findings(question: Question) -> list[Finding]:
    """Content-level checks on a single parsed question."""
    findings: list[Finding] = []

    def err(code: str, message: str):
        findings.append(Finding(question.id, SEVERITY_ERROR, code, message))

    def warn(code: str, message: str):
        findings.append(Finding(question.id, SEVERITY_WARNING, code, message))

    try:
        uuid.UUID(question.id)
    except ValueError:
        warn("non-uuid-id", f"id {question.id!r} is not a UUID")

    if not question.prompt.strip():
        err("empty-prompt", "prompt is empty")

    key = question.key
    if isinstance(key, ChoiceKey):
        if not question.distractors:
            err("no-distractors", "multiple-choice question needs at least one distractor")
        _check_option_texts(question, err)
    elif isinstance(key, MultiSelectKey):
        if not key.correct:
            err("no-correct-options", "multiple-select question needs at least one correct option")
        options = question.options()
        if len(options) < 2:
            err("too-few-options", "multiple-select question needs at least two options")
        missing = [c for c in key.correct if c not in set(options)]
        if missing:
            err("answer-not-in-options",
                f"correct option(s) not among the declared options: {missing}")
        _check_option_texts(question, err)
    elif isinstance(key, ShortKey):
        if not normalize_text(key.accepted, key.case_sensitive):
            warn("empty-accepted", "accepted answer is empty after normalization")
    elif isinstance(key, TracingKey):
        if extract_program(question.prompt) is None:
            err("no-program", "tracing question has no fenced code block in its prompt")
        if key.does_compile and key.expected_stdout is None:
            warn("no-stdout", "no expected stdout; only the compile outcome will be graded")

    return findings


def _check_option_texts(question: Question, err) -> None:
    options = question.options()
    seen: set[str] = set()
    for text in options:
        if text in seen:
            err("duplicate-option", f"option text appears twice: {text!r}")
        seen.add(text)
        if not text.strip():
            err("empty-option", "option text is empty")


def validate_quiz(quiz: Quiz, oracle: CompileOracle | None = None) -> ValidationReport:
    """Check every question's schema and, when an oracle is available,
    tracing questions' claims against the oracle's verdict.

    An unavailable oracle is reported as a warning and semantic checks are
    skipped; schema findings are always produced.
    """
    report = ValidationReport(quiz_name=quiz.name)
    for q in quiz.questions:
        report.findings.extend(schema_findings(q))

    if oracle is None:
        return report

    oracle_ok = True
    for q in quiz.questions:
        if q.kind is not QuestionKind.TRACING or not oracle_ok:
            continue
        program = extract_program(q.prompt)
        if program is None:
            continue  # already an error finding
        try:
            result = oracle.check(program)
        except OracleError as exc:
            report.findings.append(Finding(
                None, SEVERITY_WARNING, "oracle-unavailable",
                f"compile oracle unavailable, semantic checks skipped: {exc}"))
            oracle_ok = False
            continue
        key = q.key
        assert isinstance(key, TracingKey)
        if result.compiles != key.does_compile:
            report.findings.append(Finding(
                q.id, SEVERITY_ERROR, "semantic-mismatch",
                f"answer key says doesCompile={key.does_compile} but the oracle says {result.compiles}"))
        elif result.compiles and key.expected_stdout is not None:
            if normalize_text(result.stdout) != normalize_text(key.expected_stdout):
                report.findings.append(Finding(
                    q.id, SEVERITY_ERROR, "stdout-mismatch",
                    f"expected stdout {key.expected_stdout!r} but the oracle printed {result.stdout!r}"))
    report.oracle_checked = oracle_ok
    return report
