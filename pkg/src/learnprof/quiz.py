"""Quiz content model: TOML parsing, serialization, and grading.

A quiz file is a TOML document with one ``[[questions]]`` table per question:

    [[questions]]
    id = "1665d1ef-961f-4451-a988-ec46121531f9"
    type = "MultipleChoice"
    prompt.prompt = "Which of these calls returns an error?"
    answer.answer = "`lookup(3)`"
    prompt.distractors = ["`lookup(0)`", "`lookup(1)`", "`lookup(2)`"]
    context = "Shown to the reader after they answer."

Question types and their answer payloads:

* ``MultipleChoice`` -- ``answer.answer`` is the single correct option text,
  ``prompt.distractors`` lists the incorrect options.
* ``MultipleSelect`` -- ``answer.answer`` is a list of correct option texts.
  Give either ``prompt.distractors`` (the incorrect options) or
  ``prompt.options`` (the full option list, correct ones included).
* ``ShortAnswer`` -- ``answer.answer`` is the accepted string; matching is
  whitespace-collapsed and case-insensitive unless ``answer.caseSensitive``.
* ``Tracing`` -- ``answer.doesCompile``, plus ``answer.stdout`` when it does
  compile; the program under test is the first fenced code block in the
  prompt.

Options are identified by their canonical text (display order may be
shuffled per session), so option texts must be unique within a question.
Optional per-question flags: ``prompt.distractorsShuffled`` (default true)
and ``justificationMode`` (default false).
"""

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class QuizError(Exception):
    """Base class for quiz content errors."""


class QuizParseError(QuizError):
    """Raised when a quiz document cannot be parsed into a valid Quiz."""


class GradeError(QuizError):
    """Raised when a submission does not match the question kind."""


class QuestionKind(str, Enum):
    MULTIPLE_CHOICE = "MultipleChoice"
    MULTIPLE_SELECT = "MultipleSelect"
    SHORT_ANSWER = "ShortAnswer"
    TRACING = "Tracing"


@dataclass(frozen=True)
class ChoiceKey:
    correct: str


@dataclass(frozen=True)
class MultiSelectKey:
    correct: tuple[str, ...]


@dataclass(frozen=True)
class ShortKey:
    accepted: str
    case_sensitive: bool = False


@dataclass(frozen=True)
class TracingKey:
    does_compile: bool
    expected_stdout: str | None = None

    def __post_init__(self):
        if not self.does_compile and self.expected_stdout is not None:
            raise ValueError("a non-compiling tracing key cannot carry expected stdout")


AnswerKey = Union[ChoiceKey, MultiSelectKey, ShortKey, TracingKey]


@dataclass(frozen=True)
class Question:
    id: str
    kind: QuestionKind
    prompt: str
    key: AnswerKey
    distractors: tuple[str, ...] = ()
    context: str = ""
    shuffle_distractors: bool = True
    justification_mode: bool = False
    # Full option list as declared via prompt.options, when that layout was
    # used; kept so validation can detect answers missing from the options.
    declared_options: tuple[str, ...] | None = None

    def options(self) -> tuple[str, ...]:
        """All option texts for choice-type questions, correct ones first."""
        if self.declared_options is not None:
            return self.declared_options
        if isinstance(self.key, ChoiceKey):
            return (self.key.correct,) + self.distractors
        if isinstance(self.key, MultiSelectKey):
            return self.key.correct + self.distractors
        return ()


@dataclass(frozen=True)
class Quiz:
    name: str
    questions: tuple[Question, ...]


@dataclass(frozen=True)
class TracingAnswer:
    does_compile: bool
    stdout: str | None = None


Submission = Union[str, Iterable[str], TracingAnswer]


@dataclass(frozen=True)
class GradedAnswer:
    score: int
    normalized: str


_WS_RE = re.compile(r"\s+")


def normalize_text(text: str, case_sensitive: bool = False) -> str:
    """Trim, collapse whitespace runs to single spaces, and casefold.

    Casefolding is skipped when case_sensitive is set. This is the matching
    rule for short answers and for tracing stdout comparison.
    """
    out = _WS_RE.sub(" ", text.strip())
    return out if case_sensitive else out.casefold()


def grade(question: Question, submission: Submission) -> GradedAnswer:
    """Score a submission against a question's answer key.

    Returns score 1 for a correct answer and 0 otherwise, along with a
    canonical string form of the submission (used for answer-distribution
    reporting). Raises GradeError when the submission shape does not match
    the question kind. Deterministic and total over valid pairs.
    """
    key = question.key
    if isinstance(key, ChoiceKey):
        if not isinstance(submission, str):
            raise GradeError(f"question {question.id}: expected a single option text")
        return GradedAnswer(int(submission == key.correct), submission)

    if isinstance(key, MultiSelectKey):
        if isinstance(submission, str) or not _is_str_iterable(submission):
            raise GradeError(f"question {question.id}: expected a collection of option texts")
        selected = set(submission)
        score = int(selected == set(key.correct))
        return GradedAnswer(score, " + ".join(sorted(selected)))

    if isinstance(key, ShortKey):
        if not isinstance(submission, str):
            raise GradeError(f"question {question.id}: expected answer text")
        normalized = normalize_text(submission, key.case_sensitive)
        expected = normalize_text(key.accepted, key.case_sensitive)
        return GradedAnswer(int(normalized == expected), normalized)

    if isinstance(key, TracingKey):
        answer = _coerce_tracing(question, submission)
        if answer.does_compile:
            norm_out = normalize_text(answer.stdout or "")
            normalized = f"compiles: {norm_out}"
            if not key.does_compile:
                return GradedAnswer(0, normalized)
            if key.expected_stdout is None:
                return GradedAnswer(1, normalized)
            return GradedAnswer(int(norm_out == normalize_text(key.expected_stdout)), normalized)
        normalized = "does not compile"
        return GradedAnswer(int(not key.does_compile), normalized)

    raise GradeError(f"question {question.id}: unsupported answer key {type(key).__name__}")


def _is_str_iterable(value: Any) -> bool:
    try:
        return all(isinstance(v, str) for v in value)
    except TypeError:
        return False


def _coerce_tracing(question: Question, submission: Any) -> TracingAnswer:
    if isinstance(submission, TracingAnswer):
        return submission
    if isinstance(submission, Mapping) and isinstance(submission.get("doesCompile"), bool):
        stdout = submission.get("stdout")
        if stdout is not None and not isinstance(stdout, str):
            raise GradeError(f"question {question.id}: tracing stdout must be text")
        return TracingAnswer(submission["doesCompile"], stdout)
    raise GradeError(f"question {question.id}: expected a tracing answer")


def submission_from_json(kind: QuestionKind, value: Any) -> Submission:
    """Coerce a raw wire-format answer into a gradable submission."""
    if kind in (QuestionKind.MULTIPLE_CHOICE, QuestionKind.SHORT_ANSWER):
        if not isinstance(value, str):
            raise GradeError(f"expected text answer for {kind.value}")
        return value
    if kind is QuestionKind.MULTIPLE_SELECT:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise GradeError("expected a list of option texts for MultipleSelect")
        return value
    if kind is QuestionKind.TRACING:
        if not isinstance(value, Mapping):
            raise GradeError("expected a tracing answer object")
        does_compile = value.get("doesCompile")
        if not isinstance(does_compile, bool):
            raise GradeError("tracing answer needs a boolean doesCompile")
        stdout = value.get("stdout")
        if stdout is not None and not isinstance(stdout, str):
            raise GradeError("tracing stdout must be text")
        return TracingAnswer(does_compile, stdout)
    raise GradeError(f"unknown question kind {kind}")


# --- Parsing ---------------------------------------------------------------


def parse_quiz(text: str, name: str = "quiz") -> Quiz:
    """Parse a TOML quiz document into a Quiz.

    Raises QuizParseError for TOML syntax errors (position included in the
    message), unknown question types, missing required fields, duplicate
    question ids, and quizzes with no questions.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise QuizParseError(f"{name}: syntax error: {exc}") from exc

    entries = data.get("questions")
    if not entries:
        raise QuizParseError(f"{name}: empty quiz (no [[questions]] entries)")
    if not isinstance(entries, list):
        raise QuizParseError(f"{name}: 'questions' must be an array of tables")

    questions = []
    seen_ids: set[str] = set()
    for pos, entry in enumerate(entries, start=1):
        question = _parse_question(entry, f"{name}: question {pos}")
        if question.id in seen_ids:
            raise QuizParseError(f"{name}: duplicate id {question.id!r}")
        seen_ids.add(question.id)
        questions.append(question)
    return Quiz(name=name, questions=tuple(questions))


def load_quiz(path: str | Path, quiz_root: str | Path | None = None) -> Quiz:
    """Load a quiz file; its name is the path relative to quiz_root, without
    the extension."""
    path = Path(path)
    if quiz_root is not None:
        rel = path.resolve().relative_to(Path(quiz_root).resolve())
        name = rel.with_suffix("").as_posix()
    else:
        name = path.stem
    return parse_quiz(path.read_text(encoding="utf-8"), name=name)


def _require(entry: Mapping, key: str, where: str) -> Any:
    if key not in entry:
        raise QuizParseError(f"{where}: missing required field '{key}'")
    return entry[key]


def _require_str(entry: Mapping, key: str, where: str) -> str:
    value = _require(entry, key, where)
    if not isinstance(value, str):
        raise QuizParseError(f"{where}: field '{key}' must be a string")
    return value


def _opt_str_list(entry: Mapping, key: str, where: str) -> tuple[str, ...] | None:
    if key not in entry:
        return None
    value = entry[key]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise QuizParseError(f"{where}: field '{key}' must be an array of strings")
    return tuple(value)


def _opt_bool(entry: Mapping, key: str, where: str, default: bool) -> bool:
    value = entry.get(key, default)
    if not isinstance(value, bool):
        raise QuizParseError(f"{where}: field '{key}' must be a boolean")
    return value


def _parse_question(entry: Any, where: str) -> Question:
    if not isinstance(entry, Mapping):
        raise QuizParseError(f"{where}: expected a table")

    qid = _require_str(entry, "id", where)
    if not qid:
        raise QuizParseError(f"{where}: id must be nonempty")
    where = f"{where} ({qid})"

    type_name = _require_str(entry, "type", where)
    try:
        kind = QuestionKind(type_name)
    except ValueError:
        valid = ", ".join(k.value for k in QuestionKind)
        raise QuizParseError(f"{where}: unknown question type {type_name!r} (expected one of {valid})") from None

    prompt_tbl = _require(entry, "prompt", where)
    if not isinstance(prompt_tbl, Mapping):
        raise QuizParseError(f"{where}: 'prompt' must be a table")
    prompt = _require_str(prompt_tbl, "prompt", where)
    distractors = _opt_str_list(prompt_tbl, "distractors", where) or ()
    declared_options = _opt_str_list(prompt_tbl, "options", where)
    shuffle = _opt_bool(prompt_tbl, "distractorsShuffled", where, True)

    answer_tbl = _require(entry, "answer", where)
    if not isinstance(answer_tbl, Mapping):
        raise QuizParseError(f"{where}: 'answer' must be a table")

    key: AnswerKey
    if kind is QuestionKind.MULTIPLE_CHOICE:
        key = ChoiceKey(_require_str(answer_tbl, "answer", where))
    elif kind is QuestionKind.MULTIPLE_SELECT:
        correct = _require(answer_tbl, "answer", where)
        if not isinstance(correct, list) or not all(isinstance(v, str) for v in correct):
            raise QuizParseError(f"{where}: MultipleSelect 'answer' must be an array of strings")
        key = MultiSelectKey(tuple(correct))
        if declared_options is not None:
            # Distractors are the declared options minus the correct ones.
            distractors = tuple(o for o in declared_options if o not in set(correct))
    elif kind is QuestionKind.SHORT_ANSWER:
        accepted = _require_str(answer_tbl, "answer", where)
        key = ShortKey(accepted, _opt_bool(answer_tbl, "caseSensitive", where, False))
    else:
        does_compile = answer_tbl.get("doesCompile")
        if not isinstance(does_compile, bool):
            raise QuizParseError(f"{where}: tracing question needs a boolean 'answer.doesCompile'")
        stdout = answer_tbl.get("stdout")
        if stdout is not None and not isinstance(stdout, str):
            raise QuizParseError(f"{where}: 'answer.stdout' must be a string")
        if not does_compile and stdout is not None:
            raise QuizParseError(f"{where}: 'answer.stdout' given but 'answer.doesCompile' is false")
        key = TracingKey(does_compile, stdout)

    context = entry.get("context", "")
    if not isinstance(context, str):
        raise QuizParseError(f"{where}: 'context' must be a string")

    return Question(
        id=qid,
        kind=kind,
        prompt=prompt,
        key=key,
        distractors=distractors,
        context=context,
        shuffle_distractors=shuffle,
        justification_mode=_opt_bool(entry, "justificationMode", where, False),
        declared_options=declared_options,
    )


# --- Serialization ---------------------------------------------------------


def _toml_str(value: str) -> str:
    # TOML basic strings share JSON's escape syntax, so json.dumps emits a
    # valid (if single-line) TOML string for arbitrary content.
    if "\n" in value and '"' not in value and "\\" not in value and _printable(value):
        return f'"""\n{value}"""'
    return json.dumps(value, ensure_ascii=False)


def _printable(value: str) -> bool:
    return all(ch == "\n" or ch == "\t" or ord(ch) >= 0x20 for ch in value)


def _toml_str_list(values: Iterable[str]) -> str:
    return "[" + ", ".join(json.dumps(v, ensure_ascii=False) for v in values) + "]"


def serialize_quiz(quiz: Quiz) -> str:
    """Render a Quiz back to TOML. parse_quiz(serialize_quiz(q)) == q."""
    lines: list[str] = []
    for q in quiz.questions:
        lines.append("[[questions]]")
        lines.append(f"id = {json.dumps(q.id)}")
        lines.append(f"type = {json.dumps(q.kind.value)}")
        lines.append(f"prompt.prompt = {_toml_str(q.prompt)}")
        if q.declared_options is not None:
            lines.append(f"prompt.options = {_toml_str_list(q.declared_options)}")
        elif q.distractors:
            lines.append(f"prompt.distractors = {_toml_str_list(q.distractors)}")
        if not q.shuffle_distractors:
            lines.append("prompt.distractorsShuffled = false")
        key = q.key
        if isinstance(key, ChoiceKey):
            lines.append(f"answer.answer = {_toml_str(key.correct)}")
        elif isinstance(key, MultiSelectKey):
            lines.append(f"answer.answer = {_toml_str_list(key.correct)}")
        elif isinstance(key, ShortKey):
            lines.append(f"answer.answer = {_toml_str(key.accepted)}")
            if key.case_sensitive:
                lines.append("answer.caseSensitive = true")
        else:
            lines.append(f"answer.doesCompile = {'true' if key.does_compile else 'false'}")
            if key.expected_stdout is not None:
                lines.append(f"answer.stdout = {_toml_str(key.expected_stdout)}")
        if q.context:
            lines.append(f"context = {_toml_str(q.context)}")
        if q.justification_mode:
            lines.append("justificationMode = true")
        lines.append("")
    return "\n".join(lines)


# --- JSON schema (placeholders, manifests, the reader widget) ---------------


def question_to_dict(q: Question) -> dict:
    prompt: dict[str, Any] = {"prompt": q.prompt}
    if q.declared_options is not None:
        prompt["options"] = list(q.declared_options)
    elif q.distractors:
        prompt["distractors"] = list(q.distractors)
    if not q.shuffle_distractors:
        prompt["distractorsShuffled"] = False

    key = q.key
    if isinstance(key, ChoiceKey):
        answer: dict[str, Any] = {"answer": key.correct}
    elif isinstance(key, MultiSelectKey):
        answer = {"answer": list(key.correct)}
        if q.declared_options is not None:
            prompt.setdefault("distractors", list(q.distractors))
    elif isinstance(key, ShortKey):
        answer = {"answer": key.accepted}
        if key.case_sensitive:
            answer["caseSensitive"] = True
    else:
        answer = {"doesCompile": key.does_compile}
        if key.expected_stdout is not None:
            answer["stdout"] = key.expected_stdout

    out: dict[str, Any] = {"id": q.id, "type": q.kind.value, "prompt": prompt, "answer": answer}
    if q.context:
        out["context"] = q.context
    if q.justification_mode:
        out["justificationMode"] = True
    return out


def question_from_dict(data: Mapping) -> Question:
    kind = QuestionKind(data["type"])
    prompt = data["prompt"]
    answer = data["answer"]
    declared = tuple(prompt["options"]) if "options" in prompt else None
    distractors = tuple(prompt.get("distractors", ()))

    key: AnswerKey
    if kind is QuestionKind.MULTIPLE_CHOICE:
        key = ChoiceKey(answer["answer"])
    elif kind is QuestionKind.MULTIPLE_SELECT:
        key = MultiSelectKey(tuple(answer["answer"]))
        if declared is not None and not distractors:
            correct = set(answer["answer"])
            distractors = tuple(o for o in declared if o not in correct)
    elif kind is QuestionKind.SHORT_ANSWER:
        key = ShortKey(answer["answer"], answer.get("caseSensitive", False))
    else:
        key = TracingKey(answer["doesCompile"], answer.get("stdout"))

    return Question(
        id=data["id"],
        kind=kind,
        prompt=prompt["prompt"],
        key=key,
        distractors=distractors,
        context=data.get("context", ""),
        shuffle_distractors=prompt.get("distractorsShuffled", True),
        justification_mode=data.get("justificationMode", False),
        declared_options=declared,
    )


def quiz_to_dict(quiz: Quiz) -> dict:
    return {"name": quiz.name, "questions": [question_to_dict(q) for q in quiz.questions]}


def quiz_from_dict(data: Mapping) -> Quiz:
    return Quiz(name=data["name"], questions=tuple(question_from_dict(q) for q in data["questions"]))
