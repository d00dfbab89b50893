#!/usr/bin/env python3
"""Regenerate tests/fixtures/grading_corpus.json.

The corpus pins the grading semantics shared by the analysis pipeline and
the reader-facing widget: for each question, a set of wire-format
submissions with the score and normalized form the grader must produce.
Both sides test against this file, so they cannot drift apart silently.
"""

import json
from pathlib import Path

from learnprof.quiz import grade, question_from_dict, submission_from_json

QUESTIONS = [
    {
        "id": "c0a80001-0001-4001-8001-000000000001",
        "type": "MultipleChoice",
        "prompt": {"prompt": "Pick the keyed option.", "distractors": ["off by one", "off by two"]},
        "answer": {"answer": "keyed"},
        "context": "Explanation shown after answering.",
    },
    {
        "id": "c0a80001-0001-4001-8001-000000000002",
        "type": "MultipleSelect",
        "prompt": {"prompt": "Select both allocating operations.",
                   "distractors": ["indexing", "comparison"]},
        "answer": {"answer": ["growth", "copy"]},
    },
    {
        "id": "c0a80001-0001-4001-8001-000000000003",
        "type": "MultipleSelect",
        "prompt": {"prompt": "Options layout variant.",
                   "options": ["north", "south", "east", "west"]},
        "answer": {"answer": ["south"]},
    },
    {
        "id": "c0a80001-0001-4001-8001-000000000004",
        "type": "ShortAnswer",
        "prompt": {"prompt": "Name the toolchain manager."},
        "answer": {"answer": "rustup"},
    },
    {
        "id": "c0a80001-0001-4001-8001-000000000005",
        "type": "ShortAnswer",
        "prompt": {"prompt": "Spell the type exactly."},
        "answer": {"answer": "BTreeMap", "caseSensitive": True},
    },
    {
        "id": "c0a80001-0001-4001-8001-000000000006",
        "type": "Tracing",
        "prompt": {"prompt": "What does it print?\n```\nprint 1 2\nprint 3\n```"},
        "answer": {"doesCompile": True, "stdout": "1 2\n3"},
    },
    {
        "id": "c0a80001-0001-4001-8001-000000000007",
        "type": "Tracing",
        "prompt": {"prompt": "Does it compile?\n```\nbroken does-not-compile\n```"},
        "answer": {"doesCompile": False},
    },
]

SUBMISSIONS = {
    "c0a80001-0001-4001-8001-000000000001": [
        "keyed", "off by one", "off by two", "KEYED", "keyed ",
    ],
    "c0a80001-0001-4001-8001-000000000002": [
        ["growth", "copy"], ["copy", "growth"], ["growth"],
        ["growth", "copy", "indexing"], [], ["indexing", "comparison"],
    ],
    "c0a80001-0001-4001-8001-000000000003": [
        ["south"], ["north"], ["south", "east"],
    ],
    "c0a80001-0001-4001-8001-000000000004": [
        "rustup", "  Rustup ", "RUSTUP", "rust  up", "cargo", "r u s t u p",
    ],
    "c0a80001-0001-4001-8001-000000000005": [
        "BTreeMap", "btreemap", " BTreeMap ", "BTREEMAP",
    ],
    "c0a80001-0001-4001-8001-000000000006": [
        {"doesCompile": True, "stdout": "1 2\n3"},
        {"doesCompile": True, "stdout": "  1   2 3  "},
        {"doesCompile": True, "stdout": "1 2 4"},
        {"doesCompile": True, "stdout": ""},
        {"doesCompile": False},
    ],
    "c0a80001-0001-4001-8001-000000000007": [
        {"doesCompile": False},
        {"doesCompile": True, "stdout": "anything"},
    ],
}


def main():
    corpus = []
    for qdict in QUESTIONS:
        question = question_from_dict(qdict)
        cases = []
        for raw in SUBMISSIONS[question.id]:
            graded = grade(question, submission_from_json(question.kind, raw))
            cases.append({"submission": raw, "score": graded.score,
                          "normalized": graded.normalized})
        corpus.append({"question": qdict, "cases": cases})
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "grading_corpus.json"
    out.write_text(json.dumps(corpus, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {out} ({sum(len(c['cases']) for c in corpus)} cases)")


if __name__ == "__main__":
    main()
