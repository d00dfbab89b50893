import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { gradeQuestion, normalizeText } from "../src/grading";
import { QuestionSchema, Submission } from "../src/types";

interface CorpusCase {
  submission: Submission;
  score: 0 | 1;
  normalized: string;
}

interface CorpusEntry {
  question: QuestionSchema;
  cases: CorpusCase[];
}

const corpusPath = fileURLToPath(
  new URL("../../tests/fixtures/grading_corpus.json", import.meta.url),
);
const corpus: CorpusEntry[] = JSON.parse(readFileSync(corpusPath, "utf-8"));

describe("grading corpus cross-check", () => {
  it("has every question kind", () => {
    const kinds = new Set(corpus.map((e) => e.question.type));
    expect(kinds).toEqual(
      new Set(["MultipleChoice", "MultipleSelect", "ShortAnswer", "Tracing"]),
    );
  });

  for (const entry of corpus) {
    describe(`${entry.question.type} ${entry.question.id.slice(-4)}`, () => {
      for (const testCase of entry.cases) {
        it(`grades ${JSON.stringify(testCase.submission)} as ${testCase.score}`, () => {
          const graded = gradeQuestion(entry.question, testCase.submission);
          expect(graded.score).toBe(testCase.score);
          expect(graded.normalized).toBe(testCase.normalized);
        });
      }
    });
  }

  it("agrees with the analysis pipeline on 100% of cases", () => {
    let total = 0;
    let matching = 0;
    for (const entry of corpus) {
      for (const testCase of entry.cases) {
        total++;
        const graded = gradeQuestion(entry.question, testCase.submission);
        if (graded.score === testCase.score && graded.normalized === testCase.normalized) {
          matching++;
        }
      }
    }
    expect(total).toBeGreaterThan(0);
    expect(matching).toBe(total);
  });
});

describe("normalizeText", () => {
  it("trims, collapses whitespace, lowercases", () => {
    expect(normalizeText("  Hello   World ")).toBe("hello world");
  });

  it("keeps case when case-sensitive", () => {
    expect(normalizeText(" BTreeMap ", true)).toBe("BTreeMap");
  });

  it("collapses newlines and tabs", () => {
    expect(normalizeText("1\t2\n\n3")).toBe("1 2 3");
  });
});

describe("gradeQuestion errors", () => {
  const question = corpus[0].question; // MultipleChoice
  it("rejects mismatched submission shapes", () => {
    expect(() => gradeQuestion(question, ["a", "b"])).toThrow();
    expect(() => gradeQuestion(question, { doesCompile: true })).toThrow();
  });
});
