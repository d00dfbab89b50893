/**
 * Local grading for instant feedback.
 *
 * These rules must stay in lockstep with the server-side regrading the
 * analysis pipeline performs; the shared grading corpus fixture pins both
 * implementations to the same behavior.
 */

import { QuestionSchema, Submission, TracingSubmission } from "./types";

export interface Graded {
  score: 0 | 1;
  normalized: string;
}

/** Trim, collapse whitespace runs to single spaces, lowercase unless case-sensitive. */
export function normalizeText(text: string, caseSensitive = false): string {
  const collapsed = text.trim().replace(/\s+/g, " ");
  return caseSensitive ? collapsed : collapsed.toLowerCase();
}

export function gradeQuestion(question: QuestionSchema, submission: Submission): Graded {
  switch (question.type) {
    case "MultipleChoice": {
      if (typeof submission !== "string") {
        throw new Error(`question ${question.id}: expected a single option text`);
      }
      return { score: submission === question.answer.answer ? 1 : 0, normalized: submission };
    }
    case "MultipleSelect": {
      if (!Array.isArray(submission)) {
        throw new Error(`question ${question.id}: expected a list of option texts`);
      }
      const selected = new Set(submission);
      const correct = new Set(question.answer.answer as string[]);
      const equal =
        selected.size === correct.size && [...selected].every((t) => correct.has(t));
      return { score: equal ? 1 : 0, normalized: [...selected].sort().join(" + ") };
    }
    case "ShortAnswer": {
      if (typeof submission !== "string") {
        throw new Error(`question ${question.id}: expected answer text`);
      }
      const caseSensitive = question.answer.caseSensitive ?? false;
      const normalized = normalizeText(submission, caseSensitive);
      const expected = normalizeText(question.answer.answer as string, caseSensitive);
      return { score: normalized === expected ? 1 : 0, normalized };
    }
    case "Tracing": {
      const tracing = submission as TracingSubmission;
      if (typeof tracing !== "object" || typeof tracing.doesCompile !== "boolean") {
        throw new Error(`question ${question.id}: expected a tracing answer`);
      }
      if (!tracing.doesCompile) {
        return {
          score: question.answer.doesCompile === false ? 1 : 0,
          normalized: "does not compile",
        };
      }
      const stdout = normalizeText(tracing.stdout ?? "");
      const normalized = `compiles: ${stdout}`;
      if (question.answer.doesCompile !== true) {
        return { score: 0, normalized };
      }
      if (question.answer.stdout === undefined) {
        return { score: 1, normalized };
      }
      return {
        score: stdout === normalizeText(question.answer.stdout) ? 1 : 0,
        normalized,
      };
    }
  }
}
