import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { renderWidget } from "../src/render";
import { AnswersPayload, QuizSchema } from "../src/types";
import { QuizController } from "../src/widget";

const load = (rel: string) =>
  JSON.parse(readFileSync(fileURLToPath(new URL(rel, import.meta.url)), "utf-8"));

const quiz: QuizSchema = load("../fixtures/two_question_quiz.json");
const goldenPayload: AnswersPayload = load("../fixtures/golden_payload.json");
const goldenRetry: AnswersPayload = load("../fixtures/golden_retry_payload.json");

const SESSION = "00000000-0000-4000-8000-00000000abcd";
const COMMIT = "e".repeat(40);

function makeClock(startMs = 1_700_000_000_000, stepMs = 1000) {
  let calls = 0;
  return () => startMs + stepMs * calls++;
}

function controllerFor(quizSchema: QuizSchema = quiz): QuizController {
  return new QuizController({
    quiz: quizSchema,
    quizName: quizSchema.name,
    commitHash: COMMIT,
    sessionId: SESSION,
    now: makeClock(),
  });
}

const normalize = (payload: AnswersPayload): AnswersPayload => ({
  ...payload,
  sessionId: "SESSION",
  clientTimestampMs: 0,
});

describe("golden payload", () => {
  it("completing the two-question quiz emits the golden wire JSON", () => {
    const controller = controllerFor();
    controller.begin();
    controller.answerCurrent("`get(xs, 1)`"); // wrong on purpose
    controller.answerCurrent(" Rustup ");
    const payload = controller.submit();

    expect(normalize(payload)).toEqual(normalize(goldenPayload));
    // With the mocked clock even the timestamps match exactly.
    expect(payload).toEqual(goldenPayload);
  });

  it("retry emits attempt 1 with only the missed question", () => {
    const controller = controllerFor();
    controller.begin();
    controller.answerCurrent("`get(xs, 1)`");
    controller.answerCurrent(" Rustup ");
    controller.submit();

    expect(controller.retryAvailable()).toBe(true);
    expect(controller.missedQuestionIds()).toEqual([quiz.questions[0].id]);

    controller.acceptRetry();
    expect(controller.attempt).toBe(1);
    controller.answerCurrent("`get(xs, 3)`");
    const payload = controller.submit();

    expect(payload).toEqual(goldenRetry);
    expect(payload.answers).toHaveLength(1);
    expect(payload.attempt).toBe(1);
    // Only one retry round per quiz load.
    expect(controller.retryAvailable()).toBe(false);
  });

  it("no retry offer when everything is correct", () => {
    const controller = controllerFor();
    controller.begin();
    controller.answerCurrent("`get(xs, 3)`");
    controller.answerCurrent("rustup");
    const payload = controller.submit();
    expect(payload.answers.every((a) => a.correct)).toBe(true);
    expect(controller.retryAvailable()).toBe(false);
  });
});

describe("widget flow", () => {
  it("durations are measured per question", () => {
    const controller = new QuizController({
      quiz,
      quizName: quiz.name,
      commitHash: COMMIT,
      sessionId: SESSION,
      now: makeClock(0, 500),
    });
    controller.begin();
    controller.answerCurrent("`get(xs, 3)`");
    controller.answerCurrent("rustup");
    const payload = controller.submit();
    expect(payload.answers.map((a) => a.durationMs)).toEqual([500, 500]);
  });

  it("justification mode interposes a prompt before the next question", () => {
    const withJustification: QuizSchema = structuredClone(quiz);
    withJustification.questions[0].justificationMode = true;
    const controller = controllerFor(withJustification);
    controller.begin();
    controller.answerCurrent("`get(xs, 3)`");
    expect(controller.phase).toBe("justifying");
    controller.provideJustification("index 3 is out of bounds for three items");
    controller.answerCurrent("rustup");
    const payload = controller.submit();
    expect(payload.answers[0].justification).toMatch(/out of bounds/);
    expect(payload.answers[1].justification).toBeUndefined();
  });

  it("takes over the page while answering and releases it after", () => {
    const controller = controllerFor();
    expect(controller.fullscreen).toBe(false);
    controller.begin();
    expect(controller.fullscreen).toBe(true);
    controller.answerCurrent("`get(xs, 3)`");
    controller.answerCurrent("rustup");
    controller.submit();
    expect(controller.fullscreen).toBe(false);
  });

  it("malformed schema yields an error panel and no crash", () => {
    const controller = QuizController.fromPlaceholder({
      quizName: "broken",
      commitHash: COMMIT,
      quizJson: '{"name": "broken", "questions": "nope"}',
      sessionId: SESSION,
    });
    expect(controller.phase).toBe("error");
    const html = renderWidget(controller);
    expect(html).toContain("quiz-error-panel");
  });

  it("unknown question kind is rejected", () => {
    const controller = QuizController.fromPlaceholder({
      quizName: "broken",
      commitHash: COMMIT,
      quizJson: JSON.stringify({
        name: "broken",
        questions: [{ id: "x", type: "Essay", prompt: { prompt: "p" }, answer: {} }],
      }),
      sessionId: SESSION,
    });
    expect(controller.phase).toBe("error");
    expect(controller.error).toMatch(/unknown kind/);
  });

  it("bug reports carry the question id and timestamp", () => {
    const controller = controllerFor();
    const report = controller.bugReport(quiz.questions[0].id, "typo in the prompt");
    expect(report.sessionId).toBe(SESSION);
    expect(report.questionId).toBe(quiz.questions[0].id);
    expect(() => controller.bugReport(quiz.questions[0].id, "  ")).toThrow();
  });
});

describe("option shuffling", () => {
  const mc = quiz.questions[0];

  it("is stable for one session across re-renders", () => {
    const controller = controllerFor();
    const first = controller.displayOptions(mc);
    const second = controller.displayOptions(mc);
    expect(first).toEqual(second);
  });

  it("covers all options", () => {
    const controller = controllerFor();
    const shown = controller.displayOptions(mc);
    expect([...shown].sort()).toEqual(
      ["`get(xs, 0)`", "`get(xs, 1)`", "`get(xs, 2)`", "`get(xs, 3)`"].sort(),
    );
  });

  it("differs across sessions somewhere", () => {
    const orders = new Set<string>();
    for (let i = 0; i < 12; i++) {
      const controller = new QuizController({
        quiz,
        quizName: quiz.name,
        commitHash: COMMIT,
        sessionId: `00000000-0000-4000-8000-0000000000${String(i).padStart(2, "0")}`,
      });
      orders.add(controller.displayOptions(mc).join("|"));
    }
    expect(orders.size).toBeGreaterThan(1);
  });

  it("honors a pinned order", () => {
    const pinned: QuizSchema = structuredClone(quiz);
    pinned.questions[0].prompt.distractorsShuffled = false;
    const controller = controllerFor(pinned);
    expect(controller.displayOptions(pinned.questions[0])).toEqual([
      "`get(xs, 3)`", "`get(xs, 0)`", "`get(xs, 1)`", "`get(xs, 2)`",
    ]);
  });
});

describe("rendering", () => {
  const fourKinds: QuizSchema = {
    name: "kinds",
    questions: [
      quiz.questions[0],
      {
        id: "d1000000-0000-4000-8000-000000000003",
        type: "MultipleSelect",
        prompt: { prompt: "Select all even numbers.", distractors: ["1", "3"] },
        answer: { answer: ["2", "4"] },
      },
      quiz.questions[1],
      {
        id: "d1000000-0000-4000-8000-000000000004",
        type: "Tracing",
        prompt: { prompt: "What happens?\n```\nprint ok\n```" },
        answer: { doesCompile: true, stdout: "ok" },
      },
    ],
  };

  it("renders every question kind", () => {
    const controller = controllerFor(fourKinds);
    controller.begin();
    expect(renderWidget(controller)).toContain('type="radio"');
    controller.answerCurrent("`get(xs, 3)`");
    expect(renderWidget(controller)).toContain('type="checkbox"');
    controller.answerCurrent(["2", "4"]);
    expect(renderWidget(controller)).toContain("quiz-short-answer");
    controller.answerCurrent("rustup");
    const tracingHtml = renderWidget(controller);
    expect(tracingHtml).toContain("quiz-stdout");
    expect(tracingHtml).toContain("<pre><code>");
  });

  it("review screen shows context and a bug button", () => {
    const controller = controllerFor();
    controller.begin();
    controller.answerCurrent("`get(xs, 1)`");
    controller.answerCurrent("rustup");
    controller.submit();
    const html = renderWidget(controller);
    expect(html).toContain("quiz-review-item incorrect");
    expect(html).toContain("quiz-review-item correct");
    expect(html).toContain("Indexes are zero-based.");
    expect(html).toContain("quiz-bug-button");
    expect(html).toContain("quiz-retry-button");
  });

  it("escapes reader-facing content", () => {
    const hostile: QuizSchema = {
      name: "x",
      questions: [
        {
          id: "d1000000-0000-4000-8000-000000000005",
          type: "ShortAnswer",
          prompt: { prompt: "<script>alert(1)</script>" },
          answer: { answer: "x" },
        },
      ],
    };
    const controller = controllerFor(hostile);
    controller.begin();
    const html = renderWidget(controller);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});
