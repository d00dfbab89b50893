/**
 * Pure HTML rendering for the widget's phases. The DOM layer injects the
 * output and wires events by element class/name; keeping this as plain
 * string building makes every screen testable without a browser.
 */

import { QuestionSchema } from "./types";
import { QuizController } from "./widget";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Minimal markdown: fenced blocks to <pre><code>, backticks to <code>. */
export function renderMarkdown(text: string): string {
  const parts = text.split(/```[^\n]*\n([\s\S]*?)```/g);
  let out = "";
  for (let i = 0; i < parts.length; i++) {
    if (i % 2 === 1) {
      out += `<pre><code>${escapeHtml(parts[i])}</code></pre>`;
    } else {
      const inline = escapeHtml(parts[i]).replace(/`([^`]+)`/g, "<code>$1</code>");
      out += inline.replace(/\n\n+/g, "<br><br>");
    }
  }
  return out;
}

function bugButton(questionId: string): string {
  return `<button class="quiz-bug-button" data-question-id="${escapeHtml(questionId)}" ` +
    `title="Report a problem with this question">&#9873;</button>`;
}

function renderChoiceInputs(
  controller: QuizController,
  question: QuestionSchema,
  multi: boolean,
): string {
  const kind = multi ? "checkbox" : "radio";
  const rows = controller.displayOptions(question).map((text, i) => {
    const id = `opt-${question.id}-${i}`;
    return (
      `<label class="quiz-option" for="${id}">` +
      `<input type="${kind}" id="${id}" name="q-${escapeHtml(question.id)}" ` +
      `value="${escapeHtml(text)}"> ${renderMarkdown(text)}</label>`
    );
  });
  return `<div class="quiz-options">${rows.join("")}</div>`;
}

function renderQuestionBody(controller: QuizController, question: QuestionSchema): string {
  switch (question.type) {
    case "MultipleChoice":
      return renderChoiceInputs(controller, question, false);
    case "MultipleSelect":
      return renderChoiceInputs(controller, question, true);
    case "ShortAnswer":
      return `<input type="text" class="quiz-short-answer" name="q-${escapeHtml(question.id)}" ` +
        `autocomplete="off" autocapitalize="off" spellcheck="false">`;
    case "Tracing":
      return (
        `<div class="quiz-tracing">` +
        `<label><input type="radio" name="compiles-${escapeHtml(question.id)}" value="yes"> ` +
        `This program compiles</label>` +
        `<label><input type="radio" name="compiles-${escapeHtml(question.id)}" value="no"> ` +
        `This program does not compile</label>` +
        `<textarea class="quiz-stdout" name="stdout-${escapeHtml(question.id)}" ` +
        `placeholder="The program's output"></textarea></div>`
      );
  }
}

export function renderWidget(controller: QuizController): string {
  switch (controller.phase) {
    case "error":
      return `<div class="quiz-error-panel">This quiz cannot be displayed: ` +
        `${escapeHtml(controller.error ?? "unknown error")}</div>`;
    case "idle":
      return (
        `<div class="quiz-start"><p>Quiz: ${escapeHtml(controller.quizName)} ` +
        `(${controller.quiz.questions.length} questions)</p>` +
        `<button class="quiz-begin-button">Start the quiz</button></div>`
      );
    case "answering": {
      const question = controller.currentQuestion();
      const progress = controller.progress();
      return (
        `<div class="quiz-fullscreen"><div class="quiz-question" ` +
        `data-question-id="${escapeHtml(question.id)}">` +
        `<header>Question ${progress.answered + 1} of ${progress.total} ` +
        `${bugButton(question.id)}</header>` +
        `<div class="quiz-prompt">${renderMarkdown(question.prompt.prompt)}</div>` +
        renderQuestionBody(controller, question) +
        `<button class="quiz-answer-button">Answer</button></div></div>`
      );
    }
    case "justifying": {
      const question = controller.currentQuestion();
      return (
        `<div class="quiz-fullscreen"><div class="quiz-justify" ` +
        `data-question-id="${escapeHtml(question.id)}">` +
        `<p>In 1-2 sentences, explain how you chose your answer.</p>` +
        `<textarea class="quiz-justification"></textarea>` +
        `<button class="quiz-justify-button">Continue</button></div></div>`
      );
    }
    case "review": {
      const rows = controller.reviewEntries().map((entry) => {
        const cls = entry.correct ? "correct" : "incorrect";
        const context = entry.question.context
          ? `<div class="quiz-context">${renderMarkdown(entry.question.context)}</div>`
          : "";
        return (
          `<li class="quiz-review-item ${cls}" ` +
          `data-question-id="${escapeHtml(entry.question.id)}">` +
          `<div class="quiz-prompt">${renderMarkdown(entry.question.prompt.prompt)}</div>` +
          `<p>Your answer was <strong>${entry.correct ? "correct" : "incorrect"}</strong>.</p>` +
          `${bugButton(entry.question.id)}${context}</li>`
        );
      });
      const retry = controller.retryAvailable()
        ? `<button class="quiz-retry-button">Retry the ` +
          `${controller.missedQuestionIds().length} missed question(s)</button>`
        : "";
      return (
        `<div class="quiz-review"><ol>${rows.join("")}</ol>${retry}` +
        `<button class="quiz-finish-button">Back to the book</button></div>`
      );
    }
    case "done":
      return `<div class="quiz-done">Quiz complete.</div>`;
  }
}

export function renderConsentInterstitial(): string {
  return (
    `<div class="quiz-consent"><p>Quizzes in this book collect anonymized ` +
    `answer telemetry to improve the text. No account, no personal data; ` +
    `a random id ties your answers together.</p>` +
    `<button class="quiz-consent-button">I consent, show me quizzes</button></div>`
  );
}
