/**
 * Browser bootstrap: find quiz placeholders left by the book preprocessor,
 * mount a widget in each, and wire telemetry. This is the only module that
 * touches the document; everything it delegates to is unit-tested headless.
 */

import { renderConsentInterstitial, renderWidget } from "./render";
import { SessionState } from "./session";
import { TelemetryClient } from "./telemetry";
import { Submission } from "./types";
import { QuizController } from "./widget";

export function mountAll(telemetryBaseUrl: string): void {
  const session = new SessionState(window.localStorage);
  const telemetry = new TelemetryClient(telemetryBaseUrl, session);
  if (session.hasConsent()) {
    void telemetry.flushQueue();
  }
  document.querySelectorAll<HTMLElement>(".quiz-placeholder").forEach((el) => {
    mountOne(el, session, telemetry);
  });
}

function readSubmission(root: HTMLElement, controller: QuizController): Submission | null {
  const question = controller.currentQuestion();
  switch (question.type) {
    case "MultipleChoice": {
      const checked = root.querySelector<HTMLInputElement>("input[type=radio]:checked");
      return checked ? checked.value : null;
    }
    case "MultipleSelect": {
      const checked = [...root.querySelectorAll<HTMLInputElement>("input[type=checkbox]:checked")];
      return checked.length ? checked.map((i) => i.value) : null;
    }
    case "ShortAnswer": {
      const input = root.querySelector<HTMLInputElement>(".quiz-short-answer");
      return input && input.value.trim() !== "" ? input.value : null;
    }
    case "Tracing": {
      const compiles = root.querySelector<HTMLInputElement>("input[type=radio]:checked");
      if (!compiles) return null;
      if (compiles.value === "no") return { doesCompile: false };
      const stdout = root.querySelector<HTMLTextAreaElement>(".quiz-stdout");
      return { doesCompile: true, stdout: stdout?.value ?? "" };
    }
  }
}

function mountOne(el: HTMLElement, session: SessionState, telemetry: TelemetryClient): void {
  const controller = QuizController.fromPlaceholder({
    quizName: el.dataset.quizName ?? "",
    commitHash: el.dataset.commitHash ?? "",
    quizJson: el.dataset.quiz ?? "",
    sessionId: session.sessionId(),
  });

  const paint = () => {
    if (!session.hasConsent()) {
      el.innerHTML = renderConsentInterstitial();
    } else {
      el.innerHTML = renderWidget(controller);
    }
    document.body.classList.toggle("quiz-takeover", controller.fullscreen);
  };

  el.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.closest(".quiz-consent-button")) {
      session.grantConsent();
      void telemetry.flushQueue();
    } else if (target.closest(".quiz-begin-button")) {
      controller.begin();
    } else if (target.closest(".quiz-answer-button")) {
      const submission = readSubmission(el, controller);
      if (submission === null) return;
      controller.answerCurrent(submission);
      if (controller.phase === "answering" && controller.allAnswered()) {
        void telemetry.send("/api/answers", controller.submit());
      }
    } else if (target.closest(".quiz-justify-button")) {
      const text = el.querySelector<HTMLTextAreaElement>(".quiz-justification")?.value ?? "";
      controller.provideJustification(text);
      if (controller.allAnswered()) {
        void telemetry.send("/api/answers", controller.submit());
      }
    } else if (target.closest(".quiz-retry-button")) {
      controller.acceptRetry();
    } else if (target.closest(".quiz-finish-button")) {
      controller.finish();
    } else if (target.closest(".quiz-bug-button")) {
      const qid = (target.closest(".quiz-bug-button") as HTMLElement).dataset.questionId ?? "";
      const text = window.prompt("Describe the problem with this question:") ?? "";
      if (text.trim()) {
        void telemetry.send("/api/bug-reports", controller.bugReport(qid, text));
      }
      return; // no repaint needed
    } else {
      return;
    }
    paint();
  });

  paint();
}
