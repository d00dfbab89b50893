/**
 * Interactive quiz widget: a state machine over a quiz schema plus a pure
 * HTML renderer. The DOM bootstrap (widget-dom.ts) owns the page; this
 * module owns the logic so it can be tested headlessly.
 *
 * Flow: consent gate -> start (page takeover) -> answer each question in
 * sequence (with an optional justification prompt) -> submit (local grading
 * + telemetry payload) -> review screen -> one optional retry round over
 * the missed questions only (attempt 1).
 */

import { gradeQuestion } from "./grading";
import { shuffledOrder } from "./shuffle";
import {
  AnswerItem,
  AnswersPayload,
  BugReportPayload,
  QuestionSchema,
  QuizSchema,
  Submission,
  optionTexts,
  parseQuizSchema,
} from "./types";

export type Phase = "idle" | "answering" | "justifying" | "review" | "done" | "error";

export interface WidgetConfig {
  quiz: QuizSchema;
  quizName: string;
  commitHash: string;
  sessionId: string;
  now?: () => number;
}

interface Recorded {
  submission: Submission;
  durationMs: number;
  justification?: string;
}

export interface ReviewEntry {
  question: QuestionSchema;
  submission: Submission;
  correct: boolean;
}

export class QuizController {
  readonly quiz: QuizSchema;
  readonly quizName: string;
  readonly commitHash: string;
  readonly sessionId: string;

  phase: Phase = "idle";
  error: string | null = null;
  attempt = 0;
  fullscreen = false;

  private now: () => number;
  private active: number[] = [];
  private position = 0;
  private shownAtMs = 0;
  private recorded = new Map<string, Recorded>();
  private review: ReviewEntry[] = [];
  private retryOffered = false;

  constructor(config: WidgetConfig) {
    this.quiz = config.quiz;
    this.quizName = config.quizName;
    this.commitHash = config.commitHash;
    this.sessionId = config.sessionId;
    this.now = config.now ?? Date.now;
  }

  /** Build a controller from placeholder element attributes; malformed
   * schemas produce an error-phase controller (error panel, no telemetry). */
  static fromPlaceholder(attrs: {
    quizName: string;
    commitHash: string;
    quizJson: string;
    sessionId: string;
    now?: () => number;
  }): QuizController {
    try {
      const quiz = parseQuizSchema(attrs.quizJson);
      return new QuizController({
        quiz,
        quizName: attrs.quizName,
        commitHash: attrs.commitHash,
        sessionId: attrs.sessionId,
        now: attrs.now,
      });
    } catch (err) {
      const controller = new QuizController({
        quiz: { name: attrs.quizName, questions: [] },
        quizName: attrs.quizName,
        commitHash: attrs.commitHash,
        sessionId: attrs.sessionId,
        now: attrs.now,
      });
      controller.phase = "error";
      controller.error = err instanceof Error ? err.message : String(err);
      return controller;
    }
  }

  begin(): void {
    if (this.phase !== "idle") {
      throw new Error(`cannot begin from phase ${this.phase}`);
    }
    this.active = this.quiz.questions.map((_, i) => i);
    this.position = 0;
    this.phase = "answering";
    this.fullscreen = true;
    this.shownAtMs = this.now();
  }

  currentQuestion(): QuestionSchema {
    if (this.phase !== "answering" && this.phase !== "justifying") {
      throw new Error(`no current question in phase ${this.phase}`);
    }
    return this.quiz.questions[this.active[this.position]];
  }

  /** Options for a choice question in display order: shuffled per
   * (session, question) unless the author pinned the order. */
  displayOptions(question: QuestionSchema): string[] {
    const texts = optionTexts(question);
    if (question.prompt.distractorsShuffled === false) {
      return texts;
    }
    return shuffledOrder(texts.length, this.sessionId, question.id).map((i) => texts[i]);
  }

  progress(): { answered: number; total: number } {
    return { answered: this.position, total: this.active.length };
  }

  answerCurrent(submission: Submission): void {
    if (this.phase !== "answering") {
      throw new Error(`cannot answer in phase ${this.phase}`);
    }
    const question = this.currentQuestion();
    this.recorded.set(question.id, {
      submission,
      durationMs: Math.max(0, this.now() - this.shownAtMs),
    });
    if (question.justificationMode) {
      this.phase = "justifying";
      return;
    }
    this.advance();
  }

  /** The post-answer "explain how you chose your answer" prompt. */
  provideJustification(text: string): void {
    if (this.phase !== "justifying") {
      throw new Error(`no justification expected in phase ${this.phase}`);
    }
    const question = this.currentQuestion();
    const entry = this.recorded.get(question.id);
    if (entry) {
      entry.justification = text;
    }
    this.phase = "answering";
    this.advance();
  }

  private advance(): void {
    this.position++;
    this.shownAtMs = this.now();
  }

  allAnswered(): boolean {
    return this.position >= this.active.length;
  }

  /** Grade locally, build the telemetry payload for this attempt, and move
   * to the review screen. The caller delivers the payload. */
  submit(): AnswersPayload {
    if (this.phase !== "answering" || !this.allAnswered()) {
      throw new Error("submit requires every question to be answered");
    }
    const answers: AnswerItem[] = [];
    this.review = [];
    for (const index of this.active) {
      const question = this.quiz.questions[index];
      const entry = this.recorded.get(question.id);
      if (!entry) {
        throw new Error(`missing answer for ${question.id}`);
      }
      const graded = gradeQuestion(question, entry.submission);
      this.review.push({
        question,
        submission: entry.submission,
        correct: graded.score === 1,
      });
      const item: AnswerItem = {
        questionId: question.id,
        answer: entry.submission,
        correct: graded.score === 1,
        durationMs: entry.durationMs,
      };
      if (entry.justification !== undefined) {
        item.justification = entry.justification;
      }
      answers.push(item);
    }
    this.phase = "review";
    this.fullscreen = false;
    return {
      sessionId: this.sessionId,
      quizName: this.quizName,
      commitHash: this.commitHash,
      attempt: this.attempt,
      clientTimestampMs: this.now(),
      answers,
    };
  }

  reviewEntries(): ReviewEntry[] {
    return this.review;
  }

  missedQuestionIds(): string[] {
    return this.review.filter((e) => !e.correct).map((e) => e.question.id);
  }

  /** A retry is offered once, after the first attempt, if anything was missed. */
  retryAvailable(): boolean {
    return this.phase === "review" && this.attempt === 0 && !this.retryOffered &&
      this.missedQuestionIds().length > 0;
  }

  acceptRetry(): void {
    if (!this.retryAvailable()) {
      throw new Error("no retry available");
    }
    const missed = new Set(this.missedQuestionIds());
    this.retryOffered = true;
    this.attempt = 1;
    this.active = this.quiz.questions
      .map((q, i) => [q.id, i] as const)
      .filter(([id]) => missed.has(id))
      .map(([, i]) => i);
    for (const id of missed) {
      this.recorded.delete(id);
    }
    this.position = 0;
    this.phase = "answering";
    this.fullscreen = true;
    this.shownAtMs = this.now();
  }

  finish(): void {
    if (this.phase !== "review") {
      throw new Error(`cannot finish from phase ${this.phase}`);
    }
    this.phase = "done";
    this.fullscreen = false;
  }

  bugReport(questionId: string, text: string): BugReportPayload {
    if (!text.trim()) {
      throw new Error("bug report text is empty");
    }
    return {
      sessionId: this.sessionId,
      questionId,
      text,
      clientTimestampMs: this.now(),
    };
  }
}
