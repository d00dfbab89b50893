/**
 * Wire and schema types shared with the analysis pipeline.
 *
 * QuizSchema is the JSON embedded in `.quiz-placeholder` elements by the
 * book preprocessor; AnswersPayload/BugReportPayload are the exact bodies
 * accepted by POST /api/answers and POST /api/bug-reports.
 */

export type QuestionType = "MultipleChoice" | "MultipleSelect" | "ShortAnswer" | "Tracing";

export interface PromptSchema {
  prompt: string;
  distractors?: string[];
  options?: string[];
  distractorsShuffled?: boolean;
}

export interface AnswerSchema {
  answer?: string | string[];
  caseSensitive?: boolean;
  doesCompile?: boolean;
  stdout?: string;
}

export interface QuestionSchema {
  id: string;
  type: QuestionType;
  prompt: PromptSchema;
  answer: AnswerSchema;
  context?: string;
  justificationMode?: boolean;
}

export interface QuizSchema {
  name: string;
  questions: QuestionSchema[];
}

export interface TracingSubmission {
  doesCompile: boolean;
  stdout?: string;
}

export type Submission = string | string[] | TracingSubmission;

export interface AnswerItem {
  questionId: string;
  answer: Submission;
  correct: boolean;
  durationMs: number;
  justification?: string;
}

export interface AnswersPayload {
  sessionId: string;
  quizName: string;
  commitHash: string;
  attempt: number;
  clientTimestampMs: number;
  answers: AnswerItem[];
}

export interface BugReportPayload {
  sessionId: string;
  questionId: string;
  text: string;
  clientTimestampMs: number;
}

export function parseQuizSchema(raw: unknown): QuizSchema {
  if (typeof raw === "string") {
    raw = JSON.parse(raw);
  }
  const quiz = raw as QuizSchema;
  if (!quiz || typeof quiz.name !== "string" || !Array.isArray(quiz.questions)) {
    throw new Error("malformed quiz schema: missing name or questions");
  }
  if (quiz.questions.length === 0) {
    throw new Error("malformed quiz schema: empty quiz");
  }
  for (const q of quiz.questions) {
    if (typeof q.id !== "string" || !q.prompt || typeof q.prompt.prompt !== "string") {
      throw new Error(`malformed quiz schema: bad question ${JSON.stringify(q?.id)}`);
    }
    if (!["MultipleChoice", "MultipleSelect", "ShortAnswer", "Tracing"].includes(q.type)) {
      throw new Error(`malformed quiz schema: unknown kind ${JSON.stringify(q.type)}`);
    }
  }
  return quiz;
}

/** Option texts for a choice question, in authored (unshuffled) order. */
export function optionTexts(question: QuestionSchema): string[] {
  if (question.prompt.options) {
    return [...question.prompt.options];
  }
  const correct =
    question.type === "MultipleSelect"
      ? (question.answer.answer as string[])
      : [question.answer.answer as string];
  return [...correct, ...(question.prompt.distractors ?? [])];
}
