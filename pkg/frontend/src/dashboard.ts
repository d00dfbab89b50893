/**
 * Author-facing dashboard over a stats bundle produced by the analysis
 * pipeline (`analyze bundle`). Pure model + renderers: every number shown
 * comes straight from the bundle, never recomputed client-side. Questions
 * under the low-accuracy threshold are flagged as intervention candidates.
 */

import { escapeHtml, renderMarkdown } from "./render";

export const LOW_ACCURACY_THRESHOLD = 0.3;

export interface QuizSummary {
  quizName: string;
  chapter: number;
  questions: number;
  n: number;
  meanDifficulty: number;
}

export interface IrtEntry {
  questionId: string;
  alpha: number;
  beta: number;
  lambda: number;
}

export interface QuestionStats {
  questionId: string;
  quizName?: string | null;
  chapter?: number | null;
  n: number;
  difficulty: number;
  discrimination: number | null;
  incorrectAnswers: Record<string, number>;
  prompt?: string | null;
  options?: string[];
  irt?: IrtEntry | null;
}

export interface InterventionRow {
  name: string;
  questionId: string;
  before: number | null;
  nBefore: number;
  after: number | null;
  nAfter: number;
  delta: number | null;
  d: number | null;
  p: number | null;
  pAdjusted: number | null;
  significant: boolean;
  error?: string | null;
}

export interface StatsBundle {
  quizzes: QuizSummary[];
  questions: QuestionStats[];
  interventions: InterventionRow[];
  summary?: Record<string, unknown>;
  generatedAt?: string;
}

export function loadBundle(raw: unknown): StatsBundle {
  if (typeof raw === "string") {
    raw = JSON.parse(raw);
  }
  const bundle = raw as StatsBundle;
  if (!bundle || !Array.isArray(bundle.questions) || !Array.isArray(bundle.quizzes)) {
    throw new Error("malformed stats bundle: expected quizzes and questions arrays");
  }
  for (const q of bundle.questions) {
    if (typeof q.questionId !== "string" || typeof q.difficulty !== "number") {
      throw new Error(`malformed stats bundle: bad question entry ${JSON.stringify(q?.questionId)}`);
    }
  }
  if (!Array.isArray(bundle.interventions)) {
    bundle.interventions = [];
  }
  return bundle;
}

export function isFlagged(question: QuestionStats): boolean {
  return question.difficulty < LOW_ACCURACY_THRESHOLD;
}

/** The bundle invariant: incorrect-answer fractions account for exactly the
 * readers who missed the question. */
export function incorrectFractionsConsistent(question: QuestionStats, tol = 1e-3): boolean {
  const total = Object.values(question.incorrectAnswers).reduce((a, b) => a + b, 0);
  return Math.abs(total - (1 - question.difficulty)) <= tol;
}

export type SortKey = "difficulty" | "discrimination" | "n" | "chapter";

export function sortQuestions(
  questions: QuestionStats[],
  key: SortKey,
  descending = false,
): QuestionStats[] {
  const value = (q: QuestionStats): number => {
    const v = q[key];
    return typeof v === "number" ? v : Number.POSITIVE_INFINITY;
  };
  return [...questions].sort((a, b) => {
    const diff = value(a) - value(b);
    if (diff !== 0) return descending ? -diff : diff;
    return a.questionId < b.questionId ? -1 : 1;
  });
}

const fmt = (v: number | null | undefined, digits = 2): string =>
  v === null || v === undefined || Number.isNaN(v) ? "–" : v.toFixed(digits);

export function renderQuizTable(bundle: StatsBundle): string {
  const rows = bundle.quizzes.map((quiz) =>
    `<tr><td>${escapeHtml(quiz.quizName)}</td><td>${quiz.chapter}</td>` +
    `<td>${quiz.questions}</td><td>${quiz.n}</td>` +
    `<td>${fmt(quiz.meanDifficulty)}</td></tr>`);
  return (
    `<table class="quiz-table"><thead><tr><th>Quiz</th><th>Chapter</th>` +
    `<th>Questions</th><th>Responses</th><th>Mean accuracy</th></tr></thead>` +
    `<tbody>${rows.join("")}</tbody></table>`
  );
}

export function renderQuestionTable(bundle: StatsBundle): string {
  const rows = bundle.questions.map((q) => {
    const flagged = isFlagged(q);
    const cls = flagged ? ' class="flagged-question"' : "";
    const flag = flagged ? " &#9888;" : "";
    return (
      `<tr${cls} data-question-id="${escapeHtml(q.questionId)}">` +
      `<td>${escapeHtml(q.questionId.slice(0, 8))}</td>` +
      `<td>${escapeHtml(q.quizName ?? "")}</td>` +
      `<td>${q.chapter ?? ""}</td><td>${q.n}</td>` +
      `<td>${fmt(q.difficulty)}${flag}</td>` +
      `<td>${fmt(q.discrimination)}</td>` +
      `<td>${q.irt ? fmt(q.irt.alpha) : "–"}</td></tr>`
    );
  });
  return (
    `<table class="question-table"><thead><tr><th>Question</th><th>Quiz</th>` +
    `<th>Chapter</th><th>N</th><th>Accuracy</th><th>r</th><th>&alpha;</th>` +
    `</tr></thead><tbody>${rows.join("")}</tbody></table>`
  );
}

/** Detail panel for a selected question: prompt, options, accuracy, and the
 * distribution of incorrect answers. */
export function renderQuestionDetail(question: QuestionStats): string {
  const prompt = question.prompt
    ? `<div class="detail-prompt">${renderMarkdown(question.prompt)}</div>`
    : "";
  const options = (question.options ?? [])
    .map((o) => `<li>${renderMarkdown(o)}</li>`)
    .join("");
  const bars = Object.entries(question.incorrectAnswers)
    .sort((a, b) => b[1] - a[1])
    .map(([text, fraction]) =>
      `<div class="answer-bar"><span class="answer-text">${escapeHtml(text)}</span>` +
      `<span class="bar" style="width:${(fraction * 100).toFixed(1)}%"></span>` +
      `<span class="pct">${(fraction * 100).toFixed(1)}%</span></div>`);
  return (
    `<section class="question-detail" data-question-id="${escapeHtml(question.questionId)}">` +
    `${prompt}<ul class="detail-options">${options}</ul>` +
    `<p>Accuracy ${fmt(question.difficulty)} over ${question.n} readers.</p>` +
    `<div class="incorrect-distribution">${bars.join("")}</div></section>`
  );
}

export function renderInterventionTable(rows: InterventionRow[]): string {
  const body = rows.map((r) => {
    if (r.error) {
      return `<tr class="intervention-error"><td>${escapeHtml(r.name)}</td>` +
        `<td colspan="5">${escapeHtml(r.error)}</td></tr>`;
    }
    const sig = r.significant ? ' class="significant"' : "";
    return (
      `<tr${sig}><td>${escapeHtml(r.name)}</td>` +
      `<td><span class="before-bar" style="width:${((r.before ?? 0) * 100).toFixed(0)}%"></span>` +
      `${fmt(r.before)} (n=${r.nBefore})</td>` +
      `<td><span class="after-bar" style="width:${((r.after ?? 0) * 100).toFixed(0)}%"></span>` +
      `${fmt(r.after)} (n=${r.nAfter})</td>` +
      `<td>${fmt(r.delta)}</td><td>${fmt(r.d)}</td><td>${fmt(r.pAdjusted, 3)}</td></tr>`
    );
  });
  return (
    `<table class="intervention-table"><thead><tr><th>Intervention</th>` +
    `<th>Before</th><th>After</th><th>&Delta;</th><th>d</th><th>adj. p</th>` +
    `</tr></thead><tbody>${body.join("")}</tbody></table>`
  );
}

export function renderDashboard(bundle: StatsBundle): string {
  const stamp = bundle.generatedAt
    ? `<p class="generated-at">Generated ${escapeHtml(bundle.generatedAt)}</p>`
    : "";
  if (bundle.questions.length === 0) {
    return `<main class="dashboard empty-state">${stamp}` +
      `<p>No question statistics yet. Run the analysis pipeline first.</p></main>`;
  }
  return (
    `<main class="dashboard">${stamp}` +
    `<section class="quizzes">${renderQuizTable(bundle)}</section>` +
    `<section class="questions">${renderQuestionTable(bundle)}</section>` +
    `<section class="interventions">${renderInterventionTable(bundle.interventions)}</section>` +
    `</main>`
  );
}

export function renderErrorPage(message: string): string {
  return `<main class="dashboard error-page"><p>Cannot load the stats bundle: ` +
    `${escapeHtml(message)}</p></main>`;
}
