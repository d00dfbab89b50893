/** Dashboard entry point: fetch stats.json and render the tables. */
import {
  loadBundle,
  renderDashboard,
  renderErrorPage,
  renderQuestionDetail,
  StatsBundle,
} from "./dashboard";

async function boot(): Promise<void> {
  const app = document.getElementById("app");
  if (!app) return;
  let bundle: StatsBundle;
  try {
    const response = await fetch("stats.json");
    if (!response.ok) throw new Error(`HTTP ${response.status}`);
    bundle = loadBundle(await response.json());
  } catch (err) {
    app.innerHTML = renderErrorPage(err instanceof Error ? err.message : String(err));
    return;
  }
  app.innerHTML = renderDashboard(bundle);
  app.addEventListener("click", (event) => {
    const row = (event.target as HTMLElement).closest("tr[data-question-id]");
    const detail = document.getElementById("detail");
    if (!row || !detail) return;
    const id = row.getAttribute("data-question-id");
    const question = bundle.questions.find((q) => q.questionId === id);
    if (question) detail.innerHTML = renderQuestionDetail(question);
  });
}

void boot();
