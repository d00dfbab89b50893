"""Command-line entry point wiring the pipeline together.

Exit codes: 0 on success, 1 on validation/build failure, 2 on usage errors.
All outputs are plain files; rerunning with identical inputs and seeds
rewrites them byte-identically (pass --stamp to embed a generation time).
Defaults may be provided by a ``learnprof.toml`` file in the working
directory, section ``[project]``.
"""

import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import book as book_mod
from . import ctt as ctt_mod
from . import dataset as ds
from . import interventions as iv_mod
from . import irt as irt_mod
from . import smalln as sim_mod
from . import synth as synth_mod
from .quiz import QuizParseError, load_quiz
from .validate import CompileOracle, validate_quiz


def _load_config(path: str | None) -> dict:
    candidate = Path(path) if path else Path("learnprof.toml")
    if not candidate.exists():
        return {}
    with open(candidate, "rb") as f:
        return tomllib.load(f).get("project", {})


def _from_config(ctx, value, key, required_flag: str | None = None):
    """Flag value, falling back to the learnprof.toml [project] table."""
    if value is not None:
        return value
    config = ctx.obj or {}
    if key in config:
        return config[key]
    if required_flag is not None:
        raise click.UsageError(f"missing {required_flag} (flag or '{key}' in learnprof.toml)")
    return None


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _load_inputs(export: str, manifest: str, keep_answers: bool = False):
    man = book_mod.BookManifest.load(manifest)
    registry = book_mod.build_registry([man])
    rs, report = ds.load(export, man, registry, keep_answers=keep_answers)
    return man, rs, report


@click.group()
@click.option("--config", type=click.Path(), default=None, help="Path to learnprof.toml.")
@click.pass_context
def main(ctx, config):
    """Instrument a book with quizzes and analyze the resulting telemetry."""
    ctx.obj = _load_config(config)


@main.command()
@click.argument("quiz_dir", type=click.Path(exists=True))
@click.option("--oracle", default=None, help="Compile oracle command (reads program on stdin).")
@click.option("--json", "json_out", type=click.Path(), default=None, help="Write findings as JSON.")
def validate(quiz_dir, oracle, json_out):
    """Validate every quiz file under QUIZ_DIR."""
    oracle_cmd = CompileOracle(oracle) if oracle else None
    quiz_root = Path(quiz_dir)
    reports = []
    failed = False
    for path in sorted(quiz_root.rglob("*.toml")):
        try:
            quiz = load_quiz(path, quiz_root=quiz_root)
        except QuizParseError as exc:
            click.echo(f"{path}: parse error: {exc}")
            reports.append({"quizName": str(path), "parseError": str(exc)})
            failed = True
            continue
        report = validate_quiz(quiz, oracle_cmd)
        click.echo(report.to_text())
        reports.append(report.to_dict())
        if not report.ok:
            failed = True
    if json_out:
        _write_json(Path(json_out), {"reports": reports})
    sys.exit(1 if failed else 0)


@main.command()
@click.option("--book-root", type=click.Path(), default=None)
@click.option("--quiz-dir", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--commit-hash", default=None, help="40-hex content version (default: git HEAD).")
@click.option("--oracle", default=None, help="Compile oracle command for tracing checks.")
@click.pass_context
def build(ctx, book_root, quiz_dir, out_dir, commit_hash, oracle):
    """Expand quiz directives in every chapter and emit site + manifest."""
    config = book_mod.BuildConfig(
        book_root=Path(_from_config(ctx, book_root, "bookRoot", "--book-root")),
        quiz_dir=Path(_from_config(ctx, quiz_dir, "quizDir", "--quiz-dir")),
        out_dir=Path(_from_config(ctx, out_dir, "outputDir", "--out")),
        commit_hash=commit_hash,
        oracle=CompileOracle(oracle) if oracle else None,
    )
    try:
        manifest, _ = book_mod.build_book(config)
    except (book_mod.BuildError, QuizParseError) as exc:
        click.echo(f"build failed: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"built {len(manifest.chapters)} chapters, {len(manifest.quizzes)} quizzes "
        f"-> {out_dir}/manifest.json")


@main.command()
@click.option("--store", type=click.Path(), required=True, help="Append-only event log path.")
@click.option("--manifest", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8787, type=int)
def serve(store, manifest, host, port):
    """Run the telemetry ingestion service."""
    import uvicorn

    from .telemetry import EventStore, create_app

    known = None
    if manifest:
        known = set(book_mod.BookManifest.load(manifest).question_chapter())
    app = create_app(EventStore(store), known_question_ids=known)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--store", type=click.Path(exists=True), default=None, help="Read a local event log.")
@click.option("--url", default=None, help="Fetch from a running service's /api/export.")
@click.option("--kind", type=click.Choice(["answers", "bugReport"]), default=None)
@click.option("--from", "from_ms", type=int, default=None)
@click.option("--to", "to_ms", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Default: stdout.")
@click.pass_context
def export(ctx, store, url, kind, from_ms, to_ms, out_path):
    """Export stored telemetry as NDJSON."""
    if store is None and url is None:
        url = (ctx.obj or {}).get("telemetryUrl")
    if (store is None) == (url is None):
        raise click.UsageError("give exactly one of --store or --url "
                               "(or set telemetryUrl in learnprof.toml)")
    if store:
        from .telemetry import EventStore

        lines = EventStore(store).export_lines(kind=kind, from_ms=from_ms, to_ms=to_ms)
        text = "".join(lines)
    else:
        import httpx

        token = os.environ.get("LEARNPROF_EXPORT_TOKEN", "")
        params = {k: v for k, v in (("kind", kind), ("from", from_ms), ("to", to_ms)) if v is not None}
        resp = httpx.get(f"{url.rstrip('/')}/api/export", params=params,
                         headers={"Authorization": f"Bearer {token}"}, timeout=60.0)
        if resp.status_code != 200:
            click.echo(f"export failed: {resp.status_code} {resp.text}", err=True)
            sys.exit(1)
        text = resp.text
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


@main.group()
def analyze():
    """Statistical analyses over an export + manifest."""


def _analysis_options(fn):
    fn = click.option("--export", "export_path", type=click.Path(exists=True), required=True)(fn)
    fn = click.option("--manifest", type=click.Path(exists=True), required=True)(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), default=".")(fn)
    fn = click.option("--all-readers", is_flag=True, help="Include dabblers (default: triers only).")(fn)
    return fn


@analyze.command()
@_analysis_options
@click.option("--save-responses", "responses_path", type=click.Path(), default=None,
              help="Also write the graded records as canonical NDJSON.")
def dropoff(export_path, manifest, out_dir, all_readers, responses_path):
    """Reader classification and last-chapter drop-off histograms."""
    _, rs, report = _load_inputs(export_path, manifest)
    threshold, profiles = ds.classify_readers(rs)
    payload = {
        "summary": ds.summary(rs, report),
        "histogram": {
            "all": {str(c): f for c, f in ds.last_chapter_histogram(rs, "all", profiles).items()},
            "trier": {str(c): f for c, f in ds.last_chapter_histogram(rs, "trier", profiles).items()},
            "dabbler": {str(c): f for c, f in ds.last_chapter_histogram(rs, "dabbler", profiles).items()},
        },
    }
    _write_json(Path(out_dir) / "dropoff.json", payload)
    if responses_path:
        ds.save_responses(rs, responses_path)
    click.echo(f"threshold {threshold}, {payload['summary']['triers']} triers "
               f"of {payload['summary']['readers']} readers")


def _analysis_set(rs, all_readers):
    rs = ds.first_attempts(rs)
    if all_readers:
        return rs
    rs_triers, _, _ = ds.triers_only(rs)
    return rs_triers


@analyze.command("ctt")
@_analysis_options
@click.option("--item-rest", is_flag=True, help="Use item-rest instead of item-total correlation.")
@click.option("--best-subset", "best_k", type=int, default=0,
              help="Also search for the best k-question subset (exhaustive).")
@click.option("--threads", type=int, default=1)
def analyze_ctt(export_path, manifest, out_dir, all_readers, item_rest, best_k, threads):
    """Classical test theory: difficulty, discrimination, abilities."""
    _, full_rs, report = _load_inputs(export_path, manifest, keep_answers=True)
    rs = _analysis_set(full_rs, all_readers)
    stats = ctt_mod.item_stats(rs, item_rest=item_rest)
    abilities = ctt_mod.reader_abilities(rs)
    present = rs.present_readers
    incorrect = ctt_mod.incorrect_answer_distribution(rs)

    payload = {
        "questions": [
            {
                "questionId": s.question_id,
                "chapter": int(rs.question_chapters[rs.question_index[s.question_id]]),
                "n": s.n,
                "difficulty": s.difficulty,
                "discrimination": s.discrimination,
                "incorrectAnswers": incorrect.get(s.question_id, {}),
            }
            for s in stats
        ],
        "readers": [
            {"sessionId": rs.sessions[i], "ability": float(abilities[i])} for i in present
        ],
        "summary": {
            "ability": ctt_mod.summarize(abilities[present]).to_dict(),
            "difficulty": ctt_mod.summarize([s.difficulty for s in stats]).to_dict(),
            "discrimination": ctt_mod.summarize(
                [s.discrimination for s in stats if s.discrimination is not None]).to_dict(),
        },
        "load": report.to_dict(),
    }
    if best_k:
        result = ctt_mod.best_subset(rs, best_k, threads=threads)
        payload["bestSubset"] = {"k": best_k, "questionIds": list(result.question_ids), "r": result.r}
    _write_json(Path(out_dir) / "ctt.json", payload)
    click.echo(f"ctt.json: {len(stats)} questions, {len(present)} readers")


@analyze.command("irt")
@_analysis_options
@click.option("--epochs", type=int, default=2000)
@click.option("--step-size", type=float, default=0.01)
@click.option("--seed", type=int, default=0)
@click.option("--icc-tables", is_flag=True, help="Emit per-question ICC samples on a theta grid.")
def analyze_irt(export_path, manifest, out_dir, all_readers, epochs, step_size, seed, icc_tables):
    """Fit the 3PL model and emit parameters, abilities, and the trajectory."""
    _, full_rs, _ = _load_inputs(export_path, manifest)
    rs = _analysis_set(full_rs, all_readers)
    cfg = irt_mod.FitConfig(epochs=epochs, step_size=step_size, seed=seed)
    result = irt_mod.fit(rs, cfg)
    stats = ctt_mod.item_stats(rs)
    try:
        deciles = [
            {"decile": d.decile, "n": d.n, "r": d.r}
            for d in irt_mod.decile_correlation(stats, result.items)
        ]
    except ValueError:
        deciles = []  # fewer than ten questions with both statistics
    payload = {
        "items": [
            {"questionId": p.question_id, "alpha": p.alpha, "beta": p.beta, "lambda": p.lam}
            for p in result.items
        ],
        "abilities": irt_mod.percentile_table(result, rs),
        "trajectory": [float(v) for v in result.trajectory],
        "decileCorrelation": deciles,
        "config": {"epochs": epochs, "stepSize": step_size, "seed": seed},
    }
    if icc_tables:
        payload["iccTables"] = irt_mod.icc_table(result.items)
    _write_json(Path(out_dir) / "irt.json", payload)
    click.echo(f"irt.json: {len(result.items)} items, {len(payload['abilities'])} readers, "
               f"final log posterior {result.trajectory[-1]:.2f}")


@analyze.command()
@click.option("--ctt", "ctt_path", type=click.Path(exists=True), required=True)
@click.option("--irt", "irt_path", type=click.Path(exists=True), default=None)
@click.option("--interventions", "iv_path", type=click.Path(exists=True), default=None)
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default="stats.json")
@click.option("--stamp", is_flag=True, help="Embed the generation timestamp.")
def bundle(ctt_path, irt_path, iv_path, manifest, out_path, stamp):
    """Merge analysis outputs into one stats.json for the dashboard."""
    man = book_mod.BookManifest.load(manifest)
    ctt_data = json.loads(Path(ctt_path).read_text(encoding="utf-8"))
    irt_items = {}
    if irt_path:
        irt_data = json.loads(Path(irt_path).read_text(encoding="utf-8"))
        irt_items = {item["questionId"]: item for item in irt_data["items"]}
    reports = []
    if iv_path:
        reports = json.loads(Path(iv_path).read_text(encoding="utf-8"))["reports"]

    questions_by_id = {q.id: (name, chapter, q) for name, (chapter, quiz) in man.quizzes.items()
                       for q in quiz.questions}
    questions = []
    per_quiz: dict[str, dict] = {}
    for entry in ctt_data["questions"]:
        qid = entry["questionId"]
        quiz_name, chapter, question = questions_by_id.get(qid, (None, entry.get("chapter"), None))
        merged = {
            **entry,
            "quizName": quiz_name,
            "prompt": question.prompt if question else None,
            "options": list(question.options()) if question else [],
            "irt": irt_items.get(qid),
        }
        questions.append(merged)
        if quiz_name is not None:
            bucket = per_quiz.setdefault(quiz_name, {"quizName": quiz_name, "chapter": chapter,
                                                     "questions": 0, "n": 0, "difficultySum": 0.0})
            bucket["questions"] += 1
            bucket["n"] += entry["n"]
            bucket["difficultySum"] += entry["difficulty"]

    quizzes = [
        {
            "quizName": b["quizName"],
            "chapter": b["chapter"],
            "questions": b["questions"],
            "n": b["n"],
            "meanDifficulty": b["difficultySum"] / b["questions"],
        }
        for b in sorted(per_quiz.values(), key=lambda b: (b["chapter"], b["quizName"]))
    ]
    payload = {
        "quizzes": quizzes,
        "questions": questions,
        "interventions": reports,
        "summary": ctt_data.get("summary", {}),
    }
    if stamp:
        payload["generatedAt"] = datetime.now(timezone.utc).isoformat()
    _write_json(Path(out_path), payload)
    click.echo(f"{out_path}: {len(questions)} questions, {len(quizzes)} quizzes")


@main.command()
@click.option("--export", "export_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True), required=True,
              help="TOML or JSON intervention list: [[interventions]] name, questionId, deployedAt.")
@click.option("--out", "out_dir", type=click.Path(), default=".")
@click.option("--pooled", is_flag=True, help="Student's t-test instead of Welch.")
@click.option("--all-readers", is_flag=True)
def interventions(export_path, manifest, spec_path, out_dir, pooled, all_readers):
    """Before/after evaluation of deployed edits (temporal A/B)."""
    _, full_rs, _ = _load_inputs(export_path, manifest)
    rs = _analysis_set(full_rs, all_readers)
    specs = _read_interventions(Path(spec_path))
    reports = iv_mod.evaluate_all(rs, specs, pooled=pooled)
    _write_json(Path(out_dir) / "interventions.json",
                {"reports": [r.to_dict() for r in reports]})
    click.echo(iv_mod.render_report_table(reports))
    click.echo(f"{sum(r.significant for r in reports)}/{len(reports)} significant at 0.05 (BH-adjusted)")


def _read_interventions(path: Path) -> list[iv_mod.Intervention]:
    if path.suffix == ".json":
        entries = json.loads(path.read_text(encoding="utf-8"))["interventions"]
    else:
        with open(path, "rb") as f:
            entries = tomllib.load(f)["interventions"]
    out = []
    for e in entries:
        deployed = e.get("deployedAtMs")
        if deployed is None:
            stamp = datetime.fromisoformat(e["deployedAt"].replace("Z", "+00:00"))
            if stamp.tzinfo is None:
                stamp = stamp.replace(tzinfo=timezone.utc)
            deployed = int(stamp.timestamp() * 1000)
        out.append(iv_mod.Intervention(e["name"], e["questionId"], deployed))
    return out


@main.command()
@click.option("--d", "effect_sizes", type=float, multiple=True, help="Effect size(s) to size for.")
@click.option("--alpha", type=float, default=0.05)
@click.option("--power", "power_", type=float, default=0.8)
@click.option("--from-report", "report_path", type=click.Path(exists=True), default=None,
              help="Take significant effect sizes from an interventions.json.")
@click.option("--json", "json_out", type=click.Path(), default=None)
def power(effect_sizes, alpha, power_, report_path, json_out):
    """Total sample size needed to detect the given effect size(s)."""
    ds_ = list(effect_sizes)
    if report_path:
        reports = json.loads(Path(report_path).read_text(encoding="utf-8"))["reports"]
        ds_.extend(r["d"] for r in reports if r.get("significant") and r.get("d"))
    if not ds_:
        raise click.UsageError("give --d or --from-report")
    rows = []
    for d in ds_:
        result = iv_mod.power_required(iv_mod.PowerSpec(d, alpha=alpha, power=power_))
        rows.append({"d": d, "nPerGroup": result.n_per_group, "nTotal": result.n_total})
        click.echo(f"d={d:<6g} nPerGroup={result.n_per_group:<6d} nTotal={result.n_total}")
    if len(rows) > 1:
        median = float(np.median([r["nTotal"] for r in rows]))
        click.echo(f"median nTotal: {median:g}")
    if json_out:
        _write_json(Path(json_out), {"alpha": alpha, "power": power_, "requirements": rows})


@main.command()
@click.option("--export", "export_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--metric", type=click.Choice(sorted(sim_mod.builtin_metrics())), required=True)
@click.option("--ks", default=None, help="Comma-separated sample sizes (default: powers of ten).")
@click.option("--iterations", type=int, default=1000)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), default=".")
@click.option("--all-readers", is_flag=True)
def simulate(export_path, manifest, metric, ks, iterations, seed, out_dir, all_readers):
    """Estimate metric error at small reader counts (random subsampling)."""
    _, full_rs, _ = _load_inputs(export_path, manifest)
    rs = _analysis_set(full_rs, all_readers)
    spec = sim_mod.builtin_metrics()[metric]
    cfg = sim_mod.SimConfig(
        ks=tuple(int(k) for k in ks.split(",")) if ks else None,
        iterations=iterations,
        seed=seed,
    )
    try:
        result = sim_mod.simulate(rs, spec, cfg)
    except sim_mod.SimulationError as exc:
        click.echo(f"simulation failed: {exc}", err=True)
        sys.exit(1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sim_{metric}.csv").write_text(result.to_csv(), encoding="utf-8")
    _write_json(out / f"sim_{metric}.json", result.to_dict())
    for point in result.points:
        click.echo(f"k={point.k:<7d} raw {point.mean_raw_error:.4f}±{point.sd_raw_error:.4f}  "
                   f"rank {point.mean_rank_error:.4f}±{point.sd_rank_error:.4f}")


@main.command()
@click.option("--items", type=int, default=60)
@click.option("--readers", type=int, default=3000)
@click.option("--seed", type=int, default=0)
@click.option("--dropout", type=float, default=0.0, help="Per-chapter stop probability.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def synth(items, readers, seed, dropout, out_dir):
    """Generate a synthetic project (quizzes, book, telemetry) from a known
    3PL ground truth."""
    cfg = synth_mod.SynthConfig(items=items, readers=readers, seed=seed, dropout=dropout)
    data = synth_mod.generate(cfg)
    paths = synth_mod.write_project(data, out_dir, cfg)
    click.echo(f"synthetic project at {out_dir}: {items} items, {readers} readers")
    click.echo(f"  manifest: {paths['manifest']}")
    click.echo(f"  export:   {paths['export']}")
    click.echo(f"  truth:    {paths['truth']}")


if __name__ == "__main__":
    main()
