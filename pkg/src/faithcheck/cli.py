"""Command line entry point: faithcheck <command> [options]."""
from __future__ import annotations

import argparse
import filecmp
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import RunConfig, load_run_config
from .corpus import CorpusIndex, load_corpus
from .dataset import Archive, load_archive, load_manifest, save_archive, collect_all
from .errors import ConfigError, FaithcheckError
from .gateway import Gateway, MockScript, NetworkMonitor, ToolRegistry, TranscriptArchive
from .judge import QUAL_RUBRIC, QUANT_RUBRIC, Judge, rubric_version
from .qual import VerdictSet, compare_responses, load_verdicts, tally_verdicts
from .quant import CriterionScores, QuantResult, evaluate_essay
from .report import ReportMeta, aggregate_quant, emit
from .retrieval import EvidenceRetriever, HttpRetriever, OfflineRetriever, StaticRetriever
from .verify import EssayContext, compile_log, render_log, verify_essay

logger = logging.getLogger("faithcheck")

EXIT_CODES = {
    "cli": 2,
    "corpus": 3,
    "refparse": 4,
    "verify": 5,
    "quant_agent": 6,
    "qual_agent": 7,
    "llm_gateway": 8,
    "dataset": 9,
    "report": 10,
}
EXIT_REPLAY_MISMATCH = 11
EXIT_UNEXPECTED = 1


# ---------------------------------------------------------------- runtime wiring

@dataclass
class Runtime:
    config: RunConfig
    corpus: CorpusIndex
    gateway: Gateway
    retriever: EvidenceRetriever
    monitor: NetworkMonitor

    def judge(self) -> Judge:
        return Judge(self.gateway, self.config.judge, ToolRegistry(self.corpus, self.retriever))

    def meta(self) -> dict:
        return {"config_hash": self.config.config_hash(),
                "rubric_versions": {"quant": rubric_version(QUANT_RUBRIC), "qual": rubric_version(QUAL_RUBRIC)}}

    def close(self) -> None:
        self.gateway.close()


def build_runtime(cfg: RunConfig, force_mock: bool = False, monitor: NetworkMonitor | None = None) -> Runtime:
    corpus = load_corpus(cfg.corpus)
    monitor = monitor or NetworkMonitor(cfg.offline)
    script = MockScript.load(cfg.mock_script) if cfg.mock_script else None
    if force_mock and script is None:
        raise ConfigError("a mock script is required for replay")
    archive = TranscriptArchive(Path(cfg.output_dir) / "transcripts")
    gateway = Gateway(cfg.endpoints, mock_script=script, archive=archive, offline=cfg.offline,
                      force_mock=force_mock, monitor=monitor)
    if cfg.offline:
        retriever: EvidenceRetriever = OfflineRetriever()
    elif cfg.retriever_fixture:
        retriever = StaticRetriever.from_file(cfg.retriever_fixture)
    else:
        retriever = HttpRetriever(cfg.search_url, gateway.client)
    return Runtime(cfg, corpus, gateway, retriever, monitor)


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _require(value, what: str):
    if not value:
        raise ConfigError(f"{what} is required (set it in the config file or pass the flag)")
    return value


def _pool_map(fn, items, workers: int):
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- pipeline steps

def run_verify(rt: Runtime, essay: str, prompt_id: int, category: str, use_judge: bool = True):
    judge = rt.judge() if use_judge and rt.config.judge in rt.gateway.endpoints else None
    records = verify_essay(essay, rt.corpus, rt.retriever, judge, rt.config.thresholds, EssayContext(prompt_id, category))
    return compile_log(records, prompt_id)


def run_eval_quant(rt: Runtime, archive: Archive, manifest) -> list[QuantResult]:
    prompts = {p.id: p for p in manifest}
    judge = rt.judge()
    items = [r for r in archive.rows() if not r.gap and r.prompt_id in prompts]

    def one(rec):
        p = prompts[rec.prompt_id]
        return evaluate_essay(rec.text, rt.corpus, judge, rt.retriever, rt.config.thresholds, rt.config.scoring,
                              p.id, rec.model, p.category)

    return sorted(_pool_map(one, items, rt.config.workers), key=lambda r: (r.prompt_id, r.model))


def run_eval_qual(rt: Runtime, archive: Archive, manifest, models: Sequence[str]) -> tuple[list[VerdictSet], list[str]]:
    judge = rt.judge()
    skipped = []
    todo = []
    for p in manifest:
        recs = [archive.get(p.id, m) for m in models]
        if any(r is None for r in recs):
            skipped.append(f"prompt {p.id}: missing responses, not compared")
            continue
        todo.append((p, [(m, r.text) for m, r in zip(models, recs)]))

    def one(item):
        p, responses = item
        return compare_responses(p.id, responses, judge, rt.config.seed, p.title)

    return sorted(_pool_map(one, todo, rt.config.workers), key=lambda v: v.prompt_id), skipped


def save_quant(results: Sequence[QuantResult], path: Path, meta: dict) -> Path:
    return _write_json(path, {"meta": meta, "results": [r.to_dict() for r in results]})


def save_verdict_sets(sets: Sequence[VerdictSet], skipped: Sequence[str], path: Path, meta: dict) -> Path:
    return _write_json(path, {"meta": meta, "skipped": list(skipped), "verdicts": [s.to_dict() for s in sets]})


@dataclass(frozen=True)
class ScoreRow:
    prompt_id: int
    model: str
    scores: CriterionScores


def load_scores(path: str | Path) -> list:
    """Per-essay scores from eval-quant output (.json) or a fixture (.jsonl of prompt_id/model/scores)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        rows = [json.loads(l) for l in text.splitlines() if l.strip()]
    else:
        rows = json.loads(text)["results"]
    return [ScoreRow(r["prompt_id"], r["model"], CriterionScores(**r["scores"])) for r in rows]


def load_verdict_file(path: str | Path) -> list[VerdictSet]:
    path = Path(path)
    if path.suffix == ".jsonl":
        return load_verdicts(path)
    return [VerdictSet.from_dict(d) for d in json.loads(path.read_text(encoding="utf-8"))["verdicts"]]


def run_report(cfg: RunConfig, meta: dict, out_dir: Path, scores_path: Path | None, verdicts_path: Path | None,
               models: Sequence[str] | None, records=None) -> list[Path]:
    manifest = load_manifest(_require(cfg.manifest, "manifest"))
    agg = tally = None
    if scores_path is not None and scores_path.exists():
        agg = aggregate_quant(load_scores(scores_path), manifest, models, cfg.std_estimator)
    if verdicts_path is not None and verdicts_path.exists():
        tally = tally_verdicts(load_verdict_file(verdicts_path), models)
    if agg is None and tally is None:
        raise ConfigError("nothing to report: no score or verdict inputs found")
    return emit(out_dir, ReportMeta(meta["config_hash"], meta["rubric_versions"]), agg, tally, records)


# ---------------------------------------------------------------- commands

def cmd_corpus_validate(args, cfg: RunConfig) -> int:
    corpus = load_corpus(cfg.corpus)
    translators = ", ".join(sorted(corpus.translators))
    print(f"corpus ok: {len(corpus.surahs)} surahs, {corpus.total_ayat} ayat, translators: {translators}, "
          f"numbering: {corpus.numbering}, hadith collections: {len(corpus.collections)}")
    return 0


def cmd_collect(args, cfg: RunConfig) -> int:
    rt = build_runtime(cfg)
    try:
        manifest = load_manifest(_require(cfg.manifest, "manifest"))
        path = Path(_require(cfg.archive, "archive"))
        archive = load_archive(path) if path.exists() else Archive()
        models = list(cfg.chatbots) or sorted(e for e in rt.gateway.endpoints if e != cfg.judge)
        before = len(archive)
        archive = collect_all(manifest, models, rt.gateway, archive, path, cfg.workers)
        save_archive(archive, path)
        print(f"collected {len(archive) - before} new responses; {len(archive)} archived, {len(archive.gaps)} gaps")
    finally:
        rt.close()
    return 0


def cmd_verify(args, cfg: RunConfig) -> int:
    rt = build_runtime(cfg)
    out = Path(cfg.output_dir) / "verification"
    try:
        if args.essay:
            essay = Path(args.essay).read_text(encoding="utf-8")
            logs = [run_verify(rt, essay, args.prompt_id, args.category or "", not args.no_judge)]
            stem = Path(args.essay).stem
        else:
            manifest = load_manifest(_require(cfg.manifest, "manifest"))
            archive = load_archive(_require(cfg.archive, "archive"))
            cats = {p.id: p.category for p in manifest}
            recs = [r for r in archive.rows() if not r.gap]
            logs = _pool_map(lambda r: (r.model, run_verify(rt, r.text, r.prompt_id, cats.get(r.prompt_id, ""),
                                                            not args.no_judge)), recs, cfg.workers)
            stem = "archive"
        meta = rt.meta()
        if args.essay:
            log = logs[0]
            _write_json(out / f"{stem}.log.json", {"meta": meta, "log": log.to_dict()})
            digest = render_log(log.records)
            print(digest, end="")
            print(f"counts: {log.counts}")
            print(f"summary: {log.summary}")
        else:
            _write_json(out / "logs.json", {"meta": meta, "logs": [{"model": m, **l.to_dict()} for m, l in logs]})
            records = [r for _, l in logs for r in l.records]
            header = ReportMeta(meta["config_hash"], meta["rubric_versions"]).line()
            (out / "digest.txt").write_text(f"# {header}\n" + render_log(records), encoding="utf-8")
            print(f"verified {len(logs)} essays, {len(records)} records -> {out}")
    finally:
        rt.close()
    return 0


def cmd_eval_quant(args, cfg: RunConfig, force_mock: bool = False) -> int:
    rt = build_runtime(cfg, force_mock)
    try:
        manifest = load_manifest(_require(cfg.manifest, "manifest"))
        archive = load_archive(_require(cfg.archive, "archive"))
        results = run_eval_quant(rt, archive, manifest)
        path = save_quant(results, Path(cfg.output_dir) / "quant" / "results.json", rt.meta())
        print(f"scored {len(results)} essays -> {path}")
    finally:
        rt.close()
    return 0


def cmd_eval_qual(args, cfg: RunConfig, force_mock: bool = False) -> int:
    rt = build_runtime(cfg, force_mock)
    try:
        manifest = load_manifest(_require(cfg.manifest, "manifest"))
        archive = load_archive(_require(cfg.archive, "archive"))
        models = list(cfg.chatbots) or archive.models
        sets, skipped = run_eval_qual(rt, archive, manifest, models)
        path = save_verdict_sets(sets, skipped, Path(cfg.output_dir) / "qual" / "verdicts.json", rt.meta())
        print(f"compared {len(sets)} prompts ({len(skipped)} skipped) -> {path}")
    finally:
        rt.close()
    return 0


def _meta_for(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(),
            "rubric_versions": {"quant": rubric_version(QUANT_RUBRIC), "qual": rubric_version(QUAL_RUBRIC)}}


def cmd_report(args, cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    scores = Path(args.scores) if args.scores else out / "quant" / "results.json"
    verdicts = Path(args.verdicts) if args.verdicts else out / "qual" / "verdicts.json"
    models = list(cfg.chatbots) or None
    written = run_report(cfg, _meta_for(cfg), out / "report", scores, verdicts, models)
    for p in written:
        print(p)
    return 0


def _diff_trees(a: Path, b: Path) -> list[str]:
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    diffs = [f"only in one tree: {p}" for p in sorted(set(fa) ^ set(fb))]
    diffs += [f"differs: {p}" for p in sorted(set(fa) & set(fb)) if not filecmp.cmp(a / p, b / p, shallow=False)]
    return diffs


def cmd_replay(args, cfg: RunConfig) -> int:
    _require(cfg.mock_script, "mock script")
    cmd_eval_quant(args, cfg, force_mock=True)
    cmd_eval_qual(args, cfg, force_mock=True)
    out = Path(cfg.output_dir)
    models = list(cfg.chatbots) or None
    run_report(cfg, _meta_for(cfg), out / "report", out / "quant" / "results.json", out / "qual" / "verdicts.json", models)
    if args.expect:
        diffs = _diff_trees(Path(args.expect), out)
        if diffs:
            for d in diffs:
                print(d, file=sys.stderr)
            return EXIT_REPLAY_MISMATCH
        print(f"replay matches {args.expect}")
    return 0


COMMANDS = {
    "corpus-validate": cmd_corpus_validate,
    "collect": cmd_collect,
    "verify": cmd_verify,
    "eval-quant": cmd_eval_quant,
    "eval-qual": cmd_eval_qual,
    "report": cmd_report,
    "replay": cmd_replay,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config")
    common.add_argument("--corpus", help="corpus file (default: bundled)")
    common.add_argument("--manifest", help="prompt manifest (JSONL)")
    common.add_argument("--archive", help="response archive (JSONL)")
    common.add_argument("--output-dir", help="where outputs are written")
    common.add_argument("--mock-script", help="scripted judge/chatbot responses")
    common.add_argument("--retriever-fixture", help="local documents for the evidence retriever")
    common.add_argument("--offline", action="store_true", default=None, help="forbid all network access")
    common.add_argument("--workers", type=int, help="parallel workers (default 4)")
    common.add_argument("--seed", type=int, help="blinding seed")
    common.add_argument("--t-confirm", type=float, help="similarity threshold for Confirmed")
    common.add_argument("--t-partial", type=float, help="similarity threshold for PartiallyConfirmed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="faithcheck", description="Citation verification and essay evaluation.")
    parser.add_argument("--version", action="version", version=f"faithcheck {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("corpus-validate", parents=[common], help="load and check the scripture corpus")
    sub.add_parser("collect", parents=[common], help="collect chatbot responses for the manifest")
    p = sub.add_parser("verify", parents=[common], help="verify citations in one essay or the whole archive")
    p.add_argument("--essay", help="a single essay file instead of the archive")
    p.add_argument("--prompt-id", type=int, default=0)
    p.add_argument("--category", default="")
    p.add_argument("--no-judge", action="store_true", help="skip judge calls (semantic checks, detection)")
    sub.add_parser("eval-quant", parents=[common], help="score archived essays")
    sub.add_parser("eval-qual", parents=[common], help="run blinded comparisons over archived responses")
    p = sub.add_parser("report", parents=[common], help="aggregate scores and verdicts into report files")
    p.add_argument("--scores", help="per-essay scores (.json from eval-quant or .jsonl fixture)")
    p.add_argument("--verdicts", help="verdict sets (.json from eval-qual or .jsonl fixture)")
    p = sub.add_parser("replay", parents=[common], help="eval-quant + eval-qual + report with a strict mock")
    p.add_argument("--expect", help="compare the output tree against a previous run")
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {
        "corpus": args.corpus, "manifest": args.manifest, "archive": args.archive, "output_dir": args.output_dir,
        "mock_script": args.mock_script, "retriever_fixture": args.retriever_fixture, "offline": args.offline,
        "workers": args.workers, "seed": args.seed,
    }
    th = {k: v for k, v in (("confirm", args.t_confirm), ("partial", args.t_partial)) if v is not None}
    if th:
        overrides["thresholds"] = th
    return load_run_config(args.config, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](args, cfg)
    except FaithcheckError as exc:
        module = getattr(exc, "module", "cli") or "cli"
        print(f"error [{module}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(module, EXIT_UNEXPECTED)
    except OSError as exc:
        print(f"error [io] {exc}", file=sys.stderr)
        return EXIT_CODES["cli"]


if __name__ == "__main__":
    sys.exit(main())
