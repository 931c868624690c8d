"""Regenerate the bulk fixtures under fixtures/.

Writes:
  fixtures/manifest_50.jsonl        50 prompts, ten per category
  fixtures/scores_150.jsonl         per-essay half-point scores matching the golden category means
  fixtures/verdicts_50.jsonl        verdict sets whose tallies match the golden totals
  fixtures/replay/archive_150.jsonl synthetic responses from three chatbots
  fixtures/replay/mock_replay.json  strict judge script, recorded by request fingerprint
  fixtures/replay/config.yaml       offline run config for replay

Everything is seeded, so rerunning produces identical files. The replay script is
recorded by running the real pipeline against a deterministic answer policy.

    python3 scripts/build_fixtures.py [--root fixtures]
"""
from __future__ import annotations

import argparse
import hashlib
import json
import random
import re
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import yaml

from faithcheck.cli import Runtime, run_eval_qual, run_eval_quant
from faithcheck.config import RunConfig
from faithcheck.corpus import AyahRef, load_corpus, lookup_ayah
from faithcheck.dataset import CATEGORIES, Archive, PromptRecord, ResponseRecord, save_archive, save_manifest
from faithcheck.gateway import Gateway, MockScript, NetworkMonitor, ScriptEntry, TranscriptArchive, request_fingerprint
from faithcheck.qual import QualDimension, Verdict, VerdictSet, blind_assignment, parse_comparison_prompt, save_verdicts
from faithcheck.quant import CRITERIA
from faithcheck.retrieval import OfflineRetriever
from faithcheck.similarity import similarity

MODELS = ("ChatGPT", "Ansari", "Fanar")
SEED = 7

TITLES = {
    "Jurisprudence (Fiqh)": [
        ("Is it permissible for Muslims to celebrate birthdays?", "islamqa.info"),
        ("Combining prayers while travelling", "islamqa.info"),
        ("Zakat on savings and gold jewellery", "islamweb.net"),
        ("Rulings of the Udhiyyah sacrifice", "islamqa.info"),
        ("Fasting for people with chronic illness", "islamweb.net"),
        ("Performing Istikhara on someone else's behalf", "islamonline.net"),
        ("Interest-free banking and modern mortgages", "islamqa.info"),
        ("Prayer times in places with very long days", "islamweb.net"),
        ("The testimony of women in Islamic law", "islamonline.net"),
        ("Etiquette and rulings of the Friday prayer", "islamqa.info"),
    ],
    "Quran Exegesis (Tafsir)": [
        ("The meaning of Ayat al-Kursi", "islamweb.net"),
        ("Freedom of belief in the Qur'an", "islamonline.net"),
        ("Lessons from the story of Yusuf", "islamqa.info"),
        ("The opening chapter as a summary of the Qur'an", "islamweb.net"),
        ("Patience in the Qur'anic narratives", "islamqa.info"),
        ("Understanding the clear and the ambiguous verses", "islamonline.net"),
        ("The Qur'anic view of the natural world", "islamweb.net"),
        ("Surah al-Asr and the value of time", "islamqa.info"),
        ("Reflection on the parables of the Qur'an", "islamonline.net"),
        ("The Basmala and its place in recitation", "islamweb.net"),
    ],
    "Theology (Aqidah)": [
        ("Tawhid and its three categories", "islamqa.info"),
        ("Belief in divine decree and free will", "islamweb.net"),
        ("The names and attributes of Allah", "islamonline.net"),
        ("Belief in angels and their roles", "islamqa.info"),
        ("Why humanity needs knowledge of God", "islamonline.net"),
        ("The finality of prophethood", "islamweb.net"),
        ("Faith, deeds and the increase of iman", "islamqa.info"),
        ("Life after death in Islamic belief", "islamweb.net"),
        ("Intercession on the Day of Judgement", "islamonline.net"),
        ("The unseen and the limits of human knowledge", "islamqa.info"),
    ],
    "Hadith (Ulum al-Hadith)": [
        ("How hadith scholars judged narrators", "islamweb.net"),
        ("The difference between sahih and hasan reports", "islamqa.info"),
        ("Why the Sunnah is a source of law", "islamonline.net"),
        ("Weak hadith and their use in virtuous deeds", "islamqa.info"),
        ("The compilation of Sahih al-Bukhari", "islamweb.net"),
        ("Forty hadith collections and their purpose", "islamonline.net"),
        ("Fabricated hadith and how they were exposed", "islamqa.info"),
        ("The isnad system as historical method", "islamweb.net"),
        ("Hadith on good character", "islamonline.net"),
        ("Reading hadith in their context", "islamqa.info"),
    ],
    "Spiritual Conduct (Adab)": [
        ("Kindness to parents in old age", "islamqa.info"),
        ("Controlling anger", "islamweb.net"),
        ("Backbiting and guarding the tongue", "islamonline.net"),
        ("Humility in daily life", "islamqa.info"),
        ("Rights of neighbours", "islamweb.net"),
        ("Gratitude in times of ease and hardship", "islamonline.net"),
        ("Etiquette of seeking knowledge", "islamqa.info"),
        ("Dealing with people of other faiths", "islamweb.net"),
        ("Sincerity of intention", "islamonline.net"),
        ("Remembrance of Allah and inner peace", "islamqa.info"),
    ],
}

AYAT = {
    "Jurisprudence (Fiqh)": ["2:183", "2:275", "4:29", "5:1", "2:185", "22:78", "5:90", "2:43"],
    "Quran Exegesis (Tafsir)": ["2:2", "3:7", "16:44", "38:29", "47:24", "4:82", "12:2", "54:17"],
    "Theology (Aqidah)": ["112:1", "2:255", "42:11", "7:54", "59:22", "51:56", "6:103", "57:3"],
    "Hadith (Ulum al-Hadith)": ["59:7", "53:3", "4:59", "33:21", "3:31", "49:6", "24:63", "62:2"],
    "Spiritual Conduct (Adab)": ["49:12", "17:23", "31:18", "25:63", "4:36", "13:28", "2:153", "49:11"],
}

HADITH = ["Sahih al-Bukhari 6018", "Sahih Muslim 2594", "Sahih al-Bukhari 1", "Jami at-Tirmidhi 2687",
          "Sunan Abi Dawud 4800", "Sahih Muslim 2564", "Riyad as-Salihin 1"]

# the hand-written verification essays stand in for these (prompt, model) pairs
HAND_ESSAYS = {1: "p01_birthdays.md", 4: "p04_udhiyyah.md", 6: "p06_istikhara.md", 9: "p09_fanar_testimony.md",
               12: "p12_religious_freedom.md", 18: "p18_basmala.md", 25: "p25_knowledge_of_god.md"}


def build_manifest() -> list[PromptRecord]:
    out = []
    for cat in CATEGORIES:
        for title, site in TITLES[cat]:
            out.append(PromptRecord(len(out) + 1, cat, title, site))
    return out


# ---------------------------------------------------------------- per-essay scores

def spread(total_half: int, n: int, rng: random.Random) -> list[int]:
    """n integers in [2, 10] (half-point units) summing to total_half, with some spread."""
    base, rem = divmod(total_half, n)
    vals = [base + (1 if i < rem else 0) for i in range(n)]
    for _ in range(4):
        i, j = rng.sample(range(n), 2)
        if vals[i] + 1 <= 10 and vals[j] - 1 >= 2:
            vals[i] += 1
            vals[j] -= 1
    rng.shuffle(vals)
    return vals


def build_scores(manifest, golden: dict) -> list[dict]:
    rng = random.Random(f"scores:{SEED}")
    by_cat = {c: [p.id for p in manifest if p.category == c] for c in CATEGORIES}
    rows = []
    for cell in golden["cells"]:
        ids = by_cat[cell["category"]]
        cols = {}
        for k in CRITERIA:
            total = round(float(cell["means"][k]) * 20 * len(ids) / 10)  # exact: means are multiples of 0.05
            cols[k] = spread(total, len(ids), rng)
        for i, pid in enumerate(ids):
            rows.append({"prompt_id": pid, "model": cell["model"],
                         "scores": {k: cols[k][i] / 2 for k in CRITERIA}})
    rows.sort(key=lambda r: (r["prompt_id"], r["model"]))
    return rows


# ---------------------------------------------------------------- verdict sets

def build_verdicts() -> list[VerdictSet]:
    """Best/worst per dimension; counts chosen so totals equal the golden tallies."""
    D = QualDimension
    rng = random.Random(f"verdicts:{SEED}")
    ids = list(range(1, 51))

    def pick(k):
        return set(rng.sample(ids, k))

    gpt_clarity = pick(9)
    gpt_accuracy = pick(8)
    gpt_worst_accuracy = set(rng.sample([i for i in ids if i not in gpt_accuracy], 4))
    ansari_tone = pick(2)
    ansari_worst_tone = set(rng.sample([i for i in ids if i not in ansari_tone], 3))
    gpt_depth = pick(19)
    sets = []
    for pid in ids:
        v = {
            D.CLARITY_STRUCTURE: Verdict("ChatGPT" if pid in gpt_clarity else "Ansari", "Fanar"),
            D.ISLAMIC_ACCURACY: Verdict("ChatGPT" if pid in gpt_accuracy else "Ansari",
                                        "ChatGPT" if pid in gpt_worst_accuracy else "Fanar"),
            D.TONE_APPROPRIATENESS: Verdict("Ansari" if pid in ansari_tone else "ChatGPT",
                                            "Ansari" if pid in ansari_worst_tone else "Fanar"),
            D.DEPTH_ORIGINALITY: Verdict("ChatGPT" if pid in gpt_depth else "Ansari", "Fanar"),
        }
        sets.append(VerdictSet(pid, v, assignment=blind_assignment(pid, SEED, MODELS)))
    return sets


# ---------------------------------------------------------------- synthetic essays

def first_sentence(text: str) -> str:
    parts = re.split(r"(?<=[.;])\s+", text)
    out = parts[0]
    if len(out.split()) < 6 and len(parts) > 1:
        out = out + " " + parts[1]
    return out.rstrip(",;:")


def quran_quote(corpus, ref: str) -> str:
    return first_sentence(lookup_ayah(corpus, AyahRef.parse(ref)).text())


FILLER = [
    "Scholars have discussed this question at length, and their answers draw on both revelation and reason.",
    "For many readers the topic raises practical questions about daily life, family and community.",
    "The classical jurists approached it with care, weighing the texts against the needs of people.",
    "Contemporary teachers often stress the spirit of the ruling as much as its letter.",
    "It is worth remembering that sincerity and intention shape how an act is judged.",
    "Different schools of thought reached different conclusions, and that diversity is itself instructive.",
    "Examples from the life of the Prophet and his companions help make the principle concrete.",
    "A balanced view avoids both laxity and excessive strictness.",
]


def synth_essay(model: str, prompt: PromptRecord, corpus, rng: random.Random) -> str:
    refs = rng.sample(AYAT[prompt.category], 3)
    fill = lambda k: " ".join(rng.sample(FILLER, k))
    title = prompt.title.rstrip("?")
    if model == "ChatGPT":
        q1, q2 = (quran_quote(corpus, r) for r in refs[:2])
        return (f"# {title}\n\n## Introduction\n\n{title} is a question many Muslims ask today. {fill(2)}\n\n"
                f"## What the Qur'an says\n\nThe Qur'an says: \"{q1}\" (Qur'an {refs[0]}). {fill(2)}\n\n"
                f"## Reflections and examples\n\nAnother verse reminds us: \"{q2}\" (Qur'an {refs[1]}). {fill(3)}\n\n"
                f"## Conclusion\n\n{fill(2)} Reflecting on {title.lower()} can deepen both faith and practice.\n")
    if model == "Ansari":
        qs = [quran_quote(corpus, r) for r in refs]
        h = rng.choice(HADITH)
        s, a = refs[2].split(":")
        return (f"**Introduction**\n\n{title} touches the heart of Islamic practice. {fill(2)}\n\n"
                f"**Evidence from the sources**\n\nAllah says: \"{qs[0]}\" (Qur'an {refs[0]}). "
                f"Elsewhere: \"{qs[1]}\" (Qur'an {refs[1]}). The Prophet's guidance is preserved in {h}. {fill(2)}\n\n"
                f"**Application**\n\n{fill(3)} See also [Qur'an {refs[2]}](https://quran.com/{s}/{a}).\n\n"
                f"**Conclusion**\n\n{fill(2)} May Allah grant us understanding of {title.lower()}.\n")
    # Fanar: no headings, sometimes misnumbered or mislinked
    ref0 = AyahRef.parse(refs[0])
    q0 = quran_quote(corpus, refs[0])
    label = refs[0]
    roll = rng.random()
    if roll < 0.35:
        wrong = AyahRef(ref0.surah, ref0.ayah + 2)
        if corpus.is_valid(wrong):
            label = str(wrong)
    cite = f"(Surah {corpus.surah(ref0.surah).transliterated_name} {label})"
    link = ""
    if 0.35 <= roll < 0.55:
        other = AyahRef.parse(refs[1])
        link = f" This is also explained in [Qur'an {refs[1]}](https://quran.com/{other.surah}/{other.ayah + 1})."
    return (f"{title} is an important subject. {fill(1)}\n\n"
            f"The Qur'an states: \"{q0}\" {cite}.{link} {fill(2)}\n\n"
            f"{fill(2)}\n\n"
            f"{fill(1)} Muslims should think about this carefully.\n")


def build_archive(manifest, corpus, essays_dir: Path) -> Archive:
    archive = Archive()
    for p in manifest:
        for m in MODELS:
            rng = random.Random(f"essay:{SEED}:{p.id}:{m}")
            if m == "Fanar" and p.id in HAND_ESSAYS:
                text = (essays_dir / HAND_ESSAYS[p.id]).read_text(encoding="utf-8")
            else:
                text = synth_essay(m, p, corpus, rng)
            archive.add(ResponseRecord(p.id, m, text, "2025-01-01T00:00:00+00:00",
                                       {"endpoint": m, "synthetic": True}))
    return archive


# ---------------------------------------------------------------- judge policy and recording

def _jitter(text: str, salt: str) -> float:
    h = int(hashlib.sha256(f"{salt}:{text}".encode()).hexdigest()[:8], 16)
    return (h % 3 - 1) * 0.5


def _clamp(v: float) -> float:
    return min(5.0, max(1.0, v))


class PolicyJudge:
    """Deterministic judge answers, with hand-scripted ones taking precedence."""

    def __init__(self, scripted: MockScript):
        self.scripted = [e for e in scripted.entries if e.user_contains]

    def turns(self, role: str, schema_id: str | None, user: str) -> list[dict]:
        fp = request_fingerprint(role, schema_id, user)
        for e in self.scripted:
            if e.matches(role, schema_id, "judge", fp, user):
                return e.turns
        return getattr(self, "_" + schema_id.split("/")[0])(user)

    def _detect_references(self, user):
        return [{"output": {"references": []}}]

    def _semantic_relation(self, user):
        ref = re.search(r"^Reference: (.*)$", user, re.M).group(1)
        claim = re.search(r"^Claim: (.*)$", user, re.M).group(1)
        source = user.split("Source text:\n", 1)[1]
        sim = similarity(claim, source) if source.strip() else 0.0
        rel = "supports" if sim >= 0.5 else "partially_supports" if sim >= 0.2 else "unrelated"
        out = [{"output": {"relation": rel, "rationale": f"Claim and source share wording at {sim:.2f}."}}]
        m = re.match(r"Qur'an (\d+):(\d+)", ref)
        if m:
            out.insert(0, {"tool_calls": [{"name": "quran_ayah",
                                           "arguments": {"surah": int(m.group(1)), "ayah": int(m.group(2))}}]})
        return out

    def _segment(self, user):
        return [{"output": {"introduction_paragraphs": 1, "conclusion_paragraphs": 1}}]

    def _quant_scores(self, user):
        refuted = user.count("[Refuted]")
        confirmed = user.count("[Confirmed]")
        intro = not re.search(r"<introduction>\s*</introduction>", user)
        concl = not re.search(r"<conclusion>\s*</conclusion>", user)
        words = len(user.split())
        out = {
            "structure": _clamp(3.0 + 0.5 * intro + 0.5 * concl + _jitter(user, "s")),
            "theme": _clamp(4.0 + _jitter(user, "t")),
            "clarity": _clamp(3.5 + (0.5 if words > 250 else 0) + _jitter(user, "c")),
            "originality": _clamp(3.0 + _jitter(user, "o")),
            "islamic_accuracy": _clamp(3.5 + 0.5 * min(confirmed, 2) - refuted + _jitter(user, "i")),
            "justification": {"structure": "Judged from the segment boundaries.",
                              "islamic_accuracy": f"{confirmed} confirmed and {refuted} refuted references."},
        }
        return [{"output": out}]

    def _qual_verdicts(self, user):
        blocks = parse_comparison_prompt(user)

        def feats(t):
            return {"clarity": len(re.findall(r"^(?:#+ |\*\*)", t, re.M)) * 10 + len(t.split("\n\n")),
                    "accuracy": t.count("(Qur'an ") * 10 + t.count("Sahih") * 5 - t.count("Surah ") * 3,
                    "tone": -abs(len(t.split()) - 260) + (40 if "May Allah" in t else 0),
                    "depth": len(t.split())}

        f = {tag: feats(t) for tag, t in blocks.items()}
        out = {}
        for dim, key in ((QualDimension.CLARITY_STRUCTURE, "clarity"), (QualDimension.ISLAMIC_ACCURACY, "accuracy"),
                         (QualDimension.TONE_APPROPRIATENESS, "tone"), (QualDimension.DEPTH_ORIGINALITY, "depth")):
            order = sorted(blocks, key=lambda t: (-f[t][key], t))
            best, worst = order[0], order[-1]
            out[dim.value] = {"best": best, "worst": worst,
                              "best_excerpt": _excerpt(blocks[best]), "worst_excerpt": _excerpt(blocks[worst]),
                              "justification": f"Ranked on {key}."}
        out[QualDimension.COMPARATIVE_REFLECTION.value] = {
            "narrative": "The responses differ mainly in how they organise the material and how carefully they cite."}
        return [{"output": out}]


def _excerpt(text: str) -> str:
    for para in text.split("\n\n"):
        para = para.strip()
        if para and not para.startswith(("#", "**")):
            return " ".join(para.split()[:10])
    return ""


class RecordingScript(MockScript):
    """Answers from the policy and remembers every request by fingerprint."""

    def __init__(self, policy: PolicyJudge):
        super().__init__([], strict=True)
        self.policy = policy
        self.recorded: dict[str, dict] = {}

    def select(self, role, schema_id, endpoint, user):
        fp = request_fingerprint(role, schema_id, user)
        with self._lock:
            if fp not in self.recorded:
                self.recorded[fp] = {"role": role, "schema_id": schema_id, "fingerprint": fp,
                                     "turns": self.policy.turns(role, schema_id, user)}
            doc = self.recorded[fp]
        return ScriptEntry(turns=doc["turns"], role=role, schema_id=schema_id, fingerprint=fp)


def fixture_config() -> dict:
    eps = [{"name": "judge", "kind": "mock", "model": "mock-judge", "settings": {"temperature": 0}}]
    eps += [{"name": m, "kind": "mock", "model": f"mock-{m.lower()}"} for m in MODELS]
    return {"manifest": "../manifest_50.jsonl", "archive": "archive_150.jsonl", "mock_script": "mock_replay.json",
            "output_dir": "out", "offline": True, "seed": SEED, "workers": 4, "judge": "judge",
            "chatbots": list(MODELS), "endpoints": eps}


def record_replay_script(cfg: RunConfig, manifest, archive: Archive, corpus, policy: PolicyJudge) -> dict:
    script = RecordingScript(policy)
    with tempfile.TemporaryDirectory() as tmp:
        monitor = NetworkMonitor(True)
        gw = Gateway(cfg.endpoints, script, TranscriptArchive(tmp), offline=True, force_mock=True, monitor=monitor)
        rt = Runtime(replace(cfg, workers=1), corpus, gw, OfflineRetriever(), monitor)
        run_eval_quant(rt, archive, manifest)
        run_eval_qual(rt, archive, manifest, list(MODELS))
        gw.close()
    entries = [script.recorded[fp] for fp in sorted(script.recorded)]
    return {"strict": True, "entries": entries}


def _jsonl(path: Path, rows) -> None:
    path.write_text("".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows), encoding="utf-8")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", default=str(Path(__file__).resolve().parent.parent / "fixtures"))
    args = ap.parse_args(argv)
    root = Path(args.root)
    golden = json.loads((root / "golden" / "published_results.json").read_text())
    corpus = load_corpus()

    manifest = build_manifest()
    save_manifest(manifest, root / "manifest_50.jsonl")
    _jsonl(root / "scores_150.jsonl", build_scores(manifest, golden))
    save_verdicts(build_verdicts(), root / "verdicts_50.jsonl")

    replay = root / "replay"
    replay.mkdir(exist_ok=True)
    archive = build_archive(manifest, corpus, root / "essays")
    save_archive(archive, replay / "archive_150.jsonl")
    conf = fixture_config()
    (replay / "config.yaml").write_text(yaml.safe_dump(conf, sort_keys=False), encoding="utf-8")

    from faithcheck.config import load_run_config
    cfg = load_run_config(replay / "config.yaml")
    policy = PolicyJudge(MockScript.load(root / "mock_acceptance.yaml"))
    doc = record_replay_script(cfg, manifest, archive, corpus, policy)
    (replay / "mock_replay.json").write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=1) + "\n",
                                             encoding="utf-8")
    print(f"wrote fixtures under {root}: {len(manifest)} prompts, {len(archive)} responses, "
          f"{len(doc['entries'])} scripted judge requests")
    return 0


if __name__ == "__main__":
    sys.exit(main())
