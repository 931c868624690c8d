"""Build src/faithcheck/data/quran.json.gz from the quran-json npm package (CC-BY-4.0).

    npm pack quran-json@3.1.2
    python scripts/build_corpus.py quran-json-3.1.2.tgz

Arabic: Uthmani text (quranenc.com); English: Saheeh International (tanzil.net).
"""
import gzip
import json
import sys
import tarfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from faithcheck.corpus import normalize_surah_name  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "src" / "faithcheck" / "data" / "quran.json.gz"

# common spellings not derivable from the transliteration column
EXTRA_ALIASES = {
    1: ["Fatiha", "Al-Fatiha", "The Opening"],
    2: ["Baqara"],
    3: ["Al-Imran", "Aal-Imran", "Aal-e-Imran", "Al Imran", "Imran", "The Family of Imran"],
    4: ["Nisaa", "An-Nisaa"],
    9: ["Tauba", "Tawba", "Bara'ah", "Baraah"],
    17: ["Bani Isra'il", "Bani Israil"],
    21: ["Al-Anbiya", "Anbiya"],
    23: ["Muminun", "Al-Muminoon"],
    29: ["Ankaboot", "Ankabut"],
    33: ["Ahzaab"],
    36: ["Yasin", "Yaseen", "Ya Seen"],
    40: ["Al-Mu'min", "Mumin"],
    41: ["Ha Mim Sajdah"],
    42: ["Ash-Shura", "Shura"],
    47: ["Al-Qital"],
    55: ["Rahmaan"],
    58: ["Al-Mujadilah", "Mujadalah"],
    76: ["Ad-Dahr", "Dahr"],
    78: ["An-Naba'", "Nabaa"],
    93: ["Ad-Duha", "Duha"],
    94: ["Al-Inshirah", "Inshirah"],
    99: ["Az-Zilzal", "Zilzal"],
    109: ["Al-Kafiroon", "Kafiroon"],
    111: ["Al-Lahab", "Lahab"],
    112: ["Al-Tawhid", "Tawheed"],
}


def _variants(name: str) -> set[str]:
    base = normalize_surah_name(name)
    out = {base}
    if base.endswith("ah") and len(base) > 4:
        out.add(base[:-1])
    return {v for v in out if v}


def main(tgz: str) -> None:
    with tarfile.open(tgz) as tf:
        ar = json.load(tf.extractfile("package/dist/quran.json"))
        en = json.load(tf.extractfile("package/dist/quran_en.json"))

    owner: dict[str, int] = {}
    clashes: set[str] = set()
    per_surah: dict[int, set[str]] = {}
    for s in en:
        names = [s["transliteration"], s["translation"], *EXTRA_ALIASES.get(s["id"], [])]
        aliases = set().union(*(_variants(n) for n in names))
        per_surah[s["id"]] = aliases
        for a in aliases:
            if a in owner and owner[a] != s["id"]:
                clashes.add(a)
            owner.setdefault(a, s["id"])
    for sid in per_surah:
        per_surah[sid] -= clashes

    surahs = []
    ayat = {}
    for s_ar, s_en in zip(ar, en):
        sid = s_en["id"]
        assert s_ar["id"] == sid and len(s_ar["verses"]) == len(s_en["verses"]) == s_en["total_verses"]
        surahs.append(
            {
                "number": sid,
                "transliterated_name": s_en["transliteration"],
                "arabic_name": s_en["name"],
                "english_name": s_en["translation"],
                "aliases": sorted(per_surah[sid]),
                "ayah_count": s_en["total_verses"],
            }
        )
        for v_ar, v_en in zip(s_ar["verses"], s_en["verses"]):
            ayat[f"{sid}:{v_en['id']}"] = {"arabic": v_ar["text"], "translations": {"en.sahih": v_en["translation"]}}

    doc = {
        "schema": "faithcheck.corpus/1",
        "numbering": "hafs",
        "translators": {
            "en.sahih": {"name": "Saheeh International", "language": "en", "source": "tanzil.net via quran-json 3.1.2"}
        },
        "arabic_source": "Uthmani text, The Noble Qur'an Encyclopedia via quran-json 3.1.2",
        "license": "CC-BY-4.0",
        "surahs": surahs,
        "ayat": ayat,
    }
    raw = json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode()
    # mtime=0 keeps the archive byte-stable across rebuilds
    with open(OUT, "wb") as fh, gzip.GzipFile(fileobj=fh, mode="wb", mtime=0, filename="") as gz:
        gz.write(raw)
    print(f"wrote {OUT} ({len(ayat)} ayat, {len(clashes)} dropped alias clashes: {sorted(clashes)})")


if __name__ == "__main__":
    main(sys.argv[1])
