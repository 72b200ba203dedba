#!/usr/bin/env python3
"""Generate the shipped fixture data under fixtures/.

Deterministic: same seed, same bytes.  Run from the repository root:

    python3 scripts/gen_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "fixtures"

ENV_SENTENCES = [
    "The company reduced carbon emissions across its facilities",
    "Water usage and waste disposal volumes declined this quarter",
    "New climate regulation affected our energy procurement strategy",
    "We invested in pollution controls and site remediation programs",
    "Sustainability reporting now covers scope one and scope two emissions",
    "Energy efficiency projects lowered greenhouse gas intensity",
    "Environmental compliance costs rose due to stricter regulation",
    "The board reviewed climate risk and water scarcity exposure",
    "Remediation of legacy waste sites continued on schedule",
    "Renewable energy purchases offset a portion of our emissions",
]

BUSINESS_SENTENCES = [
    "Revenue for the quarter was consistent with management expectations",
    "Operating margin improved on lower input costs",
    "The company repurchased shares under the existing authorization",
    "Selling and administrative expenses grew modestly",
    "Cash flow from operations funded capital expenditures",
    "We recognized a deferred tax benefit during the period",
    "Inventory levels normalized after supply chain disruptions",
    "The segment reported steady demand across product lines",
    "Interest expense declined following debt repayment",
    "Management reaffirmed its full year guidance",
]

CORPUS_TOPICS = [
    "climate", "emissions", "water", "waste", "energy", "pollution",
    "sustainability", "regulation", "remediation", "carbon",
]

CORPUS_TEMPLATES = [
    "This guide explains how {a} and {b} shape long term business value.",
    "A case study on {a} management shows measurable gains in {b} outcomes.",
    "Survey respondents ranked {a} ahead of {b} among material risks.",
    "Finance leaders should integrate {a} metrics into {b} planning.",
    "The report outlines practical steps for {a} disclosure and {b} audits.",
    "Workshops covered {a} accounting alongside {b} strategy.",
    "Investors increasingly request {a} data together with {b} targets.",
    "Boards benefit from linking {a} goals to executive {b} reviews.",
]

TICKERS = ["ALP", "BRV", "CYG", "DLT", "ECH", "FXT", "GMA", "HLX",
           "ION", "JNR", "KPA", "LMD"]

QUARTERS = [(2015, 1), (2015, 2), (2015, 3), (2015, 4), (2016, 1)]


def make_corpus(rng: np.random.Generator) -> list[str]:
    docs = []
    for d in range(24):
        n_par = int(rng.integers(2, 4))
        paragraphs = []
        for _ in range(n_par):
            n_sent = int(rng.integers(4, 8))
            sents = []
            for _ in range(n_sent):
                t = CORPUS_TEMPLATES[rng.integers(len(CORPUS_TEMPLATES))]
                a, b = rng.choice(CORPUS_TOPICS, size=2, replace=False)
                sents.append(t.format(a=a, b=b))
            paragraphs.append(" ".join(sents))
        docs.append("\n\n".join(paragraphs))
    return docs


def make_filing(rng: np.random.Generator, env_heavy: bool) -> str:
    n_env = int(rng.integers(4, 7)) if env_heavy else int(rng.integers(1, 3))
    n_biz = int(rng.integers(8, 12))
    sents = [
        ENV_SENTENCES[i] + "."
        for i in rng.choice(len(ENV_SENTENCES), size=n_env, replace=False)
    ] + [
        BUSINESS_SENTENCES[i] + "."
        for i in rng.choice(len(BUSINESS_SENTENCES), size=n_biz, replace=True)
    ]
    order = rng.permutation(len(sents))
    return " ".join(sents[i] for i in order)


def make_scores(rng: np.random.Generator) -> dict[str, list[tuple[int, int, float]]]:
    """Quarterly series with ~60% zero deltas, both signs, and one gap."""
    series = {}
    for t_i, ticker in enumerate(TICKERS):
        score = float(rng.integers(20, 40))
        points = []
        for q_i, (year, quarter) in enumerate(QUARTERS):
            if ticker == "DLT" and (year, quarter) == (2015, 3):
                continue  # deliberate gap: breaks the delta chain
            if q_i > 0:
                roll = rng.random()
                if roll < 0.6:
                    delta = 0.0
                elif roll < 0.8:
                    delta = float(np.round(rng.uniform(0.5, 3.0), 1))
                else:
                    delta = -float(np.round(rng.uniform(0.5, 3.0), 1))
                score = round(score + delta, 1)
            points.append((year, quarter, score))
        series[ticker] = points
    return series


def main() -> None:
    rng = np.random.default_rng(20150401)

    corpus_dir = OUT / "corpus"
    filings_dir = OUT / "filings"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    filings_dir.mkdir(parents=True, exist_ok=True)

    for i, doc in enumerate(make_corpus(rng)):
        (corpus_dir / f"doc{i:03d}.txt").write_text(doc + "\n", encoding="utf-8")

    scores = make_scores(rng)
    lines = ["ticker,year,quarter,env_score"]
    for ticker in TICKERS:
        for year, quarter, score in scores[ticker]:
            lines.append(f"{ticker},{year},{quarter},{score}")
    (OUT / "scores.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # filings for every scored quarter after the first, plus one filing with
    # no scores (JNX) so the join report has something to count
    manifest = []
    for ticker in TICKERS:
        deltas_known = {(y, q) for y, q, _ in scores[ticker]}
        for year, quarter in QUARTERS[1:]:
            if (year, quarter) not in deltas_known:
                continue
            prev = QUARTERS[QUARTERS.index((year, quarter)) - 1]
            env_heavy = prev in deltas_known and rng.random() < 0.5
            name = f"{ticker}_{year}Q{quarter}.txt"
            (filings_dir / name).write_text(
                make_filing(rng, env_heavy) + "\n", encoding="utf-8"
            )
            manifest.append({
                "ticker": ticker, "year": year, "quarter": quarter,
                "path": f"filings/{name}",
            })
    (filings_dir / "JNX_2015Q2.txt").write_text(
        make_filing(rng, False) + "\n", encoding="utf-8"
    )
    manifest.append({
        "ticker": "JNX", "year": 2015, "quarter": 2,
        "path": "filings/JNX_2015Q2.txt",
    })
    with open(OUT / "filings.jsonl", "w", encoding="utf-8") as fh:
        for rec in manifest:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    # hand-enumerable series for the label-derivation check: zeros, a
    # positive, a negative, and a quarter gap (2015Q2 missing)
    (OUT / "scores_small.csv").write_text(
        "ticker,year,quarter,env_score\n"
        "AAA,2015,1,10.0\n"
        "AAA,2015,2,10.0\n"
        "AAA,2015,3,12.5\n"
        "AAA,2015,4,11.0\n"
        "AAA,2016,1,11.0\n"
        "GAP,2015,1,20.0\n"
        "GAP,2015,3,21.0\n"
        "GAP,2015,4,21.0\n",
        encoding="utf-8",
    )

    (OUT / "fixture.cfg").write_text(
        "# desk-scale fixture configuration\n"
        "seq_len=128\n"
        "dim=32\n"
        "layers=2\n"
        "heads=2\n"
        "ffn_dim=64\n"
        "dropout=0.0\n"
        "lr=0.001\n"
        "epochs=4\n"
        "batch=8\n"
        "seed=0\n"
        "vocab_size=2000\n"
        "min_freq=2\n"
        "top_k=3\n"
        "change_epsilon=0.0\n",
        encoding="utf-8",
    )

    n_corpus_words = sum(
        len(p.read_text(encoding="utf-8").split())
        for p in corpus_dir.glob("*.txt")
    )
    print(f"fixtures: {len(list(corpus_dir.glob('*.txt')))} corpus docs "
          f"({n_corpus_words} words), {len(manifest)} filings, "
          f"{sum(len(v) for v in scores.values())} score rows")


if __name__ == "__main__":
    main()
