#!/usr/bin/env python3
"""Regenerate the bundled test fixtures (deterministic, seeded).

Writes synthetic train/eval dataset files whose joint category composition
reproduces the documented six-category distribution exactly, plus the split
manifest, judge parser cases, classification gold cases, and search fixtures.
"""
from __future__ import annotations

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from curated_rag.dataset import Category, Dataset, QASample, Split, save_dataset

SEED = 20240501
FIXTURE_DIR = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

# Per-category sample counts. Together train+eval reproduce the documented
# percentages (27.9/27.1/21.4/9.2/9.2/5.2) exactly under 1-decimal rounding.
EVAL_COUNTS = {
    Category.EMPLOYMENT: 90,
    Category.FAMILY: 87,
    Category.REAL_ESTATE: 69,
    Category.CORPORATE: 30,
    Category.PERSONAL_INJURY: 30,
    Category.CIVIL_RIGHTS: 17,
}
TRAIN_COUNTS = {
    Category.EMPLOYMENT: 237,
    Category.FAMILY: 231,
    Category.REAL_ESTATE: 182,
    Category.CORPORATE: 78,
    Category.PERSONAL_INJURY: 78,
    Category.CIVIL_RIGHTS: 44,
}

DOMAINS = {
    Category.EMPLOYMENT: ("employment", "workplace-law-library.example.org"),
    Category.FAMILY: ("family", "family-law-notes.example.org"),
    Category.REAL_ESTATE: ("realestate", "tenancy-and-property.example.org"),
    Category.CORPORATE: ("corporate", "small-business-law.example.org"),
    Category.PERSONAL_INJURY: ("injury", "injury-claims-guide.example.org"),
    Category.CIVIL_RIGHTS: ("civilrights", "rights-and-liberties.example.org"),
}

SCENARIOS = {
    Category.EMPLOYMENT: [
        "My employer cut my scheduled hours in half without any notice last week.",
        "I was let go the day after I asked about unpaid overtime from the last quarter.",
        "My manager keeps changing my shifts after the schedule is posted.",
        "I have been working through lunch breaks for months because of understaffing.",
        "My final paycheque after quitting is three weeks late and nobody answers my emails.",
        "The company reclassified me as a contractor but my duties did not change at all.",
        "I was told my position is redundant while a new hire is doing my exact job.",
    ],
    Category.FAMILY: [
        "My ex moved to another city with our kids without telling me first.",
        "My spouse emptied our joint account the week before filing for separation.",
        "My parents divorced recently and my father took the family dog with him.",
        "My former partner keeps missing the scheduled visitation exchanges.",
        "My sister wants me to take guardianship of her teenager for a school year.",
        "My ex refuses to pay their share of our daughter's medical bills.",
        "We separated last spring and cannot agree on who stays in the house.",
    ],
    Category.REAL_ESTATE: [
        "My landlord entered my apartment while I was away without any notice.",
        "The seller never disclosed the basement floods every spring.",
        "My landlord is raising the rent by a third with sixty days notice.",
        "The property line on the survey does not match the fence my neighbour built.",
        "My condo board fined me for a renovation they approved in writing last year.",
        "My tenant stopped paying rent and will not respond to letters.",
        "The building sold and the new owner says my lease terms no longer apply.",
    ],
    Category.CORPORATE: [
        "My business partner signed a loan on behalf of our company without asking me.",
        "A supplier is invoicing our small company for goods we never ordered.",
        "My co-founder wants to dilute my shares after I refused to sell.",
        "A client is using our deliverables outside the licence we agreed on.",
        "Our landlord says the corporation's lease makes me personally liable.",
        "A former employee took our client list to a competitor.",
    ],
    Category.PERSONAL_INJURY: [
        "I slipped on an unmarked wet floor in a grocery store and broke my wrist.",
        "A delivery driver rear-ended me at a red light and my neck still hurts.",
        "My neighbour's dog bit my child at the park last month.",
        "A contractor left an open trench and I fell into it walking home at night.",
        "I was hurt at a gym when a machine with a known defect failed.",
        "A cyclist ran a stop sign and knocked me over on the crosswalk.",
    ],
    Category.CIVIL_RIGHTS: [
        "A store clerk followed me around and then banned me without any reason.",
        "My application was rejected after the interviewer asked about my religion.",
        "A landlord refused to show me a unit after hearing my accent on the phone.",
        "Security guards searched my bag at a transit station without explanation.",
        "My request for a workplace accommodation for my disability was ignored.",
    ],
}

DETAILS = [
    "This has been going on since {month} and I kept copies of every message.",
    "I live in {province} and the other side knows that.",
    "I already tried talking to them directly but they refuse to put anything in writing.",
    "A friend told me the rules might be different here but could not point to anything specific.",
    "There are two witnesses who saw what happened and are willing to confirm it.",
    "I am worried about the cost of getting formal legal help for something like this.",
    "The amount involved is roughly {amount} dollars, which matters a lot to us right now.",
    "I have photos and a short video from that day saved on my phone.",
    "Nothing was ever signed about this specific situation, only verbal promises.",
    "They sent one letter through a paralegal and then went silent for weeks.",
]

CLOSERS = [
    "What are my options here?",
    "Can they actually do that?",
    "Do I have any recourse, and what should I do first?",
    "Is it worth pursuing this formally?",
    "What would a court likely look at in a situation like this?",
    "How should I protect myself going forward?",
]

ANSWER_RULES = {
    Category.EMPLOYMENT: [
        "Employment standards legislation sets minimums for notice, overtime, and final pay that an employer cannot contract out of.",
        "A significant unilateral change to hours or duties can amount to constructive dismissal.",
        "Misclassification as a contractor is judged by the real working relationship, not the label.",
        "Final wages are generally due within a fixed statutory period after the last day worked.",
        "Reprisal for asserting a statutory entitlement is itself prohibited.",
    ],
    Category.FAMILY: [
        "Parenting arrangements are decided on the best interests of the child, not the parents' preferences.",
        "Relocation with a child usually requires consent or a court order where an order or agreement exists.",
        "Pets are treated as personal property, and courts look at ownership papers and who provides care.",
        "Child support is a right of the child and cannot be waived by either parent.",
        "Joint accounts emptied near separation are usually traced back into the equalization calculation.",
    ],
    Category.REAL_ESTATE: [
        "A landlord generally needs proper written notice, commonly 24 hours, before entering a rented unit.",
        "Rent increases are capped and require the statutory notice form where rent control applies.",
        "A seller must disclose known latent defects that make the property dangerous or unfit.",
        "A new owner inherits existing tenancies on the same terms.",
        "Boundary disputes turn on the registered survey, not fence placement.",
    ],
    Category.CORPORATE: [
        "A partner or director can bind the company within apparent authority, but may owe the company for acting without it.",
        "Personal liability for corporate debts requires a guarantee or conduct that pierces the corporate veil.",
        "Departing employees may not use confidential client lists taken from the employer.",
        "A licence defines the permitted use; use beyond it is infringement or breach of contract.",
        "Unordered goods need not be paid for, but respond in writing and keep the evidence.",
    ],
    Category.PERSONAL_INJURY: [
        "An occupier owes visitors a duty to keep premises reasonably safe, and warning signage matters.",
        "A rear-end collision creates a strong inference of negligence against the following driver.",
        "Dog owners are typically strictly liable for bites, subject to provocation defences.",
        "Limitation periods for injury claims are short, often two years from discovery.",
        "Damages cover treatment, lost income, and pain and suffering, with documentation central.",
    ],
    Category.CIVIL_RIGHTS: [
        "Human rights codes prohibit discrimination in services, housing, and employment on protected grounds.",
        "Interview questions about religion or origin unrelated to the job are prohibited.",
        "Service providers may refuse service only for non-discriminatory reasons.",
        "Employers have a duty to accommodate disabilities to the point of undue hardship.",
        "Complaints go to the human rights tribunal, usually within one year of the incident.",
    ],
}

ANSWER_CAVEATS = [
    "Document everything and get advice from a local clinic or lawyer, since details change the analysis.",
    "Deadlines apply, so act promptly.",
    "The exact outcome depends on your province's rules.",
    "Keep written records; they usually decide these disputes.",
]

MONTHS = ["January", "February", "March", "April", "May", "June", "July",
          "August", "September", "October", "November", "December"]
PROVINCES = ["Ontario", "British Columbia", "Alberta", "Quebec", "Nova Scotia", "Manitoba"]


def make_question(rng: random.Random, category: Category) -> str:
    parts = [rng.choice(SCENARIOS[category])]
    for _ in range(rng.randint(1, 5)):
        detail = rng.choice(DETAILS).format(
            month=rng.choice(MONTHS),
            province=rng.choice(PROVINCES),
            amount=rng.choice([500, 1200, 2500, 4000, 8000, 15000]),
        )
        parts.append(detail)
    parts.append(rng.choice(CLOSERS))
    return " ".join(parts)


def make_answer(rng: random.Random, category: Category) -> str:
    rules = ANSWER_RULES[category]
    parts = [rng.choice(rules)]
    if rng.random() < 0.5:
        second = rng.choice(rules)
        if second != parts[0]:
            parts.append(second)
    parts.append(rng.choice(ANSWER_CAVEATS))
    return " ".join(parts)


def make_samples(rng: random.Random, counts: dict, split: Split, id_prefix: str) -> list[QASample]:
    order: list[Category] = []
    for category, n in counts.items():
        order.extend([category] * n)
    rng.shuffle(order)

    pools: dict[Category, list[str]] = {}
    if split == Split.TRAIN:
        for category, n in counts.items():
            slug, domain = DOMAINS[category]
            pool_size = max(1, int(n * 0.9))
            pools[category] = [
                f"https://{domain}/articles/{slug}-{i:04d}" for i in range(pool_size)
            ]

    used_per_cat: dict[Category, int] = {c: 0 for c in counts}
    samples = []
    for i, category in enumerate(order):
        slug, domain = DOMAINS[category]
        if split == Split.TRAIN:
            pool = pools[category]
            j = used_per_cat[category]
            url = pool[j] if j < len(pool) else pool[rng.randrange(len(pool))]
            used_per_cat[category] += 1
            # Sprinkle canonicalization variants; they must dedup to the same entry.
            if i % 9 == 3:
                url = url + "#overview"
            elif i % 13 == 7:
                url = url + "/"
            elif i % 17 == 11:
                url = "HTTPS://" + url[len("https://") :]
        else:
            url = f"https://{domain}/eval-refs/{slug}-{i:04d}"
        samples.append(
            QASample(
                id=f"{id_prefix}-{i:04d}",
                question=make_question(rng, category),
                expert_answer=make_answer(rng, category),
                citation_url=url,
                category=category,
                split=split,
            )
        )
    return samples


JUDGE_CASES = [
    {"raw": "VERDICT: FACTUAL\nNo contradiction with the expert answer.", "expected": "factual"},
    {"raw": "VERDICT: NOT_FACTUAL\nThe deadline stated is wrong.", "expected": "not_factual"},
    {"raw": "**VERDICT: factual** matches the expert answer.", "expected": "factual"},
    {"raw": "verdict: not_factual - contradicts the expert on ownership.", "expected": "not_factual"},
    {"raw": "## Assessment\nVERDICT: FACTUAL", "expected": "factual"},
    {"raw": "VERDICT: NOT FACTUAL because the limitation period differs.", "expected": "not_factual"},
    {"raw": "VERDICT:FACTUAL", "expected": "factual"},
    {"raw": "The answer misstates the law. VERDICT: NOT_FACTUAL", "expected": "not_factual"},
    {"raw": "VERDICT: FACTUAL\nVERDICT: NOT_FACTUAL", "expected": "factual"},
    {"raw": "VERDICT: NOT_FACTUAL\nVERDICT: FACTUAL", "expected": "not_factual"},
    {"raw": "I think the answer is factually fine overall.", "expected": "parse_failure"},
    {"raw": "", "expected": "parse_failure"},
    {"raw": "   \n\t  ", "expected": "parse_failure"},
    {"raw": "VERDICT: FACTUALLY WRONG", "expected": "parse_failure"},
    {"raw": "`VERDICT: factual`", "expected": "factual"},
    {"raw": "The **VERDICT: NOT_FACTUAL** stands after review.", "expected": "not_factual"},
    {"raw": "Verdict - factual, no contradictions found.", "expected": "factual"},
    {"raw": "random garbage 123 %% ++", "expected": "parse_failure"},
    {"raw": "VERDICT: NOT-FACTUAL: misstates the notice requirement.", "expected": "not_factual"},
    {"raw": "Final verdict: FACTUAL.", "expected": "factual"},
]

CLASSIFY_CASES = [
    {
        "question": (
            "My parents divorced a few months ago and my father took the family dog, "
            "which is registered under my mother's name. He is threatening to give the dog "
            "to a friend and we are afraid we would never see him again. Can we fight to "
            "get the dog back if that happens?"
        ),
        "category": "Family and juvenile law",
    },
    {
        "question": (
            "I was fired the day after asking about months of unpaid overtime. My manager "
            "says I was a contractor, but I worked fixed shifts with their equipment. "
            "Do I have any recourse?"
        ),
        "category": "Employment and labour law",
    },
    {
        "question": (
            "My landlord entered my unit while I was at work without giving any notice and "
            "now wants to raise the rent by a third. Is any of that allowed?"
        ),
        "category": "Real estate law",
    },
]

SEARCH_RESULTS = {
    "dog custody divorce ontario": [
        {
            "url": "https://web.example.net/articles/pet-ownership-separation",
            "title": "Pets and separation",
            "snippet": "How courts treat pets as property.",
        },
        {
            "url": "https://web.example.net/articles/family-property-basics",
            "title": "Family property basics",
            "snippet": "Dividing property after separation.",
        },
    ],
    "landlord entry notice rental unit": [
        {
            "url": "https://web.example.net/articles/landlord-entry-rules",
            "title": "When a landlord may enter",
            "snippet": "Notice requirements for entry.",
        }
    ],
}


def main() -> None:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)

    train_samples = make_samples(rng, TRAIN_COUNTS, Split.TRAIN, "train")
    eval_samples = make_samples(rng, EVAL_COUNTS, Split.EVAL, "eval")
    save_dataset(Dataset(samples=tuple(train_samples)), FIXTURE_DIR / "legalqa_train.jsonl")
    save_dataset(Dataset(samples=tuple(eval_samples)), FIXTURE_DIR / "legalqa_eval.jsonl")

    manifest = [{"id": s.id, "split": s.split.value} for s in train_samples + eval_samples]
    (FIXTURE_DIR / "split_manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")

    distinct_train_citations = len(
        {s.citation_url.lower().split("#")[0].rstrip("/") for s in train_samples}
    )
    meta = {
        "seed": SEED,
        "train_samples": len(train_samples),
        "eval_samples": len(eval_samples),
        "train_distinct_citations": distinct_train_citations,
        "train_category_counts": {c.value: n for c, n in TRAIN_COUNTS.items()},
        "eval_category_counts": {c.value: n for c, n in EVAL_COUNTS.items()},
        "full_category_counts": {
            c.value: TRAIN_COUNTS[c] + EVAL_COUNTS[c] for c in TRAIN_COUNTS
        },
        "expected_category_percentages": {
            Category.EMPLOYMENT.value: 27.9,
            Category.FAMILY.value: 27.1,
            Category.REAL_ESTATE.value: 21.4,
            Category.CORPORATE.value: 9.2,
            Category.PERSONAL_INJURY.value: 9.2,
            Category.CIVIL_RIGHTS.value: 5.2,
        },
    }
    (FIXTURE_DIR / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    (FIXTURE_DIR / "judge_cases.json").write_text(json.dumps(JUDGE_CASES, indent=2) + "\n")
    (FIXTURE_DIR / "classify_cases.json").write_text(json.dumps(CLASSIFY_CASES, indent=2) + "\n")
    (FIXTURE_DIR / "search_results.json").write_text(json.dumps(SEARCH_RESULTS, indent=2) + "\n")

    print(f"train={len(train_samples)} eval={len(eval_samples)} "
          f"distinct_train_citations={distinct_train_citations}")


if __name__ == "__main__":
    main()
