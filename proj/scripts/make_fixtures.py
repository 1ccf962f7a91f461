#!/usr/bin/env python3
"""Regenerate the synthetic CoNLL fixture corpora under data/fixtures/.

The fixtures are checked in; rerun this script only when the corpus design
changes. Everything is seeded, so reruns are byte-identical.
"""
import random
import os

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "data", "fixtures")

CHEM_SINGLE = [
    "zinc", "aspirin", "morphine", "ketamine", "cisplatin", "tamoxifen",
    "ibuprofen", "dopamine", "haloperidol", "warfarin", "caffeine",
    "nicotine", "methotrexate", "dexamethasone", "propranolol", "lithium",
]
CHEM_MULTI = [
    ["zinc", "sulfate"], ["sodium", "chloride"], ["retinoic", "acid"],
    ["nitric", "oxide"], ["calcium", "carbonate"], ["vitamin", "D"],
    ["ferrous", "sulfate"], ["ascorbic", "acid"],
]
DIS_SINGLE = [
    "glioma", "asthma", "sepsis", "carcinoma", "anemia", "neuropathy",
    "hypertension", "epilepsy", "melanoma", "nephritis", "psoriasis",
    "hepatitis", "lymphoma", "migraine", "osteoporosis", "dermatitis",
]
DIS_MULTI = [
    ["renal", "failure"], ["breast", "cancer"], ["heart", "failure"],
    ["diabetes", "mellitus"], ["rheumatoid", "arthritis"],
    ["pulmonary", "fibrosis"], ["aplastic", "anemia"], ["bipolar", "disorder"],
]

# Templates: C = chemical slot, D = disease slot, literal tokens otherwise.
# "CC" style adjacency comes from templates placing two slots side by side.
CHEM_TEMPLATES = [
    "Treatment with C reduced tumor growth in mice .",
    "C was administered at a daily dose of 20 mg .",
    "We measured plasma levels of C and C after infusion .",
    "C , C and C were tested in vitro .",
    "Exposure to C increased oxidative stress markers .",
    "The C C interaction was examined in rats .",
    "Pretreatment with C blocked the response to C .",
    "C inhibited cell proliferation in a dose dependent manner .",
    "Serum C concentrations were elevated in the treated group .",
    "C",
    "Patients received either C or placebo for six weeks .",
    "No effect of C on body weight was observed .",
    "The study was conducted at three clinical centers .",
    "Samples were collected at baseline and after treatment .",
    "C remained detectable for 48 hours .",
]
DIS_TEMPLATES = [
    "Patients with D were enrolled in the trial .",
    "D and D were the most frequent adverse events .",
    "The incidence of D increased with age .",
    "We report a case of D following surgery .",
    "D",
    "Family history of D was recorded for each subject .",
    "Severe D developed in two patients .",
    "The D D comorbidity is poorly understood .",
    "Symptoms of D resolved within one week .",
    "All controls were free of D at baseline .",
    "The registry included outcomes for D across five hospitals .",
    "No new cases of D were observed during follow up .",
    "These findings require confirmation in larger cohorts .",
    "Data were analyzed using standard methods .",
]
MULTI_TEMPLATES = [
    "C induced D in a subset of patients .",
    "Treatment of D with C improved survival .",
    "C exposure was associated with D and D .",
    "Patients with D received C daily .",
    "Neither C nor C prevented D .",
    "D was attributed to prolonged C use .",
    "The effect of C on D progression remains unclear .",
    "Both D and D responded to C therapy .",
    "Controls without D were matched by age .",
    "C levels did not differ between groups .",
    "The protocol was approved by the ethics board .",
]

# Learnability corpus: every occurrence of a cue word is a single-token
# entity; filler words are never tagged. Small closed vocabulary.
CUE_WORDS = ["zoricin", "plaxafen", "morvane", "tregolin", "xandrol", "quibrex"]
FILLER = [
    "the", "dose", "of", "was", "given", "after", "before", "with",
    "patients", "received", "daily", "infusion", "oral", "twice",
    "response", "to", "and", "under", "study", "baseline",
]


def pick_entity(rng, singles, multis):
    if rng.random() < 0.30:
        return list(rng.choice(multis))
    return [rng.choice(singles)]


def fill_template(rng, template, etype_for):
    tokens, tags = [], []
    for slot in template.split():
        if slot in ("C", "D"):
            etype = etype_for[slot]
            ent = pick_entity(rng, *(
                (CHEM_SINGLE, CHEM_MULTI) if slot == "C" else (DIS_SINGLE, DIS_MULTI)))
            for i, w in enumerate(ent):
                tokens.append(w)
                tags.append(("B-" if i == 0 else "I-") + etype)
        else:
            tokens.append(slot)
            tags.append("O")
    return tokens, tags


def gen_corpus(rng, templates, etype_for, n):
    sents = []
    for _ in range(n):
        t = rng.choice(templates)
        sents.append(fill_template(rng, t, etype_for))
    return sents


def gen_cue_corpus(rng, n):
    sents = []
    for _ in range(n):
        length = rng.randint(3, 7)
        n_cues = rng.randint(1, min(3, length))
        cue_pos = sorted(rng.sample(range(length), n_cues))
        tokens, tags = [], []
        for i in range(length):
            if i in cue_pos:
                tokens.append(rng.choice(CUE_WORDS))
                tags.append("B-Chemical")
            else:
                tokens.append(rng.choice(FILLER))
                tags.append("O")
        sents.append((tokens, tags))
    return sents


def write_conll(path, sents):
    with open(path, "w", encoding="utf-8") as f:
        for tokens, tags in sents:
            for w, t in zip(tokens, tags):
                f.write(f"{w}\t{t}\n")
            f.write("\n")


def emit(name, splits):
    d = os.path.join(OUT, name)
    os.makedirs(d, exist_ok=True)
    for split, sents in splits.items():
        write_conll(os.path.join(d, f"{split}.conll"), sents)
        print(f"{name}/{split}.conll: {len(sents)} sentences")


def main():
    rng = random.Random(20240611)
    emit("chem", {
        "train": gen_corpus(rng, CHEM_TEMPLATES, {"C": "Chemical"}, 120),
        "dev": gen_corpus(rng, CHEM_TEMPLATES, {"C": "Chemical"}, 40),
        "test": gen_corpus(rng, CHEM_TEMPLATES, {"C": "Chemical"}, 40),
    })
    emit("disease", {
        "train": gen_corpus(rng, DIS_TEMPLATES, {"D": "Disease"}, 120),
        "dev": gen_corpus(rng, DIS_TEMPLATES, {"D": "Disease"}, 40),
        "test": gen_corpus(rng, DIS_TEMPLATES, {"D": "Disease"}, 40),
    })
    emit("multi", {
        "train": gen_corpus(rng, MULTI_TEMPLATES,
                            {"C": "Chemical", "D": "Disease"}, 72),
        "dev": gen_corpus(rng, MULTI_TEMPLATES,
                          {"C": "Chemical", "D": "Disease"}, 24),
        "test": gen_corpus(rng, MULTI_TEMPLATES,
                           {"C": "Chemical", "D": "Disease"}, 24),
    })
    emit("cue", {
        "train": gen_cue_corpus(rng, 50),
        "dev": gen_cue_corpus(rng, 30),
        "test": gen_cue_corpus(rng, 40),
    })


if __name__ == "__main__":
    main()
