"""Regenerate the shipped fixture corpus (data/fixtures/notes.jsonl).

The fixture is deterministic: template-filled note bodies with category-specific
framing sentences, a few de-identification markers, and one whitespace-only
record so the cleaning stage has something to reject.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from clinsynth.templates import default_lexicon, default_template, fill_template

OUT = Path(__file__).resolve().parents[1] / "src/clinsynth/data/fixtures/notes.jsonl"

CATEGORIES = {
    "Discharge summary": 60,
    "Radiology": 40,
    "Nursing": 35,
    "Progress note": 25,
}

FRAMES = {
    "Discharge summary": [
        "Admission and discharge summary for [**Name**]. The patient was admitted with the findings below and discharged in stable condition.",
        "Discharge summary. Hospital course was uncomplicated. Dr. [**Last Name**] reviewed the plan with the patient before discharge.",
        "The patient tolerated treatment well. Follow up with primary care in one week. Medications were reconciled at discharge.",
    ],
    "Radiology": [
        "Portable chest radiograph obtained at the bedside. Comparison made with the prior study from [**Date**].",
        "CT of the abdomen and pelvis with contrast. No acute intracranial abnormality. Impression discussed with the care team.",
        "Ultrasound examination performed. The visualized organs are unremarkable. Recommend clinical correlation.",
    ],
    "Nursing": [
        "Nursing progress note. Vital signs stable through the shift. Patient resting comfortably, call light within reach.",
        "Patient ambulating with assistance. Pain rated 3 of 10 and managed with scheduled analgesia. Family at bedside.",
        "Intake and output monitored. Skin intact, no redness noted. Will continue to monitor per protocol.",
    ],
    "Progress note": [
        "Seen and examined this morning. Overnight events reviewed with the team. Assessment and plan updated below.",
        "Subjective: the patient reports gradual improvement. Objective findings documented. Plan continued without change.",
        "Progress note. Labs reviewed, e.g. electrolytes within normal limits. Will reassess tomorrow.",
    ],
}


def main() -> None:
    template = default_template()
    lexicon = default_lexicon()
    rng = random.Random(20240501)
    records = []
    index = 0
    for category, count in CATEGORIES.items():
        frames = FRAMES[category]
        for _ in range(count):
            body = fill_template(template, lexicon, seed=rng.randrange(2**31))
            frame = frames[index % len(frames)]
            filler = " ".join(
                rng.choice([
                    "The patient remains afebrile.",
                    "No acute distress observed during the encounter.",
                    "Review of systems otherwise negative.",
                    "The care plan was discussed and questions were answered.",
                    "Laboratory results were reviewed with the patient.",
                    "The patient verbalized understanding of the instructions.",
                ])
                for _ in range(rng.randint(1, 4))
            )
            text = f"{frame} {body.replace(chr(10), ' ')} {filler}"
            records.append({
                "id": f"note-{index:04d}",
                "category": category,
                "text": text,
                "source": "fixture",
            })
            index += 1
    # one note that cleans down to nothing, to exercise rejection handling
    records.append({
        "id": f"note-{index:04d}",
        "category": "Nursing",
        "text": " " + chr(0) + " \t  ",
        "source": "fixture",
    })
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    print(f"wrote {len(records)} notes -> {OUT}")


if __name__ == "__main__":
    main()
