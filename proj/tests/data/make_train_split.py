#!/usr/bin/env python3
"""Writes train_split.jsonl: a synthetic stand-in for the PhyX train split.

Only the per-domain counts follow the published category table; questions,
answers and labels are placeholders. Output is deterministic.

    python3 make_train_split.py [out_path]
"""
import json
import random
import sys
from pathlib import Path

COUNTS = {
    "Electromagnetism": 550,
    "Mechanics": 550,
    "Modern Physics": 400,
    "Optics": 500,
    "Thermodynamics": 500,
    "Waves/Acoustics": 500,
}

SUBFIELDS = {
    "Electromagnetism": ["Electrostatics", "Electric Circuits", "Electromagnetic Induction", "Magnetism"],
    "Mechanics": ["Dynamics", "Kinematics", "Work and Energy", "Statics", "Rotational Motion"],
    "Modern Physics": ["Quantum Phenomena", "Relativity", "Nuclear Physics", "Particle Physics"],
    "Optics": ["Geometrical Optics", "Wave Optics", "Optical Instruments"],
    "Thermodynamics": ["Laws of Thermodynamics", "Temperature and Heat Transfer", "Ideal Gases and Kinetic Theory"],
    "Waves/Acoustics": ["Wave Properties", "Resonance and Harmonics", "Sound"],
}

UNITS = ["N", "J", "m/s", "V", "A", "K", "Hz", "eV", "m", "W"]

REASONING = [
    "Physical Model Grounding",
    "Spatial Relation",
    "Multi-Formula",
    "Implicit Condition",
    "Numerical",
    "Predictive",
]


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).with_name("train_split.jsonl")
    rng = random.Random(20250101)
    rows = []
    for domain, count in COUNTS.items():
        subs = SUBFIELDS[domain]
        for i in range(count):
            sub = subs[i % len(subs)]
            unit = rng.choice(UNITS)
            value = rng.randint(1, 99)
            row = {
                "id": f"train-{len(rows):04d}",
                "question": f"{sub} problem {i}: find the quantity shown in the diagram.",
                "image_path": f"images/train-{len(rows):04d}.png",
                "domain": domain,
                "subfield": sub,
                "unit": unit,
                "principle": f"{sub.lower()} principle",
                "reasoning_type": REASONING[i % len(REASONING)],
            }
            if i % 2 == 0:
                row["format"] = "MCQ"
                row["options"] = [f"{value + k} {unit}" for k in range(4)]
                row["answer"] = "ABCD"[rng.randrange(4)]
            else:
                row["format"] = "OE"
                row["answer"] = f"{value} {unit}"
            rows.append(row)
    rng.shuffle(rows)
    with out.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


if __name__ == "__main__":
    main()
