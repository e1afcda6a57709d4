"""Regenerate the shared feedback-validation fixture.

The fixture pins the feedback-payload rules: the Python suite asserts the
live server accepts/422s each case accordingly, and the console suite
asserts its client-side validator agrees on every case.  Run from the
repository root:

    python3 frontend/shared/generate_fixture.py
"""

import json
from pathlib import Path

TASK = {"candidates": 6, "goals": list(range(12))}

CASES = [
    # valid payloads
    {"name": "validate_minimal", "body": {"verdict": "validate"}, "valid": True},
    {"name": "reject_with_annotation", "body": {"verdict": "reject", "annotation_action": 0}, "valid": True},
    {"name": "reject_annotation_top_index", "body": {"verdict": "reject", "annotation_action": 5}, "valid": True},
    {"name": "reject_with_relabel", "body": {"verdict": "reject", "annotation_action": 2, "relabel_goal": 11}, "valid": True},
    {"name": "reject_relabel_zero", "body": {"verdict": "reject", "annotation_action": 1, "relabel_goal": 0}, "valid": True},
    {"name": "validate_null_extras", "body": {"verdict": "validate", "relabel_goal": None, "annotation_action": None}, "valid": True},
    {"name": "reject_null_relabel", "body": {"verdict": "reject", "annotation_action": 3, "relabel_goal": None}, "valid": True},
    # invalid payloads (server answers 422)
    {"name": "missing_verdict", "body": {}, "valid": False},
    {"name": "bogus_verdict", "body": {"verdict": "maybe"}, "valid": False},
    {"name": "verdict_wrong_type", "body": {"verdict": 1}, "valid": False},
    {"name": "validate_with_annotation", "body": {"verdict": "validate", "annotation_action": 1}, "valid": False},
    {"name": "validate_with_relabel", "body": {"verdict": "validate", "relabel_goal": 3}, "valid": False},
    {"name": "reject_without_annotation", "body": {"verdict": "reject"}, "valid": False},
    {"name": "reject_annotation_too_high", "body": {"verdict": "reject", "annotation_action": 6}, "valid": False},
    {"name": "reject_annotation_negative", "body": {"verdict": "reject", "annotation_action": -1}, "valid": False},
    {"name": "reject_annotation_string", "body": {"verdict": "reject", "annotation_action": "2"}, "valid": False},
    {"name": "reject_annotation_bool", "body": {"verdict": "reject", "annotation_action": True}, "valid": False},
    {"name": "reject_annotation_float", "body": {"verdict": "reject", "annotation_action": 2.5}, "valid": False},
    {"name": "relabel_outside_goal_set", "body": {"verdict": "reject", "annotation_action": 0, "relabel_goal": 99}, "valid": False},
    {"name": "relabel_negative", "body": {"verdict": "reject", "annotation_action": 0, "relabel_goal": -3}, "valid": False},
    {"name": "relabel_string", "body": {"verdict": "reject", "annotation_action": 0, "relabel_goal": "4"}, "valid": False},
    {"name": "relabel_bool", "body": {"verdict": "reject", "annotation_action": 0, "relabel_goal": False}, "valid": False},
]


def main() -> None:
    out = Path(__file__).parent / "feedback_cases.json"
    payload = {"task": TASK, "cases": CASES}
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(CASES)} cases)")


if __name__ == "__main__":
    main()
