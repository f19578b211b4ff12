#!/usr/bin/env python3
"""Regenerates the wire-protocol golden fixtures in this directory.

Responses for computed cases are derived here from the rulebook data with an
independent implementation of the scripted rules; replay cases are hand-written
responses the mock server serves verbatim.

Usage: python3 crates/core/tests/fixtures/wire/generate.py
"""
import base64
import json
import math
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parents[4]
RULEBOOK = json.loads((ROOT / "assets" / "rulebook.json").read_text())
MEDIA = "application/vnd.eqa.observation+json"


def dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def normalize(text):
    cleaned = "".join(c.lower() if c.isalnum() else " " for c in text)
    return " ".join(cleaned.split())


def priorities(question):
    q = " " + normalize(question) + " "
    hits = []
    for i, rule in enumerate(RULEBOOK["rules"]):
        found = []
        for k in rule["keywords"]:
            pos = q.find(" " + normalize(k) + " ")
            if pos >= 0:
                is_object = normalize(k) not in [normalize(r) for r in rule["regions"]]
                found.append((is_object, pos))
        if found:
            is_object, pos = min(found)
            hits.append((is_object, pos, i))
    out = []
    for _, _, i in sorted(hits):
        for r in RULEBOOK["rules"][i]["regions"]:
            if r not in out:
                out.append(r)
    return out


def relevance(question, region):
    p = priorities(question)
    return 1.0 if p and region == p[0] else RULEBOOK["baseline"]


def key_token(text):
    tokens = normalize(text).split()
    for t in tokens:
        if t not in RULEBOOK["stopwords"]:
            return t
    return tokens[0] if tokens else ""


def f1(pred, ref):
    p, r = normalize(pred).split(), normalize(ref).split()
    if not p or not r:
        return 0.0
    pool = list(r)
    common = 0
    for t in p:
        if t in pool:
            pool.remove(t)
            common += 1
    if common == 0:
        return 0.0
    prec, rec = common / len(p), common / len(r)
    return 2 * prec * rec / (prec + rec)


def image_ref(view):
    return "data:%s;base64,%s" % (MEDIA, base64.b64encode(dumps(view).encode()).decode())


def view(visible, regions, samples, answer="it is red"):
    return {
        "agent": {"x": 1.125, "y": 2.375},
        "sample_points": [{"x": p[0], "y": p[1]} for p, _ in samples],
        "sample_regions": [r for _, r in samples],
        "target_answer": answer,
        "target_visible": visible,
        "visible_free_cells": sum(c for _, c in regions) + 4,
        "visible_regions": [{"cells": c, "region_type": t} for t, c in sorted(regions)],
    }


def semantic(question, v, n):
    v_l = [relevance(question, v["sample_regions"][i]) for i in range(n)]
    v_g = max([RULEBOOK["baseline"]] + [relevance(question, r["region_type"]) for r in v["visible_regions"]])
    return {"v_g": v_g, "v_l": v_l}


def classify(v):
    unknown = {"confidence": 0.0, "region_type": "unknown", "rep_point": v["agent"]}
    if not v["visible_regions"]:
        return unknown
    best = max(v["visible_regions"], key=lambda r: (r["cells"], [-ord(c) for c in r["region_type"]]))
    idx = [i for i, r in enumerate(v["sample_regions"]) if r == best["region_type"]]
    if not idx:
        return unknown
    conf = min(1.0, best["cells"] / v["visible_free_cells"]) if v["visible_free_cells"] else 0.0
    return {"confidence": conf, "region_type": best["region_type"], "rep_point": v["sample_points"][idx[0]]}


def grade(gold, answer, v):
    if not v["target_visible"]:
        delta = 0.0
    elif key_token(answer) == key_token(v["target_answer"]):
        delta = 1.0
    else:
        delta = 0.5
    if normalize(answer) == normalize(gold):
        sigma = 5
    else:
        # Nearest integer, halves rounded up.
        sigma = min(5, max(1, math.floor(5 * f1(answer, gold) + 0.5)))
    return {"delta": delta, "sigma": sigma}


cases = []


def case(name, endpoint, request, response, status=200, replay=False, expect="ok"):
    cases.append({"name": name, "endpoint": endpoint, "status": status, "replay": replay, "expect": expect})
    (HERE / f"{name}.request.json").write_text(dumps(request) + "\n")
    (HERE / f"{name}.response.json").write_text(dumps(response) + "\n")


Q_TOWEL = "What color is the towel in the bathroom?"
Q_MIRROR = "Is there a mirror in the bedroom?"
SAMPLES = [((1.125, 2.375), "bathroom"), ((2.625, 2.375), "hallway"), ((0.375, 0.125), None)]
V_SEEN = view(True, [("bathroom", 9), ("hallway", 14)], SAMPLES)
V_HIDDEN = view(False, [("hallway", 20)], [((2.625, 2.375), "hallway")])

for name, q in [("prioritize_mirror", Q_MIRROR), ("prioritize_towel", Q_TOWEL), ("prioritize_object", "How many chairs are there?!"), ("prioritize_nomatch", "Is it raining?")]:
    case(name, "/v1/prioritize_regions", {"question": q}, {"regions": priorities(q)})

for name, v in [("semantic_seen", V_SEEN), ("semantic_hidden", V_HIDDEN)]:
    req = {"image_ref": image_ref(v), "question": Q_TOWEL, "sample_points": v["sample_points"]}
    case(name, "/v1/semantic_scores", req, semantic(Q_TOWEL, v, len(v["sample_points"])))

for name, v in [("classify_seen", V_SEEN), ("classify_hidden", V_HIDDEN)]:
    case(name, "/v1/classify_region", {"image_ref": image_ref(v), "question": Q_TOWEL}, classify(v))

for name, v in [("stop_seen", V_SEEN), ("stop_hidden", V_HIDDEN)]:
    case(name, "/v1/should_stop", {"image_ref": image_ref(v), "question": Q_TOWEL}, {"stop": v["target_visible"]})

for name, v in [("answer_seen", V_SEEN), ("answer_hidden", V_HIDDEN)]:
    ans = v["target_answer"] if v["target_visible"] else RULEBOOK["fallback_answer"]
    case(name, "/v1/answer", {"image_ref": image_ref(v), "question": Q_TOWEL}, {"answer": ans})

for name, gold, answer, v in [
    ("grade_exact", "it is red", "It is red.", V_SEEN),
    ("grade_partial", "it is red", "red sofa", V_SEEN),
    ("grade_wrong_key", "it is red", "blue", V_SEEN),
    ("grade_fabricated", "it is red", "it is red", V_HIDDEN),
]:
    req = {"answer": answer, "gold": gold, "image_ref": image_ref(v), "question": Q_TOWEL}
    case(name, "/v1/grade", req, grade(gold, answer, v))

# Deliberately invalid responses, served verbatim by the mock server's replay set.
REPLAY_Q = "Replay: is the lamp on?"
rv = image_ref(view(True, [], []))
grade_req = lambda tag: {"answer": tag, "gold": "on", "image_ref": rv, "question": REPLAY_Q}
case("replay_sigma_high", "/v1/grade", grade_req("six"), {"delta": 1.0, "sigma": 6}, replay=True, expect="sigma out of range")
case("replay_sigma_low", "/v1/grade", grade_req("zero"), {"delta": 1.0, "sigma": 0}, replay=True, expect="sigma out of range")
case("replay_delta_bad", "/v1/grade", grade_req("point three"), {"delta": 0.3, "sigma": 4}, replay=True, expect="delta out of range")
case("replay_grade_extra_field", "/v1/grade", grade_req("extra"), {"delta": 1.0, "extra": 1, "sigma": 4}, replay=True, expect="response schema")
case("replay_delta_half", "/v1/grade", grade_req("half"), {"delta": 0.5, "sigma": 3}, replay=True, expect="ok")
case("replay_v_g_high", "/v1/semantic_scores", {"image_ref": rv, "question": REPLAY_Q, "sample_points": []}, {"v_g": 1.5, "v_l": []}, replay=True, expect="v_g out of range")
case("replay_v_l_count", "/v1/semantic_scores", {"image_ref": rv, "question": REPLAY_Q, "sample_points": [{"x": 0.125, "y": 0.125}]}, {"v_g": 0.5, "v_l": []}, replay=True, expect="v_l has 0 values for 1 sample points")
case("replay_confidence_negative", "/v1/classify_region", {"image_ref": rv, "question": REPLAY_Q}, {"confidence": -0.25, "region_type": "kitchen", "rep_point": {"x": 0.125, "y": 0.125}}, replay=True, expect="confidence out of range")
case("replay_server_error", "/v1/should_stop", {"image_ref": rv, "question": REPLAY_Q}, {"error": {"code": "provider_timeout", "message": "upstream timed out"}}, status=504, replay=True, expect="provider_timeout")
case("replay_rejected", "/v1/answer", {"image_ref": rv, "question": REPLAY_Q}, {"error": {"code": "bad_request", "message": "question too long"}}, status=400, replay=True, expect="bad_request")

(HERE / "manifest.json").write_text(json.dumps(cases, indent=2) + "\n")
print(f"wrote {len(cases)} cases")
