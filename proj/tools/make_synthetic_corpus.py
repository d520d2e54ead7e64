#!/usr/bin/env python3
"""Writes a small restaurant-search corpus in the CamRest676 file layout.

Used by the integration tests when the real corpus is not available. The
dialogues are template generated, so only plumbing is exercised, not quality.
"""

import argparse
import json
import random
from pathlib import Path

FOODS = ["indian", "chinese", "italian", "british", "thai", "french", "korean", "indonesian", "spanish"]
AREAS = ["north", "south", "east", "west", "centre"]
PRICES = ["cheap", "moderate", "expensive"]

VENUES = [
    ("curry prince", "indian", "moderate", "east", "451 newmarket road fen ditton", "01223 566388", "c.b 5, 8 j.j"),
    ("the gandhi", "indian", "cheap", "centre", "72 regent street city centre", "01223 353942", "c.b 2, 1 d.p"),
    ("golden house", "chinese", "cheap", "centre", "12 lensfield road city centre", "01842 753771", "c.b 2, 1 e.g"),
    ("rice boat", "indian", "expensive", "west", "37 newnham road newnham", "01223 302800", "c.b 3, 9 e.y"),
    ("hakka", "chinese", "expensive", "north", "milton road chesterton", "01223 568988", "c.b 4, 1 j.y"),
    ("the golden curry", "indian", "expensive", "centre", "mill road city centre", "01223 329432", "c.b 1, 2 a.z"),
    ("pizza hut fen ditton", "italian", "moderate", "east", "cambridge retail park newmarket road", "01223 323737",
     "c.b 5, 8 w.r"),
    ("la margherita", "italian", "cheap", "west", "15 magdalene street city centre", "01223 315232", "c.b 3, 0 a.f"),
    ("prezzo", "italian", "moderate", "west", "21 - 24 northampton road", "01799 521260", "c.b 3, 0 a.d"),
    ("the copper kettle", "british", "moderate", "centre", "4 kings parade city centre", "01223 365068", "c.b 2, 1 s.j"),
    ("midsummer house", "british", "expensive", "centre", "midsummer common", "01223 369299", "c.b 4, 1 h.a"),
    ("the oak bistro", "british", "moderate", "centre", "6 lensfield road", "01223 323361", "c.b 2, 1 e.g"),
    ("sala thong", "thai", "expensive", "west", "35 newnham road newnham", "01223 323178", "c.b 3, 9 e.y"),
    ("bangkok city", "thai", "expensive", "centre", "24 green street city centre", "01223 354382", "c.b 2, 3 j.x"),
    ("restaurant two two", "french", "expensive", "north", "22 chesterton road chesterton", "01223 351880",
     "c.b 4, 3 a.x"),
    ("cote", "french", "expensive", "centre", "bridge street city centre", "01223 311053", "c.b 2, 1 u.f"),
    ("little seoul", "korean", "expensive", "centre", "108 regent street city centre", "01223 308681",
     "c.b 2, 1 d.p"),
    ("la raza", "spanish", "cheap", "centre", "4 - 6 rose crescent", "01223 464550", "c.b 2, 3 l.l"),
    ("la tasca", "spanish", "moderate", "centre", "14 -16 bridge street", "", "c.b 2, 1 u.f"),
    ("charlie chan", "chinese", "cheap", "centre", "regent street city centre", "01223 361763", "c.b 2, 1 d.b"),
    ("the lucky star", "chinese", "cheap", "south", "cambridge leisure park clifton way cherry hinton",
     "01223 244277", "c.b 1, 7 d.y"),
    ("peking restaurant", "chinese", "expensive", "south", "10 homerton street city centre", "01223 354755",
     "c.b 2, 8 n.x"),
    ("frankie and bennys", "italian", "expensive", "south", "cambridge leisure park clifton way cherry hinton",
     "01223 412430", "c.b 1, 7 d.y"),
    ("royal spice", "indian", "cheap", "north", "victoria avenue chesterton", "01733 553355", "c.b 4, 1 e.h"),
]

REQUEST_WORDS = {"phone": "phone number", "address": "address", "postcode": "post code"}


def db_records():
    out = []
    for i, (name, food, price, area, address, phone, postcode) in enumerate(VENUES):
        out.append({"id": str(19200 + i), "name": name, "food": food, "pricerange": price, "area": area,
                    "address": address, "phone": phone, "postcode": postcode, "type": "restaurant",
                    "location": "52.2,0.1"})
    return out


def matches(constraints):
    hits = []
    for v in VENUES:
        row = {"name": v[0], "food": v[1], "pricerange": v[2], "area": v[3]}
        if all(val == "dontcare" or row[slot] == val for slot, val in constraints.items()):
            hits.append(v)
    return hits


def inform(*pairs):
    return [{"act": "inform", "slots": [[s, v]]} for s, v in pairs]


def describe(constraints):
    words = []
    if constraints.get("pricerange", "dontcare") != "dontcare":
        words.append(constraints["pricerange"])
    if constraints.get("food", "dontcare") != "dontcare":
        words.append(constraints["food"])
    text = " ".join(words + ["restaurants"])
    if constraints.get("area", "dontcare") != "dontcare":
        text += " in the " + constraints["area"] + " of town"
    return text


def opening(rng, c):
    food, price, area = c.get("food"), c.get("pricerange"), c.get("area")
    forms = []
    if food and price:
        forms.append(("i want a %s restaurant that serves %s food" % (price, food), [("pricerange", price), ("food", food)]))
        forms.append(("i am looking for %s %s food" % (price, food), [("pricerange", price), ("food", food)]))
    if food:
        forms.append(("i would like %s food please" % food, [("food", food)]))
        forms.append(("hi , i am hungry for some %s" % food, [("food", food)]))
    if area and food:
        forms.append(("is there a %s restaurant in the %s of town" % (food, area), [("food", food), ("area", area)]))
    if price and area:
        forms.append(("i need a %s restaurant in the %s part of town" % (price, area),
                      [("pricerange", price), ("area", area)]))
    if not forms:
        forms.append(("i am looking for a restaurant", []))
    return rng.choice(forms)


def dialogue(rng, idx):
    venue = rng.choice(VENUES)
    constraints = {}
    keys = rng.sample(["food", "pricerange", "area"], rng.choice([1, 2, 2, 3]))
    field = {"food": venue[1], "pricerange": venue[2], "area": venue[3]}
    for k in keys:
        constraints[k] = field[k]
    # some users first ask for something the database cannot offer
    dead_end = rng.random() < 0.12
    requests = rng.sample(["phone", "address", "postcode"], rng.choice([1, 1, 2]))
    turns = []

    def turn(user, slu, sys):
        turns.append({"turn": len(turns), "usr": {"transcript": user, "slu": slu}, "sys": {"sent": sys, "DA": []}})

    if dead_end:
        bad = rng.choice(["indonesian", "korean"]) if venue[1] != "korean" else "indonesian"
        area = rng.choice(AREAS)
        if matches({"food": bad, "area": area}):
            bad, area = "indonesian", area
        turn("i want %s food in the %s of town" % (bad, area), inform(("food", bad), ("area", area)),
             rng.choice(["i am sorry , there are no %s restaurants in the %s of town . would you like something else ?",
                         "sorry there is no %s restaurant in the %s area ."]) % (bad, area))
        constraints = {"food": venue[1], "area": venue[3]}
        turn("how about %s food in the %s" % (venue[1], venue[3]), inform(("food", venue[1]), ("area", venue[3])),
             None)
    else:
        user, pairs = opening(rng, constraints)
        turn(user, inform(*pairs), None)
        said = dict(pairs)
        missing = [k for k in ["food", "area", "pricerange"] if k not in said]
        if missing and rng.random() < 0.6:
            ask = missing[0]
            turns[-1]["sys"]["sent"] = {"food": "what type of food would you like ?",
                                        "area": "what part of town do you have in mind ?",
                                        "pricerange": "would you like something in the cheap , moderate , or expensive price range ?"}[ask]
            if ask in constraints:
                val = constraints[ask]
                text = {"food": "%s food" % val, "area": "the %s please" % val, "pricerange": "%s please" % val}[ask]
                turn(text, inform((ask, val)), None)
            else:
                constraints[ask] = "dontcare"
                turn(rng.choice(["i do not care", "any %s is fine" % {"food": "type", "area": "area",
                                                                       "pricerange": "price"}[ask]]),
                     inform((ask, "dontcare")), None)
        for k, v in said.items():
            constraints.setdefault(k, v)

    hits = matches(constraints)
    offer = hits[0]
    sys = rng.choice([
        "%s is a nice %s restaurant in the %s part of town serving %s food ." % (offer[0], offer[2], offer[3], offer[1]),
        "%s serves %s food in the %s price range ." % (offer[0], offer[1], offer[2]),
        "%s is in the %s of town ." % (offer[0], offer[3]),
    ])
    turns[-1]["sys"]["sent"] = sys

    careless = rng.random() < 0.08
    for r in requests:
        user = rng.choice(["what is the %s ?", "can i get the %s please", "could you give me the %s"]) % REQUEST_WORDS[r]
        value = {"phone": offer[5], "address": offer[4], "postcode": offer[6]}[r]
        if careless or not value:
            answer = "i am sorry , i do not have that information ."
        else:
            answer = {"phone": rng.choice(["the phone number is %s .", "their phone number is %s ."]),
                      "address": rng.choice(["the address is %s .", "they are located at %s ."]),
                      "postcode": rng.choice(["the post code is %s .", "their postcode is %s ."])}[r] % value
        turn(user, [{"act": "request", "slots": [["slot", r]]}], answer)
    turn(rng.choice(["thank you goodbye", "thanks , bye", "thank you very much goodbye"]), [],
         rng.choice(["thank you for using our system . goodbye .", "goodbye .", "you are welcome , goodbye ."]))
    for t in turns:
        if t["sys"]["sent"] is None:
            t["sys"]["sent"] = "ok ."
    goal = {"constraints": [[k, v] for k, v in constraints.items()], "request-slots": requests,
            "text": "find %s" % describe(constraints)}
    return {"dialogue_id": idx, "finished": True, "goal": goal, "dial": turns}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "data" / "synthetic"))
    ap.add_argument("--dialogues", type=int, default=150)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ontology = {"informable": {"food": FOODS, "pricerange": PRICES, "area": AREAS},
                "requestable": ["address", "phone", "postcode", "food", "pricerange", "area", "name"]}
    (out / "CamRestOTGY.json").write_text(json.dumps(ontology, indent=1) + "\n")
    (out / "CamRestDB.json").write_text(json.dumps(db_records(), indent=1) + "\n")
    corpus = [dialogue(rng, i) for i in range(args.dialogues)]
    (out / "CamRest676.json").write_text(json.dumps(corpus) + "\n")


if __name__ == "__main__":
    main()
