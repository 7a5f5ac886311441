#!/usr/bin/env python3
"""Freezes the corpus fixtures under tests/data/corpus/.

  docs.jsonl      three fixture documents
  records.txt     their tagged records, enumerated from the emission rules
  shard-w16-s42.bin  records tokenized with the reference encoder and packed
                  with W = 16, seed 42

The packer here follows the documented rules step by step (seeded
Fisher-Yates with modulo draws, windows at stride W/2, fill from recent
records) on its own 64-bit Mersenne Twister.
"""
import json
import os
import struct
import sys
from collections import deque

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

from gpt2_reference import Encoder  # noqa: E402

DATA = os.path.join(HERE, "..", "data")
OUT = os.path.join(DATA, "corpus")

MASK = (1 << 64) - 1


class MT19937_64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & MASK
        for i in range(1, 312):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK
        self.index = 312

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(312):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % 312] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + 156) % 312] ^ xa
        self.index = 0

    def __call__(self):
        if self.index >= 312:
            self._twist()
        x = self.mt[self.index]
        self.index += 1
        x ^= (x >> 29) & 0x5555555555555555
        x ^= (x << 17) & 0x71D67FFFEDA60000
        x ^= (x << 37) & 0xFFF7EEE000000000
        x ^= x >> 43
        return x & MASK


DOCS = [
    {
        "patent_id": "US-0001",
        "title": "Cooling device for electronic equipment",
        "abstract": "A cooling device includes a heat pipe and a fan. The fan draws air across a set of fins.",
        "claims": "1. A cooling device comprising a heat pipe and a fan.\n"
        "2. The cooling device of claim 1, wherein the fan is a centrifugal fan.",
    },
    {"patent_id": "US-0002", "title": "Temperature optimization method", "abstract": "", "claims": ""},
    {
        "patent_id": "US-0003",
        "title": "Battery  temperature control",
        "abstract": "A controller measures cell temperature\nand adjusts coolant flow.",
        "claims": "What is claimed is:\n"
        "1. A method of controlling temperature,\ncomprising: measuring a cell; and adjusting a flow.\n"
        "2. The method of claim 1, wherein the flow is a liquid coolant.\n"
        "3. The method of claim 1 or 2, wherein the cell is a lithium cell.",
    },
]

# Claim structure of the fixtures: (independent bodies, [(parent, child)]).
CLAIMS = {
    "US-0001": (
        ["A cooling device comprising a heat pipe and a fan."],
        [("A cooling device comprising a heat pipe and a fan.",
          "The cooling device of claim 1, wherein the fan is a centrifugal fan.")],
    ),
    "US-0002": ([], []),
    "US-0003": (
        ["A method of controlling temperature, comprising: measuring a cell; and adjusting a flow."],
        [("A method of controlling temperature, comprising: measuring a cell; and adjusting a flow.",
          "The method of claim 1, wherein the flow is a liquid coolant.")],
    ),
}

TAGS = {
    ("title", "fwd"): ("<|startoftitle|>", "<|endoftitle|>"),
    ("title", "bwd"): ("<|backwardtitlestart|>", "<|backwardtitleend|>"),
    ("abstract", "fwd"): ("<|startofabstract|>", "<|endofabstract|>"),
    ("abstract", "bwd"): ("<|backwardabstractstart|>", "<|backwardabstractend|>"),
    ("claim", "fwd"): ("<|startoftext|>", "<|endoftext|>"),
    ("claim", "bwd"): ("<|startofbackward|>", "<|endofbackward|>"),
}
MAPS = {
    "title2abstract": ("title", "abstract"),
    "abstract2title": ("abstract", "title"),
    "abstract2claim": ("abstract", "claim"),
    "claim2abstract": ("claim", "abstract"),
    "dep": ("claim", "claim"),
}


def norm(s):
    return " ".join(s.split())


def single(text, kind, d):
    start, end = TAGS[(kind, d)]
    body = text if d == "fwd" else " ".join(reversed(text.split()))
    return f"{start} {body} {end}"


def mapping(src, dst, m):
    s_kind, t_kind = MAPS[m]
    return f"{TAGS[(s_kind, 'fwd')][0]} {src} <|{m}|> {dst} {TAGS[(t_kind, 'fwd')][1]}"


def records(doc):
    title, abstract = norm(doc["title"]), norm(doc["abstract"])
    indep, deps = CLAIMS[doc["patent_id"]]
    out = []
    for kind, text in (("title", title), ("abstract", abstract)):
        if text:
            out += [single(text, kind, "fwd"), single(text, kind, "bwd")]
    for c in indep:
        out += [single(c, "claim", "fwd"), single(c, "claim", "bwd")]
    if title and abstract:
        out += [mapping(title, abstract, "title2abstract"), mapping(abstract, title, "abstract2title")]
    if abstract:
        for c in indep:
            out += [mapping(abstract, c, "abstract2claim"), mapping(c, abstract, "claim2abstract")]
    for p, c in deps:
        out.append(mapping(p, c, "dep"))
    return out


def pack(seqs, W, seed, reservoir_size=10000):
    rng = MT19937_64(seed)
    order = list(range(len(seqs)))
    for i in range(len(order) - 1, 0, -1):
        j = rng() % (i + 1)
        order[i], order[j] = order[j], order[i]
    examples, recent = [], deque()
    for idx in order:
        rec = seqs[idx]
        starts, s = [], 0
        while True:
            starts.append(s)
            if s + W >= len(rec):
                break
            s += W // 2
        buf = list(rec)
        while len(buf) < starts[-1] + W:
            buf += rec if not recent else seqs[recent[rng() % len(recent)]]
        examples += [buf[s:s + W] for s in starts]
        recent.append(idx)
        if len(recent) > reservoir_size:
            recent.popleft()
    return examples


def main():
    os.makedirs(OUT, exist_ok=True)
    with open(os.path.join(OUT, "docs.jsonl"), "w", encoding="utf-8") as f:
        for d in DOCS:
            f.write(json.dumps(d, ensure_ascii=False) + "\n")
    recs = [r for d in DOCS for r in records(d)]
    assert len(records(DOCS[0])) == 11
    with open(os.path.join(OUT, "records.txt"), "w", encoding="utf-8") as f:
        for r in recs:
            f.write(r + "\n")

    enc = Encoder(os.path.join(DATA, "gpt2", "encoder.json"), os.path.join(DATA, "gpt2", "vocab.bpe"))
    seqs = [enc.encode(r) for r in recs]
    W, seed = 16, 42
    examples = pack(seqs, W, seed)
    assert all(len(e) == W for e in examples)
    with open(os.path.join(OUT, f"shard-w{W}-s{seed}.bin"), "wb") as f:
        f.write(b"PTX2" + struct.pack("<IIQ", 1, W, len(examples)))
        for e in examples:
            f.write(struct.pack(f"<{W}I", *e))
    print(f"{len(recs)} records, {len(examples)} examples")


if __name__ == "__main__":
    main()
