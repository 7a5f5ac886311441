#!/usr/bin/env python3
"""Freezes tests/data/bpe_golden.jsonl from the reference encoder.

Every string is encoded by gpt2_reference.Encoder and, when tiktoken is
importable, cross-checked against tiktoken's GPT-2 ranks built from the same
files. The two must agree before anything is written.
"""
import json
import os
import random
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

from gpt2_reference import PATTERN, Encoder  # noqa: E402

DATA = os.path.join(HERE, "..", "data")
ENCODER = os.path.join(DATA, "gpt2", "encoder.json")
MERGES = os.path.join(DATA, "gpt2", "vocab.bpe")

PATENT_PARAGRAPH = (
    "1. A method for controlling the temperature of a battery module, comprising: "
    "measuring, by a sensor, a first temperature at 25.4 °C; determining whether the "
    "first temperature exceeds a threshold (e.g., 40°C); and, in response, activating "
    "a cooling device's fan at 1,200 rpm.\n2. The method of claim 1, wherein the "
    "cooling device includes a heat-pipe — and a Peltier element.  "
)

FIXED = [
    "Hello world",
    "",
    " ",
    "claim 1",
    "<|startoftitle|>",
    "<|startoftitle|> Cooling device <|endoftitle|>",
    "<|startoftext|> A method. <|dep|> The method of claim 1. <|endoftext|>",
    "It's we'll they've I'd you're I'M",
    "   leading and trailing   ",
    "tabs\tand\nnewlines\r\n\n",
    "Ünïcödé façade naïve — “quotes” ½ ² ٣",
    "中文专利权利要求 日本語 한국어",
    "emoji 😀🚀 mixed",
    PATENT_PARAGRAPH,
]

ASCII_WORDS = [
    "method", "device", "claim", "wherein", "comprising", "temperature", "optimization",
    "a", "the", "of", "and", "or", "is", "layer", "substrate", "organic", "light", "emitting",
]
CONTRACTIONS = ["'s", "'t", "'re", "'ve", "'m", "'ll", "'d", "'x", "'S"]
PUNCT = list(".,;:!?()[]{}<>|/\\-_=+*&^%$#@~`\"'")
SPACES = [" ", "  ", "\t", "\n", "\r\n", " \n ", " ", "　", " ", "   \t"]


def random_codepoint(rng):
    while True:
        cp = rng.randrange(0x20, 0x110000) if rng.random() < 0.3 else rng.randrange(0x20, 0x3000)
        if not (0xD800 <= cp < 0xE000):
            return chr(cp)


def random_string(rng):
    parts = []
    for _ in range(rng.randint(0, 14)):
        r = rng.random()
        if r < 0.3:
            w = rng.choice(ASCII_WORDS)
            parts.append(w.capitalize() if rng.random() < 0.2 else w)
        elif r < 0.4:
            parts.append(str(rng.randint(0, 10 ** rng.randint(1, 7))))
        elif r < 0.5:
            parts.append(rng.choice(CONTRACTIONS))
        elif r < 0.65:
            parts.append("".join(rng.choice(PUNCT) for _ in range(rng.randint(1, 3))))
        elif r < 0.85:
            parts.append(rng.choice(SPACES))
        else:
            parts.append("".join(random_codepoint(rng) for _ in range(rng.randint(1, 4))))
    return "".join(parts)


def tiktoken_encoder():
    try:
        import tiktoken
        import tiktoken.load
    except ImportError:
        return None
    ranks = tiktoken.load.data_gym_to_mergeable_bpe_ranks(MERGES, ENCODER)
    enc = tiktoken.Encoding("gpt2-local", pat_str=PATTERN.pattern, mergeable_ranks=ranks,
                            special_tokens={"<|endoftext|>": 50256})
    return enc.encode_ordinary


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(DATA, "bpe_golden.jsonl")
    rng = random.Random(20260419)
    ref = Encoder(ENCODER, MERGES)
    cross = tiktoken_encoder()
    texts = FIXED + [random_string(rng) for _ in range(1200)]
    with open(out, "w", encoding="utf-8") as f:
        for text in texts:
            ids = ref.encode(text)
            if cross is not None and cross(text) != ids:
                raise SystemExit(f"reference disagreement on {text!r}")
            f.write(json.dumps({"text": text, "ids": ids}, ensure_ascii=True) + "\n")
    print(f"wrote {len(texts)} cases to {out}; tiktoken cross-check: {cross is not None}")


if __name__ == "__main__":
    main()
