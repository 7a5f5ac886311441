#!/usr/bin/env python3
"""Regenerates src/unicode_classes.inc.

The GPT-2 pre-tokenizer pattern is defined in terms of the `regex` module's
\\p{L} and \\p{N} classes. The tables are taken from that module directly so the
C++ pre-tokenizer classifies code points exactly like the Python encoder.
"""
import sys

import regex

LETTER = regex.compile(r"\p{L}")
NUMBER = regex.compile(r"\p{N}")


def ranges(pred):
    out = []
    start = None
    for cp in range(0x110000):
        ok = not (0xD800 <= cp < 0xE000) and pred(chr(cp))
        if ok and start is None:
            start = cp
        elif not ok and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def emit(name, rs, f):
    f.write(f"constexpr CodeRange {name}[] = {{\n")
    for lo, hi in rs:
        f.write(f"    {{0x{lo:X}, 0x{hi:X}}},\n")
    f.write("};\n\n")


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else "src/unicode_classes.inc"
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"// Generated by tools/gen_unicode_classes.py (regex {regex.__version__}). Do not edit.\n\n")
        emit("kLetterRanges", ranges(lambda c: LETTER.match(c) is not None), f)
        emit("kNumberRanges", ranges(lambda c: NUMBER.match(c) is not None), f)


if __name__ == "__main__":
    main()
