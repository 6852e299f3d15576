#!/usr/bin/env python3
"""Scorer process for the JSON-lines protocol, answering from a lookup table.

Usage: scorer.py TABLE.json [--reverse N]
With --reverse N, requests are answered in reverse order in groups of N.
"""

import json
import sys


def main():
    table = json.load(open(sys.argv[1], encoding="utf-8"))
    group = int(sys.argv[3]) if len(sys.argv) > 3 and sys.argv[2] == "--reverse" else 1
    pending = []
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            rid = req["id"]
        except (ValueError, KeyError):
            print(json.dumps({"id": None, "error": "malformed request"}), flush=True)
            continue
        sentence = req.get("sentence")
        if sentence in table:
            pending.append({"id": rid, "score": table[sentence]})
        else:
            pending.append({"id": rid, "error": "unknown sentence"})
        if len(pending) >= group:
            for resp in reversed(pending):
                print(json.dumps(resp), flush=True)
            pending = []


if __name__ == "__main__":
    main()
