#!/usr/bin/env python3
"""Emit one of the synthetic check-in corpora as a TSV file."""

import argparse
from pathlib import Path

from nextplace.synthetic import long_range_corpus, periodic_corpus, write_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("kind", choices=("periodic", "long-range"))
    parser.add_argument("--out", default="checkins.tsv")
    parser.add_argument("--users", type=int, default=None)
    parser.add_argument("--days", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    users = args.users if args.users is not None else 20
    make = periodic_corpus if args.kind == "periodic" else long_range_corpus
    lines = make(n_users=users, days=args.days, seed=args.seed)
    write_corpus(lines, args.out)
    print(f"wrote {len(lines)} records for {users} users to {Path(args.out)}")


if __name__ == "__main__":
    main()
