"""Write the toy customers/orders dataset as CSVs plus a schema config.

    python scripts/make_toy_dataset.py data/toy --seed 0
"""

import argparse

from relsynth.ingest import write_synthetic_dataset
from relsynth.toy import make_toy_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--primary", type=int, default=200)
    p.add_argument("--children", type=int, default=3)
    p.add_argument("--separation", type=float, default=4.0)
    args = p.parse_args()
    ds = make_toy_dataset(args.primary, args.children, args.separation, args.seed)
    schema = write_synthetic_dataset(ds, args.out)
    print(f"wrote {schema}")


if __name__ == "__main__":
    main()
