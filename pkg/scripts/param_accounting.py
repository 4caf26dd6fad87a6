"""Learnable and stored parameter counts, from the closed forms and from real weights.

    python scripts/param_accounting.py --n 64 --R 200 --t 20 --i 11
"""

import argparse
import tempfile
from pathlib import Path

from rwtn import serialize
from rwtn.grounders import (LtnPredicate, LtnPredicateParams, RwtnDecoderParams, RwtnPredicate,
                            count_learnable, ltn_param_count, make_encoder, rwtn_param_count,
                            shared_space)
from rwtn.reservoir import ReservoirConfig


def stored(doc, path: Path) -> int:
    serialize.save(doc, path)
    return serialize.count_arrays(serialize.load(path))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--k", type=int, default=6)
    ap.add_argument("--R", type=int, default=200)
    ap.add_argument("--t", type=int, default=20)
    ap.add_argument("--i", type=int, default=11)
    args = ap.parse_args()
    dim = args.n * args.m

    ltn = LtnPredicate(LtnPredicateParams.init(dim, args.k, 0))
    print(f"ltn learnable     formula {ltn_param_count(args.n, args.m, args.k):>10}"
          f"   instantiated {count_learnable(ltn):>10}")
    cfg = ReservoirConfig(R=args.R)
    enc = make_encoder(dim, cfg)
    dec = RwtnPredicate(enc, RwtnDecoderParams.init(args.R, args.t, 0))
    print(f"rwtn learnable    formula {rwtn_param_count(args.R, args.t):>10}"
          f"   instantiated {count_learnable(dec):>10}")

    separate, shared = shared_space(args.n, args.m, args.R, args.t, args.i)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        one_decoder = stored(dec.to_doc(encoder_ref="encoder.json"), tmp / "d.json")
        encoder = stored(enc.to_doc(), tmp / "e.json")
        one_full = stored(dec.to_doc(), tmp / "f.json")
    print(f"x{args.i} separate      formula {separate:>10}   serialized {one_full * args.i:>10}")
    print(f"x{args.i} shared        formula {shared:>10}   serialized {encoder + one_decoder * args.i:>10}")


if __name__ == "__main__":
    main()
