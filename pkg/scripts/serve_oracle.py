#!/usr/bin/env python3
"""Run the forward-only embedding server, then drive a black-box edit run
against it from another terminal:

    python3 scripts/serve_oracle.py --address 127.0.0.1:7447
    ude run --mode gezo --oracle 127.0.0.1:7447 --out runs/remote

Equivalent to `ude serve`; kept as a script so the encoder seed and input
dimension are easy to tweak when experimenting.
"""

import argparse

from ude.models import build_encoder
from ude.oracle import OracleServer


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--address", default="127.0.0.1:7447")
    ap.add_argument("--encoder-seed", type=int, default=16)
    args = ap.parse_args()
    server = OracleServer(build_encoder(seed=args.encoder_seed), args.address)
    print(f"serving embeddings (forward-only) on {server.bound_address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


if __name__ == "__main__":
    main()
