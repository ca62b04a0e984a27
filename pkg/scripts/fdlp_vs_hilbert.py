"""Correlation between FDLP envelopes and squared Hilbert envelopes for AM test tones.

    python3 scripts/fdlp_vs_hilbert.py --tones 20 --order 160
"""

import argparse
import sys

import numpy as np

from fdlp_derev import dsp
from fdlp_derev.synth import am_tone


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tones", type=int, default=20)
    ap.add_argument("--order", type=int, default=160)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = dsp.FDLPConfig(ar_order=args.order)
    bank = dsp.mel_bank_for(cfg)
    step = cfg.segment_samples // cfg.envelope_samples
    rng = np.random.default_rng(args.seed)
    for _ in range(args.tones):
        q = int(rng.integers(cfg.num_bands))
        fm = rng.uniform(1.0, 8.0)
        sig = am_tone(bank.centers_hz[q], fm, rng.uniform(0.3, 0.9))
        env = dsp.fdlp_analyze(sig, cfg)[:, q]
        ref = dsp.hilbert_envelope(dsp.idct(dsp.subband_coeffs(dsp.dct(sig.samples), bank, q)))[::step]
        print(f"band {q:2d}  fc={bank.centers_hz[q]:7.1f} Hz  fm={fm:4.1f} Hz  corr={np.corrcoef(env, ref)[0, 1]:.4f}")


if __name__ == "__main__":
    sys.exit(main())
