"""``fdlp-derev`` command line: simulate, extract, train, dereverb, verify.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numerical failure.
Errors print a single ``ERROR <code>: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dsp
from .audio_io import read_wav
from .checkpoint import load_model, save_model
from .config import Config, load_config
from .envelope import floored_log, residual_target
from .errors import AudioFormatError, NumericalError, ValidationError
from .features import baseline_logmel, fdlp_features, write_features
from .gain import forward, init_model, joint_finetune, train
from .pipeline import example_from_envelopes, segments
from .reverb import build_corpus, parse_manifest

log = logging.getLogger("fdlp_derev")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _segment_name(prefix: Path, i: int, padded: bool, csv: bool) -> Path:
    suffix = (".pad" if padded else "") + (".csv" if csv else ".feat")
    return prefix.with_name(f"{prefix.name}.{i:03d}{suffix}")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_simulate(args, cfg: Config) -> int:
    manifest_path = Path(args.manifest)
    manifest = parse_manifest(
        manifest_path.read_text(encoding="utf-8"), base_dir=manifest_path.parent, seed=cfg.seed
    )
    written, failures = build_corpus(manifest, args.out_dir, jobs=args.jobs)
    for entry, msg in failures:
        print(f"failed line {entry.line}: {msg}", file=sys.stderr)
    print(f"{len(written)} ok, {len(failures)} failed")
    return EXIT_OK if not failures else EXIT_IO


def cmd_extract(args, cfg: Config) -> int:
    fcfg = cfg.fdlp()
    sig = read_wav(args.wav, fcfg.sample_rate)
    prefix = Path(args.out)
    for i, (seg, valid) in enumerate(segments(sig, fcfg)):
        if args.mode == "fdlp":
            feats = fdlp_features(dsp.fdlp_analyze(seg, fcfg))
        else:
            feats = baseline_logmel(seg, fcfg)
        path = write_features(feats, _segment_name(prefix, i, valid < fcfg.segment_samples, args.csv), csv=args.csv)
        print(path)
    return EXIT_OK


def load_pairs(corpus_dir: Path):
    index = corpus_dir / "pairs.txt"
    if not index.exists():
        raise CommandError(EXIT_IO, f"no pairs.txt in {corpus_dir}")
    pairs = []
    for line in index.read_text(encoding="utf-8").splitlines():
        if line.strip():
            clean, reverb, _ = line.split(",")
            pairs.append((corpus_dir / clean, corpus_dir / reverb))
    return pairs


def corpus_examples(corpus_dir: Path, cfg: Config):
    fcfg = cfg.fdlp()
    examples = []
    for clean_path, reverb_path in load_pairs(corpus_dir):
        clean = read_wav(clean_path, fcfg.sample_rate)
        reverb = read_wav(reverb_path, fcfg.sample_rate)
        n = min(len(clean), len(reverb))
        clean = dsp.Signal(clean.samples[:n], clean.sample_rate)
        reverb = dsp.Signal(reverb.samples[:n], reverb.sample_rate)
        for (cs, valid), (rs, _) in zip(segments(clean, fcfg), segments(reverb, fcfg)):
            m_x = dsp.fdlp_analyze(cs, fcfg)
            m_r = dsp.fdlp_analyze(rs, fcfg)
            examples.append(example_from_envelopes(m_x, m_r, valid, fcfg))
    if not examples:
        raise CommandError(EXIT_VALIDATION, "empty corpus")
    return examples


def cmd_train(args, cfg: Config) -> int:
    if args.joint and not args.init:
        raise CommandError(EXIT_VALIDATION, "joint fine-tune requires --init")
    examples = corpus_examples(Path(args.corpus_dir), cfg)
    if args.init:
        model, echo = load_model(args.init)
        _check_compat(echo, cfg)
    else:
        model = init_model(cfg.gain())
    if args.joint:
        model, report = joint_finetune(model, examples, cfg.joint_epochs, cfg.batch, cfg.seed, cfg.joint_lr)
    else:
        model, report = train(model, examples, cfg.epochs, cfg.batch, cfg.seed, cfg.lr)
    out = save_model(model, args.model_out, {"ar_order": cfg.ar_order})
    load_model(out)  # read-back validation
    report_path = Path(args.report) if args.report else out.with_suffix(".csv")
    report_path.write_text(report.to_csv(), encoding="utf-8")
    last = report.val_loss[-1] if report.epochs else report.initial_val_loss
    print(f"trained {report.epochs} epochs, val loss {last:.6g} -> {out}")
    return EXIT_OK


def _check_compat(echo: dict, cfg: Config) -> None:
    problems = []
    if int(echo.get("num_bands", cfg.num_bands)) != cfg.num_bands:
        problems.append(f"num_bands checkpoint={echo['num_bands']} config={cfg.num_bands}")
    if "ar_order" in echo and int(echo["ar_order"]) != cfg.ar_order:
        problems.append(f"ar_order checkpoint={echo['ar_order']} config={cfg.ar_order}")
    if problems:
        raise CommandError(EXIT_VALIDATION, "checkpoint/config mismatch: " + "; ".join(problems))


def dereverberate(model, m_r) -> np.ndarray:
    """Clean-envelope estimate ``m_r * exp(gain)``, i.e. exp of the log-domain sum."""
    return m_r * np.exp(forward(model, floored_log(m_r)))


def cmd_dereverb(args, cfg: Config) -> int:
    fcfg = cfg.fdlp()
    model, echo = load_model(args.model)
    _check_compat(echo, cfg)
    sig = read_wav(args.wav, fcfg.sample_rate)
    clean_segs = None
    if args.oracle_clean:
        clean = read_wav(args.oracle_clean, fcfg.sample_rate)
        clean_segs = segments(clean, fcfg)
    prefix = Path(args.out)
    for i, (seg, valid) in enumerate(segments(sig, fcfg)):
        m_r = dsp.fdlp_analyze(seg, fcfg)
        if clean_segs is not None:
            gain = residual_target(dsp.fdlp_analyze(clean_segs[i][0], fcfg), m_r)
            est = m_r * np.exp(gain)
        else:
            est = dereverberate(model, m_r)
        path = write_features(fdlp_features(est), _segment_name(prefix, i, valid < fcfg.segment_samples, args.csv), csv=args.csv)
        print(path)
    return EXIT_OK


def cmd_verify(args, cfg: Config) -> int:
    from .verify import run_suite

    out_dir = Path(args.out) if args.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    results = run_suite(args.suite, cfg, out_dir)
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed} passed, {failed} failed")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_dir is not None:
        (out_dir / "verify_report.txt").write_text(text, encoding="utf-8")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdlp-derev", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="global seed (overrides config)")
    p.add_argument("--csv", action="store_true", help="write features as CSV instead of binary")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers where supported")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="build a reverberant corpus from a manifest")
    s.add_argument("manifest")
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("extract", help="per-segment FDLP or log-mel features")
    s.add_argument("wav")
    s.add_argument("out", help="output prefix; files are <out>.NNN[.pad].feat")
    s.add_argument("--mode", choices=("fdlp", "fbank"), default="fdlp")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="train (or jointly fine-tune) the gain model")
    s.add_argument("corpus_dir")
    s.add_argument("model_out")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--joint", action="store_true", help="fine-tune through the feature chain")
    s.add_argument("--init", help="checkpoint to start from")
    s.add_argument("--report", help="TrainReport CSV path (default: <model_out>.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("dereverb", help="dereverberated FDLP features")
    s.add_argument("wav")
    s.add_argument("model")
    s.add_argument("out", help="output prefix")
    s.add_argument("--oracle-clean", help="debug: use the oracle gain from this clean WAV")
    s.set_defaults(func=cmd_dereverb)

    s = sub.add_parser("verify", help="run self-check suites")
    s.add_argument("suite", help="one of: dsp, eq2 (envelope convolution model), grad, all")
    s.add_argument("--out", help="directory for the report and checkpoint")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = {"seed": args.seed}
        if args.command == "train":
            if args.joint:
                overrides.update(joint_epochs=args.epochs, joint_lr=args.lr)
            else:
                overrides.update(epochs=args.epochs, lr=args.lr)
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except CommandError as exc:
        code, msg = exc.code, str(exc)
    except (ValidationError, ValueError) as exc:
        code, msg = EXIT_VALIDATION, str(exc)
    except NumericalError as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    except (AudioFormatError, OSError) as exc:
        code, msg = EXIT_IO, str(exc)
    print(f"ERROR {code}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
