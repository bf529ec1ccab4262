"""Tooth-level label pipeline and agreement statistics (C++ core)."""

from ._dentlabel import (
    DentlabelError,
    bce,
    combined_loss,
    crop_window,
    extract_noun_phrases,
    fleiss_kappa,
    is_presence_sentence,
    link_report,
    majority_vote,
    mcc,
    normalize_phrase,
    ols_fit,
    parse_report,
    reference_conditions,
    run_cli,
    soft_mcc,
    split_dataset,
    tokenize_teeth,
    version_info,
)

__version__ = version_info()["version"]


def main():
    import sys

    code, out, err = run_cli(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    raise SystemExit(code)


__all__ = [
    "DentlabelError",
    "bce",
    "combined_loss",
    "crop_window",
    "extract_noun_phrases",
    "fleiss_kappa",
    "is_presence_sentence",
    "link_report",
    "majority_vote",
    "mcc",
    "normalize_phrase",
    "ols_fit",
    "parse_report",
    "reference_conditions",
    "run_cli",
    "soft_mcc",
    "split_dataset",
    "tokenize_teeth",
    "version_info",
]
