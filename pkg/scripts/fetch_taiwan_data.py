"""Rebuild the UCI "default of credit card clients" CSV from a PyPI mirror.

The UCI archive is not always reachable from build machines, but the
yellowbrick source distribution ships a verbatim copy of the 30 000-row table
(with renamed columns). This script downloads that sdist with pip, restores the
original UCI column names and ID column, and writes a UTF-8 CSV that
``ardbnn.data.load_taiwan_csv`` reads with its default column spec.

    python scripts/fetch_taiwan_data.py data/default_of_credit_card_clients.csv
"""
import argparse
import io
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

import pandas as pd

UCI_COLUMNS = (
    ["LIMIT_BAL", "SEX", "EDUCATION", "MARRIAGE", "AGE"]
    + ["PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6"]
    + [f"BILL_AMT{i}" for i in range(1, 7)]
    + [f"PAY_AMT{i}" for i in range(1, 7)]
    + ["default payment next month"]
)
MEMBER = "yellowbrick-1.5/docs/api/features/data/credit/credit.csv"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", type=Path)
    args = parser.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "--no-binary", ":all:",
             "yellowbrick==1.5", "-d", tmp],
            check=True,
        )
        sdist = next(Path(tmp).glob("yellowbrick-1.5.tar.gz"))
        with tarfile.open(sdist) as tar:
            raw = tar.extractfile(MEMBER).read()

    frame = pd.read_csv(io.BytesIO(raw))
    if frame.shape != (30000, 24):
        raise SystemExit(f"unexpected table shape {frame.shape}")
    # yellowbrick relabels the month columns but keeps the UCI column order
    frame.columns = UCI_COLUMNS
    frame.insert(0, "ID", range(1, len(frame) + 1))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(args.out, index=False)
    print(f"wrote {len(frame)} rows to {args.out}")


if __name__ == "__main__":
    main()
