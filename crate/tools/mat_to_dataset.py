"""Convert a multi-view .mat file into a cfmvc dataset directory.

Most public multi-view benchmarks (MSRC, ORL, HW, Mnist4, Reuters,
NUS-WIDE) ship as MATLAB files with a cell array of views and a label
vector. Variable names differ between sources; pass them explicitly.

    python3 tools/mat_to_dataset.py MSRC.mat out/msrc --views X --labels Y

Views stored as features x samples are transposed when their column count
matches the label count. Labels are remapped to 0..c-1 in sorted order.
"""

import argparse
import pathlib

import numpy as np
import scipy.io


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("mat")
    ap.add_argument("out")
    ap.add_argument("--views", default="X", help="name of the cell array of views")
    ap.add_argument("--labels", default="Y", help="name of the label vector")
    args = ap.parse_args()

    mat = scipy.io.loadmat(args.mat)
    raw_labels = np.asarray(mat[args.labels]).ravel()
    classes, labels = np.unique(raw_labels, return_inverse=True)
    n = labels.size

    views = []
    for cell in np.asarray(mat[args.views]).ravel():
        x = np.asarray(cell.toarray() if hasattr(cell, "toarray") else cell, dtype=float)
        if x.shape[0] != n and x.shape[1] == n:
            x = x.T
        if x.shape[0] != n:
            raise SystemExit(f"view of shape {x.shape} does not match {n} labels")
        views.append(x)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["version = 1", f"n = {n}", f"c = {classes.size}", 'labels = "labels.csv"', ""]
    for k, x in enumerate(views, start=1):
        name = f"view_{k}.csv"
        np.savetxt(out / name, x, delimiter=",", fmt="%.16e")
        lines += ["[[views]]", f'file = "{name}"', f"rows = {x.shape[0]}", f"cols = {x.shape[1]}", ""]
    np.savetxt(out / "labels.csv", labels, fmt="%d")
    (out / "manifest").write_text("\n".join(lines))
    print(f"wrote {n} samples, {len(views)} views, {classes.size} classes to {out}")


if __name__ == "__main__":
    main()
