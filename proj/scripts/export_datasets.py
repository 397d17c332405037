"""Export the small bundled CSV datasets used by the benchmark fixtures."""
import csv
import pathlib

from sklearn import datasets

OUT = pathlib.Path(__file__).resolve().parent.parent / "data"


def write(name, bunch, label_names=None):
    names = [f.replace(" ", "_").replace("(", "").replace(")", "").replace("/", "_")
             for f in (bunch.feature_names if hasattr(bunch, "feature_names") else
                       [f"f{i}" for i in range(bunch.data.shape[1])])]
    with open(OUT / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["label"])
        for row, y in zip(bunch.data, bunch.target):
            lab = label_names[y] if label_names is not None else str(y)
            w.writerow([repr(float(v)) for v in row] + [lab])


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    iris = datasets.load_iris()
    write("iris", iris, list(iris.target_names))
    wine = datasets.load_wine()
    write("wine", wine, [str(t) for t in wine.target_names])
    bc = datasets.load_breast_cancer()
    write("breast_cancer", bc, list(bc.target_names))
    digits = datasets.load_digits()
    digits.feature_names = [f"px{i}" for i in range(64)]
    write("digits", digits)
