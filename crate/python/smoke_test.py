"""Smoke test for the stressforge Python extension.

Build and install first:

    pip install --no-build-isolation ./crates/python

then run `python3 python/smoke_test.py`.
"""

import os
import tempfile

import numpy as np

import stressforge as sf


def main():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = sf.generate(os.path.join(tmp, "data"), seed=3, preset="planted")
        data = sf.load_dataset(manifest, "without")
        x = np.asarray(data["features"])
        y = np.asarray(data["labels"])
        names = data["feature_names"]
        print(f"dataset {x.shape[0]} rows x {x.shape[1]} features, merge report {data['merge_report']}")

        train, test = sf.train_test_split(y.tolist(), 0.2, seed=3, stratified=True)
        xb, yb, n_original = sf.smote_balance(x[train], y[train], k=5, seed=3)
        assert n_original == len(train)
        counts = np.bincount(yb)[1:]
        assert len(set(counts.tolist())) == 1, counts

        forest = sf.RandomForest(n_estimators=50, seed=3).fit(xb, yb, feature_names=names)
        predicted = forest.predict(x[test])
        report = sf.classification_report(y[test].tolist(), predicted)
        print(sf.classification_report_text(y[test].tolist(), predicted))
        assert 0.0 <= report["accuracy"] <= 1.0

        importances = forest.feature_importances_
        assert abs(sum(importances) - 1.0) < 1e-9
        top = sf.top_k_features(importances, names, 5)
        tags = dict(zip(names, data["modalities"]))
        scores = sf.modality_scores([name for _, name, _ in top], tags)
        print("top features", [name for _, name, _ in top])
        print("modality scores", scores)

        truth = sf.planted_truth(os.path.join(tmp, "data", "truth.json"))
        hits = len(set(truth["informative"]) & {name for _, name, _ in top})
        print(f"planted features recovered in top 5: {hits}/5, bayes accuracy {truth['bayes']['accuracy']:.3f}")
        assert hits >= 4

        path = os.path.join(tmp, "model.json")
        forest.save(path)
        again = sf.RandomForest.load(path)
        assert again.predict(x[test]) == predicted

        config = "seed = 3\n[forest]\nn_estimators = 20\n"
        run = sf.run_experiment(config, manifest, os.path.join(tmp, "run"))
        assert os.path.exists(os.path.join(tmp, "run", "report.json"))
        print("run", run["name"], "accuracy", round(run["report"]["accuracy"], 3))

        matrix = sf.scenario_matrix(config, manifest)
        print(matrix["comparison"])
        assert len(matrix["runs"]) == 4

        try:
            sf.RandomForest(n_estimators=0)
        except ValueError as e:
            print("rejected:", e)
        else:
            raise AssertionError("n_estimators=0 accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
