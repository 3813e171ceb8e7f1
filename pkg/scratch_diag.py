"""Scratch diagnostics (not shipped): directional sensitivity of trained encoders."""
import sys

import numpy as np

from pcir import (EncoderConfig, ScmConfig, ScorerConfig, TrainConfig, auroc,
                  binned_mi, covariate_shift_suite, fit, invariance_gap, sample_test,
                  sample_train, score_dataset)


def sensitivity(model, X, direction, h=0.5):
    """Mean rep displacement per unit input step along `direction` at the data."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    z0 = model.encode(X)
    z1 = model.encode(X + h * d)
    return float(np.linalg.norm(z1 - z0, axis=1).mean() / h)


def main():
    objective = sys.argv[1]
    opt = sys.argv[2]
    lr = float(sys.argv[3])
    epochs = int(sys.argv[4])
    weights = [float(w) for w in sys.argv[5].split(",")]
    cfg = ScmConfig()
    u = np.array([0, 0, 1, 1, 1, 1.0])        # shared style direction
    c = np.array([1, 0, 0, 0, 0, 0.0])        # anomaly content direction
    s_perp = np.array([0, 0, 1, -1, 0, 0.0])  # style direction PCIR cannot see
    for w in weights:
        rows = []
        for seed in (0, 1, 2):
            train = sample_train(cfg, 512, seed=seed)
            enc = EncoderConfig(layers=(cfg.dim, 32, 32, 8), seed=seed)
            tc = TrainConfig(weight=w, epochs=epochs, batch_size=64, optimizer=opt,
                             learning_rate=lr, objective=objective, seed=seed)
            r = fit(tc, enc, train)
            refs = r.encode(train.features)
            sc = (ScorerConfig("knn", 2, refs) if objective == "compactness"
                  else ScorerConfig("reconstruction"))
            out = {}
            for spec in covariate_shift_suite(cfg):
                te = sample_test(cfg, 256, spec, seed=seed)
                s = score_dataset(r, sc, te)
                out[spec.name] = auroc(s[te.labels == 0], s[te.labels == 1])
            gap = invariance_gap({e: refs[train.env == e] for e in train.env_ids()})
            mi = binned_mi(train.features, refs)
            X = train.features
            rows.append((out, gap, mi, sensitivity(r, X, u), sensitivity(r, X, c),
                         sensitivity(r, X, s_perp)))
        med = lambda f: float(np.median([f(x) for x in rows]))
        print(f"w={w:<7g} id={med(lambda r: r[0]['e0']):.3f} "
              f"e2={med(lambda r: r[0]['e2']):.3f} e3={med(lambda r: r[0]['e3']):.3f} "
              f"e4={med(lambda r: r[0]['e4']):.3f} gap={med(lambda r: r[1]):.4f} "
              f"mi={med(lambda r: r[2]):.3f} sens(u)={med(lambda r: r[3]):.3f} "
              f"sens(c)={med(lambda r: r[4]):.3f} sens(perp)={med(lambda r: r[5]):.3f}")


if __name__ == "__main__":
    main()
