"""Scratch calibration sweep (not shipped): find default hyperparameters
where the directional acceptance criteria hold."""
import sys
import time

import numpy as np

from pcir import (EncoderConfig, ScmConfig, ScorerConfig, TrainConfig, auroc, binned_mi,
                  covariate_shift_suite, fit, invariance_gap, sample_test, sample_train,
                  score_dataset)


def run_one(cfg, objective, weight, seed, epochs, lr, opt, batch, clip):
    train = sample_train(cfg, 512, seed=seed)
    enc = EncoderConfig(layers=(cfg.dim, 32, 32, 8), seed=seed)
    tc = TrainConfig(weight=weight, epochs=epochs, batch_size=batch, optimizer=opt,
                     learning_rate=lr, clip_norm=clip, objective=objective, seed=seed)
    r = fit(tc, enc, train)
    refs = r.encode(train.features)
    if objective == "compactness":
        sc = ScorerConfig("knn", 2, refs)
    else:
        sc = ScorerConfig("reconstruction")
    out = {}
    for spec in covariate_shift_suite(cfg):
        te = sample_test(cfg, 256, spec, seed=seed)
        s = score_dataset(r, sc, te)
        out[spec.name] = auroc(s[te.labels == 0], s[te.labels == 1])
    gap = invariance_gap({e: refs[train.env == e] for e in train.env_ids()})
    mi = binned_mi(train.features, refs)
    return out, gap, mi


def main():
    cfg = ScmConfig()
    objective = sys.argv[1] if len(sys.argv) > 1 else "compactness"
    opt = sys.argv[2] if len(sys.argv) > 2 else "adam"
    lr = float(sys.argv[3]) if len(sys.argv) > 3 else 0.01
    epochs = int(sys.argv[4]) if len(sys.argv) > 4 else 40
    clip = float(sys.argv[5]) if len(sys.argv) > 5 else 1.0
    batch = int(sys.argv[6]) if len(sys.argv) > 6 else 64
    seeds = [0, 1, 2]
    weights = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]
    print(f"== {objective} {opt} lr={lr} epochs={epochs} clip={clip} batch={batch}")
    t0 = time.time()
    for w in weights:
        ids, oods, gaps, mis = [], [], [], []
        for seed in seeds:
            out, gap, mi = run_one(cfg, objective, w, seed, epochs, lr, opt, batch, clip)
            ids.append(out["e0"])
            oods.append(np.mean([out["e2"], out["e3"], out["e4"]]))
            gaps.append(gap)
            mis.append(mi)
        print(f"w={w:<7g} id={np.median(ids):.3f} ood234={np.median(oods):.3f} "
              f"(e2..e4 seed0: {out['e2']:.3f} {out['e3']:.3f} {out['e4']:.3f}) "
              f"gap={np.median(gaps):.4f} mi={np.median(mis):.3f}")
    print(f"[{time.time()-t0:.1f}s]")


if __name__ == "__main__":
    main()
