"""Generate the diabetes-scale fixture: synthetic Pima-like data and an
8-12-10-2 ReLU classifier trained on it.

The real Pima Indians Diabetes table is not redistributed here. This script
draws 768 rows with the same column names, value ranges and roughly the same
marginals and class balance, keeps an 85% training split, and trains the
network on the min-max scaled training split so that the committed network's
input box is [0, 1]^8 and matches `load_dataset` scaling of the committed CSV.

Usage: python3 scripts/make_diabetes_fixture.py [out_dir]
"""

import json
import sys
from pathlib import Path

import numpy as np

COLUMNS = [
    "Pregnancies",
    "Glucose",
    "BloodPressure",
    "SkinThickness",
    "Insulin",
    "BMI",
    "DiabetesPedigreeFunction",
    "Age",
]
LABEL = "Outcome"
SIZES = [8, 12, 10, 2]


def synthesize(rng, n=768):
    age = np.clip(21 + rng.gamma(1.6, 7.5, n), 21, 81).round()
    preg = np.clip(rng.poisson(0.9 + (age - 21) * 0.12), 0, 17)
    glucose = np.clip(rng.normal(118, 30, n), 44, 199).round()
    bp = np.clip(rng.normal(70, 12, n), 24, 122).round()
    bp[rng.random(n) < 0.04] = 0
    bmi = np.clip(rng.normal(32, 7, n), 18.2, 67.1).round(1)
    skin = np.clip(0.9 * (bmi - 10) + rng.normal(0, 7, n), 7, 99).round()
    skin[rng.random(n) < 0.28] = 0
    insulin = np.clip(np.exp(rng.normal(4.7, 0.65, n)) + 0.6 * (glucose - 100), 14, 846).round()
    insulin[rng.random(n) < 0.48] = 0
    dpf = np.clip(np.exp(rng.normal(-0.95, 0.6, n)), 0.078, 2.42).round(3)
    z = (
        0.034 * (glucose - 120)
        + 0.085 * (bmi - 32)
        + 0.028 * (age - 33)
        + 0.09 * (preg - 3.8)
        + 0.9 * (dpf - 0.47)
        - 0.65
        + rng.logistic(0, 0.9, n)
    )
    y = (z > 0).astype(int)
    x = np.stack([preg, glucose, bp, skin, insulin, bmi, dpf, age], axis=1)
    return x, y


def train(x, y, rng, epochs=4000, lr=0.01):
    params = []
    for fan_in, fan_out in zip(SIZES[:-1], SIZES[1:]):
        w = rng.normal(0, np.sqrt(2.0 / fan_in), (fan_out, fan_in))
        b = np.full(fan_out, 0.05)
        params += [w, b]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    onehot = np.eye(2)[y]
    for t in range(1, epochs + 1):
        acts = [x]
        pres = []
        h = x
        for k in range(0, len(params), 2):
            pre = h @ params[k].T + params[k + 1]
            pres.append(pre)
            h = np.maximum(pre, 0) if k + 2 < len(params) else pre
            acts.append(h)
        logits = acts[-1]
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        grad = (p - onehot) / len(x)
        grads = [None] * len(params)
        for k in range(len(params) - 2, -1, -2):
            grads[k] = grad.T @ acts[k // 2]
            grads[k + 1] = grad.sum(axis=0)
            if k > 0:
                grad = (grad @ params[k]) * (pres[k // 2 - 1] > 0)
        for i, g in enumerate(grads):
            m[i] = 0.9 * m[i] + 0.1 * g
            v[i] = 0.999 * v[i] + 0.001 * g * g
            mh = m[i] / (1 - 0.9**t)
            vh = v[i] / (1 - 0.999**t)
            params[i] -= lr * mh / (np.sqrt(vh) + 1e-8)
    return params


def predict(params, x):
    h = x
    for k in range(0, len(params), 2):
        h = h @ params[k].T + params[k + 1]
        if k + 2 < len(params):
            h = np.maximum(h, 0)
    return h.argmax(axis=1)


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/fixtures")
    rng = np.random.default_rng(20190711)
    x, y = synthesize(rng)
    order = rng.permutation(len(x))
    n_train = int(round(0.85 * len(x)))
    tr, te = order[:n_train], order[n_train:]
    lo, hi = x[tr].min(axis=0), x[tr].max(axis=0)
    scale = lambda a: (a - lo) / np.where(hi > lo, hi - lo, 1.0)
    params = train(scale(x[tr]), y[tr], rng)
    acc_tr = (predict(params, scale(x[tr])) == y[tr]).mean()
    acc_te = (predict(params, np.clip(scale(x[te]), 0, 1)) == y[te]).mean()
    print(f"train rows {len(tr)}, positives {y[tr].mean():.3f}, train acc {acc_tr:.3f}, test acc {acc_te:.3f}")

    # Values are already rounded to what %g prints, so min-max scaling the
    # written CSV reproduces the training inputs exactly.
    with open(out / "diabetes_train.csv", "w") as f:
        f.write(",".join(COLUMNS + [LABEL]) + "\n")
        for i in tr:
            vals = [f"{v:g}" for v in x[i]] + [str(y[i])]
            f.write(",".join(vals) + "\n")
    net = {
        "input_dim": 8,
        "input_box": [[0.0, 1.0]] * 8,
        "layers": [
            {"weights": params[k].round(6).tolist(), "bias": params[k + 1].round(6).tolist()}
            for k in range(0, len(params), 2)
        ],
    }
    with open(out / "diabetes_net.json", "w") as f:
        json.dump(net, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
