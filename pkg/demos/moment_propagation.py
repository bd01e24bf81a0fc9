"""Push a Gaussian input through a two-layer Bayesian MLP in closed form, then
check the result against sampled weights.

    python3 demos/moment_propagation.py
"""

import numpy as np

from momentbnn import Architecture, build_network


def main():
    rng = np.random.default_rng(0)
    arch = Architecture((32,), slope=0.1)
    net = build_network(arch)
    store = net.store
    store.mu[:] = rng.normal(0.0, 0.4, store.size)
    store.rho[:] = np.log(np.expm1(rng.uniform(0.05, 0.3, store.size)))

    x = np.array([-1.0, 0.0, 0.5])
    pred = net.predict(x)

    # brute force: sample whole networks and run them deterministically
    w1, b1, w2, b2 = (store.parameter(f"{i}.{p}") for i in (0, 2) for p in ("weight", "bias"))
    n = 200_000

    def draw(p):
        return p.mu + p.sigma * rng.standard_normal((n,) + p.shape)

    pre = draw(w1)[:, None, :, 0] * x[None, :, None] + draw(b1)[:, None, :]
    act = np.where(pre >= 0, pre, arch.slope * pre)
    y = np.einsum("knh,kh->kn", act, draw(w2)[:, 0, :]) + draw(b2)[:, None, 0]

    print(f"{'x':>6} {'mean':>10} {'mc mean':>10} {'var':>10} {'mc var':>10}")
    for i, xi in enumerate(x):
        print(f"{xi:6.2f} {pred.mean[i]:10.4f} {y[:, i].mean():10.4f} "
              f"{pred.var_total[i]:10.4f} {y[:, i].var():10.4f}")


if __name__ == "__main__":
    main()
