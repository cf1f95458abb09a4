"""Quick end-to-end check of the compiled `dgsp` module."""

import math

import dgsp


def close(a, b, tol=1e-8):
    return all(abs(x - y) <= tol for x, y in zip(a, b)) and len(a) == len(b)


def main():
    s = dgsp.Shift.directed_cycle(6)
    assert s.n == 6
    assert close(s.apply([1, 0, 0, 0, 0, 0]), [0, 1, 0, 0, 0, 0])

    eig = dgsp.eigen_gft(s)
    x = [1.0, -2.0, 0.5, 0.0, 3.0, 1.0]
    back = eig.igft(eig.gft(x))
    assert close([z.real for z in back], x)

    f = dgsp.Filter([1.0, 0.5, 0.25])
    y = f.apply(s, x)
    lam = eig.eigenvalues[1]
    assert abs(f.response(lam) - (1 + 0.5 * lam + 0.25 * lam * lam)) < 1e-12

    basis = dgsp.learn_dgft(s, seed=0)
    u = basis.u
    gram = [[sum(u[k][i] * u[k][j] for k in range(6)) for j in range(6)] for i in range(6)]
    assert all(abs(gram[i][j] - (i == j)) < 1e-8 for i in range(6) for j in range(6))

    bl = dgsp.Bandlimited.from_dgft(basis, 3)
    nodes = bl.greedy(3)
    rank, _ = bl.recoverability(nodes)
    assert rank == 3
    sig = basis.synthesize([1.0, -0.5, 0.25, 0, 0, 0])
    rec = bl.reconstruct(nodes, [sig[i] for i in nodes])
    assert close(rec, sig, 1e-8)

    g = dgsp.Shift.directed_er(10, 0.3, 3)
    spike = [0.0] * 10
    spike[2], spike[7] = 1.5, -1.0
    obs = dgsp.Filter([1.0, 0.5, 0.25]).apply(g, spike)
    est, _ = dgsp.deconvolve(g, [1.0, 0.5, 0.25], obs, 1e-6)
    assert close(est, spike, 1e-3)

    samples = dgsp.generate_stationary(g, [1.0, 0.5], 2000, seed=1)
    cov = dgsp.estimate_covariance(samples)
    assert len(cov) == 10 and all(math.isfinite(v) for row in cov for v in row)

    try:
        dgsp.eigen_gft(dgsp.Shift.south_north_grid(3, 3))
    except dgsp.NumericalError:
        pass
    else:
        raise AssertionError("grid shift should not be diagonalizable")

    try:
        dgsp.Filter([])
    except ValueError:
        pass
    else:
        raise AssertionError("empty taps should be rejected")

    signals, labels = dgsp.source_localization(dgsp.Shift.chorded_cycle(20, 10, 0), [0, 10], 60, 4, 0.05, 0)
    model = dgsp.Gnn(dgsp.Shift.chorded_cycle(20, 10, 0), ["relu"], 3, 2, 0)
    curve = model.train(signals, labels, epochs=20)
    assert curve[-1] <= curve[0]
    assert 0.0 <= model.accuracy(signals, labels) <= 1.0
    print("smoke test ok")


if __name__ == "__main__":
    main()
