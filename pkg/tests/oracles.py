"""Independent reference computations shared by the test modules."""
import numpy as np

from voltscale import nn

HIDDEN = ["sigmoid", "relu", "linear", "afu_sigmoid:16"]
OUTPUTS = ["sigmoid", "relu", "linear", "afu_sigmoid:16", "softmax"]
# every (hidden, output, loss) combination the network accepts
PAIRS = [(h, o, nn.CROSS_ENTROPY if o == "softmax" else nn.MSE)
         for h in HIDDEN for o in OUTPUTS]


def loss_of(net, x, t, loss, weights=None, biases=None):
    """Loss recomputed from scratch without the library's forward cache."""
    weights = net.weights if weights is None else weights
    biases = net.biases if biases is None else biases
    z = np.atleast_2d(np.asarray(x, dtype=float))
    for w, b, kind in zip(weights, biases, net.activations):
        a = z @ w.T + b
        if kind == "sigmoid":
            z = 1.0 / (1.0 + np.exp(-a))
        elif kind == "relu":
            z = np.where(a > 0, a, 0.0)
        elif kind == "linear":
            z = a
        elif kind == "softmax":
            e = np.exp(a - a.max(axis=1, keepdims=True))
            z = e / e.sum(axis=1, keepdims=True)
        else:
            z = nn.afu_sigmoid(a, int(kind.split(":")[1]))
    t = np.atleast_2d(np.asarray(t, dtype=float))
    if loss == nn.MSE:
        return 0.5 * np.sum((z - t) ** 2) / z.shape[0]
    return -np.sum(t * np.log(z)) / z.shape[0]


def fd_gradients(net, x, t, loss, h=1e-5, weights=None, biases=None):
    """Central differences of the loss w.r.t. every weight and bias."""
    weights = [w.copy() for w in (net.weights if weights is None else weights)]
    biases = [b.copy() for b in (net.biases if biases is None else biases)]
    out_w, out_b = [], []
    for params, out in ((weights, out_w), (biases, out_b)):
        for p in params:
            g = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_of(net, x, t, loss, weights, biases)
                p[idx] = old - h
                dn = loss_of(net, x, t, loss, weights, biases)
                p[idx] = old
                g[idx] = (up - dn) / (2 * h)
            out.append(g)
    return out_w, out_b


def max_rel_violation(analytic, numeric, rel=1e-6, abs_floor=1e-8):
    """Largest ratio |a - n| / (rel*max(|a|,|n|) + abs_floor); <= 1 passes."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        tol = rel * np.maximum(np.abs(a), np.abs(n)) + abs_floor
        worst = max(worst, float(np.max(np.abs(a - n) / tol)))
    return worst


def kink_distance(net, x, weights=None, biases=None):
    """Distance of any pre-activation from a point where its slope jumps."""
    _, cache = nn.forward(net, x, weights, biases)
    d = np.inf
    for a, kind in zip(cache.pre, net.activations):
        if kind == "relu":
            d = min(d, float(np.min(np.abs(a))))
        elif kind.startswith("afu_sigmoid"):
            seg = int(kind.split(":")[1])
            knots = np.linspace(-nn.AFU_RANGE, nn.AFU_RANGE, seg + 1)
            d = min(d, float(np.min(np.abs(a[..., None] - knots))))
    return d


def random_case(rng, hidden, output, loss, margin=1e-3):
    """A small random net with an input/target pair away from every kink."""
    n_layers = int(rng.integers(1, 4))
    widths = [int(w) for w in rng.integers(1, 6, n_layers + 1)]
    if output == "softmax":
        widths[-1] = max(widths[-1], 2)
    net = nn.init_mlp(widths, hidden, output, seed=rng)
    net = nn.Mlp(net.weights, [rng.normal(0, 0.5, b.shape) for b in net.biases],
                 net.activations)
    batch = int(rng.integers(1, 4))
    for _ in range(1000):
        x = rng.normal(0, 1.5, (batch, widths[0]))
        if kink_distance(net, x) > margin:
            break
    else:
        raise RuntimeError("could not place the sample away from kinks")
    if loss == nn.CROSS_ENTROPY:
        t = rng.dirichlet(np.ones(widths[-1]), size=batch)
    else:
        t = rng.uniform(-1, 1, (batch, widths[-1]))
    if batch == 1 and rng.random() < 0.5:
        x, t = x[0], t[0]
    return net, x, t
