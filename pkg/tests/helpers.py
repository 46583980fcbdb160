"""Independent oracles shared by the tests."""

import numpy as np

from harssl import encoder, nn, pairing
from harssl.encoder import EncoderConfig, PairProjector


def naive_conv1d(x, w, b, stride=1, padding="same"):
    """Triple-loop reference for channels-last 1-D convolution (cross-correlation)."""
    n, length, c_in = x.shape
    k, _, c_out = w.shape
    if padding == "same":
        left = (k - 1) // 2
        right = k - 1 - left
    else:
        left = right = 0
    xp = np.zeros((n, length + left + right, c_in))
    xp[:, left : left + length] = x
    n_out = (length + left + right - k) // stride + 1
    y = np.zeros((n, n_out, c_out))
    for i in range(n):
        for t in range(n_out):
            for o in range(c_out):
                acc = b[o]
                for j in range(k):
                    for c in range(c_in):
                        acc += xp[i, t * stride + j, c] * w[j, c, o]
                y[i, t, o] = acc
    return y


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def finite_difference(loss_fn, array, coords, eps, retries=4):
    """Central differences of ``loss_fn()`` w.r.t. ``array`` at flat ``coords`` (array edited in place).

    ``loss_fn`` returns either a loss or ``(loss, pattern)`` where ``pattern``
    identifies the ReLU/max-pool linear piece. A step whose two ends sit on
    different pieces is retried with a ten times smaller ``eps``: a difference
    across a kink is not a derivative.
    """

    def evaluate():
        value = loss_fn()
        return value if isinstance(value, tuple) else (value, None)

    flat = array.reshape(-1)
    out = []
    for i in coords:
        old = flat[i]
        h = eps
        for _ in range(retries + 1):
            flat[i] = old + h
            up, pat_up = evaluate()
            flat[i] = old - h
            down, pat_down = evaluate()
            flat[i] = old
            if pat_up == pat_down:
                break
            h /= 10
        out.append((up - down) / (2 * h))
    return np.array(out)


def activation_pattern(net, tape):
    """Bytes identifying which linear piece of a ReLU/max-pool network a recorded forward pass fell on."""
    parts = []
    for layer, cache in zip(net, tape.caches):
        if layer.kind == "relu":
            parts.append(np.packbits(cache).tobytes())
        elif layer.kind == "maxpool1d":
            parts.append(cache[1].tobytes())
    return b"|".join(parts)


def sample_coords(array, rng, k):
    size = array.size
    return rng.choice(size, size=min(k, size), replace=False)


def check_net_gradients(net, params32, x, rng, n_coords=6, eps=1e-6):
    """Analytic f32 and f64 gradients vs float64 central differences.

    Loss is ``sum(R * net(x))`` for a fixed random ``R``. Returns the worst
    relative errors ``(f32, f64)`` over parameters and the input.
    """
    out32, tape = nn.forward(net, params32, x)
    r = rng.standard_normal(out32.shape)
    params32.zero_grad()
    dx32 = nn.backward(tape, r.astype(np.float32))

    p64 = params32.astype(np.float64)
    x64 = np.asarray(x, dtype=np.float64).copy()
    out64, tape64 = nn.forward(net, p64, x64)
    dx64 = nn.backward(tape64, r)

    def loss():
        y, tape = nn.forward(net, p64, x64)
        return float((y * r).sum()), activation_pattern(net, tape)

    worst32 = worst64 = 0.0
    for name in p64:
        coords = sample_coords(p64[name], rng, n_coords)
        fd = finite_difference(loss, p64[name], coords, eps)
        worst32 = max(worst32, relative_error(params32.grads[name].reshape(-1)[coords], fd))
        worst64 = max(worst64, relative_error(p64.grads[name].reshape(-1)[coords], fd))
    coords = sample_coords(x64, rng, n_coords)
    fd = finite_difference(loss, x64, coords, eps)
    worst32 = max(worst32, relative_error(dx32.reshape(-1)[coords], fd))
    worst64 = max(worst64, relative_error(dx64.reshape(-1)[coords], fd))
    return worst32, worst64


def cohens_kappa_reference(confusion):
    """Kappa from the raw counts in exact rational arithmetic."""
    from fractions import Fraction

    c = [[int(v) for v in row] for row in confusion]
    k = len(c)
    n = sum(map(sum, c))
    p_o = Fraction(sum(c[i][i] for i in range(k)), n)
    rows = [sum(c[i]) for i in range(k)]
    cols = [sum(c[i][j] for i in range(k)) for j in range(k)]
    p_e = Fraction(sum(r * q for r, q in zip(rows, cols)), n * n)
    if p_e == 1:
        return 1.0 if p_o == 1 else 0.0
    return float((p_o - p_e) / (1 - p_e))


def brute_force_cell(i, j, b):
    """Label and weight of cell (i, j) from the rule, one cell at a time."""
    if i == j:
        return 1, 0.0
    if {i, j} == {i % b, i % b + b} and abs(i - j) == b:
        return 1, 1.0
    return 0, 1.0 / (2 * b - 2)


def contrastive_gradient_errors(cfg, seed, n_coords=3):
    """f32 analytic gradients of the pair loss vs float64 finite differences."""
    rng = np.random.default_rng(seed)
    b = 2
    net, enc = encoder.build_encoder(EncoderConfig(**{**cfg.to_dict(), "channels": cfg.channels, "seed": seed}))
    _, proj = encoder.build_projector(EncoderConfig(**{**cfg.to_dict(), "channels": cfg.channels, "seed": seed}))
    for store in (enc, proj):
        for name in store:
            if name.endswith(".b"):
                store[name][...] = rng.normal(0, 0.05, store[name].shape)
    labels, weights = pairing.pair_matrices(b)
    x = rng.normal(0, 0.5, (2 * b, cfg.window_len, 3)).astype(np.float32)
    encoder.contrastive_loss_and_grads(net, enc, proj, x, labels, weights)

    enc64, proj64 = enc.astype(np.float64), proj.astype(np.float64)
    x64 = x.astype(np.float64)

    def loss():
        emb, tape = nn.forward(net, enc64, x64)
        projector = PairProjector(proj64)
        logits = projector.forward(emb)
        value = nn.weighted_binary_softmax_xent(logits, labels.ravel(), weights.ravel())[0]
        return value, activation_pattern(net, tape) + np.packbits(projector._cache[1]).tobytes()

    worst = 0.0
    for store, store64 in ((enc, enc64), (proj, proj64)):
        for name in store:
            coords = sample_coords(store64[name], rng, n_coords)
            fd = finite_difference(loss, store64[name], coords, 1e-6)
            worst = max(worst, relative_error(store.grads[name].reshape(-1)[coords], fd))
    return worst


def noisy_sequence(rng, n_blocks=8, block=30, k=4, margin=2.0, noise_rate=0.1):
    """Block-constant labels with logits whose argmax is replaced at ``noise_rate`` by a wrong class."""
    truth = np.repeat(rng.integers(0, k, n_blocks), block)
    logits = rng.normal(0, 0.5, (len(truth), k))
    logits[np.arange(len(truth)), truth] += margin
    flip = rng.random(len(truth)) < noise_rate
    wrong = (truth + rng.integers(1, k, len(truth))) % k
    logits[flip] = rng.normal(0, 0.5, (flip.sum(), k))
    logits[flip, wrong[flip]] += margin
    return truth, logits
