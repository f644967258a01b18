"""Memory-adaptive training around profiled SRAM faults.

Each weight lives in one SRAM word. Before every forward pass the master
(float) weights are quantized, the stuck bits of their words are forced
with OR/AND masks, and the result ``m`` is what the network computes with.
Gradients are taken with respect to ``m`` and the master is updated as::

    w <- m - alpha * dJ/dm + eps

By default ``eps = w - m``, the whole gap between master and deployed
value, so the master keeps training in float while the network always
sees what the SRAM returns. With ``residual="quantization"`` only the
rounding residual ``w - Q(w)`` is carried and the master snaps onto the
stuck bits every step. Masks are compiled once per fault map.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .bench import CLASSIFICATION, metric as error_metric
from .qformat import QFormat, apply_masks_array, dequantize_array, quantize_array
from .sram import FaultMap, SramGeometry, compile_all_masks

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or weight."""


class CapacityError(ValueError):
    """The network does not fit in the SRAM banks."""


# ---------------------------------------------------------------------------
# Weight placement
# ---------------------------------------------------------------------------

POLICIES = ("interleave", "rows", "single")


@dataclass(frozen=True, eq=False)
class WeightMapping:
    """``(bank, word)`` of every weight; biases optionally mapped after them."""

    banks: list
    words: list
    geometry: SramGeometry
    policy: str = "interleave"
    bias_banks: list | None = None
    bias_words: list | None = None

    @property
    def n_mapped(self) -> int:
        n = sum(b.size for b in self.banks)
        if self.bias_banks is not None:
            n += sum(b.size for b in self.bias_banks)
        return n

    def locations(self) -> np.ndarray:
        """All mapped ``(bank, word)`` pairs as an ``(n, 2)`` array."""
        parts = [np.column_stack([b.ravel(), w.ravel()]) for b, w in zip(self.banks, self.words)]
        if self.bias_banks is not None:
            parts += [np.column_stack([b, w]) for b, w in zip(self.bias_banks, self.bias_words)]
        return np.vstack(parts)

    def __eq__(self, other):
        if not isinstance(other, WeightMapping):
            return NotImplemented
        return np.array_equal(self.locations(), other.locations()) and \
            self.geometry == other.geometry


def build_mapping(net: nn.Mlp, geometry: SramGeometry = SramGeometry(),
                  policy: str = "interleave", reserved=(),
                  include_biases: bool = False) -> WeightMapping:
    """Assign every weight its own word.

    ``interleave`` deals weights (row-major, layer by layer) round-robin over
    the banks; ``rows`` gives each output neuron's whole row to one bank in
    turn; ``single`` packs everything into bank 0. Words listed in
    ``reserved`` (``(bank, word)`` pairs, e.g. canary hosts) are skipped
    while free words remain elsewhere; they are used last.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown mapping policy {policy!r}")
    reserved = {(int(b), int(w)) for b, w in reserved}
    n_needed = net.n_weights + (sum(b.size for b in net.biases) if include_biases else 0)
    n_banks = 1 if policy == "single" else geometry.n_banks
    capacity = n_banks * geometry.n_words
    if n_needed > capacity:
        raise CapacityError(f"{n_needed} words needed, {capacity} available")
    # per-bank address order: free words first, reserved words only if needed
    free_total = capacity - sum(1 for b, _ in reserved if b < n_banks)
    use_reserved = n_needed > free_total
    if use_reserved:
        log.warning("not enough free words; %d reserved words will hold weights",
                    n_needed - free_total)
    queues = []
    for b in range(n_banks):
        free = [w for w in range(geometry.n_words) if (b, w) not in reserved]
        taken = [w for w in range(geometry.n_words) if (b, w) in reserved]
        queues.append(free + (taken if use_reserved else []))
    heads = [0] * n_banks
    state = {"next": 0}

    def take(bank: int):
        for k in range(n_banks):
            b = (bank + k) % n_banks
            if heads[b] < len(queues[b]):
                w = queues[b][heads[b]]
                heads[b] += 1
                return b, w
        raise CapacityError("SRAM banks exhausted")

    def place(shape):
        bk = np.empty(shape, dtype=np.int64)
        wd = np.empty(shape, dtype=np.int64)
        flat_b, flat_w = bk.reshape(-1), wd.reshape(-1)
        row_len = shape[1] if len(shape) == 2 else 1
        for n in range(flat_b.size):
            if policy == "rows":
                if n % row_len == 0:
                    state["row_bank"] = state["next"] % n_banks
                    state["next"] += 1
                target = state["row_bank"]
            else:
                target = state["next"] % n_banks
                state["next"] += 1
            flat_b[n], flat_w[n] = take(target)
        return bk, wd

    banks, words = zip(*(place(w.shape) for w in net.weights))
    bias_banks = bias_words = None
    if include_biases:
        bias_banks, bias_words = map(list, zip(*(place(b.shape) for b in net.biases)))
    return WeightMapping(list(banks), list(words), geometry, policy, bias_banks, bias_words)


# ---------------------------------------------------------------------------
# Masks and the deployed view
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerMasks:
    """OR/AND masks gathered per weight (and per bias if masked)."""

    w_or: list
    w_and: list
    b_or: list | None = None
    b_and: list | None = None

    @property
    def masks_biases(self) -> bool:
        return self.b_or is not None


def layer_masks(mapping: WeightMapping, fault_map: FaultMap | None) -> LayerMasks:
    g = mapping.geometry
    if fault_map is None:
        fault_map = FaultMap.empty(g)
    if fault_map.geometry != g:
        raise ValueError("fault map geometry differs from the mapping's SRAM geometry")
    m_or, m_and = compile_all_masks(fault_map)
    w_or = [m_or[b, w] for b, w in zip(mapping.banks, mapping.words)]
    w_and = [m_and[b, w] for b, w in zip(mapping.banks, mapping.words)]
    if mapping.bias_banks is None:
        return LayerMasks(w_or, w_and)
    return LayerMasks(w_or, w_and,
                      [m_or[b, w] for b, w in zip(mapping.bias_banks, mapping.bias_words)],
                      [m_and[b, w] for b, w in zip(mapping.bias_banks, mapping.bias_words)])


def _check_width(mapping: WeightMapping | None, fmt: QFormat | None) -> None:
    if mapping is not None and fmt is not None and mapping.geometry.word_bits != fmt.word_bits:
        raise ValueError(f"SRAM words are {mapping.geometry.word_bits} bits but the weight "
                         f"format is {fmt.word_bits} bits")


def _deploy(values, or_masks, and_masks, fmt: QFormat):
    deployed, residual = [], []
    for v, o, a in zip(values, or_masks, and_masks):
        codes, eps = quantize_array(v, fmt)
        deployed.append(dequantize_array(apply_masks_array(codes, o, a, fmt), fmt))
        residual.append(eps)
    return deployed, residual


@dataclass
class DeployedView:
    weights: list
    eps_q: list
    biases: list | None = None
    bias_eps_q: list | None = None


def inject_mask_all(weights, mapping: WeightMapping, fault_map: FaultMap | None,
                    fmt: QFormat = QFormat(), biases=None, masks: LayerMasks | None = None
                    ) -> DeployedView:
    """Quantize, force stuck bits and dequantize every mapped weight."""
    _check_width(mapping, fmt)
    masks = masks or layer_masks(mapping, fault_map)
    m, eps = _deploy(weights, masks.w_or, masks.w_and, fmt)
    view = DeployedView(m, eps)
    if masks.masks_biases and biases is not None:
        view.biases, view.bias_eps_q = _deploy(biases, masks.b_or, masks.b_and, fmt)
    return view


def deployed_net(net: nn.Mlp, mapping: WeightMapping, fault_map: FaultMap | None,
                 fmt: QFormat = QFormat()) -> nn.Mlp:
    """An ordinary network whose parameters are what the faulty SRAM returns."""
    masks = layer_masks(mapping, fault_map)
    view = inject_mask_all(net.weights, mapping, fault_map, fmt, net.biases, masks)
    biases = view.biases if view.biases is not None else [b.copy() for b in net.biases]
    return nn.Mlp(view.weights, biases, list(net.activations))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

RESIDUALS = ("deployment", "quantization")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.1
    epochs: int = 10
    loss: str = nn.MSE
    fmt: QFormat | None = QFormat()   # None disables quantization
    seed: int = 0
    bias_masking: bool = False
    batch_size: int = 1
    weight_limit: float | None = None  # clip master weights to +-limit after each step
    # What the carried residual covers: "deployment" keeps w - m (rounding
    # and stuck bits), "quantization" keeps only w - Q(w).
    residual: str = "deployment"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.residual not in RESIDUALS:
            raise ValueError(f"unknown residual {self.residual!r}")
        if self.weight_limit is not None and not self.weight_limit > 0:
            raise ValueError("weight_limit must be positive")


@dataclass
class ShadowWeights:
    """Float master network plus the masked, quantized view it deploys as."""

    master: nn.Mlp
    view: DeployedView
    masks: LayerMasks | None
    fmt: QFormat | None

    @classmethod
    def create(cls, net: nn.Mlp, mapping: WeightMapping | None,
               fault_map: FaultMap | None, fmt: QFormat | None,
               masks: LayerMasks | None = None) -> "ShadowWeights":
        master = net.copy()
        if fmt is None:
            if fault_map is not None and len(fault_map):
                raise ValueError("stuck-bit masks need a quantization format")
            return cls(master, DeployedView(master.weights, None), None, None)
        _check_width(mapping, fmt)
        if masks is None:
            if mapping is None:
                raise ValueError("a weight mapping is required for quantized training")
            masks = layer_masks(mapping, fault_map)
        shadow = cls(master, None, masks, fmt)
        shadow.refresh()
        return shadow

    def refresh(self) -> None:
        if self.fmt is None:
            self.view = DeployedView(self.master.weights, None)
            return
        m, eps = _deploy(self.master.weights, self.masks.w_or, self.masks.w_and, self.fmt)
        self.view = DeployedView(m, eps)
        if self.masks.masks_biases:
            self.view.biases, self.view.bias_eps_q = _deploy(
                self.master.biases, self.masks.b_or, self.masks.b_and, self.fmt)

    @property
    def deployed_biases(self):
        return self.view.biases if self.view.biases is not None else self.master.biases

    def deployed(self) -> nn.Mlp:
        return nn.Mlp([w.copy() for w in self.view.weights],
                      [b.copy() for b in self.deployed_biases],
                      list(self.master.activations))


def _update(w, m, eps, g, alpha, residual):
    if eps is None:
        return m - alpha * g
    if residual == "quantization":
        return m - alpha * g + eps
    # m + (w - m) is w; subtracting from w directly avoids the round trip
    return w - alpha * g


def mat_step(shadow: ShadowWeights, x, target, cfg: TrainConfig) -> ShadowWeights:
    """One update on a sample (or minibatch); mutates and returns ``shadow``."""
    net = shadow.master
    view = shadow.view
    _, cache = nn.forward(net, x, view.weights, shadow.deployed_biases)
    y = cache.outputs[-1]
    if not np.all(np.isfinite(y)):
        raise DivergenceError("non-finite network output during training")
    grads = nn.backward(net, cache, target, cfg.loss, view.weights)
    a, lim = cfg.alpha, cfg.weight_limit
    for j in range(len(net.weights)):
        eps = None if view.eps_q is None else view.eps_q[j]
        net.weights[j] = _update(net.weights[j], view.weights[j], eps, grads.weights[j],
                                 a, cfg.residual)
        if view.bias_eps_q is None:
            net.biases[j] = net.biases[j] - a * grads.biases[j]
        else:
            net.biases[j] = _update(net.biases[j], view.biases[j], view.bias_eps_q[j],
                                    grads.biases[j], a, cfg.residual)
        if lim is not None:
            np.clip(net.weights[j], -lim, lim, out=net.weights[j])
        if not (np.all(np.isfinite(net.weights[j])) and np.all(np.isfinite(net.biases[j]))):
            raise DivergenceError(f"non-finite weights in layer {j}")
    shadow.refresh()
    return shadow


@dataclass
class History:
    rows: list = field(default_factory=list)
    voltage: float | None = None
    fault_rate: float = 0.0

    COLUMNS = ("epoch", "train_error", "test_error", "fault_rate", "voltage")

    def record(self, epoch, train_error, test_error):
        self.rows.append({"epoch": epoch, "train_error": train_error,
                          "test_error": test_error, "fault_rate": self.fault_rate,
                          "voltage": self.voltage})

    def to_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                        for k, v in r.items()})
        return buf.getvalue()

    def save(self, path, comment=None) -> None:
        Path(path).write_text(self.to_csv(comment), newline="\n")


def _metric_kind(dataset, loss):
    kind = dataset.meta.get("kind")
    if kind in ("classification", "regression"):
        return CLASSIFICATION if kind == "classification" else "mse"
    return CLASSIFICATION if loss == nn.CROSS_ENTROPY else "mse"


def _with_bias_policy(mapping, bias_masking):
    if mapping is None:
        return None
    if bias_masking and mapping.bias_banks is None:
        raise ValueError("bias masking requested but the mapping has no bias words")
    if not bias_masking and mapping.bias_banks is not None:
        return replace(mapping, bias_banks=None, bias_words=None)
    return mapping


def train(net: nn.Mlp, dataset, cfg: TrainConfig, mapping: WeightMapping | None = None,
          fault_map: FaultMap | None = None, test=None, metric: str | None = None):
    """Run ``cfg.epochs`` epochs; return ``(master_net, history)``.

    With ``fault_map=None`` and ``cfg.fmt=None`` this is plain float SGD
    (the naive baseline). Otherwise every step is a masked, quantized
    update. The returned network holds the float master weights.
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    metric = metric or _metric_kind(dataset, cfg.loss)
    mapping = _with_bias_policy(mapping, cfg.bias_masking)
    shadow = ShadowWeights.create(net, mapping, fault_map, cfg.fmt)
    hist = History(voltage=None if fault_map is None else fault_map.voltage,
                   fault_rate=0.0 if fault_map is None else fault_map.rate)
    rng = np.random.default_rng([cfg.seed, 1])
    X, Y = dataset.X, dataset.Y
    bs = cfg.batch_size
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(X))
        if bs == 1:
            for i in order:
                mat_step(shadow, X[i], Y[i], cfg)
        else:
            for s in range(0, len(order), bs):
                idx = order[s:s + bs]
                mat_step(shadow, X[idx], Y[idx], cfg)
        tr = _eval_view(shadow, dataset, metric)
        te = _eval_view(shadow, test, metric) if test is not None else None
        hist.record(epoch, tr, te)
    return shadow.master, hist


def _eval_view(shadow: ShadowWeights, ds, metric):
    y = nn.predict(shadow.master, ds.X, shadow.view.weights, shadow.deployed_biases)
    return error_metric(y, ds.Y, metric)


def evaluate_deployed(net: nn.Mlp, mapping: WeightMapping, fault_map: FaultMap | None,
                      dataset, metric: str, fmt: QFormat | None = QFormat(),
                      bias_masking: bool = False) -> float:
    """Error of ``net`` as read back from faulty SRAM at the map's voltage."""
    if fmt is None:
        y = nn.predict(net, dataset.X)
        return error_metric(y, dataset.Y, metric)
    dep = deployed_net(net, _with_bias_policy(mapping, bias_masking), fault_map, fmt)
    return error_metric(nn.predict(dep, dataset.X), dataset.Y, metric)
