"""The full FCRN: feature assembly, hazard heads, losses, training, CIFs.

Two head families share the same trunk. The cause-specific model (CSM)
ends in a softmax over M+1 categories (category 0 = survive the interval);
the sub-distribution model (SDM) ends in a single sigmoid hazard for one
target cause. The interval index enters as a scalar t/L feature by default
(one-hot encoding available behind a flag).
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .basis import BasisLayer, resample_curve
from .data import (PersonPeriodTable, TimeGrid, augment_cause_specific,
                   augment_subdistribution, censoring_survival, covariate_matrix)

PROB_FLOOR = 1e-12


class NumericError(RuntimeError):
    """Raised when training hits non-finite losses."""


@dataclass
class TrainSettings:
    """Optimizer and architecture knobs with the published defaults."""

    lr: float = 0.001
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 20
    val_fraction: float = 0.1
    hidden: tuple = (32, 64, 32)
    n_basis: int = 3
    time_encoding: str = "scalar"  # or "onehot"
    normalize_curves: bool = True
    seed: int = 0
    log: list = field(default_factory=list)


class FCRNModel:
    """Basis layers + main MLP + hazard head over a fixed time grid."""

    def __init__(self, head, grid, n_tabular, n_causes=None, target_cause=None,
                 signal_specs=(), hidden=(32, 64, 32), time_encoding="scalar",
                 rng=None):
        if head not in ("csm", "sdm"):
            raise ValueError("head must be 'csm' or 'sdm'")
        if head == "csm" and not n_causes:
            raise ValueError("CSM head needs the cause count")
        if head == "sdm" and not target_cause:
            raise ValueError("SDM head needs the target cause")
        rng = rng or np.random.RandomState(0)
        self.head = head
        self.grid = grid
        self.n_tabular = n_tabular
        self.n_causes = n_causes
        self.target_cause = target_cause
        self.time_encoding = time_encoding
        self.hidden = tuple(hidden)
        # z-normalization statistics, filled by fit_normalization
        self.norm_mean = np.zeros(n_tabular)
        self.norm_std = np.ones(n_tabular)
        # per-covariate fill for missing cells seen at prediction time
        self.fill_values = np.zeros(n_tabular)

        self.signal_specs = [dict(s) for s in signal_specs]
        self.basis_layers = {}
        for spec in self.signal_specs:
            self.basis_layers[spec["name"]] = BasisLayer(
                spec["n_basis"], np.asarray(spec["taus"], dtype=np.float64), rng)

        time_width = grid.n_intervals if time_encoding == "onehot" else 1
        width_in = (n_tabular
                    + sum(s["n_basis"] for s in self.signal_specs)
                    + time_width)
        n_out = (n_causes + 1) if head == "csm" else 1
        self.mlp_w, self.mlp_b = [], []
        fan_in = width_in
        for w_out in list(self.hidden) + [n_out]:
            self.mlp_w.append(ad.Var(ad.glorot_uniform(w_out, fan_in, rng), requires_grad=True))
            self.mlp_b.append(ad.Var(np.zeros(w_out), requires_grad=True))
            fan_in = w_out

    # -- parameters --------------------------------------------------------

    def parameters(self):
        params = []
        for w, b in zip(self.mlp_w, self.mlp_b):
            params.extend([w, b])
        for spec in self.signal_specs:
            params.extend(self.basis_layers[spec["name"]].parameters())
        return params

    def clone_parameter_values(self):
        return [p.value.copy() for p in self.parameters()]

    def restore_parameter_values(self, values):
        for p, v in zip(self.parameters(), values):
            p.value = v.copy()

    # -- feature assembly ----------------------------------------------------

    def fit_normalization(self, X):
        """Set tabular z-normalization statistics from a filled matrix."""
        self.norm_mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.norm_std = np.where(std > 1e-12, std, 1.0)
        self.fill_values = np.median(X, axis=0)

    def normalize(self, X):
        return (X - self.norm_mean) / self.norm_std

    def denormalize(self, Xn):
        return Xn * self.norm_std + self.norm_mean

    def curve_matrices(self, subjects):
        """Resample and normalize each signal into an (n, J) value matrix."""
        out = {}
        for spec in self.signal_specs:
            name = spec["name"]
            taus = np.asarray(spec["taus"])
            rows = []
            for s in subjects:
                match = [c for c in s.curves if c.name == name]
                if not match:
                    raise ValueError("subject %s lacks signal %r" % (s.id, name))
                rows.append(resample_curve(match[0], taus))
            vals = np.vstack(rows)
            out[name] = (vals - spec.get("mean", 0.0)) / spec.get("std", 1.0)
        return out

    def fit_curve_normalization(self, subjects, enabled=True):
        for spec in self.signal_specs:
            spec["mean"], spec["std"] = 0.0, 1.0
        if not enabled or not self.signal_specs:
            return
        raw = self.curve_matrices(subjects)
        for spec in self.signal_specs:
            vals = raw[spec["name"]]
            spec["mean"] = float(vals.mean())
            sd = float(vals.std())
            spec["std"] = sd if sd > 1e-12 else 1.0

    def _time_feature(self, intervals):
        L = self.grid.n_intervals
        if self.time_encoding == "onehot":
            f = np.zeros((len(intervals), L))
            f[np.arange(len(intervals)), np.asarray(intervals) - 1] = 1.0
            return f
        return (np.asarray(intervals, dtype=np.float64) / L).reshape(-1, 1)

    def project_signals(self, curve_mats):
        """Basis-layer projections for every subject, one (n, D) Var per signal."""
        return {spec["name"]: self.basis_layers[spec["name"]].project(curve_mats[spec["name"]])
                for spec in self.signal_specs}

    def forward_logits(self, xn_var, projections, subj_idx, intervals):
        """Logits for person-period rows given the normalized covariate Var.

        xn_var is the full (n_subjects, P) normalized matrix; rows are
        gathered per person-period row so input gradients flow back to it.
        """
        parts = [ad.take_rows(xn_var, subj_idx)]
        for spec in self.signal_specs:
            parts.append(ad.take_rows(projections[spec["name"]], subj_idx))
        parts.append(ad.Var(self._time_feature(intervals)))
        h = ad.concat(parts, axis=1)
        h = ad.dense(h, self.mlp_w[0], self.mlp_b[0])
        for w, b in zip(self.mlp_w[1:], self.mlp_b[1:]):
            h = ad.dense(ad.relu(h), w, b)
        return h

    # -- heads and losses ----------------------------------------------------

    def hazard_probs(self, logits):
        """Head activation: softmax probabilities (CSM) or sigmoid hazard (SDM)."""
        if self.head == "csm":
            return ad.softmax(logits, axis=1)
        return ad.sigmoid(logits)

    def batch_loss(self, logits, table, rows):
        probs = self.hazard_probs(logits)
        if self.head == "csm":
            return loss_cs(probs, table.target[rows])
        return loss_sub(probs, table.target[rows], table.weight[rows])

    # -- prediction ----------------------------------------------------------

    def predict_hazards(self, subjects, xn=None):
        """Per-interval hazards for each subject at t = 1..L.

        CSM: (n, L, M+1) head probabilities. SDM: (n, L) hazards.
        Accepts a pre-normalized covariate matrix to support audit paths.
        """
        n = len(subjects)
        L = self.grid.n_intervals
        if xn is None:
            X, mask = covariate_matrix(subjects)
            if mask.any():
                X = np.where(mask, self.fill_values, X)
            if np.any(~np.isfinite(X)):
                raise ValueError("unimputed missing covariates reached prediction")
            xn = self.normalize(X)
        xn_var = ad.Var(xn)
        projections = self.project_signals(self.curve_matrices(subjects)) \
            if self.signal_specs else {}
        subj_idx = np.repeat(np.arange(n), L)
        intervals = np.tile(np.arange(1, L + 1), n)
        logits = self.forward_logits(xn_var, projections, subj_idx, intervals)
        probs = self.hazard_probs(logits).value
        if self.head == "csm":
            return probs.reshape(n, L, self.n_causes + 1)
        return probs.reshape(n, L)

    def predict_cif(self, subjects, xn=None):
        """Survival and cumulative incidence curves per subject.

        CSM: (S, F) with S shape (n, L+1) starting at 1 and F shape
        (n, M, L+1) starting at 0. SDM: F1 with shape (n, L+1).
        """
        hz = self.predict_hazards(subjects, xn=xn)
        if self.head == "csm":
            return cif_from_cause_specific(hz)
        return cif_from_subdistribution(hz)

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        basis = []
        for spec in self.signal_specs:
            layer = self.basis_layers[spec["name"]]
            basis.append({
                "name": spec["name"],
                "taus": list(map(float, spec["taus"])),
                "n_basis": spec["n_basis"],
                "mean": spec.get("mean", 0.0),
                "std": spec.get("std", 1.0),
                "micro_width": layer.nets[0].width,
                "micro_depth": layer.nets[0].depth,
                "weights": [[w.value.tolist() for w in net.weights] for net in layer.nets],
                "biases": [[b.value.tolist() for b in net.biases] for net in layer.nets],
            })
        return {
            "head": self.head,
            "n_causes": self.n_causes,
            "target_cause": self.target_cause,
            "n_tabular": self.n_tabular,
            "hidden": list(self.hidden),
            "time_encoding": self.time_encoding,
            "grid": {"width": self.grid.width, "cuts": self.grid.cuts.tolist()},
            "norm_mean": self.norm_mean.tolist(),
            "norm_std": self.norm_std.tolist(),
            "fill_values": self.fill_values.tolist(),
            "mlp_w": [w.value.tolist() for w in self.mlp_w],
            "mlp_b": [b.value.tolist() for b in self.mlp_b],
            "basis_layers": basis,
        }

    @classmethod
    def from_dict(cls, d):
        grid = TimeGrid(width=d["grid"]["width"],
                        cuts=np.asarray(d["grid"]["cuts"], dtype=np.float64))
        specs = [{"name": b["name"], "taus": b["taus"], "n_basis": b["n_basis"],
                  "mean": b["mean"], "std": b["std"]} for b in d["basis_layers"]]
        model = cls(head=d["head"], grid=grid, n_tabular=d["n_tabular"],
                    n_causes=d["n_causes"], target_cause=d["target_cause"],
                    signal_specs=specs, hidden=d["hidden"],
                    time_encoding=d["time_encoding"])
        model.norm_mean = np.asarray(d["norm_mean"], dtype=np.float64)
        model.norm_std = np.asarray(d["norm_std"], dtype=np.float64)
        model.fill_values = np.asarray(d["fill_values"], dtype=np.float64)
        for w, v in zip(model.mlp_w, d["mlp_w"]):
            w.value = np.asarray(v, dtype=np.float64)
        for b, v in zip(model.mlp_b, d["mlp_b"]):
            b.value = np.asarray(v, dtype=np.float64)
        for bdict in d["basis_layers"]:
            layer = model.basis_layers[bdict["name"]]
            for net, ws, bs in zip(layer.nets, bdict["weights"], bdict["biases"]):
                net.weights = [ad.Var(np.asarray(w, dtype=np.float64), requires_grad=True)
                               for w in ws]
                net.biases = [ad.Var(np.asarray(b, dtype=np.float64), requires_grad=True)
                              for b in bs]
        return model

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def loss_cs(probs, targets):
    """Mean multinomial negative log-likelihood over person-period rows."""
    picked = ad.pick(probs, np.asarray(targets, dtype=np.intp))
    return -ad.vmean(ad.log(ad.clamp_min(picked, PROB_FLOOR)))


def loss_sub(probs, targets, weights):
    """Weighted binary cross-entropy, averaged over the batch rows."""
    xi = probs if probs.value.ndim == 1 else ad.reshape_flat(probs)
    y = np.asarray(targets, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    ll = (ad.Var(y) * ad.log(ad.clamp_min(xi, PROB_FLOOR))
          + ad.Var(1.0 - y) * ad.log(ad.clamp_min(1.0 - xi, PROB_FLOOR)))
    return -ad.vsum(ad.Var(w) * ll) / len(y)


# ---------------------------------------------------------------------------
# CIF recursions
# ---------------------------------------------------------------------------

def cif_from_cause_specific(hazards):
    """CIFs and survival from (n, L, M+1) cause-specific head probabilities.

    S(t) = prod_{s<=t} (1 - lambda(s)),  F_m(t) = sum_{s<=t} lambda_m(s) S(s-1).
    """
    n, L, mp1 = hazards.shape
    lam = hazards[:, :, 1:]               # (n, L, M)
    total = lam.sum(axis=2)               # overall hazard per interval
    S = np.ones((n, L + 1))
    S[:, 1:] = np.cumprod(1.0 - total, axis=1)
    F = np.zeros((n, mp1 - 1, L + 1))
    for t in range(1, L + 1):
        F[:, :, t] = F[:, :, t - 1] + lam[:, t - 1, :] * S[:, t - 1][:, None]
    return S, F


def cif_from_subdistribution(hazards):
    """F1(t) = 1 - prod_{s<=t} (1 - xi_1(s)) from (n, L) hazards."""
    n, L = hazards.shape
    F = np.zeros((n, L + 1))
    F[:, 1:] = 1.0 - np.cumprod(1.0 - hazards, axis=1)
    return F


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def build_table(subjects, grid, model, g=None):
    """Augmented person-period table for the model's head."""
    if model.head == "csm":
        return augment_cause_specific(subjects, grid, model.n_causes)
    if g is None:
        g = censoring_survival(subjects, grid)
    return augment_subdistribution(subjects, grid, model.target_cause, g)


def _epoch_loss(model, xn_var, projections_fn, table, rows, batch_size,
                adam=None, lr=None, shuffle_rng=None):
    """One pass over the table; updates parameters when adam is given."""
    order = np.arange(len(rows))
    if shuffle_rng is not None:
        shuffle_rng.shuffle(order)
    total, count = 0.0, 0
    params = model.parameters() if adam is not None else None
    for start in range(0, len(order), batch_size):
        sel = rows[order[start:start + batch_size]]
        projections = projections_fn()
        logits = model.forward_logits(xn_var, projections,
                                      table.subject_idx[sel], table.interval[sel])
        loss = model.batch_loss(logits, table, sel)
        if not np.isfinite(loss.value):
            raise NumericError("non-finite loss (lr=%s, batch starting at row %d)"
                               % (lr, start))
        if adam is not None:
            ad.zero_grads(params)
            ad.backward(loss)
            ad.adam_step(params, adam, lr)
        total += float(loss.value) * len(sel)
        count += len(sel)
    return total / max(count, 1)


def train_model(subjects, grid, head, settings, n_causes=None, target_cause=None,
                signal_names=(), xn_override=None):
    """Fit an FCRN on complete-data subjects (no missingness path).

    Returns the model with the best validation loss under early stopping.
    xn_override substitutes a pre-normalized covariate matrix, which the
    imputation loop uses to train on currently imputed values.
    """
    rng = np.random.RandomState(settings.seed)
    model = _init_model(subjects, grid, head, settings, n_causes, target_cause,
                        signal_names, rng)
    X, mask = covariate_matrix(subjects)
    if xn_override is not None:
        xn = xn_override
    else:
        if mask.any():
            raise ValueError("dataset has missing values; use the imputation loop")
        model.fit_normalization(X)
        xn = model.normalize(X)
    _fit_loop(model, subjects, xn, settings, rng)
    return model


def _init_model(subjects, grid, head, settings, n_causes, target_cause,
                signal_names, rng):
    signal_specs = []
    if signal_names and subjects and subjects[0].curves:
        for name in signal_names:
            taus = _canonical_grid(subjects, name)
            signal_specs.append({"name": name, "taus": taus,
                                 "n_basis": settings.n_basis})
    model = FCRNModel(head=head, grid=grid, n_tabular=len(subjects[0].x),
                      n_causes=n_causes, target_cause=target_cause,
                      signal_specs=signal_specs, hidden=settings.hidden,
                      time_encoding=settings.time_encoding, rng=rng)
    model.fit_curve_normalization(subjects, enabled=settings.normalize_curves)
    return model


def _canonical_grid(subjects, name, cap=101):
    """Union of observed tau grids for one signal, capped at `cap` points."""
    taus = np.unique(np.concatenate(
        [c.taus for s in subjects for c in s.curves if c.name == name]))
    if len(taus) > cap:
        taus = np.linspace(taus[0], taus[-1], cap)
    return taus


def _fit_loop(model, subjects, xn, settings, rng):
    """Adam mini-batch loop with a validation holdout and early stopping."""
    n = len(subjects)
    perm = rng.permutation(n)
    n_val = int(round(settings.val_fraction * n))
    val_ids = set(perm[:n_val].tolist())
    g = censoring_survival(subjects, model.grid) if model.head == "sdm" else None
    table = build_table(subjects, model.grid, model, g=g)
    in_val = np.array([i in val_ids for i in table.subject_idx])
    train_rows = np.where(~in_val)[0]
    val_rows = np.where(in_val)[0]

    xn_var = ad.Var(xn)
    curve_mats = model.curve_matrices(subjects) if model.signal_specs else {}

    def projections_fn():
        return model.project_signals(curve_mats) if model.signal_specs else {}

    params = model.parameters()
    adam = ad.AdamState(params)
    shuffle_rng = np.random.RandomState(rng.randint(2 ** 31))
    best_loss, best_values, since_best = np.inf, model.clone_parameter_values(), 0
    history = []
    for epoch in range(settings.max_epochs):
        tr_loss = _epoch_loss(model, xn_var, projections_fn, table, train_rows,
                              settings.batch_size, adam=adam, lr=settings.lr,
                              shuffle_rng=shuffle_rng)
        if len(val_rows):
            monitored = _epoch_loss(model, xn_var, projections_fn, table,
                                    val_rows, settings.batch_size)
        else:
            monitored = tr_loss
        history.append((epoch, tr_loss, monitored))
        if monitored < best_loss - 1e-12:
            best_loss = monitored
            best_values = model.clone_parameter_values()
            since_best = 0
        else:
            since_best += 1
            if since_best >= settings.patience:
                break
    model.restore_parameter_values(best_values)
    settings.log = history
    return model
