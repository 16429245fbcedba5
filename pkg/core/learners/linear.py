#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
线性模型 - Multinomial logistic regression and calibrated linear SVM
两者都在内部标准化后的特征上训练，确定性的全批量迭代
"""

import numpy as np
from scipy.optimize import minimize

from core.errors import NonFiniteGradient
from core.learners.base import (BaseLearner, as_2d, check_training_data, logger,
                                register_model, softmax)


def _fit_scaler(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def logreg_loss_and_grad(W, b, X, Y, l2=0.0):
    """
    多项逻辑回归的损失与梯度
    loss = mean(-log p_y) + l2/2 * ||W||^2
    """
    n = len(X)
    P = softmax(X @ W.T + b)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n + 0.5 * l2 * np.sum(W * W)
    diff = (P - Y) / n
    grad_W = diff.T @ X + l2 * W
    grad_b = diff.sum(axis=0)
    return float(loss), grad_W, grad_b


@register_model
class LogisticRegression(BaseLearner):

    model_kind = "logreg"

    def __init__(self, epochs=300, step=0.5, l2=1e-4, seed=0, classes=None):
        super().__init__(classes)
        self.epochs = int(epochs)
        self.step = float(step)
        self.l2 = float(l2)
        self.seed = seed
        self.mean = None
        self.std = None
        self.W = None
        self.b = None

    def get_params(self):
        return {"epochs": self.epochs, "step": self.step, "l2": self.l2, "seed": self.seed}

    def init_weights(self, d):
        self.W = np.zeros((self.n_classes, d))
        self.b = np.zeros(self.n_classes)

    def fit(self, X, y):
        X, y, self.classes, y_index = check_training_data(X, y, self.classes or None)
        self.mean, self.std = _fit_scaler(X)
        Xs = (X - self.mean) / self.std
        Y = np.zeros((len(X), self.n_classes))
        Y[np.arange(len(X)), y_index] = 1.0
        self.init_weights(X.shape[1])

        loss = None
        for epoch in range(self.epochs):
            loss, grad_W, grad_b = logreg_loss_and_grad(self.W, self.b, Xs, Y, self.l2)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad_W))):
                raise NonFiniteGradient(f"non-finite logistic gradient at epoch {epoch}", epoch=epoch)
            self.W -= self.step * grad_W
            self.b -= self.step * grad_b
        logger.info(f"Logistic regression fitted: {self.epochs} epochs, loss {loss}")
        return self

    def predict_proba(self, X):
        X = as_2d(X)
        return softmax(((X - self.mean) / self.std) @ self.W.T + self.b)

    def get_structure(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "W": self.W.tolist(), "b": self.b.tolist()}

    def set_structure(self, structure):
        self.mean = np.asarray(structure["mean"], dtype=float)
        self.std = np.asarray(structure["std"], dtype=float)
        self.W = np.asarray(structure["W"], dtype=float)
        self.b = np.asarray(structure["b"], dtype=float)


def platt_calibrate(margins, y_pm):
    """
    拟合 p(+1|f) = 1 / (1 + exp(A f + B))
    目标值按正负样本数平滑，避免过拟合到0/1
    """
    n_pos = int(np.sum(y_pm > 0))
    n_neg = len(y_pm) - n_pos
    target = np.where(y_pm > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(params):
        A, B = params
        z = A * margins + B
        # -log p = log(1+e^z), -log(1-p) = log(1+e^-z)
        loss = np.sum(target * np.logaddexp(0.0, z) + (1.0 - target) * np.logaddexp(0.0, -z))
        p = 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))
        d = target - p
        return loss, np.array([np.sum(d * margins), np.sum(d)])

    start = np.array([0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))])
    result = minimize(objective, start, jac=True, method="L-BFGS-B")
    A, B = result.x
    return float(A), float(B)


@register_model
class LinearSVM(BaseLearner):
    """二分类线性SVM，classes[1] 为正类"""

    model_kind = "linsvm"

    def __init__(self, epochs=300, step=0.1, C=1.0, seed=0, classes=None):
        super().__init__(classes)
        self.epochs = int(epochs)
        self.step = float(step)
        self.C = float(C)
        self.seed = seed
        self.mean = None
        self.std = None
        self.w = None
        self.b = 0.0
        self.A = 0.0
        self.B = 0.0

    def get_params(self):
        return {"epochs": self.epochs, "step": self.step, "C": self.C, "seed": self.seed}

    def objective(self, Xs, y_pm, w, b):
        hinge = np.maximum(0.0, 1.0 - y_pm * (Xs @ w + b))
        return 0.5 * float(w @ w) + self.C * float(hinge.mean())

    def fit(self, X, y):
        X, y, self.classes, y_index = check_training_data(X, y, self.classes or None)
        if self.n_classes != 2:
            raise ValueError(f"LinearSVM is binary, got classes {self.classes}")
        self.mean, self.std = _fit_scaler(X)
        Xs = (X - self.mean) / self.std
        y_pm = np.where(y_index == 1, 1.0, -1.0)
        n, d = Xs.shape

        w = np.zeros(d)
        b = 0.0
        best = (self.objective(Xs, y_pm, w, b), w.copy(), b)
        for t in range(self.epochs):
            active = y_pm * (Xs @ w + b) < 1.0
            grad_w = w - self.C * (y_pm[active] @ Xs[active]) / n
            grad_b = -self.C * y_pm[active].sum() / n
            rate = self.step / np.sqrt(t + 1.0)
            w = w - rate * grad_w
            b = b - rate * grad_b
            value = self.objective(Xs, y_pm, w, b)
            if value < best[0]:
                best = (value, w.copy(), b)

        _, self.w, self.b = best
        self.b = float(self.b)
        self.A, self.B = platt_calibrate(Xs @ self.w + self.b, y_pm)
        logger.debug(f"Linear SVM fitted: objective {best[0]:.6f}, A={self.A:.4f}, B={self.B:.4f}")
        return self

    def decision_function(self, X):
        X = as_2d(X)
        return ((X - self.mean) / self.std) @ self.w + self.b

    def hinge_loss(self, X, y):
        y_pm = np.where(np.asarray(y) == self.classes[1], 1.0, -1.0)
        return float(np.maximum(0.0, 1.0 - y_pm * self.decision_function(X)).mean())

    def predict_proba(self, X):
        z = self.A * self.decision_function(X) + self.B
        p = 1.0 / (1.0 + np.exp(np.clip(z, -500, 500)))
        return np.column_stack([1.0 - p, p])

    def get_structure(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "w": self.w.tolist(),
                "b": self.b, "A": self.A, "B": self.B}

    def set_structure(self, structure):
        self.mean = np.asarray(structure["mean"], dtype=float)
        self.std = np.asarray(structure["std"], dtype=float)
        self.w = np.asarray(structure["w"], dtype=float)
        self.b = float(structure["b"])
        self.A = float(structure["A"])
        self.B = float(structure["B"])


@register_model
class MulticlassLinearSVM(BaseLearner):
    """一对多的校准SVM，正类概率归一化成类别分布"""

    model_kind = "linsvm_ovr"

    def __init__(self, epochs=300, step=0.1, C=1.0, seed=0, classes=None):
        super().__init__(classes)
        self.params = {"epochs": epochs, "step": step, "C": C, "seed": seed}
        self.models = []

    def get_params(self):
        return dict(self.params)

    def fit(self, X, y):
        X, y, self.classes, y_index = check_training_data(X, y, self.classes or None, min_classes=2)
        self.models = [LinearSVM(classes=[0, 1], **self.params).fit(X, (y_index == k).astype(int))
                       for k in range(self.n_classes)]
        return self

    def predict_proba(self, X):
        X = as_2d(X)
        P = np.column_stack([model.predict_proba(X)[:, 1] for model in self.models])
        total = P.sum(axis=1, keepdims=True)
        return np.where(total > 0, P / np.where(total > 0, total, 1.0), 1.0 / self.n_classes)

    def get_structure(self):
        return {"models": [model.get_structure() for model in self.models]}

    def set_structure(self, structure):
        self.models = []
        for data in structure["models"]:
            model = LinearSVM(classes=[0, 1], **self.params)
            model.set_structure(data)
            self.models.append(model)


def train_logreg(X, y, classes=None, epochs=300, step=0.5, l2=1e-4, seed=0):
    return LogisticRegression(epochs, step, l2, seed, classes).fit(X, y)


def train_linsvm(X, y, classes=None, epochs=300, step=0.1, C=1.0, seed=0):
    return LinearSVM(epochs, step, C, seed, classes).fit(X, y)


def train_linsvm_multiclass(X, y, classes=None, epochs=300, step=0.1, C=1.0, seed=0):
    return MulticlassLinearSVM(epochs, step, C, seed, classes).fit(X, y)
