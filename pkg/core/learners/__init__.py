"""
学习器子包：决策树、随机森林、提升树、线性模型及模型文件
"""

from core.learners.base import BaseLearner, model_from_dict
from core.learners.boosting import BoostedModel, train_gbdt, train_gbt
from core.learners.forest import RandomForest, train_forest
from core.learners.linear import (LinearSVM, LogisticRegression, MulticlassLinearSVM,
                                  train_linsvm, train_linsvm_multiclass, train_logreg)
from core.learners.tree import DecisionTree, train_cart


def predict_proba(model, X):
    """统一的概率预测入口"""
    return model.predict_proba(X)


LEARNER_TRAINERS = {
    "cart": train_cart,
    "forest": train_forest,
    "gbt": train_gbt,
    "gbdt": train_gbdt,
    "logreg": train_logreg,
    "linsvm": train_linsvm,
    "linsvm_ovr": train_linsvm_multiclass,
}
