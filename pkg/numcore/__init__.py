# Numeric core: array ops, optimizers, box L-BFGS, gradient oracle
from numcore.optimizers import OptimizerState, PlateauScheduler, sgd_update, adam_update, SGD, ADAM
from numcore.lbfgs import BoxBounds, MinimizeResult, box_lbfgs_minimize
from numcore.gradcheck import finite_diff_grad, max_relative_error
