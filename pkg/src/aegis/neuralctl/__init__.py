from .nets import (ACTIVATIONS, Adam, DenseNet, NetError, backward, forward,
                   init_dense, soft_update)
from .policy import (BlackBoxPolicy, ConstantPolicy, LinearPolicy,
                     NeuralPolicy, PolicyError, load_policy, save_policy)
from .lqr import RiccatiError, make_lqr_policy, riccati_gain
from .ddpg import (EpisodicEnv, TrainerConfig, TrainingDivergedError,
                   train_ddpg)

__all__ = [
    "ACTIVATIONS", "Adam", "DenseNet", "NetError", "backward", "forward",
    "init_dense", "soft_update",
    "BlackBoxPolicy", "ConstantPolicy", "LinearPolicy", "NeuralPolicy",
    "PolicyError", "load_policy", "save_policy",
    "RiccatiError", "make_lqr_policy", "riccati_gain",
    "EpisodicEnv", "TrainerConfig", "TrainingDivergedError", "train_ddpg",
]
