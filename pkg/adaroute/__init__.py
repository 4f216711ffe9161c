from .errors import (AdaRouteError, ConfigurationError, DimensionError, IntegrityError,
                     MigrationError, NumericalError, UsageError)
from .tensor import Tensor, backward, gradcheck, set_debug
from .expert_center import ExpertCenter, InitMethod, init_center
from .router import GateHead, GatingVectors, RouterActivation, init_router, route
from .adapter import AdaRouteModule, Layout, Nonlinearity, RoutingMode, adaroute_forward, init_adapter
from .config import AdapterConfig, BackboneConfig, RunConfig, TaskConfig, TrainConfig, load_config
from .model import FineTuneModel, TrainReport, build_model, train
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
