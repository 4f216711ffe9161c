from ._graph import (Block, ForwardTaps, HeadKind, ModelGraph, Stage, TensorCategory, derive_seed,
                     freeze_check, from_tokens, snapshot, to_tokens)
from ._swin_like import SwinLikeBlock
from ._convnext_like import ConvNeXtLikeBlock
from ._build import (SITE_UNITS, CenterPlan, block_name, build_backbone, capacity_for,
                     insert_adapters, plan_centers)
