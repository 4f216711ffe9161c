from ._task import (MIN_IMAGE_SIZE, Split, TaskBatch, TaskKind, TaskStream, make_task,
                    parse_task_kind)
from ._blob_seg import blob_seg_sample, class_palette
from ._stripe_cls import stripe_cls_sample, stripe_orientation
