from ._cka import CKAMatrix, block_features, cka_matrix, cka_matrix_from_features, linear_cka
from ._erf import DEFAULT_PROBES, SUPPORT_THRESHOLD, ERFMap, erf_map, erf_of_model, probe_images
from ._expert_map import ActivationMap, expert_activation_map
from ._audit import (ARCHITECTURES, ArchSpec, AuditItem, ParamAudit, audit_architecture, audit_graph,
                     audit_params, published_adapter_config, router_param_counts, sa_param_counts,
                     toy_arch)
