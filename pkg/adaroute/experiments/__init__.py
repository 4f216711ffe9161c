from ._ablation import (AXES, TRADEOFFS, VARIANTS, AblationCell, AblationGrid, load_grid,
                        run_ablation, run_cell)
