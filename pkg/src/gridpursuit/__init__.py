"""Grid-world pursuit-evasion with evader grouping and coalition learning."""

from .clustering import (ClusterAssignment, SofmConfig, SofmNetwork, assign,
                         cluster, dbscan, kmeans, train_sofm)
from .coalition import (Coalition, OrganizerState, form_coalitions, reorganize,
                        select_organizer, staffing_demand, tick_coalitions)
from .engine import CASES, RunMetrics, Simulation, simulate
from .experiment import (BatchSummary, CaseComparison, ConfigError,
                         ExperimentConfig, build_config, compare_cases,
                         emit_outputs, run_batch, run_single)
from .grid_world import (Action, EvaderState, GridConfig, Position, PursuerState,
                         WorldState, count_range_invaders, is_captured, neighbors,
                         place_agents, step)
from .learning import (QTable, RewardField, TransitionRecord, discounted_return,
                       evader_policy_step, group_reward, pursuer_policy_step,
                       q_update, reward_field, select_action, train_on_field)
from .membership import (Coefficients, MembershipMatrix, confidence, credit,
                         membership, membership_matrix, priority)

__version__ = "0.1.0"
