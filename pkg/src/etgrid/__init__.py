"""etgrid: event-triggered observer-based secondary voltage control of an
AC microgrid, simulated deterministically at fixed step.

The package splits into a design layer (model, mateq), the runtime
building blocks (observer, etm, secondary, plant), a two-engine stepping
core (engine: compiled Cython kernel with a pure-Python fallback) and a
scenario harness with a CLI (harness, cli).
"""

from .engine import DEFAULT_ENGINE, HAVE_COMPILED, available_engines
from .errors import (ConfigError, ConvergenceError, IntegrationDivergedError,
                     MatrixEquationError, ObservabilityError, PacketOrderError)
from .etm import PsiMatrix, TriggerLog, assemble_psi, eta, inter_event_stats, should_trigger
from .harness import (Metrics, ScenarioConfig, Traces, communication_reduction,
                      load_scenario, run_scenario, write_outputs)
from .mateq import (ObserverDesign, design_observer, is_hurwitz, observability_rank,
                    observer_gain, solve_filter_riccati, solve_lyapunov)
from .model import (DGParams, StateSpace, active_power, build_state_space,
                    droop_voltage_ref, reactive_power)
from .observer import (EventPacket, ObserverReplica, apply_event,
                       estimation_error, observer_derivative)
from .plant import (InnerGains, LineBranch, LoadBranch, MicrogridState, Topology,
                    apply_switch_events, initial_state, inner_loop_control,
                    microgrid_derivative, rk4_step, steady_state)
from .secondary import SecondaryGains, SecondaryState, q_hat, secondary_step

__version__ = "0.1.0"
