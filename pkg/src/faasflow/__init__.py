"""faasflow: a deterministic discrete-event FaaS platform simulator.

Four families of function-orchestration engines run the same workflow trees
over a virtual clock, with a billing meter, an automated verifier for the
three composition constraints, and a benchmark harness with calibrated
latency profiles.
"""

from .billing import BillingReport, PricingModel, compute_billing
from .bench import (
    OverheadSample,
    StatePassingSample,
    SuiteConfig,
    bench_parallel,
    bench_sequence,
    bench_state,
    overhead,
    run_suite,
)
from .dsl import (
    StateMachineDoc,
    compile_state_machine,
    parse_state_machine,
    serialize_state_machine,
)
from .engines import (
    ENGINES,
    Engine,
    HistoryEvent,
    WorkflowResult,
    make_engine,
    run_client_scheduler,
    run_event_sourcing,
    run_inline_orchestrator,
    run_reactive_conductor,
    run_sequence_native,
    run_suspend_orchestrator,
)
from .profiles import CalibrationProfile, EngineProfile, builtin_profile, load_profile
from .runtime import (
    Event,
    FunctionDef,
    InvocationRecord,
    InvocationState,
    LatencyModel,
    Simulation,
    VirtualClock,
    echo_behavior,
    payload_bytes,
    scripted_behavior,
    sleep_behavior,
)
from .trilemma import (
    TrilemmaVerdict,
    check_substitution,
    detect_double_billing,
    verify_engine,
    verify_trilemma,
)
from .workflow import (
    Choice,
    CompositionSpec,
    Parallel,
    Repeat,
    Retry,
    Sequence,
    Task,
    Wait,
    action_count,
    fan_out,
    normalize,
    seq,
)

__version__ = "0.1.0"
