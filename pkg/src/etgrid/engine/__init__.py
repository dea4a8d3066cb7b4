"""Engine selection: compiled extension when available, numpy fallback otherwise."""

from . import python_kernel
from .packed import Layout, PackedScenario, RawRun, pack_scenario

try:
    from . import _kernel as compiled_kernel
    HAVE_COMPILED = True
except ImportError:
    compiled_kernel = None
    HAVE_COMPILED = False

DEFAULT_ENGINE = "compiled" if HAVE_COMPILED else "python"


def available_engines():
    return ("compiled", "python") if HAVE_COMPILED else ("python",)


def run_packed(packed: PackedScenario, engine: str = "auto") -> RawRun:
    """Dispatch a packed scenario to the requested engine."""
    if engine == "auto":
        engine = DEFAULT_ENGINE
    if engine == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError(
                "compiled engine requested but the extension is not built "
                "(pip install -e . with a C compiler, or use engine='python')")
        return compiled_kernel.run_packed(packed)
    if engine == "python":
        return python_kernel.run_packed(packed)
    raise ValueError(f"unknown engine {engine!r}; expected auto, compiled or python")
