try:
    from ._driftforge import *  # noqa: F401,F403
except ImportError:  # CMake-built module sitting on PYTHONPATH
    from _driftforge import *  # noqa: F401,F403
